//! Classical emulation of the quantum subroutine layer.
//!
//! Each subroutine computes its result exactly and then injects a calibrated
//! perturbation inside the caller's error budget, so the solver experiences
//! precisely the inexactness the convergence analysis tolerates:
//!
//! * [`qls_solve`] — the linear solver: exact solve against the stored Gram
//!   factorization, then a direction perturbation (tolerance `delta_vy`) and
//!   a norm-estimate perturbation (tolerance `delta_ey`).
//! * [`lcu_combine`] — the signed combination `V = C - A*(y) - gamma X`
//!   with its normalization constant `e_V = sum_i alpha_i |y_i| + ||C||_F +
//!   gamma ||X||_F`, plus a symmetric perturbation within `delta_v`.
//! * [`tomography_vec`] / [`tomography_mat`] — noisy classical readout with
//!   perturbation norm exactly `injection_scale * delta`.
//!
//! Costs are charged to a [`ResourceLedger`] with every constant set to one
//! and all logarithmic factors dropped; zero-tolerance calls are exact and
//! charge nothing (an exact subroutine has no finite-cost quantum model).
//!
//! [`iteration_cost`] and [`total_cost_table`] evaluate the per-iteration
//! and total cost formulas symbolically under the same convention.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::fm;
use crate::symlin::{ConstraintMap, GramFactor, SymLinError, SymMat};

/// Cost-model convention recorded in every serialized ledger.
pub const MODEL_CONVENTION: &str = "unit-constants,no-logs";

#[derive(Debug, Clone, PartialEq)]
pub enum QemulError {
    InvalidBudget(&'static str),
    NonPositiveParameter { name: &'static str, value: f64 },
    Dimension { expected: usize, got: usize },
    Lin(SymLinError),
}

impl fmt::Display for QemulError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidBudget(msg) => write!(f, "invalid error budget: {msg}"),
            Self::NonPositiveParameter { name, value } => {
                write!(f, "parameter {name} must be positive, got {value}")
            }
            Self::Dimension { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::Lin(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QemulError {}

impl From<SymLinError> for QemulError {
    fn from(e: SymLinError) -> Self {
        Self::Lin(e)
    }
}

pub type Result<T> = core::result::Result<T, QemulError>;

/// Direction model for injected noise. Isotropic matches tomography physics;
/// the adversarial mode aligns noise with a caller-supplied direction
/// (typically the current residual) to stress the error-term dependence of
/// the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseMode {
    #[default]
    Isotropic,
    Adversarial,
}

/// Per-step error tolerances and the injection policy.
///
/// `delta_hat_y`, `delta_y`, `delta_v`, `delta_s`, `delta_x` bound the five
/// per-step perturbations of the inexact scheme; `delta_vy` / `delta_ey` are
/// the direction and norm tolerances of the emulated linear solver, and
/// `delta_tilde_s` / `delta_tilde_x` are the polynomial accuracies used for
/// the two spectral transformations. `injection_scale` is the fraction of
/// each budget actually injected (1 = worst case within budget).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorBudget {
    pub delta_hat_y: f64,
    pub delta_y: f64,
    pub delta_v: f64,
    pub delta_s: f64,
    pub delta_x: f64,
    pub delta_vy: f64,
    pub delta_ey: f64,
    pub delta_tilde_s: f64,
    pub delta_tilde_x: f64,
    pub gamma: f64,
    pub injection_scale: f64,
    pub seed: u64,
    /// Whether `delta_ey` bounds the norm estimate absolutely instead of
    /// relatively. The relative reading is the default.
    pub ey_absolute: bool,
    pub noise_mode: NoiseMode,
}

impl ErrorBudget {
    /// All tolerances zero: every subroutine is numerically exact.
    pub fn zero(seed: u64) -> Self {
        Self {
            delta_hat_y: 0.0,
            delta_y: 0.0,
            delta_v: 0.0,
            delta_s: 0.0,
            delta_x: 0.0,
            delta_vy: 0.0,
            delta_ey: 0.0,
            delta_tilde_s: 0.0,
            delta_tilde_x: 0.0,
            gamma: 1.0,
            injection_scale: 1.0,
            seed,
            ey_absolute: false,
            noise_mode: NoiseMode::Isotropic,
        }
    }

    /// All five per-step tolerances set to `delta`; the linear-solver pair
    /// splits it as `delta_vy = delta_ey = delta / 2` so the composed
    /// y-error stays within `delta` relative, and both polynomial
    /// accuracies equal `delta`.
    pub fn uniform(delta: f64, seed: u64) -> Self {
        Self {
            delta_hat_y: delta,
            delta_y: delta,
            delta_v: delta,
            delta_s: delta,
            delta_x: delta,
            delta_vy: 0.5 * delta,
            delta_ey: 0.5 * delta,
            delta_tilde_s: delta,
            delta_tilde_x: delta,
            ..Self::zero(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tolerances = [
            self.delta_hat_y,
            self.delta_y,
            self.delta_v,
            self.delta_s,
            self.delta_x,
            self.delta_vy,
            self.delta_ey,
            self.delta_tilde_s,
            self.delta_tilde_x,
        ];
        if tolerances.iter().any(|v| !(*v >= 0.0)) {
            return Err(QemulError::InvalidBudget("tolerances must be nonnegative"));
        }
        if !(self.gamma > 0.0) {
            return Err(QemulError::InvalidBudget("gamma must be positive"));
        }
        if !(0.0..=1.0).contains(&self.injection_scale) {
            return Err(QemulError::InvalidBudget("injection_scale must be in [0, 1]"));
        }
        Ok(())
    }

    /// The dedicated RNG stream for one solver run.
    pub fn rng(&self) -> ChaCha20Rng {
        use rand::SeedableRng;
        ChaCha20Rng::seed_from_u64(self.seed)
    }
}

/// Symbolic operation counts, unit constants, no log factors.
///
/// Quantum components sum to [`ResourceLedger::gate_total`]; classical
/// arithmetic is tracked separately. Counters only ever increase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResourceLedger {
    pub classical_ops: f64,
    pub qls_time: f64,
    pub lcu_time: f64,
    pub qsvt_queries: f64,
    pub tomography_queries: f64,
}

impl ResourceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Audit identity: the combined quantum estimate is exactly the sum of
    /// its parts.
    pub fn gate_total(&self) -> f64 {
        self.qls_time + self.lcu_time + self.qsvt_queries + self.tomography_queries
    }

    pub fn absorb(&mut self, delta: &ResourceLedger) {
        self.classical_ops += delta.classical_ops;
        self.qls_time += delta.qls_time;
        self.lcu_time += delta.lcu_time;
        self.qsvt_queries += delta.qsvt_queries;
        self.tomography_queries += delta.tomography_queries;
    }
}

/// Gaussian-direction unit vector.
fn unit_vec(d: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Gaussian-direction symmetric matrix with unit Frobenius norm.
fn unit_sym(n: usize, rng: &mut ChaCha20Rng) -> SymMat {
    loop {
        let m =
            SymMat::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)).expect("n >= 1");
        let norm = m.frob_norm();
        if norm > 1e-12 {
            return m.scale(1.0 / norm);
        }
    }
}

/// Result of the emulated quantum linear solve.
#[derive(Debug, Clone)]
pub struct QlsOutcome {
    pub y_tilde: DVector<f64>,
    /// Exact solution `-(A A*)^{-1} u`, before injection.
    pub y_hat: DVector<f64>,
    /// Norms of the injected error, recorded in both metrics.
    pub err_l1: f64,
    pub err_l2: f64,
    pub ledger: ResourceLedger,
}

/// Emulated quantum linear solver for the y-update.
///
/// Computes `y_hat = -(A A*)^{-1} u` exactly via the stored factorization,
/// then perturbs the direction by `injection_scale * delta_vy` (uniform on
/// the sphere, orthogonalized against `y_hat`) and the norm estimate
/// multiplicatively within `injection_scale * delta_ey`. The returned error
/// always satisfies `||y_tilde - y_hat||_2 <= (delta_ey + delta_vy) ||y_hat||_2`.
///
/// The ledger charge is `kappa_A^2 (1 + R_y) / delta_hat_y` time units
/// (zero when `delta_hat_y` is zero: the call is exact).
pub fn qls_solve(
    gram: &GramFactor,
    u: &DVector<f64>,
    budget: &ErrorBudget,
    r_y: f64,
    rng: &mut ChaCha20Rng,
) -> Result<QlsOutcome> {
    budget.validate()?;
    if u.len() != gram.m() {
        return Err(QemulError::Dimension { expected: gram.m(), got: u.len() });
    }
    let y_hat = -gram.solve(u);
    let mut ledger = ResourceLedger::new();
    if budget.delta_hat_y > 0.0 {
        ledger.qls_time += gram.kappa_sq() * (1.0 + r_y) / budget.delta_hat_y;
    }
    let t_dir = budget.injection_scale * budget.delta_vy;
    let t_norm = budget.injection_scale * budget.delta_ey;
    let norm = y_hat.norm();
    if (t_dir == 0.0 && t_norm == 0.0) || norm == 0.0 {
        return Ok(QlsOutcome {
            y_tilde: y_hat.clone(),
            y_hat,
            err_l1: 0.0,
            err_l2: 0.0,
            ledger,
        });
    }
    // Direction: a unit vector at chord distance <= t_dir from y_hat's
    // direction, built by adding an orthogonal component and renormalizing.
    let mut v_dir = &y_hat / norm;
    if t_dir > 0.0 {
        let raw = unit_vec(y_hat.len(), rng);
        let mut orth = &raw - &v_dir * v_dir.dot(&raw);
        let onorm = orth.norm();
        if onorm > 1e-12 {
            orth /= onorm;
            let cand = &v_dir + orth * t_dir;
            v_dir = &cand / cand.norm();
        }
    }
    let e_y = if t_norm == 0.0 {
        norm
    } else {
        let draw = match budget.noise_mode {
            NoiseMode::Isotropic => rng.random_range(-1.0..=1.0),
            NoiseMode::Adversarial => 1.0,
        };
        if budget.ey_absolute {
            norm + draw * t_norm
        } else {
            norm * (1.0 + draw * t_norm)
        }
    };
    let y_tilde = v_dir * e_y;
    let err = &y_tilde - &y_hat;
    Ok(QlsOutcome {
        err_l1: err.iter().map(|v| v.abs()).sum(),
        err_l2: err.norm(),
        y_tilde,
        y_hat,
        ledger,
    })
}

/// Residual of the augmented block system
/// `[[0, A], [A^T, -I]] (y; t) = (u; 0)` with `t := A^T y`, which is
/// equivalent to the normal system `A A* y = u`. A small residual verifies
/// the augmented formulation the hardware solver would receive.
pub fn qls_augmented_check(map: &ConstraintMap, y: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let a = map.svec_matrix();
    let t = a.transpose() * y;
    let top = &a * &t - u;
    let bottom = a.transpose() * y - &t;
    fm::sqrt(top.norm_squared() + bottom.norm_squared())
}

/// Result of the emulated LCU combination.
#[derive(Debug, Clone)]
pub struct LcuOutcome {
    pub v_tilde: SymMat,
    /// Exact combination before injection.
    pub v_hat: SymMat,
    /// Normalization constant of the block-encoding.
    pub e_v: f64,
    pub ledger: ResourceLedger,
}

/// Emulated LCU combination for the V-update.
///
/// Computes `V = C - A*(y) - gamma X` exactly, with normalization
/// `e_V = sum_i alpha_i |y_i| + ||C||_F + gamma ||X||_F` (the weights of the
/// signed block-encoding combination, so `||V||_2 <= e_V` by the triangle
/// inequality). A symmetric perturbation of Frobenius norm at most
/// `injection_scale * delta_v` is added, capped by the spectral headroom
/// `e_V - ||V||_2` so that `||V_tilde / e_V||_2 <= 1` always holds. The
/// ledger charge is `e_V` time units.
pub fn lcu_combine(
    map: &ConstraintMap,
    c: &SymMat,
    x: &SymMat,
    y: &DVector<f64>,
    budget: &ErrorBudget,
    dir: Option<&SymMat>,
    rng: &mut ChaCha20Rng,
) -> Result<LcuOutcome> {
    budget.validate()?;
    let gamma = budget.gamma;
    let v_hat = &(&(c.clone()) - &map.apply_adjoint(y)?) - &x.scale(gamma);
    let weighted_y: f64 =
        map.frob_norms().iter().zip(y.iter()).map(|(a, yi)| a * yi.abs()).sum();
    let e_v = weighted_y + c.frob_norm() + gamma * x.frob_norm();
    if !(e_v > 0.0) && v_hat.frob_norm() > 0.0 {
        // Unreachable by the triangle inequality; kept as a hard guard.
        return Err(QemulError::InvalidBudget("e_V vanished on a nonzero combination"));
    }
    let mut ledger = ResourceLedger::new();
    ledger.lcu_time += e_v;
    let amount = budget.injection_scale * budget.delta_v;
    if amount == 0.0 {
        return Ok(LcuOutcome { v_tilde: v_hat.clone(), v_hat, e_v, ledger });
    }
    let spectral = spectral_norm(&v_hat)?;
    let headroom = (e_v - spectral).max(0.0) * (1.0 - 1e-12);
    let amount = amount.min(headroom);
    let direction = match (budget.noise_mode, dir) {
        (NoiseMode::Adversarial, Some(d)) if d.frob_norm() > 1e-12 => {
            d.scale(1.0 / d.frob_norm())
        }
        _ => unit_sym(v_hat.n(), rng),
    };
    let v_tilde = v_hat.axpy(amount, &direction);
    Ok(LcuOutcome { v_tilde, v_hat, e_v, ledger })
}

fn spectral_norm(x: &SymMat) -> Result<f64> {
    let eig = crate::symlin::eig_sym(x)?;
    Ok(eig.values.iter().fold(0.0f64, |a, &l| a.max(l.abs())))
}

/// Tomography of a vector: a copy perturbed by exactly
/// `injection_scale * delta` in the 2-norm, charged `d / delta` queries
/// with `d = len`.
pub fn tomography_vec(
    v: &DVector<f64>,
    delta: f64,
    budget: &ErrorBudget,
    dir: Option<&DVector<f64>>,
    rng: &mut ChaCha20Rng,
) -> (DVector<f64>, ResourceLedger) {
    let mut ledger = ResourceLedger::new();
    let d = v.len();
    if delta > 0.0 {
        ledger.tomography_queries += d as f64 / delta;
    }
    let amount = budget.injection_scale * delta;
    if amount == 0.0 {
        return (v.clone(), ledger);
    }
    let direction = match (budget.noise_mode, dir) {
        (NoiseMode::Adversarial, Some(d)) if d.norm() > 1e-12 => d / d.norm(),
        _ => unit_vec(d, rng),
    };
    (v + direction * amount, ledger)
}

/// Tomography of a symmetric matrix: symmetrized perturbation of Frobenius
/// norm exactly `injection_scale * delta`, charged `n^2 / delta` queries.
pub fn tomography_mat(
    x: &SymMat,
    delta: f64,
    budget: &ErrorBudget,
    dir: Option<&SymMat>,
    rng: &mut ChaCha20Rng,
) -> (SymMat, ResourceLedger) {
    let mut ledger = ResourceLedger::new();
    let n = x.n();
    if delta > 0.0 {
        ledger.tomography_queries += (n * n) as f64 / delta;
    }
    let amount = budget.injection_scale * delta;
    if amount == 0.0 {
        return (x.clone(), ledger);
    }
    let direction = match (budget.noise_mode, dir) {
        (NoiseMode::Adversarial, Some(d)) if d.frob_norm() > 1e-12 => {
            d.scale(1.0 / d.frob_norm())
        }
        _ => unit_sym(n, rng),
    };
    (x.axpy(amount, &direction), ledger)
}

/// Inputs to the per-iteration cost formula.
#[derive(Debug, Clone, Copy)]
pub struct CostParams {
    pub n: usize,
    pub m: usize,
    pub kappa_sq: f64,
    pub r_x: f64,
    pub r_y: f64,
    pub r_s: f64,
    /// Total nonzeros across the constraint matrices.
    pub s_a: usize,
    pub delta_hat_y: f64,
    pub delta_y: f64,
    pub delta_s: f64,
    pub delta_x: f64,
    /// Accuracy of the polynomial spectral transformation; the degree enters
    /// as `(1 + R_X + R_y) / eps`.
    pub eps: f64,
}

/// Per-iteration cost summary (unit constants, no log factors).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationCost {
    pub t_classic: f64,
    pub t_quant: f64,
    /// `kappa^2 (1 + R_y) / delta_hat_y * m R_y / delta_y`.
    pub y_update: f64,
    /// `(kappa^2 (1+R_y)/delta_hat_y + (1+R_X+R_y)/eps) * n^2 R_S/delta_S`.
    pub s_update: f64,
    /// Same prefactor times `n^2 R_X / delta_X`.
    pub x_update: f64,
}

/// Evaluates the per-iteration cost formula:
/// `T_classic = s_A + n^2` and
/// `T_quant = k^2(1+R_y)/d_hy * m R_y/d_y
///          + (k^2(1+R_y)/d_hy + (1+R_X+R_y)/eps)(n^2 R_S/d_S + n^2 R_X/d_X)`.
pub fn iteration_cost(p: &CostParams) -> Result<IterationCost> {
    let checks = [
        ("kappa_sq", p.kappa_sq),
        ("r_x", p.r_x),
        ("r_y", p.r_y),
        ("r_s", p.r_s),
        ("delta_hat_y", p.delta_hat_y),
        ("delta_y", p.delta_y),
        ("delta_s", p.delta_s),
        ("delta_x", p.delta_x),
        ("eps", p.eps),
        ("n", p.n as f64),
        ("m", p.m as f64),
        ("s_a", p.s_a as f64),
    ];
    for (name, value) in checks {
        if !(value > 0.0) {
            return Err(QemulError::NonPositiveParameter { name, value });
        }
    }
    let n2 = (p.n * p.n) as f64;
    let qls = p.kappa_sq * (1.0 + p.r_y) / p.delta_hat_y;
    let degree = (1.0 + p.r_x + p.r_y) / p.eps;
    let y_update = qls * p.m as f64 * p.r_y / p.delta_y;
    let s_update = (qls + degree) * n2 * p.r_s / p.delta_s;
    let x_update = (qls + degree) * n2 * p.r_x / p.delta_x;
    Ok(IterationCost {
        t_classic: p.s_a as f64 + n2,
        t_quant: y_update + s_update + x_update,
        y_update,
        s_update,
        x_update,
    })
}

/// One parameter point of the total-cost comparison.
#[derive(Debug, Clone, Copy)]
pub struct TotalCostParams {
    pub n: f64,
    pub m: f64,
    pub s_a: f64,
    pub eps: f64,
    pub r_x: f64,
    pub r_y: f64,
    pub r_s: f64,
    /// Trace-norm bound used by the multiplicative-weights row.
    pub r_tr_x: f64,
    pub kappa_sq: f64,
    /// Condition number of the initial interior-point Newton system.
    pub kappa0: f64,
}

/// Side-by-side total-cost formula evaluations (formulas only; competitors
/// are never executed).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostRow {
    /// `n^2 (kappa^2 (1+R_y)^2 + R_X) (R_X+R_S)^3 / eps^3`.
    pub qadmm: f64,
    /// `n^6 + n^4 (R_X^2 + R_S^2) / eps`.
    pub classical_admm: f64,
    /// `(n^2 + n^1.5 R_TrX R_y / eps) (R_TrX R_y / eps)^4`.
    pub qmwu: f64,
    /// `n^3.5 kappa_0^2`.
    pub qipm: f64,
    /// Full quantum total:
    /// `(m k^2 (1+R_y)^2 + n^2 (k^2 (1+R_y) + R_X)) (R_X+R_S)^3 / eps^3`.
    pub qadmm_total_quantum: f64,
    /// Classical arithmetic total: `(s_A + n^2) (R_X^2 + R_S^2) / eps`.
    pub qadmm_total_classical: f64,
}

/// Evaluates [`CostRow`] for each grid point.
pub fn total_cost_table(grid: &[TotalCostParams]) -> Vec<CostRow> {
    grid.iter()
        .map(|p| {
            let n2 = p.n * p.n;
            let rsum = p.r_x + p.r_s;
            let rsum3 = rsum * rsum * rsum;
            let eps3 = p.eps * p.eps * p.eps;
            let mwu_ratio = p.r_tr_x * p.r_y / p.eps;
            let mwu4 = mwu_ratio * mwu_ratio * mwu_ratio * mwu_ratio;
            CostRow {
                qadmm: n2 * (p.kappa_sq * (1.0 + p.r_y) * (1.0 + p.r_y) + p.r_x) * rsum3
                    / eps3,
                classical_admm: fm::powf(p.n, 6.0)
                    + fm::powf(p.n, 4.0) * (p.r_x * p.r_x + p.r_s * p.r_s) / p.eps,
                qmwu: (n2 + fm::powf(p.n, 1.5) * mwu_ratio) * mwu4,
                qipm: fm::powf(p.n, 3.5) * p.kappa0 * p.kappa0,
                qadmm_total_quantum: (p.m * p.kappa_sq * (1.0 + p.r_y) * (1.0 + p.r_y)
                    + n2 * (p.kappa_sq * (1.0 + p.r_y) + p.r_x))
                    * rsum3
                    / eps3,
                qadmm_total_classical: (p.s_a + n2) * (p.r_x * p.r_x + p.r_s * p.r_s)
                    / p.eps,
            }
        })
        .collect()
}

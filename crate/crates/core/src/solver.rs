//! Iteration engines.
//!
//! Three engines share the instance and Gram factorization:
//!
//! * [`classical_admm_step`] — the exact alternating scheme: linear solve for
//!   `y`, PSD projection for `S`, dual ascent for `X`. No set-radius
//!   projections.
//! * [`qadmm_step`] — the inexact quantum-emulated scheme: the linear solve,
//!   combination and spectral transformation run through the [`crate::qemul`]
//!   layer with calibrated error injection, every classical reconstruction is
//!   projected back into its feasible set (`||X||_F <= R_X` and PSD,
//!   `||y||_1 <= R_y`, `||S||_F <= R_S` and PSD), and the PSD projection is
//!   replaced by the certified polynomial pair when
//!   [`ProxOperator::Polynomial`] is selected.
//! * [`drs_step`] — the equivalent fixed-point (Douglas-Rachford) iteration
//!   on a single matrix variable `Z`, with [`drs_recover`] mapping back to
//!   `(X, y, S)`.
//!
//! [`run`] drives any engine, maintains running averages of the classical
//! iterates (and of the quantum-side iterates, which the ergodic bound is
//! stated for), records a [`ConvergenceTrace`], and stops early on the
//! averaged dual residual and objective gap.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::DVector;
use rand_chacha::ChaCha20Rng;

use crate::fm;
use crate::polyprox::{
    build_relu_poly, companion_neg_poly, qsvt_spectral_apply, ChebPoly, MonotonePoly, PolyError,
};
use crate::qemul::{self, ErrorBudget, QemulError, ResourceLedger};
use crate::symlin::{
    proj_l1_ball, proj_psd, proj_psd_ball, ConstraintMap, GramFactor, SymLinError, SymMat,
};

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    Lin(SymLinError),
    Poly(PolyError),
    Qemul(QemulError),
    InvalidInstance(&'static str),
    BadConfig(&'static str),
    TraceTooShort { len: usize, need: usize },
    /// Every residual already sits at the plateau; no window to fit.
    NoPrePlateauWindow,
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lin(e) => write!(f, "{e}"),
            Self::Poly(e) => write!(f, "{e}"),
            Self::Qemul(e) => write!(f, "{e}"),
            Self::InvalidInstance(msg) => write!(f, "invalid instance: {msg}"),
            Self::BadConfig(msg) => write!(f, "invalid run configuration: {msg}"),
            Self::TraceTooShort { len, need } => {
                write!(f, "trace too short: {len} records, need {need}")
            }
            Self::NoPrePlateauWindow => write!(f, "no pre-plateau window in trace"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolverError {}

impl From<SymLinError> for SolverError {
    fn from(e: SymLinError) -> Self {
        Self::Lin(e)
    }
}

impl From<PolyError> for SolverError {
    fn from(e: PolyError) -> Self {
        Self::Poly(e)
    }
}

impl From<QemulError> for SolverError {
    fn from(e: QemulError) -> Self {
        Self::Qemul(e)
    }
}

pub type Result<T> = core::result::Result<T, SolverError>;

/// A synthetic primal-dual optimum planted into an instance: `X*` PSD of
/// rank `rank_r`, `S*` PSD with complementary range, so `X* S* = 0`.
#[derive(Debug, Clone)]
pub struct PlantedOptimum {
    pub x_star: SymMat,
    pub y_star: DVector<f64>,
    pub s_star: SymMat,
    pub rank_r: usize,
}

/// The problem data `(C, b, {A_i})` with solution-norm bounds and
/// normalization metadata.
#[derive(Debug, Clone)]
pub struct SdpInstance {
    pub n: usize,
    pub m: usize,
    pub c: SymMat,
    pub b: DVector<f64>,
    pub map: ConstraintMap,
    /// Frobenius bound on the primal optimum.
    pub r_x: f64,
    /// l1 bound on the dual vector optimum.
    pub r_y: f64,
    /// Frobenius bound on the dual slack optimum.
    pub r_s: f64,
    /// Multiply the normalized dual objective `-b^T y` by this to recover
    /// the objective value in original (pre-normalization) units.
    pub obj_scale: f64,
    pub known_optimum: Option<PlantedOptimum>,
}

impl SdpInstance {
    pub fn new(
        c: SymMat,
        b: DVector<f64>,
        map: ConstraintMap,
        r_x: f64,
        r_y: f64,
        r_s: f64,
    ) -> Result<Self> {
        if c.n() != map.n() {
            return Err(SolverError::InvalidInstance("C dimension differs from constraints"));
        }
        if b.len() != map.m() {
            return Err(SolverError::InvalidInstance("b length differs from constraint count"));
        }
        if !(r_x > 0.0 && r_y > 0.0 && r_s > 0.0) {
            return Err(SolverError::InvalidInstance("norm bounds must be positive"));
        }
        if !c.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidInstance("non-finite data"));
        }
        Ok(Self {
            n: c.n(),
            m: map.m(),
            c,
            b,
            map,
            r_x,
            r_y,
            r_s,
            obj_scale: 1.0,
            known_optimum: None,
        })
    }

    pub fn with_obj_scale(mut self, scale: f64) -> Self {
        self.obj_scale = scale;
        self
    }

    pub fn with_known_optimum(mut self, opt: PlantedOptimum) -> Self {
        self.known_optimum = Some(opt);
        self
    }

    /// Optimal dual objective `-b^T y*`, when an optimum is planted.
    pub fn optimal_objective(&self) -> Option<f64> {
        self.known_optimum.as_ref().map(|o| -self.b.dot(&o.y_star))
    }
}

/// Optimality residuals of a triple.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Residuals {
    /// `||A(X) - b||_2`.
    pub primal: f64,
    /// `||A*(y) + S - C||_F`.
    pub dual: f64,
    /// `<X, S>`.
    pub complementarity: f64,
    /// `-b^T y`.
    pub objective: f64,
}

/// Computes the optimality residuals of `(X, y, S)` on `inst`.
pub fn residuals(
    inst: &SdpInstance,
    x: &SymMat,
    y: &DVector<f64>,
    s: &SymMat,
) -> Result<Residuals> {
    let ax = inst.map.apply(x)?;
    let primal = (&ax - &inst.b).norm();
    let dual_mat = &(&inst.map.apply_adjoint(y)? + s) - &inst.c;
    Ok(Residuals {
        primal,
        dual: dual_mat.frob_norm(),
        complementarity: x.inner(s),
        objective: -inst.b.dot(y),
    })
}

/// Early-stopping thresholds, applied to the running average: stop when the
/// averaged dual residual is at most `dual` and (when an optimum is known)
/// the averaged objective gap is at most `gap`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StopRule {
    pub dual: f64,
    pub gap: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { dual: 1e-4, gap: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Mode {
    Classical,
    Qadmm,
    Drs,
}

/// The pair of certified polynomials driving the two spectral updates.
#[derive(Debug, Clone)]
pub struct ProxPolys {
    pub g1: MonotonePoly,
    pub g2: ChebPoly,
}

impl ProxPolys {
    pub fn from_eps(eps: f64) -> Result<Self> {
        let g1 = build_relu_poly(eps)?;
        let g2 = companion_neg_poly(&g1);
        Ok(Self { g1, g2 })
    }
}

/// Which proximal operator the S/X updates use: the exact PSD projection or
/// the certified polynomial pair.
#[derive(Debug, Clone)]
pub enum ProxOperator {
    Exact,
    Polynomial(ProxPolys),
}

/// Full configuration of one run. The penalty `gamma` lives on the budget
/// (it also scales the LCU combination there).
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub budget: ErrorBudget,
    pub prox: ProxOperator,
    /// Iteration cap; defaults to `(R_X^2 + R_S^2) / stop.gap`, clamped to
    /// `[1, 100_000]`.
    pub k_max: Option<usize>,
    /// `None` disables early stopping (fixed-length run).
    pub stop: Option<StopRule>,
}

impl RunOptions {
    pub fn classical() -> Self {
        Self {
            mode: Mode::Classical,
            budget: ErrorBudget::zero(0),
            prox: ProxOperator::Exact,
            k_max: None,
            stop: Some(StopRule::default()),
        }
    }
}

/// One iterate of the scheme, with the quantum-side intermediates and the
/// running sums for both averages.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: SymMat,
    pub s: SymMat,
    pub y: DVector<f64>,
    pub hat_y: DVector<f64>,
    pub tilde_y: DVector<f64>,
    pub tilde_v: SymMat,
    pub tilde_s: SymMat,
    pub tilde_x: SymMat,
    /// Normalization constant of the last combination (0 in classical mode).
    pub e_v: f64,
    pub k: usize,
    pub sum_x: SymMat,
    pub sum_s: SymMat,
    pub sum_y: DVector<f64>,
    /// Quantum-side sums over iterates `0..K-1` of `(X~, y^, S~)`.
    pub qsum_x: SymMat,
    pub qsum_s: SymMat,
    pub qsum_y: DVector<f64>,
    /// Norms of the last linear-solver injection (both metrics recorded).
    pub err_ytilde_l1: f64,
    pub err_ytilde_l2: f64,
    /// Norms of the last y-tomography injection.
    pub err_y_l1: f64,
    pub err_y_l2: f64,
}

impl IterateState {
    pub fn initial(n: usize, m: usize) -> Self {
        Self {
            x: SymMat::zeros(n),
            s: SymMat::zeros(n),
            y: DVector::zeros(m),
            hat_y: DVector::zeros(m),
            tilde_y: DVector::zeros(m),
            tilde_v: SymMat::zeros(n),
            tilde_s: SymMat::zeros(n),
            tilde_x: SymMat::zeros(n),
            e_v: 0.0,
            k: 0,
            sum_x: SymMat::zeros(n),
            sum_s: SymMat::zeros(n),
            sum_y: DVector::zeros(m),
            qsum_x: SymMat::zeros(n),
            qsum_s: SymMat::zeros(n),
            qsum_y: DVector::zeros(m),
            err_ytilde_l1: 0.0,
            err_ytilde_l2: 0.0,
            err_y_l1: 0.0,
            err_y_l2: 0.0,
        }
    }
}

/// `u = gamma (A(X) - b) + A(S - C)`, the right-hand side driving the
/// y-update.
fn u_vector(inst: &SdpInstance, x: &SymMat, s: &SymMat, gamma: f64) -> Result<DVector<f64>> {
    let ax = inst.map.apply(x)?;
    let asc = inst.map.apply(&(s - &inst.c))?;
    Ok((ax - &inst.b) * gamma + asc)
}

/// One exact classical step:
/// `y <- -(A A*)^{-1}(gamma (A(X)-b) + A(S-C))`,
/// `S <- Proj_PSD(C - A*(y) - gamma X)`,
/// `X <- X + (1/gamma)(A*(y) + S - C)`.
/// Exact projections only; the set-radius projections of the inexact scheme
/// are absent here.
pub fn classical_admm_step(
    inst: &SdpInstance,
    gram: &GramFactor,
    mut state: IterateState,
    gamma: f64,
) -> Result<IterateState> {
    let u = u_vector(inst, &state.x, &state.s, gamma)?;
    let y = -gram.solve(&u);
    let v = &(&inst.c - &inst.map.apply_adjoint(&y)?) - &state.x.scale(gamma);
    let s = proj_psd(&v)?;
    let x = (&s - &v).scale(1.0 / gamma);
    state.hat_y = y.clone();
    state.tilde_y = y.clone();
    state.y = y;
    state.tilde_v = v;
    state.tilde_s = s.clone();
    state.tilde_x = x.clone();
    state.s = s;
    state.x = x;
    state.e_v = 0.0;
    state.err_ytilde_l1 = 0.0;
    state.err_ytilde_l2 = 0.0;
    state.err_y_l1 = 0.0;
    state.err_y_l2 = 0.0;
    state.k += 1;
    Ok(state)
}

/// One inexact quantum-emulated step, in scheme order: exact linear solve
/// plus solver-error injection, tomography and l1-ball projection for the
/// classical `y`, the combination `V~` with its normalization, the two
/// spectral transformations for `S~` and `X~`, and tomography plus
/// PSD-and-ball projections for the classical `S` and `X`. The combination
/// consumes the quantum-side `y~`, not the projected classical `y`.
pub fn qadmm_step(
    inst: &SdpInstance,
    gram: &GramFactor,
    mut state: IterateState,
    budget: &ErrorBudget,
    prox: &ProxOperator,
    ledger: &mut ResourceLedger,
    rng: &mut ChaCha20Rng,
) -> Result<IterateState> {
    let gamma = budget.gamma;
    let u = u_vector(inst, &state.x, &state.s, gamma)?;

    // (1) y-update through the emulated linear solver.
    let qls = qemul::qls_solve(gram, &u, budget, inst.r_y, rng)?;
    ledger.absorb(&qls.ledger);
    state.err_ytilde_l1 = qls.err_l1;
    state.err_ytilde_l2 = qls.err_l2;
    state.hat_y = qls.y_hat;
    state.tilde_y = qls.y_tilde;

    // Adversarial alignment targets: the current residual directions.
    let primal_dir = inst.map.apply(&state.x)? - &inst.b;
    let dual_dir = &(&inst.map.apply_adjoint(&state.y)? + &state.s) - &inst.c;

    let (y_meas, led) =
        qemul::tomography_vec(&state.tilde_y, budget.delta_y, budget, Some(&primal_dir), rng);
    ledger.absorb(&led);
    let y_err = &y_meas - &state.tilde_y;
    state.err_y_l1 = y_err.iter().map(|v| v.abs()).sum();
    state.err_y_l2 = y_err.norm();
    state.y = proj_l1_ball(&y_meas, inst.r_y)?;

    // (2) V-update: combination with the quantum-side y~.
    let lcu = qemul::lcu_combine(
        &inst.map,
        &inst.c,
        &state.x,
        &state.tilde_y,
        budget,
        Some(&dual_dir),
        rng,
    )?;
    ledger.absorb(&lcu.ledger);
    state.tilde_v = lcu.v_tilde;
    state.e_v = lcu.e_v;

    // (3)+(4) spectral transformations.
    match prox {
        ProxOperator::Exact => {
            state.tilde_s = proj_psd(&state.tilde_v)?;
            state.tilde_x = (&state.tilde_s - &state.tilde_v).scale(1.0 / gamma);
        }
        ProxOperator::Polynomial(polys) => {
            let (s_raw, cost1) =
                qsvt_spectral_apply(polys.g1.poly(), &state.tilde_v, state.e_v)?;
            ledger.qsvt_queries += cost1.block_queries;
            let (x_raw, cost2) = qsvt_spectral_apply(&polys.g2, &state.tilde_v, state.e_v)?;
            ledger.qsvt_queries += cost2.block_queries;
            state.tilde_s = s_raw;
            state.tilde_x = x_raw.scale(-1.0 / gamma);
        }
    }

    // Classical reconstructions with feasible-set projections.
    let (s_meas, led) =
        qemul::tomography_mat(&state.tilde_s, budget.delta_s, budget, Some(&dual_dir), rng);
    ledger.absorb(&led);
    state.s = proj_psd_ball(&s_meas, inst.r_s)?;

    let (x_meas, led) =
        qemul::tomography_mat(&state.tilde_x, budget.delta_x, budget, Some(&dual_dir), rng);
    ledger.absorb(&led);
    state.x = proj_psd_ball(&x_meas, inst.r_x)?;

    ledger.classical_ops += (inst.map.nnz_total() + inst.n * inst.n) as f64;
    state.k += 1;
    Ok(state)
}

/// `prox_{f1/gamma}(W) = W - C/gamma - A*((A A*)^{-1}(A(W - C/gamma) - b))`,
/// the proximal operator of the linear objective restricted to the affine
/// constraint set. Its output always satisfies `A(result) = b`.
pub fn prox_affine(
    inst: &SdpInstance,
    gram: &GramFactor,
    w: &SymMat,
    gamma: f64,
) -> Result<SymMat> {
    let shifted = w - &inst.c.scale(1.0 / gamma);
    let rhs = inst.map.apply(&shifted)? - &inst.b;
    let corr = inst.map.apply_adjoint(&gram.solve(&rhs))?;
    Ok(&shifted - &corr)
}

/// One fixed-point step `Z' = Z + prox_{f1/gamma}(2 Proj_PSD(Z) - Z) -
/// Proj_PSD(Z)` of the Douglas-Rachford splitting.
pub fn drs_step(inst: &SdpInstance, gram: &GramFactor, z: &SymMat, gamma: f64) -> Result<SymMat> {
    let p = proj_psd(z)?;
    let reflected = &p.scale(2.0) - z;
    let proxed = prox_affine(inst, gram, &reflected, gamma)?;
    Ok(&(z + &proxed) - &p)
}

/// Recovers `(X^k, S^k)` from `Z^k` and the next dual vector `y^{k+1}`.
pub fn drs_recover(
    inst: &SdpInstance,
    gram: &GramFactor,
    z: &SymMat,
    gamma: f64,
) -> Result<(SymMat, SymMat, DVector<f64>)> {
    let x = proj_psd(z)?;
    let s = proj_psd(&z.scale(-gamma))?;
    let u = u_vector(inst, &x, &s, gamma)?;
    let y_next = -gram.solve(&u);
    Ok((x, s, y_next))
}

/// One row of the convergence trace: residuals of the iterate, residuals of
/// the running average, the gate total so far, and the recorded injection
/// norms of the y-step (both metrics, since the scheme's bounds are stated
/// in each).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub k: usize,
    pub objective: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
    pub dist_to_opt: Option<f64>,
    pub gate_total: f64,
    pub avg_objective: f64,
    pub avg_primal: f64,
    pub avg_dual: f64,
    pub avg_complementarity: f64,
    pub avg_gap: Option<f64>,
    pub err_ytilde_l1: f64,
    pub err_ytilde_l2: f64,
    pub err_y_l1: f64,
    pub err_y_l2: f64,
}

/// Per-iteration records of one run.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The averaged-dual-residual series the rate fit runs on.
    pub fn avg_dual_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.avg_dual).collect()
    }
}

/// A primal-dual triple.
#[derive(Debug, Clone)]
pub struct Triple {
    pub x: SymMat,
    pub y: DVector<f64>,
    pub s: SymMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StopReason {
    Converged,
    KMaxExhausted,
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Running average of the classical iterates `1..=K` (the algorithm's
    /// output).
    pub average: Triple,
    /// Running average of the quantum-side iterates `0..K-1`, recorded so
    /// the ergodic statement about them is checkable too.
    pub quantum_average: Triple,
    pub last: Triple,
    pub trace: ConvergenceTrace,
    pub ledger: ResourceLedger,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

const K_MAX_CAP: usize = 100_000;

/// The default iteration cap `(R_X^2 + R_S^2) / eps`, with `eps` the
/// tighter of the stop thresholds, clamped to `[1, 100_000]`.
pub fn default_k_max(inst: &SdpInstance, stop: &Option<StopRule>) -> usize {
    let eps = stop.map(|s| s.gap.min(s.dual)).unwrap_or(1e-3).max(1e-12);
    let k = libm::ceil((inst.r_x * inst.r_x + inst.r_s * inst.r_s) / eps) as usize;
    k.clamp(1, K_MAX_CAP)
}

/// Runs the selected engine for up to `k_max` iterations from the zero
/// initial point, maintaining running averages and the trace. Stops early
/// when the averaged dual residual falls under `stop.dual` and, if an
/// optimum is known, the averaged objective gap falls under `stop.gap`.
pub fn run(inst: &SdpInstance, opts: &RunOptions) -> Result<RunResult> {
    opts.budget.validate()?;
    if let Some(stop) = &opts.stop {
        if !(stop.dual >= 0.0 && stop.gap >= 0.0) {
            return Err(SolverError::BadConfig("stop thresholds must be nonnegative"));
        }
    }
    let gram = inst.map.gram()?;
    let k_max = opts.k_max.unwrap_or_else(|| default_k_max(inst, &opts.stop));
    if k_max == 0 {
        return Err(SolverError::BadConfig("k_max must be at least 1"));
    }
    let gamma = opts.budget.gamma;
    let mut rng = opts.budget.rng();
    let mut ledger = ResourceLedger::new();
    let mut trace = ConvergenceTrace::default();
    let opt_objective = inst.optimal_objective();

    let mut state = IterateState::initial(inst.n, inst.m);
    let mut z = SymMat::zeros(inst.n);
    let mut converged = false;

    for k in 1..=k_max {
        // Quantum-side average includes the iterate *before* each step
        // (terms 0..K-1).
        state.qsum_x = state.qsum_x.axpy(1.0, &state.tilde_x);
        state.qsum_s = state.qsum_s.axpy(1.0, &state.tilde_s);
        state.qsum_y += &state.hat_y;

        match opts.mode {
            Mode::Classical => {
                state = classical_admm_step(inst, &gram, state, gamma)?;
                // Appendix-convention classical arithmetic: solve, one
                // eigendecomposition, and the linear maps.
                ledger.classical_ops += (inst.m * inst.m
                    + inst.n * inst.n * inst.n
                    + inst.map.nnz_total()
                    + inst.n * inst.n) as f64;
            }
            Mode::Qadmm => {
                state = qadmm_step(
                    inst,
                    &gram,
                    state,
                    &opts.budget,
                    &opts.prox,
                    &mut ledger,
                    &mut rng,
                )?;
            }
            Mode::Drs => {
                let (_, _, y_next) = drs_recover(inst, &gram, &z, gamma)?;
                z = drs_step(inst, &gram, &z, gamma)?;
                let (x_next, s_next, _) = drs_recover(inst, &gram, &z, gamma)?;
                state.y = y_next.clone();
                state.hat_y = y_next.clone();
                state.tilde_y = y_next;
                state.x = x_next.clone();
                state.s = s_next.clone();
                state.tilde_x = x_next;
                state.tilde_s = s_next;
                state.k += 1;
                ledger.classical_ops +=
                    (inst.m * inst.m + 2 * inst.n * inst.n * inst.n) as f64;
            }
        }

        state.sum_x = state.sum_x.axpy(1.0, &state.x);
        state.sum_s = state.sum_s.axpy(1.0, &state.s);
        state.sum_y += &state.y;

        let inv_k = 1.0 / k as f64;
        let avg_x = state.sum_x.scale(inv_k);
        let avg_s = state.sum_s.scale(inv_k);
        let avg_y = &state.sum_y * inv_k;

        let res = residuals(inst, &state.x, &state.y, &state.s)?;
        let avg_res = residuals(inst, &avg_x, &avg_y, &avg_s)?;
        let dist_to_opt = inst.known_optimum.as_ref().map(|o| {
            (&state.x - &o.x_star).frob_norm()
                + (&state.y - &o.y_star).norm()
                + (&state.s - &o.s_star).frob_norm()
        });
        let avg_gap = opt_objective.map(|f_star| (avg_res.objective - f_star).abs());

        trace.records.push(TraceRecord {
            k,
            objective: res.objective,
            primal: res.primal,
            dual: res.dual,
            complementarity: res.complementarity,
            dist_to_opt,
            gate_total: ledger.gate_total(),
            avg_objective: avg_res.objective,
            avg_primal: avg_res.primal,
            avg_dual: avg_res.dual,
            avg_complementarity: avg_res.complementarity,
            avg_gap,
            err_ytilde_l1: state.err_ytilde_l1,
            err_ytilde_l2: state.err_ytilde_l2,
            err_y_l1: state.err_y_l1,
            err_y_l2: state.err_y_l2,
        });

        if let Some(stop) = &opts.stop {
            let gap_ok = avg_gap.map(|g| g <= stop.gap).unwrap_or(true);
            if avg_res.dual <= stop.dual && gap_ok {
                converged = true;
                break;
            }
        }
    }

    let k = state.k;
    let inv_k = 1.0 / k as f64;
    let average = Triple {
        x: state.sum_x.scale(inv_k),
        y: &state.sum_y * inv_k,
        s: state.sum_s.scale(inv_k),
    };
    let quantum_average = Triple {
        x: state.qsum_x.scale(inv_k),
        y: &state.qsum_y * inv_k,
        s: state.qsum_s.scale(inv_k),
    };
    let last = Triple { x: state.x, y: state.y, s: state.s };
    Ok(RunResult {
        average,
        quantum_average,
        last,
        trace,
        ledger,
        iterations: k,
        converged,
        stop_reason: if converged { StopReason::Converged } else { StopReason::KMaxExhausted },
    })
}

/// Least-squares slope of `log(residual)` against `log(k)` over the
/// pre-plateau window, and the plateau level.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub slope: f64,
    /// Median residual of the final 10% of iterations.
    pub plateau: f64,
    /// Window of (1-based) iteration indices the slope was fitted on.
    pub window: (usize, usize),
}

/// Plateau estimate of a residual series: the median of its final 10%.
pub fn plateau_level(series: &[f64]) -> Result<f64> {
    if series.len() < 10 {
        return Err(SolverError::TraceTooShort { len: series.len(), need: 10 });
    }
    let tail_start = series.len() - (series.len() / 10).max(1);
    let mut tail: Vec<f64> = series[tail_start..].to_vec();
    tail.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    Ok(tail[tail.len() / 2])
}

/// Fits a convergence rate to a residual series (one value per iteration,
/// starting at iteration 1).
///
/// The plateau is the median of the final 10% of values. The fit window
/// starts after the series' maximum (trimming the initial transient) and
/// keeps the entries at least `10 x` above the plateau.
pub fn fit_convergence_rate(series: &[f64]) -> Result<RateFit> {
    const NEED: usize = 50;
    if series.len() < NEED {
        return Err(SolverError::TraceTooShort { len: series.len(), need: NEED });
    }
    let plateau = plateau_level(series)?;

    let peak = series
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite residuals"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let threshold = 10.0 * plateau;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = (usize::MAX, 0);
    for (i, &r) in series.iter().enumerate().skip(peak) {
        if r > threshold && r > 0.0 {
            let k = (i + 1) as f64;
            xs.push(fm::ln(k));
            ys.push(fm::ln(r));
            window.0 = window.0.min(i + 1);
            window.1 = window.1.max(i + 1);
        }
    }
    if xs.len() < 10 {
        return Err(SolverError::NoPrePlateauWindow);
    }
    let n = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / n;
    let mean_y: f64 = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(SolverError::NoPrePlateauWindow);
    }
    Ok(RateFit { slope: sxy / sxx, plateau, window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symlin::SparseSym;
    use alloc::vec;
    use alloc::vec::Vec;

    /// The scalar instance: A = (1), b = (1), C = (1); optimum
    /// X* = 1, y* = 1, S* = 0 by inspection of the optimality conditions.
    fn scalar_instance() -> SdpInstance {
        let a = SparseSym::from_triplets(1, &[(0, 0, 1.0)]).unwrap();
        let map = ConstraintMap::new(vec![a]).unwrap();
        let c = SymMat::identity(1);
        let b = DVector::from_column_slice(&[1.0]);
        let planted = PlantedOptimum {
            x_star: SymMat::identity(1),
            y_star: DVector::from_column_slice(&[1.0]),
            s_star: SymMat::zeros(1),
            rank_r: 1,
        };
        SdpInstance::new(c, b, map, 1.5, 1.5, 1.5).unwrap().with_known_optimum(planted)
    }

    #[test]
    fn scalar_instance_classical_converges_to_planted_optimum() {
        let inst = scalar_instance();
        let opts = RunOptions {
            stop: Some(StopRule { dual: 1e-4, gap: 1e-4 }),
            k_max: Some(100_000),
            ..RunOptions::classical()
        };
        let out = run(&inst, &opts).unwrap();
        assert!(out.converged, "did not converge: {:?}", out.trace.records.last());
        // The averaged iterate carries the 1/K ergodic error.
        assert!((out.average.x.mat()[(0, 0)] - 1.0).abs() < 1e-3);
        assert!((out.average.y[0] - 1.0).abs() < 1e-3);
        assert!(out.average.s.frob_norm() < 1e-3);
        // The last iterate lands on the fixed point.
        assert!((out.last.x.mat()[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((out.last.y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn residuals_zero_triple_and_optimum() {
        let inst = scalar_instance();
        let zero =
            residuals(&inst, &SymMat::zeros(1), &DVector::zeros(1), &SymMat::zeros(1)).unwrap();
        assert_eq!(zero.primal, 1.0, "primal residual of zero triple is ||b||");
        let o = inst.known_optimum.clone().unwrap();
        let at_opt = residuals(&inst, &o.x_star, &o.y_star, &o.s_star).unwrap();
        assert!(at_opt.primal <= 1e-8 && at_opt.dual <= 1e-8);
        assert!(at_opt.complementarity.abs() <= 1e-8);
    }

    #[test]
    fn run_single_iteration_average_equals_iterate() {
        let inst = scalar_instance();
        let opts = RunOptions { k_max: Some(1), stop: None, ..RunOptions::classical() };
        let out = run(&inst, &opts).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.average.y, out.last.y);
        assert_eq!(out.average.x.mat(), out.last.x.mat());
        assert!(!out.converged);
        assert_eq!(out.stop_reason, StopReason::KMaxExhausted);
    }

    #[test]
    fn fit_rate_exact_power_law() {
        let series: Vec<f64> = (1..=2000).map(|k| 5.0 / k as f64).collect();
        let fit = fit_convergence_rate(&series).unwrap();
        assert!((fit.slope + 1.0).abs() <= 0.01, "slope {}", fit.slope);
    }

    #[test]
    fn fit_rate_power_law_with_floor() {
        let series: Vec<f64> = (1..=5000).map(|k| 5.0 / k as f64 + 0.01).collect();
        let fit = fit_convergence_rate(&series).unwrap();
        assert!(
            fit.plateau >= 0.009 && fit.plateau <= 0.012,
            "plateau {} outside [0.009, 0.012]",
            fit.plateau
        );
    }

    #[test]
    fn fit_rate_rejects_short_traces() {
        let series = vec![1.0; 10];
        assert!(matches!(fit_convergence_rate(&series), Err(SolverError::TraceTooShort { .. })));
    }
}

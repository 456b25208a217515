//! The polynomial proximal operator.
//!
//! [`build_relu_poly`] constructs and certifies a monotone increasing
//! polynomial `g1` on `[-1, 1]` with `g1(-1) = 0` and
//! `|g1(x) - max(0, x)| <= 2 eps`, the stand-in for the PSD projection in the
//! quantum-emulated solver. [`companion_neg_poly`] derives `g2(x) = x - g1(x)`
//! in coefficient space. [`qsvt_spectral_apply`] applies either polynomial to
//! a normalized symmetric matrix the way the quantum circuit would, returning
//! the per-application cost. [`BarrierSpec`] and [`verify_prox_identity`]
//! implement the scalar virtual-barrier construction
//! `h(x) = (1/gamma) * integral_0^x (g^{-1}(z) - z) dz` and check numerically
//! that the proximal map of `h` reproduces `g`.
//!
//! Construction: `g1` is a Chebyshev interpolant of the smoothed ramp
//! `r_mu(x) = (x + sqrt(x^2 + mu^2)) / 2` with `mu = eps / 2`, shifted so
//! that `g1(-1)` is exactly zero, then certified for sup-error,
//! monotonicity and nonnegativity on a dense grid. On certification failure
//! the degree doubles up to a cap of 4096. The starting degree is
//! `ceil(24 / eps)` (for `eps < 0.15`; `ceil(6 / eps)` above), which makes
//! the certified degree track `24 / eps` across accuracy sweeps.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fm;
use crate::symlin::{eig_sym, SymLinError, SymMat};

/// Degree law constant: certified degrees satisfy `d <= LAW_CONSTANT / eps`
/// up to one doubling.
pub const LAW_CONSTANT: f64 = 24.0;
/// Hard cap on the construction degree.
pub const DEGREE_CAP: usize = 4096;
/// Certification grid cardinality: 10^4 Chebyshev-distributed points plus
/// the endpoints.
pub const CERT_GRID_SIZE: usize = 10_001;

const MONOTONE_SLACK: f64 = 1e-12;
const NONNEG_SLACK: f64 = -1e-12;
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum PolyError {
    /// `eps` must lie in `(0, 1)`; errors of size one are meaningless on the
    /// unit spectral ball.
    EpsOutOfRange { eps: f64 },
    /// Certification failed at the degree cap; carries the best error seen.
    CertificationFailed { degree: usize, achieved: f64, target: f64 },
    /// Polynomial evaluation outside `[-1, 1]`.
    OutOfDomain { x: f64 },
    /// `||V / e_V||_2 > 1`, signalling an underestimated normalization.
    NormalizationExceeded { spectral_norm: f64 },
    /// Normalization constants must be positive.
    NonPositiveNormalization { e_v: f64 },
    /// The barrier needs a strictly increasing polynomial.
    NotIncreasing { min_slope: f64 },
    /// Inverse lookup outside the range of `g`.
    NonBracketing { value: f64, upper: f64 },
    BadParameter(&'static str),
    Eig(SymLinError),
}

impl fmt::Display for PolyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EpsOutOfRange { eps } => write!(f, "eps must be in (0,1), got {eps}"),
            Self::CertificationFailed { degree, achieved, target } => write!(
                f,
                "certification failed at degree cap {degree}: achieved {achieved}, target {target}"
            ),
            Self::OutOfDomain { x } => write!(f, "evaluation point {x} outside [-1,1]"),
            Self::NormalizationExceeded { spectral_norm } => write!(
                f,
                "normalized spectral norm {spectral_norm} exceeds 1; e_V underestimates ||V||"
            ),
            Self::NonPositiveNormalization { e_v } => {
                write!(f, "normalization must be positive, got {e_v}")
            }
            Self::NotIncreasing { min_slope } => {
                write!(f, "polynomial is not strictly increasing (min grid slope {min_slope})")
            }
            Self::NonBracketing { value, upper } => {
                write!(f, "value {value} outside the range [0, {upper}] of g")
            }
            Self::BadParameter(msg) => write!(f, "{msg}"),
            Self::Eig(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PolyError {}

impl From<SymLinError> for PolyError {
    fn from(e: SymLinError) -> Self {
        Self::Eig(e)
    }
}

pub type Result<T> = core::result::Result<T, PolyError>;

/// Polynomial in the Chebyshev basis on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebPoly {
    coeffs: Vec<f64>,
}

impl ChebPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            Self { coeffs: vec![0.0] }
        } else {
            Self { coeffs }
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Clenshaw backward recurrence, without the constant term. The full
    /// value is `tail(x) + coeffs[0]`; keeping the constant-term addition
    /// last lets the constructor pin `g(-1)` to exactly zero.
    fn tail(&self, x: f64) -> f64 {
        if self.coeffs.len() == 1 {
            return 0.0;
        }
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs[1..].iter().rev() {
            let b = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b;
        }
        x * b1 - b2
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        self.tail(x) + self.coeffs[0]
    }

    /// Derivative in coefficient space (standard Chebyshev recurrence).
    pub fn derivative(&self) -> ChebPoly {
        let n = self.coeffs.len();
        if n <= 1 {
            return ChebPoly::new(vec![0.0]);
        }
        let c = &self.coeffs;
        let mut d = vec![0.0; n - 1];
        // d_k = d_{k+2} + 2 (k+1) c_{k+1}, downward, then halve d_0.
        for k in (0..n - 1).rev() {
            let dk2 = if k + 2 < n - 1 { d[k + 2] } else { 0.0 };
            d[k] = dk2 + 2.0 * (k as f64 + 1.0) * c[k + 1];
        }
        d[0] *= 0.5;
        ChebPoly::new(d)
    }
}

/// Numerically stable Clenshaw evaluation, guarded to `[-1, 1]` with a small
/// tolerance for roundoff in eigenvalues of normalized matrices.
pub fn eval_poly(p: &ChebPoly, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(PolyError::OutOfDomain { x });
    }
    Ok(p.eval_unchecked(x.clamp(-1.0, 1.0)))
}

/// The certification grid: `10^4` Chebyshev-distributed points plus the
/// endpoints, ascending.
fn cert_grid() -> Vec<f64> {
    let n = CERT_GRID_SIZE - 1;
    let mut grid: Vec<f64> = (0..=n)
        .map(|i| -fm::cos(core::f64::consts::PI * i as f64 / n as f64))
        .collect();
    grid[0] = -1.0;
    grid[n] = 1.0;
    grid
}

/// Monotone polynomial approximation of `max(0, x)` with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonePoly {
    poly: ChebPoly,
    eps_target: f64,
    eps_certified: f64,
    grid_size: usize,
}

impl MonotonePoly {
    pub fn poly(&self) -> &ChebPoly {
        &self.poly
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn eps_target(&self) -> f64 {
        self.eps_target
    }

    /// Measured sup-error against `max(0, x)` on the certification grid.
    pub fn eps_certified(&self) -> f64 {
        self.eps_certified
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        eval_poly(&self.poly, x)
    }

    /// Re-certifies externally supplied coefficients (e.g. a certificate
    /// loaded from disk) instead of trusting the recorded error.
    pub fn from_parts(coeffs: Vec<f64>, eps_target: f64) -> Result<Self> {
        if !(eps_target > 0.0 && eps_target < 1.0) {
            return Err(PolyError::EpsOutOfRange { eps: eps_target });
        }
        let poly = ChebPoly::new(coeffs);
        match certify(&poly, eps_target) {
            Ok(eps_certified) => {
                Ok(Self { poly, eps_target, eps_certified, grid_size: CERT_GRID_SIZE })
            }
            Err(achieved) => Err(PolyError::CertificationFailed {
                degree: poly.degree(),
                achieved,
                target: 2.0 * eps_target,
            }),
        }
    }
}

fn start_degree(eps: f64) -> usize {
    let c = if eps >= 0.15 { 6.0 } else { LAW_CONSTANT };
    libm::ceil(c / eps) as usize
}

/// Chebyshev interpolation of the smoothed ramp at `degree + 1` Chebyshev
/// roots, followed by the exact `g(-1) = 0` shift.
fn fit_shifted(eps: f64, degree: usize) -> ChebPoly {
    let mu = 0.5 * eps;
    let points = degree + 1;
    let mut coeffs = vec![0.0; points];
    for j in 0..points {
        let theta = core::f64::consts::PI * (2.0 * j as f64 + 1.0) / (2.0 * points as f64);
        let t = fm::cos(theta);
        let fx = 0.5 * (t + fm::sqrt(t * t + mu * mu));
        // cos(k * theta) by the Chebyshev recurrence in k.
        let mut ck_prev = 1.0;
        let mut ck = t;
        coeffs[0] += fx;
        if points > 1 {
            coeffs[1] += fx * ck;
        }
        for coeff in coeffs.iter_mut().skip(2) {
            let next = 2.0 * t * ck - ck_prev;
            ck_prev = ck;
            ck = next;
            *coeff += fx * ck;
        }
    }
    let scale = 2.0 / points as f64;
    for c in coeffs.iter_mut() {
        *c *= scale;
    }
    coeffs[0] *= 0.5;
    let mut poly = ChebPoly::new(coeffs);
    // Pin g(-1) to exactly zero: the constant term is added last in
    // evaluation, so setting it to -tail(-1) makes eval(-1) == 0.0 bitwise.
    poly.coeffs[0] = -poly.tail(-1.0);
    poly
}

/// Grid certification. Returns the certified sup-error on success, or the
/// achieved sup-error on failure (monotonicity/nonnegativity failures return
/// infinity so they are never mistaken for a near-miss).
fn certify(poly: &ChebPoly, eps: f64) -> core::result::Result<f64, f64> {
    let grid = cert_grid();
    let mut sup = 0.0f64;
    let mut prev = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut nonneg = true;
    for &x in &grid {
        let v = poly.eval_unchecked(x);
        sup = sup.max((v - x.max(0.0)).abs());
        if v < prev - MONOTONE_SLACK {
            monotone = false;
        }
        if v < NONNEG_SLACK {
            nonneg = false;
        }
        prev = v;
    }
    if sup <= 2.0 * eps && monotone && nonneg && poly.eval_unchecked(-1.0) == 0.0 {
        Ok(sup)
    } else if monotone && nonneg {
        Err(sup)
    } else {
        Err(f64::INFINITY)
    }
}

/// Builds a certified monotone increasing polynomial approximation of
/// `max(0, x)` with `g(-1) = 0` and sup-error at most `2 eps` on `[-1, 1]`.
pub fn build_relu_poly(eps: f64) -> Result<MonotonePoly> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(PolyError::EpsOutOfRange { eps });
    }
    let mut degree = start_degree(eps).min(DEGREE_CAP);
    let mut best_achieved = f64::INFINITY;
    loop {
        let poly = fit_shifted(eps, degree);
        match certify(&poly, eps) {
            Ok(eps_certified) => {
                return Ok(MonotonePoly {
                    poly,
                    eps_target: eps,
                    eps_certified,
                    grid_size: CERT_GRID_SIZE,
                })
            }
            Err(achieved) => best_achieved = best_achieved.min(achieved),
        }
        if degree >= DEGREE_CAP {
            return Err(PolyError::CertificationFailed {
                degree,
                achieved: best_achieved,
                target: 2.0 * eps,
            });
        }
        degree = (degree * 2).min(DEGREE_CAP);
    }
}

/// The companion `g2(x) = x - g1(x)`, exactly in coefficient space, so the
/// identity `gamma * X~ + V~ == S~` holds to machine precision after spectral
/// application.
pub fn companion_neg_poly(g1: &MonotonePoly) -> ChebPoly {
    let mut coeffs: Vec<f64> = g1.poly().coeffs().iter().map(|c| -c).collect();
    if coeffs.len() < 2 {
        coeffs.resize(2, 0.0);
    }
    coeffs[1] += 1.0;
    ChebPoly::new(coeffs)
}

/// Cost of one emulated QSVT application: `degree` applications of the
/// block-encoding and O(degree) extra gates (unit constants). The
/// half-scaling `|p| <= 1/2` demanded by the transformation theorem is a
/// ledger-side convention only; values are computed at full scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsvtCost {
    pub degree: usize,
    pub block_queries: f64,
    pub extra_gates: f64,
}

/// Applies `p` to the spectrum of `V / e_V` and rescales:
/// returns `e_V * p(V / e_V)` together with the circuit cost.
///
/// This is the classical emulation of the QSVT circuit: eigendecomposition
/// plus scalar evaluation. Fails if `||V / e_V||_2 > 1 + 1e-9`, which signals
/// an underestimated normalization constant.
pub fn qsvt_spectral_apply(p: &ChebPoly, v: &SymMat, e_v: f64) -> Result<(SymMat, QsvtCost)> {
    if !(e_v > 0.0) {
        return Err(PolyError::NonPositiveNormalization { e_v });
    }
    let eig = eig_sym(&v.scale(1.0 / e_v))?;
    let spectral_norm = eig.values.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    if spectral_norm > 1.0 + 1e-9 {
        return Err(PolyError::NormalizationExceeded { spectral_norm });
    }
    let out = eig.assemble(|l| e_v * p.eval_unchecked(l.clamp(-1.0, 1.0)))?;
    let d = p.degree();
    let cost = QsvtCost { degree: d, block_queries: d as f64, extra_gates: d as f64 };
    Ok((out, cost))
}

/// The scalar virtual barrier `h` built from a strictly increasing
/// polynomial `g`:
///
/// `h(x) = (1/gamma) * integral_0^x (g^{-1}(z) - z) dz` for `x >= 0`,
/// `+infinity` for `x < 0`.
///
/// The integral is evaluated after the exact substitution `z = g(w)`, which
/// turns the integrand into the smooth polynomial expression
/// `(w - g(w)) g'(w)` on `[-1, g^{-1}(x)]`; composite Simpson with
/// `quadrature_points` intervals is applied there. (A uniform grid in `z`
/// cannot resolve the near-flat foot of `g`, where `g^{-1}` climbs from -1
/// across a vanishing `z`-range.)
#[derive(Debug, Clone)]
pub struct BarrierSpec {
    poly: ChebPoly,
    dpoly: ChebPoly,
    gamma: f64,
    inverse_tol: f64,
    quadrature_points: usize,
    g_at_one: f64,
    /// Prefix Simpson sums of the substituted integrand at even grid nodes.
    prefix: Vec<f64>,
    step: f64,
}

impl BarrierSpec {
    pub fn new(
        poly: ChebPoly,
        gamma: f64,
        inverse_tol: f64,
        quadrature_points: usize,
    ) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(PolyError::BadParameter("gamma must be positive"));
        }
        if !(inverse_tol > 0.0) {
            return Err(PolyError::BadParameter("inverse_tol must be positive"));
        }
        if quadrature_points < 2 {
            return Err(PolyError::BadParameter("need at least 2 quadrature intervals"));
        }
        // Strict increase on the certification grid; the inverse needs it.
        let grid = cert_grid();
        let mut min_slope = f64::INFINITY;
        let mut prev = poly.eval_unchecked(grid[0]);
        for &x in &grid[1..] {
            let v = poly.eval_unchecked(x);
            min_slope = min_slope.min(v - prev);
            prev = v;
        }
        if !(min_slope > 0.0) {
            return Err(PolyError::NotIncreasing { min_slope });
        }
        let n = quadrature_points + quadrature_points % 2;
        let dpoly = poly.derivative();
        let step = 2.0 / n as f64;
        let integrand = |w: f64| (w - poly.eval_unchecked(w)) * dpoly.eval_unchecked(w);
        let mut prefix = Vec::with_capacity(n / 2 + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for k in 0..n / 2 {
            let w0 = -1.0 + 2.0 * k as f64 * step;
            let w1 = w0 + step;
            let w2 = w0 + 2.0 * step;
            acc += step / 3.0 * (integrand(w0) + 4.0 * integrand(w1) + integrand(w2));
            prefix.push(acc);
        }
        let g_at_one = poly.eval_unchecked(1.0);
        Ok(Self { poly, dpoly, gamma, inverse_tol, quadrature_points: n, g_at_one, prefix, step })
    }

    /// Bisection tolerance `1e-10` and 2048 Simpson intervals.
    pub fn with_defaults(poly: ChebPoly, gamma: f64) -> Result<Self> {
        Self::new(poly, gamma, 1e-10, 2048)
    }

    pub fn poly(&self) -> &ChebPoly {
        &self.poly
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn quadrature_points(&self) -> usize {
        self.quadrature_points
    }

    /// Upper end of the barrier domain, `g(1)`.
    pub fn upper(&self) -> f64 {
        self.g_at_one
    }

    /// `g^{-1}(z)` by bisection on `[-1, 1]` to `inverse_tol`, with a few
    /// bracket-clamped Newton steps to polish off the quantization (the
    /// minimizer downstream is sensitive to evaluation noise).
    pub fn g_inverse(&self, z: f64) -> Result<f64> {
        if z < -self.inverse_tol || z > self.g_at_one + self.inverse_tol {
            return Err(PolyError::NonBracketing { value: z, upper: self.g_at_one });
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while hi - lo > self.inverse_tol {
            let mid = 0.5 * (lo + hi);
            if self.poly.eval_unchecked(mid) < z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut w = 0.5 * (lo + hi);
        for _ in 0..3 {
            let slope = self.dpoly.eval_unchecked(w);
            if !(slope > 0.0) {
                break;
            }
            let residual = self.poly.eval_unchecked(w) - z;
            w = (w - residual / slope).clamp(-1.0, 1.0);
        }
        Ok(w)
    }

    fn integrand(&self, w: f64) -> f64 {
        (w - self.poly.eval_unchecked(w)) * self.dpoly.eval_unchecked(w)
    }

    /// `integral_{-1}^{w} (v - g(v)) g'(v) dv` from the prefix table plus a
    /// local Simpson segment.
    fn integral_to(&self, w: f64) -> f64 {
        let t = (w + 1.0) / (2.0 * self.step);
        let pair = (t as usize).min(self.prefix.len() - 1);
        let base = self.prefix[pair];
        let w0 = -1.0 + 2.0 * pair as f64 * self.step;
        if w <= w0 {
            return base;
        }
        let mid = 0.5 * (w0 + w);
        base + (w - w0) / 6.0
            * (self.integrand(w0) + 4.0 * self.integrand(mid) + self.integrand(w))
    }
}

/// The barrier value `h(x)`. Returns `+infinity` for `x < 0` and errors if
/// `x` exceeds the range of `g`.
pub fn barrier_value(spec: &BarrierSpec, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        // Empty integral; g(-1) = 0 makes the lower limit exact.
        return Ok(0.0);
    }
    if x > spec.g_at_one + 1e-9 {
        return Err(PolyError::NonBracketing { value: x, upper: spec.g_at_one });
    }
    let w = spec.g_inverse(x.min(spec.g_at_one))?;
    Ok(spec.integral_to(w) / spec.gamma)
}

/// One verified sample of the proximal identity.
#[derive(Debug, Clone, Copy)]
pub struct ProxSample {
    pub x: f64,
    /// `g(x)`, the value the proximal map must reproduce.
    pub target: f64,
    /// Golden-section argmin of `u -> (x-u)^2/2 + gamma h(u)` on `[0, g(1)]`.
    pub argmin: f64,
    pub gap: f64,
    /// False when the coarse scan saw multiple local minima, i.e. the sample
    /// violates the strict-monotonicity precondition of the construction.
    pub unimodal: bool,
}

/// Report of [`verify_prox_identity`].
#[derive(Debug, Clone)]
pub struct ProxReport {
    pub samples: Vec<ProxSample>,
    pub max_gap: f64,
}

impl ProxReport {
    /// All gaps within `tol` and every objective unimodal.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_gap <= tol && self.samples.iter().all(|s| s.unimodal)
    }
}

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9;

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN_INV * (b - a);
    let mut d = a + GOLDEN_INV * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN_INV * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN_INV * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// For each sample `x` in `(-1, 1)`, minimizes
/// `u -> (x - u)^2 / 2 + gamma * h(u)` over `u` in `[0, g(1)]` by
/// golden-section search and reports the gap `|argmin - g(x)|`. A coarse
/// scan flags samples whose objective is not unimodal.
pub fn verify_prox_identity(spec: &BarrierSpec, samples: &[f64]) -> Result<ProxReport> {
    let upper = spec.g_at_one;
    let mut out = Vec::with_capacity(samples.len());
    let mut max_gap = 0.0f64;
    for &x in samples {
        if !(-1.0 < x && x < 1.0) {
            return Err(PolyError::OutOfDomain { x });
        }
        let target = spec.poly.eval_unchecked(x);
        let objective = |u: f64| {
            let w = spec.g_inverse(u).expect("u within the range of g");
            let h = spec.integral_to(w) / spec.gamma;
            0.5 * (x - u) * (x - u) + spec.gamma * h
        };
        // Coarse unimodality scan.
        let scan = 64usize;
        let mut minima = 0;
        let mut window = [0.0f64; 3];
        for k in 0..=scan {
            let u = upper * k as f64 / scan as f64;
            let v = objective(u);
            window.rotate_left(1);
            window[2] = v;
            if k >= 2 {
                let depth = 1e-12 * (1.0 + window[1].abs());
                if window[1] < window[0] - depth && window[1] < window[2] - depth {
                    minima += 1;
                }
            }
        }
        let unimodal = minima <= 1;
        let argmin = golden_section(&objective, 0.0, upper, 1e-7);
        let gap = (argmin - target).abs();
        max_gap = max_gap.max(gap);
        out.push(ProxSample { x, target, argmin, gap, unimodal });
    }
    Ok(ProxReport { samples: out, max_gap })
}

//! Instance generation, ingestion, normalization and validation.
//!
//! * [`gen_random_sdp`] — random sparse instances with a planted primal-dual
//!   optimum built from complementary eigenspaces, so the objective gap is
//!   measurable exactly without an external solver.
//! * [`gen_maxcut`] — the max-cut relaxation of a graph: diagonal unit
//!   constraints (identity Gram matrix) and the scaled negative Laplacian as
//!   the objective.
//! * [`parse_sdpa`] / [`write_sdpa`] — single-block SDPA sparse text format,
//!   17 significant digits, normalization applied on load with the scale
//!   recorded.
//! * [`validate`] — normalization, symmetry, conditioning and (when planted)
//!   optimality checks, returned as a diagnostic report.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::solver::{residuals, PlantedOptimum, SdpInstance, SolverError};
use crate::symlin::{ConstraintMap, SparseSym, SymLinError, SymMat};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemsError {
    BadParams(&'static str),
    /// Constraint draws kept producing a rank-deficient Gram matrix.
    GenerationFailed { attempts: usize },
    Sdpa(SdpaError),
    Lin(SymLinError),
    Solver(SolverError),
}

impl fmt::Display for ProblemsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadParams(msg) => write!(f, "bad generator parameters: {msg}"),
            Self::GenerationFailed { attempts } => {
                write!(f, "gave up after {attempts} rank-deficient constraint draws")
            }
            Self::Sdpa(e) => write!(f, "{e}"),
            Self::Lin(e) => write!(f, "{e}"),
            Self::Solver(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ProblemsError {}

impl From<SdpaError> for ProblemsError {
    fn from(e: SdpaError) -> Self {
        Self::Sdpa(e)
    }
}

impl From<SymLinError> for ProblemsError {
    fn from(e: SymLinError) -> Self {
        Self::Lin(e)
    }
}

impl From<SolverError> for ProblemsError {
    fn from(e: SolverError) -> Self {
        Self::Solver(e)
    }
}

pub type Result<T> = core::result::Result<T, ProblemsError>;

/// Parameters of the planted-optimum generator.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenRandomSdp {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub seed: u64,
    /// Nonzero upper-triangle entries per constraint matrix.
    pub nnz_per_mat: usize,
    /// Norm-bound slack: `R = r_slack * ||planted||`. At the default 1.1 the
    /// set projections activate near, but not at, the optimum.
    pub r_slack: f64,
    /// Target Frobenius norm of the planted primal optimum.
    pub x_norm: f64,
    /// Target Frobenius norm of the planted dual slack.
    pub s_norm: f64,
    /// Target 2-norm of the planted dual vector.
    pub y_norm: f64,
}

impl GenRandomSdp {
    pub fn new(n: usize, m: usize, rank: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            rank,
            seed,
            nnz_per_mat: 4,
            r_slack: 1.1,
            x_norm: 0.5,
            s_norm: 0.5,
            y_norm: 0.8,
        }
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    qr.q()
}

fn draw_sparse_constraints(
    params: &GenRandomSdp,
    rng: &mut ChaCha20Rng,
) -> Result<ConstraintMap> {
    let n = params.n;
    let mats: Vec<SparseSym> = (0..params.m)
        .map(|_| {
            let mut trips: Vec<(usize, usize, f64)> = Vec::new();
            while trips.len() < params.nnz_per_mat {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                let (i, j) = if i <= j { (i, j) } else { (j, i) };
                if trips.iter().any(|&(a, b, _)| (a, b) == (i, j)) {
                    continue;
                }
                trips.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
            let raw = SparseSym::from_triplets(n, &trips)?;
            Ok(raw.scaled(1.0 / raw.frob_norm()))
        })
        .collect::<Result<_>>()?;
    Ok(ConstraintMap::new(mats)?)
}

/// Generates a random sparse instance with a planted optimum.
///
/// `X*` and `S*` live on complementary eigenspaces of a random orthogonal
/// basis (so `X* S* = 0` by construction), `b = A(X*)` and
/// `C = A*(y*) + S*` close the optimality conditions, and if `||C||_F`
/// exceeds one the dual side `(C, y*, S*)` is rescaled together (recorded in
/// `obj_scale`). Norm bounds are set to `r_slack` times the planted norms.
/// Rank-deficient constraint draws are retried with a fresh seed, up to ten
/// times.
pub fn gen_random_sdp(params: &GenRandomSdp) -> Result<SdpInstance> {
    use rand::SeedableRng;
    let GenRandomSdp { n, m, rank, .. } = *params;
    if n == 0 || rank == 0 || rank >= n {
        return Err(ProblemsError::BadParams("need 1 <= rank < n"));
    }
    if m == 0 || m > n * (n + 1) / 2 {
        return Err(ProblemsError::BadParams("need 1 <= m <= n(n+1)/2"));
    }
    if params.nnz_per_mat == 0 || params.nnz_per_mat > n * (n + 1) / 2 {
        return Err(ProblemsError::BadParams("nnz_per_mat out of range"));
    }
    if !(params.r_slack >= 1.0) {
        return Err(ProblemsError::BadParams("r_slack must be at least 1"));
    }
    const ATTEMPTS: usize = 10;
    for attempt in 0..ATTEMPTS as u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed.wrapping_add(attempt));
        let map = draw_sparse_constraints(params, &mut rng)?;
        if map.gram().is_err() {
            continue;
        }

        let basis = random_orthogonal(n, &mut rng);
        let mut x_star = DMatrix::zeros(n, n);
        for k in 0..rank {
            let col = basis.column(k);
            let w: f64 = rng.random_range(0.5..1.5);
            x_star += col * col.transpose() * w;
        }
        let mut s_star = DMatrix::zeros(n, n);
        for k in rank..n {
            let col = basis.column(k);
            let w: f64 = rng.random_range(0.5..1.5);
            s_star += col * col.transpose() * w;
        }
        let x_star = SymMat::from_matrix(x_star)?;
        let s_star = SymMat::from_matrix(s_star)?;
        let x_star = x_star.scale(params.x_norm / x_star.frob_norm());
        let mut s_star = s_star.scale(params.s_norm / s_star.frob_norm());

        let raw_y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut y_star = &raw_y * (params.y_norm / raw_y.norm());

        let mut c = &map.apply_adjoint(&y_star)? + &s_star;
        let c_norm = c.frob_norm();
        let mut obj_scale = 1.0;
        if c_norm > 1.0 {
            c = c.scale(1.0 / c_norm);
            y_star /= c_norm;
            s_star = s_star.scale(1.0 / c_norm);
            obj_scale = c_norm;
        }
        let b = map.apply(&x_star)?;

        let r_x = params.r_slack * x_star.frob_norm();
        let r_y = params.r_slack * y_star.iter().map(|v| v.abs()).sum::<f64>();
        let r_s = params.r_slack * s_star.frob_norm();
        let planted = PlantedOptimum { x_star, y_star, s_star, rank_r: rank };
        let inst = SdpInstance::new(c, b, map, r_x, r_y, r_s)?
            .with_obj_scale(obj_scale)
            .with_known_optimum(planted);
        return Ok(inst);
    }
    Err(ProblemsError::GenerationFailed { attempts: ATTEMPTS })
}

/// Simple undirected graph for the max-cut generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds from an edge list; self-loops and out-of-range endpoints are
    /// rejected, duplicates collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(ProblemsError::BadParams("graph needs at least 2 vertices"));
        }
        let mut cleaned: Vec<(usize, usize)> = Vec::new();
        for &(u, v) in edges {
            if u == v {
                return Err(ProblemsError::BadParams("self-loops are not allowed"));
            }
            if u >= n || v >= n {
                return Err(ProblemsError::BadParams("edge endpoint out of range"));
            }
            let e = if u < v { (u, v) } else { (v, u) };
            if !cleaned.contains(&e) {
                cleaned.push(e);
            }
        }
        if cleaned.is_empty() {
            return Err(ProblemsError::BadParams("graph needs at least one edge"));
        }
        cleaned.sort_unstable();
        Ok(Self { n, edges: cleaned })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(ProblemsError::BadParams("cycle needs at least 3 vertices"));
        }
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Graph Laplacian `L = D - W`.
    pub fn laplacian(&self) -> SymMat {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            l[(u, u)] += 1.0;
            l[(v, v)] += 1.0;
            l[(u, v)] -= 1.0;
            l[(v, u)] -= 1.0;
        }
        SymMat::from_matrix(l).expect("n >= 2")
    }
}

/// Builds the max-cut relaxation of `graph`:
/// constraints `A_i = e_i e_i^T` (unit Frobenius norms, identity Gram),
/// `b = 1`, and `C = -L / (4 ||L/4||_F)` so that minimizing `<C, X>`
/// maximizes the relaxed cut value. The scale `||L/4||_F` is recorded in
/// `obj_scale`, so the unnormalized relaxation value is
/// `obj_scale * (-b^T y)` at the dual optimum.
pub fn gen_maxcut(graph: &Graph) -> Result<SdpInstance> {
    let n = graph.n();
    let mats: Vec<SparseSym> = (0..n)
        .map(|i| SparseSym::from_triplets(n, &[(i, i, 1.0)]))
        .collect::<core::result::Result<_, _>>()?;
    let map = ConstraintMap::new(mats)?;
    let quarter = graph.laplacian().scale(0.25);
    let scale = quarter.frob_norm();
    let c = quarter.scale(-1.0 / scale);
    let b = DVector::from_element(n, 1.0);
    // Documented heuristics, not tight bounds: any PSD X with unit diagonal
    // has ||X||_F <= n; the dual slack is C - Diag(y).
    let r_x = n as f64;
    let r_y = 2.0 * n as f64;
    let r_s = 1.0 + 2.0 * n as f64;
    Ok(SdpInstance::new(c, b, map, r_x, r_y, r_s)?.with_obj_scale(scale))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdpaError {
    MissingSection(&'static str),
    Malformed { line: usize, what: String },
    MultiBlockUnsupported { nblocks: usize },
    DiagonalBlockUnsupported,
    MatrixIndexOutOfRange { line: usize, matno: usize, m: usize },
    EntryOutOfRange { line: usize, i: usize, j: usize, n: usize },
    ConflictingDuplicate { matno: usize, i: usize, j: usize },
}

impl fmt::Display for SdpaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingSection(what) => write!(f, "missing {what} in SDPA file"),
            Self::Malformed { line, what } => write!(f, "line {line}: {what}"),
            Self::MultiBlockUnsupported { nblocks } => {
                write!(f, "multi-block files are unsupported (nblocks = {nblocks})")
            }
            Self::DiagonalBlockUnsupported => {
                write!(f, "diagonal (negative-size) blocks are unsupported")
            }
            Self::MatrixIndexOutOfRange { line, matno, m } => {
                write!(f, "line {line}: matrix index {matno} out of range 0..={m}")
            }
            Self::EntryOutOfRange { line, i, j, n } => {
                write!(f, "line {line}: entry ({i},{j}) out of range for block size {n}")
            }
            Self::ConflictingDuplicate { matno, i, j } => {
                write!(f, "matrix {matno}: conflicting duplicate entry at ({i},{j})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SdpaError {}

/// Raw single-block SDPA data, before normalization.
#[derive(Debug, Clone)]
pub struct ParsedSdpa {
    pub m: usize,
    pub n: usize,
    pub b: DVector<f64>,
    pub c: SymMat,
    pub mats: Vec<SparseSym>,
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|ch: char| ch.is_whitespace() || matches!(ch, '(' | ')' | '{' | '}' | ','))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Parses the SDPA sparse text format (`.dat-s`):
/// comment lines starting with `"` or `*`; then the constraint count `m`,
/// the block count (must be 1), the block size, the `m` right-hand-side
/// values, and entry quintuples `matno blockno i j value` with 1-based
/// indices and `matno 0` addressing the objective matrix.
pub fn parse_sdpa(text: &str) -> core::result::Result<ParsedSdpa, SdpaError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(idx, l)| (idx + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));

    let (line_no, m_line) = lines.next().ok_or(SdpaError::MissingSection("constraint count"))?;
    let m: usize = tokens(m_line)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or(SdpaError::Malformed { line: line_no, what: "constraint count".to_string() })?;
    if m == 0 {
        return Err(SdpaError::Malformed { line: line_no, what: "m must be >= 1".to_string() });
    }

    let (line_no, nb_line) = lines.next().ok_or(SdpaError::MissingSection("block count"))?;
    let nblocks: usize = tokens(nb_line)
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or(SdpaError::Malformed { line: line_no, what: "block count".to_string() })?;
    if nblocks != 1 {
        return Err(SdpaError::MultiBlockUnsupported { nblocks });
    }

    let (line_no, bs_line) = lines.next().ok_or(SdpaError::MissingSection("block sizes"))?;
    let sizes = tokens(bs_line);
    if sizes.len() != 1 {
        return Err(SdpaError::Malformed {
            line: line_no,
            what: format!("expected 1 block size, found {}", sizes.len()),
        });
    }
    let size: i64 = sizes[0]
        .parse()
        .map_err(|_| SdpaError::Malformed { line: line_no, what: "block size".to_string() })?;
    if size < 0 {
        return Err(SdpaError::DiagonalBlockUnsupported);
    }
    if size == 0 {
        return Err(SdpaError::Malformed { line: line_no, what: "block size 0".to_string() });
    }
    let n = size as usize;

    let (line_no, b_line) = lines.next().ok_or(SdpaError::MissingSection("right-hand side"))?;
    let b_tokens = tokens(b_line);
    if b_tokens.len() != m {
        return Err(SdpaError::Malformed {
            line: line_no,
            what: format!("expected {m} right-hand-side values, found {}", b_tokens.len()),
        });
    }
    let mut b = DVector::zeros(m);
    for (k, t) in b_tokens.iter().enumerate() {
        b[k] = t.parse().map_err(|_| SdpaError::Malformed {
            line: line_no,
            what: format!("right-hand-side value '{t}'"),
        })?;
    }

    let mut triplets: Vec<Vec<(usize, usize, f64)>> = alloc::vec![Vec::new(); m + 1];
    for (line_no, line) in lines {
        let toks = tokens(line);
        if toks.len() != 5 {
            return Err(SdpaError::Malformed {
                line: line_no,
                what: format!("expected 5 entry fields, found {}", toks.len()),
            });
        }
        let matno: usize = toks[0].parse().map_err(|_| SdpaError::Malformed {
            line: line_no,
            what: format!("matrix index '{}'", toks[0]),
        })?;
        if matno > m {
            return Err(SdpaError::MatrixIndexOutOfRange { line: line_no, matno, m });
        }
        let blockno: usize = toks[1].parse().map_err(|_| SdpaError::Malformed {
            line: line_no,
            what: format!("block index '{}'", toks[1]),
        })?;
        if blockno != 1 {
            return Err(SdpaError::Malformed {
                line: line_no,
                what: format!("block index {blockno} in a single-block file"),
            });
        }
        let i: usize = toks[2].parse().map_err(|_| SdpaError::Malformed {
            line: line_no,
            what: format!("row index '{}'", toks[2]),
        })?;
        let j: usize = toks[3].parse().map_err(|_| SdpaError::Malformed {
            line: line_no,
            what: format!("column index '{}'", toks[3]),
        })?;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(SdpaError::EntryOutOfRange { line: line_no, i, j, n });
        }
        let value: f64 = toks[4].parse().map_err(|_| SdpaError::Malformed {
            line: line_no,
            what: format!("value '{}'", toks[4]),
        })?;
        let (i, j) = if i <= j { (i - 1, j - 1) } else { (j - 1, i - 1) };
        let bucket = &mut triplets[matno];
        if let Some(&(_, _, existing)) =
            bucket.iter().find(|&&(a, bb, _)| a == i && bb == j)
        {
            if existing != value {
                return Err(SdpaError::ConflictingDuplicate { matno, i: i + 1, j: j + 1 });
            }
            continue;
        }
        bucket.push((i, j, value));
    }

    let c = SparseSym::from_triplets(n, &triplets[0])
        .map_err(|e| SdpaError::Malformed { line: 0, what: format!("objective matrix: {e}") })?
        .to_dense();
    let mats: Vec<SparseSym> = (1..=m)
        .map(|k| {
            SparseSym::from_triplets(n, &triplets[k]).map_err(|e| SdpaError::Malformed {
                line: 0,
                what: format!("constraint matrix {k}: {e}"),
            })
        })
        .collect::<core::result::Result<_, _>>()?;
    Ok(ParsedSdpa { m, n, b, c, mats })
}

/// Assembles an instance from parsed SDPA data, normalizing on load:
/// if `||C||_F > 1` the objective is scaled down (recorded in `obj_scale`),
/// and any constraint with `||A_i||_F > 1` is scaled down together with its
/// right-hand side (an equivalent constraint).
pub fn sdpa_to_instance(
    parsed: &ParsedSdpa,
    r_x: f64,
    r_y: f64,
    r_s: f64,
) -> Result<SdpInstance> {
    let mut c = parsed.c.clone();
    let mut obj_scale = 1.0;
    let c_norm = c.frob_norm();
    if c_norm > 1.0 {
        c = c.scale(1.0 / c_norm);
        obj_scale = c_norm;
    }
    let mut b = parsed.b.clone();
    let mats: Vec<SparseSym> = parsed
        .mats
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let norm = a.frob_norm();
            if norm > 1.0 {
                b[k] /= norm;
                a.scaled(1.0 / norm)
            } else {
                a.clone()
            }
        })
        .collect();
    let map = ConstraintMap::new(mats)?;
    Ok(SdpInstance::new(c, b, map, r_x, r_y, r_s)?.with_obj_scale(obj_scale))
}

fn push_entries(out: &mut String, matno: usize, mat: &SparseSym) {
    for &(i, j, v) in mat.triplets() {
        if v != 0.0 {
            out.push_str(&format!("{matno} 1 {} {} {:.16e}\n", i + 1, j + 1, v));
        }
    }
}

/// Serializes an instance to SDPA sparse text with 17 significant digits,
/// which round-trips `f64` values exactly.
pub fn write_sdpa(inst: &SdpInstance) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n", inst.m));
    out.push_str("1\n");
    out.push_str(&format!("{}\n", inst.n));
    let b_line: Vec<String> = inst.b.iter().map(|v| format!("{v:.16e}")).collect();
    out.push_str(&b_line.join(" "));
    out.push('\n');
    // Objective matrix as sparse upper-triangle entries.
    let mut c_trips = Vec::new();
    for i in 0..inst.n {
        for j in i..inst.n {
            let v = inst.c.mat()[(i, j)];
            if v != 0.0 {
                c_trips.push((i, j, v));
            }
        }
    }
    let c_sparse = SparseSym::from_triplets(inst.n.max(1), &c_trips);
    if let Ok(cs) = c_sparse {
        push_entries(&mut out, 0, &cs);
    }
    for (k, a) in inst.map.mats().iter().enumerate() {
        push_entries(&mut out, k + 1, a);
    }
    out
}

/// One validation check with its outcome.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    /// Warnings do not fail the report.
    pub warning: bool,
    pub detail: String,
}

/// Diagnostic report of [`validate`].
#[derive(Debug, Clone, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.warning)
    }

    fn push(&mut self, name: &str, passed: bool, warning: bool, detail: String) {
        self.checks.push(ValidationCheck { name: name.to_string(), passed, warning, detail });
    }
}

const NORM_TOL: f64 = 1e-9;
const KAPPA_WARN: f64 = 1e8;

/// Checks normalization (`||C||_F <= 1`, `||A_i||_F <= 1`), Gram
/// conditioning, and, when an optimum is planted, the optimality residuals.
pub fn validate(inst: &SdpInstance) -> ValidationReport {
    let mut report = ValidationReport::default();

    let c_norm = inst.c.frob_norm();
    report.push(
        "objective-normalized",
        c_norm <= 1.0 + NORM_TOL,
        false,
        format!("||C||_F = {c_norm}"),
    );

    let worst = inst
        .map
        .frob_norms()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite norms"));
    if let Some((idx, &norm)) = worst {
        report.push(
            "constraints-normalized",
            norm <= 1.0 + NORM_TOL,
            false,
            format!("max ||A_i||_F = {norm} at constraint {idx}"),
        );
    }

    match inst.map.gram() {
        Ok(gram) => {
            let kappa = gram.kappa_sq();
            report.push(
                "gram-conditioning",
                true,
                kappa > KAPPA_WARN,
                format!("kappa_A^2 = {kappa}"),
            );
        }
        Err(e) => report.push("gram-conditioning", false, false, format!("{e}")),
    }

    if let Some(opt) = &inst.known_optimum {
        match residuals(inst, &opt.x_star, &opt.y_star, &opt.s_star) {
            Ok(res) => {
                let ok = res.primal <= 1e-8
                    && res.dual <= 1e-8
                    && res.complementarity.abs() <= 1e-8;
                report.push(
                    "planted-optimality",
                    ok,
                    false,
                    format!(
                        "primal {:.3e}, dual {:.3e}, complementarity {:.3e}",
                        res.primal, res.dual, res.complementarity
                    ),
                );
            }
            Err(e) => report.push("planted-optimality", false, false, format!("{e}")),
        }
        let xs_product = (opt.x_star.mat() * opt.s_star.mat()).norm();
        report.push(
            "complementary-slackness",
            xs_product <= 1e-8,
            false,
            format!("||X* S*|| = {xs_product:.3e}"),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::residuals;
    use alloc::vec;

    #[test]
    fn planted_instance_satisfies_optimality_conditions() {
        let inst = gen_random_sdp(&GenRandomSdp::new(12, 20, 3, 7)).unwrap();
        let opt = inst.known_optimum.as_ref().unwrap();
        let res = residuals(&inst, &opt.x_star, &opt.y_star, &opt.s_star).unwrap();
        assert!(res.primal <= 1e-10, "primal {:.3e}", res.primal);
        assert!(res.dual <= 1e-10, "dual {:.3e}", res.dual);
        assert!(res.complementarity.abs() <= 1e-10);
        // Strong duality: <C, X*> equals b^T y*.
        let gap = inst.c.inner(&opt.x_star) - inst.b.dot(&opt.y_star);
        assert!(gap.abs() <= 1e-10, "duality gap {gap:.3e}");
        assert!(validate(&inst).passed());
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_random_sdp(&GenRandomSdp::new(10, 15, 2, 42)).unwrap();
        let b = gen_random_sdp(&GenRandomSdp::new(10, 15, 2, 42)).unwrap();
        assert_eq!(a.c, b.c);
        assert_eq!(a.b, b.b);
        for (x, y) in a.map.mats().iter().zip(b.map.mats()) {
            assert_eq!(x, y);
        }
        let oa = a.known_optimum.as_ref().unwrap();
        let ob = b.known_optimum.as_ref().unwrap();
        assert_eq!(oa.x_star, ob.x_star);
        assert_eq!(oa.y_star, ob.y_star);
    }

    #[test]
    fn generator_rejects_bad_params() {
        assert!(gen_random_sdp(&GenRandomSdp::new(5, 3, 0, 0)).is_err());
        assert!(gen_random_sdp(&GenRandomSdp::new(5, 3, 5, 0)).is_err());
        assert!(gen_random_sdp(&GenRandomSdp::new(5, 16, 2, 0)).is_err());
    }

    #[test]
    fn normalization_preserves_the_optimum() {
        // Force a rescale by inflating the dual vector.
        let mut params = GenRandomSdp::new(8, 10, 2, 3);
        params.y_norm = 12.0;
        let inst = gen_random_sdp(&params).unwrap();
        assert!(inst.obj_scale > 1.0, "expected a recorded rescale");
        assert!(inst.c.frob_norm() <= 1.0 + 1e-12);
        // The stored optimum solves the normalized instance...
        let opt = inst.known_optimum.as_ref().unwrap();
        let res = residuals(&inst, &opt.x_star, &opt.y_star, &opt.s_star).unwrap();
        assert!(res.dual <= 1e-10 && res.primal <= 1e-10);
        // ...and unscaling recovers a KKT point of the original data.
        let c_orig = inst.c.scale(inst.obj_scale);
        let y_orig = &opt.y_star * inst.obj_scale;
        let s_orig = opt.s_star.scale(inst.obj_scale);
        let dual_orig =
            (&(&inst.map.apply_adjoint(&y_orig).unwrap() + &s_orig) - &c_orig).frob_norm();
        assert!(dual_orig <= 1e-9, "unscaled dual feasibility {dual_orig:.3e}");
    }

    #[test]
    fn maxcut_gram_is_identity_and_k2_value_is_one() {
        let k2 = Graph::complete(2).unwrap();
        let inst = gen_maxcut(&k2).unwrap();
        let gram = inst.map.gram().unwrap();
        assert!((gram.kappa_sq() - 1.0).abs() < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(gram.gram()[(i, j)], expect);
            }
        }
        // Closed form on a single edge: C = -L/2, dual optimum y = (-1,-1),
        // slack S = C - Diag(y) PSD, so the unnormalized value is
        // obj_scale * (-b^T y) = 0.5 * 2 = 1.
        assert!((inst.obj_scale - 0.5).abs() < 1e-15);
        let y = DVector::from_column_slice(&[-1.0, -1.0]);
        let s = &inst.c - &inst.map.apply_adjoint(&y).unwrap();
        let eig = crate::symlin::eig_sym(&s).unwrap();
        assert!(eig.values[0] >= -1e-12, "dual slack not PSD");
        let value = inst.obj_scale * (-inst.b.dot(&y));
        assert!((value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maxcut_rejects_empty_graphs() {
        assert!(Graph::from_edges(3, &[]).is_err());
        assert!(Graph::from_edges(3, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 5)]).is_err());
    }

    #[test]
    fn sdpa_hand_written_file_parses() {
        let text = "\"hand-written example\n\
                    1\n\
                    1\n\
                    2\n\
                    0.5\n\
                    0 1 1 1 1.0\n\
                    0 1 1 2 -0.25\n\
                    1 1 1 1 0.75\n\
                    1 1 2 2 0.75\n";
        let parsed = parse_sdpa(text).unwrap();
        assert_eq!(parsed.m, 1);
        assert_eq!(parsed.n, 2);
        assert_eq!(parsed.b[0], 0.5);
        assert_eq!(parsed.c.mat()[(0, 0)], 1.0);
        assert_eq!(parsed.c.mat()[(0, 1)], -0.25);
        assert_eq!(parsed.c.mat()[(1, 0)], -0.25);
        assert_eq!(parsed.c.mat()[(1, 1)], 0.0);
        let a1 = parsed.mats[0].to_dense();
        assert_eq!(a1.mat()[(0, 0)], 0.75);
        assert_eq!(a1.mat()[(1, 1)], 0.75);
    }

    #[test]
    fn sdpa_roundtrip_is_exact() {
        let inst = gen_random_sdp(&GenRandomSdp::new(8, 12, 2, 5)).unwrap();
        let text = write_sdpa(&inst);
        let parsed = parse_sdpa(&text).unwrap();
        let reloaded = sdpa_to_instance(&parsed, inst.r_x, inst.r_y, inst.r_s).unwrap();
        assert_eq!(reloaded.c, inst.c, "objective matrix roundtrip");
        assert_eq!(reloaded.b, inst.b, "right-hand side roundtrip");
        for (a, b) in reloaded.map.mats().iter().zip(inst.map.mats()) {
            assert_eq!(a, b, "constraint matrix roundtrip");
        }
    }

    #[test]
    fn sdpa_rejects_multiblock_and_conflicts() {
        let multi = "2\n2\n2 3\n1.0 2.0\n";
        assert!(matches!(
            parse_sdpa(multi),
            Err(SdpaError::MultiBlockUnsupported { nblocks: 2 })
        ));

        let conflict = "1\n1\n2\n1.0\n1 1 1 2 0.5\n1 1 2 1 0.75\n";
        assert!(matches!(
            parse_sdpa(conflict),
            Err(SdpaError::ConflictingDuplicate { .. })
        ));

        let diag = "1\n1\n-2\n1.0\n";
        assert!(matches!(parse_sdpa(diag), Err(SdpaError::DiagonalBlockUnsupported)));

        let out_of_range = "1\n1\n2\n1.0\n1 1 3 1 0.5\n";
        assert!(matches!(parse_sdpa(out_of_range), Err(SdpaError::EntryOutOfRange { .. })));
    }

    #[test]
    fn sdpa_load_normalizes_and_records_scale() {
        let text = "1\n1\n2\n1.0\n0 1 1 1 4.0\n1 1 1 1 2.0\n";
        let parsed = parse_sdpa(text).unwrap();
        let inst = sdpa_to_instance(&parsed, 1.0, 1.0, 1.0).unwrap();
        assert!((inst.c.frob_norm() - 1.0).abs() < 1e-15);
        assert_eq!(inst.obj_scale, 4.0);
        // Constraint scaled together with its right-hand side.
        assert_eq!(inst.map.frob_norms()[0], 1.0);
        assert_eq!(inst.b[0], 0.5);
    }

    #[test]
    fn validate_flags_unnormalized_and_near_dependent_instances() {
        let a1 = SparseSym::from_triplets(2, &[(0, 0, 1.0)]).unwrap();
        let a2 = SparseSym::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1e-7)]).unwrap();
        let map = ConstraintMap::new(vec![a1, a2]).unwrap();
        let c = SymMat::identity(2).scale(math_sqrt_two());
        let b = DVector::from_column_slice(&[1.0, 1.0]);
        let inst = SdpInstance::new(c, b, map, 1.0, 1.0, 1.0).unwrap();
        let report = validate(&inst);
        assert!(!report.passed(), "||C||_F = 2 must fail normalization");
        let norm_check =
            report.checks.iter().find(|c| c.name == "objective-normalized").unwrap();
        assert!(!norm_check.passed);
        let cond = report.checks.iter().find(|c| c.name == "gram-conditioning").unwrap();
        assert!(cond.warning, "near-dependent constraints must warn: {}", cond.detail);
        assert!(cond.detail.contains("kappa_A^2"));
    }

    fn math_sqrt_two() -> f64 {
        core::f64::consts::SQRT_2
    }
}

//! Cross-module engine checks against independent oracles: a scripted dense
//! re-derivation of the alternating scheme, the fixed-point (DRS)
//! equivalence, the exact-mode transparency of the emulated path, and the
//! stability guards for noisy runs.

use nalgebra::{DMatrix, DVector};
use qadmm_core::problems::{gen_random_sdp, GenRandomSdp};
use qadmm_core::qemul::{ErrorBudget, ResourceLedger};
use qadmm_core::solver::{
    classical_admm_step, drs_recover, drs_step, prox_affine, qadmm_step, residuals, run,
    IterateState, Mode, PlantedOptimum, ProxOperator, RunOptions, SdpInstance,
};
use qadmm_core::symlin::{
    proj_l1_ball, proj_psd_ball, ConstraintMap, SparseSym, SvecConvention, SymMat,
};

fn planted(n: usize, m: usize, rank: usize, seed: u64, r_slack: f64) -> SdpInstance {
    let mut params = GenRandomSdp::new(n, m, rank, seed);
    params.r_slack = r_slack;
    gen_random_sdp(&params).unwrap()
}

/// Straight-line dense re-derivation of the alternating scheme, working on
/// the packed representation: y = -(A A^T)^{-1}(gamma(A svec(X) - b) +
/// A svec(S - C)), S = positive part of C - smat(A^T y) - gamma X,
/// X = X + (1/gamma)(smat(A^T y) + S - C).
struct DenseOracle {
    a: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    c: DMatrix<f64>,
    b: DVector<f64>,
    n: usize,
}

impl DenseOracle {
    fn new(inst: &SdpInstance) -> Self {
        let a = inst.map.svec_matrix();
        let gram = &a * a.transpose();
        let gram_inv = gram.try_inverse().expect("independent constraints");
        Self {
            a,
            gram_inv,
            c: inst.c.mat().clone(),
            b: inst.b.clone(),
            n: inst.n,
        }
    }

    fn svec(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let n = self.n;
        let mut v = DVector::zeros(n * (n + 1) / 2);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                v[k] = if i == j { x[(i, j)] } else { x[(i, j)] * core::f64::consts::SQRT_2 };
                k += 1;
            }
        }
        v
    }

    fn smat(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut x = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let val =
                    if i == j { v[k] } else { v[k] / core::f64::consts::SQRT_2 };
                x[(i, j)] = val;
                x[(j, i)] = val;
                k += 1;
            }
        }
        x
    }

    fn positive_part(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let eig = x.clone().symmetric_eigen();
        let clipped = DVector::from_iterator(
            self.n,
            eig.eigenvalues.iter().map(|&l: &f64| l.max(0.0)),
        );
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
    }

    fn step(
        &self,
        x: &DMatrix<f64>,
        s: &DMatrix<f64>,
        gamma: f64,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let u = (&self.a * self.svec(x) - &self.b) * gamma
            + &self.a * self.svec(&(s - &self.c));
        let y = -(&self.gram_inv * u);
        let adj = self.smat(&(self.a.transpose() * &y));
        let s_next = self.positive_part(&(&self.c - &adj - x * gamma));
        let x_next = x + (&adj + &s_next - &self.c) / gamma;
        (y, s_next, x_next)
    }
}

#[test]
fn classical_step_matches_dense_scripted_oracle() {
    let inst = planted(10, 18, 3, 11, 1.1);
    let gram = inst.map.gram().unwrap();
    let oracle = DenseOracle::new(&inst);

    let mut state = IterateState::initial(inst.n, inst.m);
    let mut ox = DMatrix::zeros(inst.n, inst.n);
    let mut os = DMatrix::zeros(inst.n, inst.n);
    for k in 0..20 {
        state = classical_admm_step(&inst, &gram, state, 1.0).unwrap();
        let (oy, os_next, ox_next) = oracle.step(&ox, &os, 1.0);
        os = os_next;
        ox = ox_next;
        let dy = (&state.y - &oy).norm();
        let ds = (state.s.mat() - &os).norm();
        let dx = (state.x.mat() - &ox).norm();
        assert!(
            dy <= 1e-12 && ds <= 1e-12 && dx <= 1e-12,
            "step {k}: dy={dy:.2e} ds={ds:.2e} dx={dx:.2e}"
        );
    }
}

#[test]
fn classical_step_is_a_fixed_point_at_the_planted_optimum() {
    let inst = planted(12, 20, 3, 5, 1.1);
    let gram = inst.map.gram().unwrap();
    let opt = inst.known_optimum.as_ref().unwrap();
    let mut state = IterateState::initial(inst.n, inst.m);
    state.x = opt.x_star.clone();
    state.s = opt.s_star.clone();
    state.y = opt.y_star.clone();
    let next = classical_admm_step(&inst, &gram, state, 1.0).unwrap();
    let moved = (&next.x - &opt.x_star).frob_norm()
        + (&next.y - &opt.y_star).norm()
        + (&next.s - &opt.s_star).frob_norm();
    assert!(moved <= 1e-10, "optimum moved by {moved:.3e}");
}

#[test]
fn prox_affine_output_satisfies_the_constraints() {
    let inst = planted(9, 14, 2, 3, 1.1);
    let gram = inst.map.gram().unwrap();
    let w = SymMat::from_fn(9, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5).unwrap();
    let out = prox_affine(&inst, &gram, &w, 1.0).unwrap();
    let residual = (&inst.map.apply(&out).unwrap() - &inst.b).norm();
    assert!(residual <= 1e-10, "A(prox(W)) - b residual {residual:.3e}");
}

#[test]
fn drs_trajectories_match_the_alternating_scheme() {
    for seed in [0u64, 1] {
        let inst = planted(10, 16, 3, seed, 1.1);
        let gram = inst.map.gram().unwrap();
        let gamma = 1.0;
        let mut state = IterateState::initial(inst.n, inst.m);
        let mut z = SymMat::zeros(inst.n);
        for k in 0..100 {
            let (_, _, y_next) = drs_recover(&inst, &gram, &z, gamma).unwrap();
            z = drs_step(&inst, &gram, &z, gamma).unwrap();
            let (x_rec, s_rec, _) = drs_recover(&inst, &gram, &z, gamma).unwrap();
            state = classical_admm_step(&inst, &gram, state, gamma).unwrap();
            let dy = (&state.y - &y_next).norm();
            let dx = (&state.x - &x_rec).frob_norm();
            let ds = (&state.s - &s_rec).frob_norm();
            assert!(
                dy <= 1e-8 && dx <= 1e-8 && ds <= 1e-8,
                "seed {seed} step {k}: dy={dy:.2e} dx={dx:.2e} ds={ds:.2e}"
            );
        }
    }
}

#[test]
fn drs_long_run_approaches_optimality() {
    let inst = planted(10, 16, 3, 9, 1.1);
    let out = run(
        &inst,
        &RunOptions {
            mode: Mode::Drs,
            k_max: Some(4000),
            stop: None,
            ..RunOptions::classical()
        },
    )
    .unwrap();
    let res = residuals(&inst, &out.last.x, &out.last.y, &out.last.s).unwrap();
    assert!(res.primal <= 1e-6, "primal {:.3e}", res.primal);
    assert!(res.dual <= 1e-6, "dual {:.3e}", res.dual);
    assert!(res.complementarity.abs() <= 1e-6, "comp {:.3e}", res.complementarity);
}

#[test]
fn exact_mode_step_equals_classical_step_with_set_projections() {
    // Lockstep from shared states along the classical trajectory, so the
    // comparison holds even where the radius projections are active.
    let inst = planted(8, 12, 2, 21, 1.1);
    let gram = inst.map.gram().unwrap();
    let budget = ErrorBudget::zero(0);
    let mut rng = budget.rng();
    let mut ledger = ResourceLedger::new();
    let mut state = IterateState::initial(inst.n, inst.m);
    for k in 0..60 {
        let from_classical = classical_admm_step(&inst, &gram, state.clone(), 1.0).unwrap();
        let composed_y = proj_l1_ball(&from_classical.y, inst.r_y).unwrap();
        let composed_s = proj_psd_ball(&from_classical.s, inst.r_s).unwrap();
        let composed_x = proj_psd_ball(&from_classical.x, inst.r_x).unwrap();
        let from_qadmm = qadmm_step(
            &inst,
            &gram,
            state.clone(),
            &budget,
            &ProxOperator::Exact,
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        let dy = (&from_qadmm.y - &composed_y).norm();
        let dx = (&from_qadmm.x - &composed_x).frob_norm();
        let ds = (&from_qadmm.s - &composed_s).frob_norm();
        assert!(
            dy <= 1e-10 && dx <= 1e-10 && ds <= 1e-10,
            "step {k}: dy={dy:.2e} dx={dx:.2e} ds={ds:.2e}"
        );
        // Advance along the emulated trajectory (projections included).
        state = from_qadmm;
    }
}

fn scalar_instance() -> SdpInstance {
    let a = SparseSym::from_triplets(1, &[(0, 0, 1.0)]).unwrap();
    let map = ConstraintMap::new(vec![a]).unwrap();
    SdpInstance::new(
        SymMat::identity(1),
        DVector::from_column_slice(&[1.0]),
        map,
        1.5,
        1.5,
        1.5,
    )
    .unwrap()
}

#[test]
fn qadmm_step_matches_hand_trace_on_the_scalar_instance() {
    // From the zero state with gamma = 1 and no injected error:
    //   u      = 1*(0 - 1) + (0 - 1)        = -2
    //   y^     = -(1)^{-1} * (-2)           =  2,   y~ = 2
    //   y      = Proj_{||.||_1 <= 1.5}(2)   =  1.5
    //   V^     = 1 - 2 - 0                  = -1   (combination uses y~)
    //   e_V    = |y~| + ||C||_F + 0         =  3
    //   S~     = positive part of -1        =  0
    //   X~     = -(V~ - S~)                 =  1
    //   S      = 0,  X = 1 (both inside their balls)
    let inst = scalar_instance();
    let gram = inst.map.gram().unwrap();
    let budget = ErrorBudget::zero(0);
    let mut rng = budget.rng();
    let mut ledger = ResourceLedger::new();
    let state = IterateState::initial(1, 1);
    let next = qadmm_step(
        &inst,
        &gram,
        state,
        &budget,
        &ProxOperator::Exact,
        &mut ledger,
        &mut rng,
    )
    .unwrap();
    assert_eq!(next.hat_y[0], 2.0);
    assert_eq!(next.tilde_y[0], 2.0);
    assert_eq!(next.y[0], 1.5);
    assert_eq!(next.tilde_v.mat()[(0, 0)], -1.0);
    assert_eq!(next.e_v, 3.0);
    assert_eq!(next.tilde_s.mat()[(0, 0)], 0.0);
    assert_eq!(next.tilde_x.mat()[(0, 0)], 1.0);
    assert_eq!(next.s.mat()[(0, 0)], 0.0);
    assert_eq!(next.x.mat()[(0, 0)], 1.0);
}

#[test]
fn companion_identity_holds_along_a_polynomial_run() {
    let inst = planted(8, 12, 2, 2, 1.1);
    let gram = inst.map.gram().unwrap();
    let budget = ErrorBudget::uniform(0.01, 4);
    let prox = ProxOperator::Polynomial(
        qadmm_core::solver::ProxPolys::from_eps(0.05).unwrap(),
    );
    let mut rng = budget.rng();
    let mut ledger = ResourceLedger::new();
    let mut state = IterateState::initial(inst.n, inst.m);
    for k in 0..50 {
        state = qadmm_step(&inst, &gram, state, &budget, &prox, &mut ledger, &mut rng)
            .unwrap();
        // gamma X~ + V~ == S~ up to roundoff, scaled by e_V.
        let gap = (&state.tilde_x.scale(budget.gamma).axpy(1.0, &state.tilde_v)
            - &state.tilde_s)
            .frob_norm();
        assert!(
            gap <= 1e-10 * state.e_v.max(1.0),
            "step {k}: companion identity gap {gap:.3e}, e_V = {}",
            state.e_v
        );
    }
}

#[test]
fn feasible_set_containment_after_every_noisy_step() {
    // Three budgets, many steps each: the classical reconstructions must
    // stay in their feasible sets.
    for (seed, delta) in [(0u64, 0.1), (1, 0.02), (2, 0.005)] {
        let inst = planted(8, 12, 2, seed, 1.1);
        let gram = inst.map.gram().unwrap();
        let budget = ErrorBudget::uniform(delta, seed);
        let mut rng = budget.rng();
        let mut ledger = ResourceLedger::new();
        let mut state = IterateState::initial(inst.n, inst.m);
        for k in 0..200 {
            state = qadmm_step(
                &inst,
                &gram,
                state,
                &budget,
                &ProxOperator::Exact,
                &mut ledger,
                &mut rng,
            )
            .unwrap();
            let y_l1: f64 = state.y.iter().map(|v| v.abs()).sum();
            assert!(y_l1 <= inst.r_y + 1e-9, "step {k}: ||y||_1 = {y_l1}");
            assert!(state.x.frob_norm() <= inst.r_x + 1e-9, "step {k}: X outside ball");
            assert!(state.s.frob_norm() <= inst.r_s + 1e-9, "step {k}: S outside ball");
            let x_min = qadmm_core::symlin::eig_sym(&state.x).unwrap().values[0];
            let s_min = qadmm_core::symlin::eig_sym(&state.s).unwrap().values[0];
            assert!(x_min >= -1e-9, "step {k}: X eigenvalue {x_min}");
            assert!(s_min >= -1e-9, "step {k}: S eigenvalue {s_min}");
        }
    }
}

#[test]
fn bounded_error_runs_stay_stable() {
    // With every tolerance at 0.1 no residual may blow past ten times its
    // starting value and no iterate may leave its feasible set.
    let inst = planted(10, 16, 3, 7, 1.1);
    let budget = ErrorBudget::uniform(0.1, 3);
    let out = run(
        &inst,
        &RunOptions {
            mode: Mode::Qadmm,
            budget,
            prox: ProxOperator::Exact,
            k_max: Some(200),
            stop: None,
        },
    )
    .unwrap();
    let baseline_primal = inst.b.norm();
    let baseline_dual = inst.c.frob_norm();
    for rec in &out.trace.records {
        assert!(rec.primal <= 10.0 * baseline_primal, "k={}: primal {}", rec.k, rec.primal);
        assert!(rec.dual <= 10.0 * baseline_dual, "k={}: dual {}", rec.k, rec.dual);
    }
}

#[test]
fn averaged_dual_residual_trend_is_eventually_nonincreasing() {
    let inst = planted(10, 16, 3, 13, 1.1);
    let out = run(
        &inst,
        &RunOptions {
            mode: Mode::Qadmm,
            budget: ErrorBudget::zero(0),
            prox: ProxOperator::Exact,
            k_max: Some(800),
            stop: None,
        },
    )
    .unwrap();
    let series = out.trace.avg_dual_series();
    let window_means: Vec<f64> =
        series.chunks(10).filter(|c| c.len() == 10).map(|c| c.iter().sum::<f64>() / 10.0).collect();
    let peak = window_means
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    for w in window_means[peak..].windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-9),
            "windowed averaged dual residual increased: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn zero_budget_run_reproduces_classical_trace_with_wide_bounds() {
    // With norm bounds wide enough that the set projections never engage,
    // the emulated path at zero budget is the classical algorithm.
    for seed in 0..3u64 {
        let inst = planted(12, 20, 3, seed, 2.0);
        let classical = run(
            &inst,
            &RunOptions {
                mode: Mode::Classical,
                k_max: Some(250),
                stop: None,
                ..RunOptions::classical()
            },
        )
        .unwrap();
        let emulated = run(
            &inst,
            &RunOptions {
                mode: Mode::Qadmm,
                budget: ErrorBudget::zero(seed),
                prox: ProxOperator::Exact,
                k_max: Some(250),
                stop: None,
            },
        )
        .unwrap();
        for (a, b) in classical.trace.records.iter().zip(&emulated.trace.records) {
            assert!(
                (a.objective - b.objective).abs() <= 1e-10
                    && (a.dual - b.dual).abs() <= 1e-10
                    && (a.primal - b.primal).abs() <= 1e-10,
                "seed {seed} k={}: traces diverge",
                a.k
            );
        }
        let dx = (&classical.last.x - &emulated.last.x).frob_norm();
        assert!(dx <= 1e-10, "seed {seed}: last X differs by {dx:.3e}");
    }
}

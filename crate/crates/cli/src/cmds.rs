//! Command implementations.

use std::path::{Path, PathBuf};

use qadmm_core::polyprox::build_relu_poly;
use qadmm_core::problems::{gen_maxcut, gen_random_sdp, validate, GenRandomSdp, Graph};
use qadmm_core::qemul::{
    iteration_cost, total_cost_table, CostParams, ErrorBudget, NoiseMode, TotalCostParams,
};
use qadmm_core::solver::{
    default_k_max, fit_convergence_rate, plateau_level, run, Mode, ProxOperator, ProxPolys,
    RunOptions, RunResult, SdpInstance, StopReason, StopRule,
};

use crate::docs::{
    CertificateDoc, CompareManifest, CompareRow, LedgerDoc, RunManifest, RunSummary,
};
use crate::store::{
    ensure_dir, load_instance, read_to_string, resolve_out_dir, save_instance, sha256_hex,
    write_json, write_trace_csv, LoadedInstance,
};
use crate::{
    BudgetArgs, CmdError, CompareArgs, CostArgs, GenCmd, PlotArgs, PolyArgs, SolveArgs,
};

pub fn cmd_gen(which: &GenCmd, out: Option<PathBuf>) -> Result<i32, CmdError> {
    let dir = resolve_out_dir(out);
    let (inst, kind, seed, params) = match which {
        GenCmd::Random(a) => {
            let mut params = GenRandomSdp::new(a.n, a.m, a.rank, a.seed);
            params.nnz_per_mat = a.nnz;
            params.r_slack = a.r_slack;
            params.x_norm = a.x_norm;
            params.s_norm = a.s_norm;
            params.y_norm = a.y_norm;
            let inst =
                gen_random_sdp(&params).map_err(|e| CmdError::Data(format!("{e}")))?;
            let raw = serde_json::to_value(params)
                .map_err(|e| CmdError::Data(format!("{e}")))?;
            (inst, "random", Some(a.seed), Some(raw))
        }
        GenCmd::MaxcutCycle { n } => {
            let graph = Graph::cycle(*n).map_err(|e| CmdError::Usage(format!("{e}")))?;
            let inst = gen_maxcut(&graph).map_err(|e| CmdError::Data(format!("{e}")))?;
            (inst, "maxcut-cycle", None, Some(serde_json::json!({ "n": n })))
        }
        GenCmd::MaxcutComplete { n } => {
            let graph = Graph::complete(*n).map_err(|e| CmdError::Usage(format!("{e}")))?;
            let inst = gen_maxcut(&graph).map_err(|e| CmdError::Data(format!("{e}")))?;
            (inst, "maxcut-complete", None, Some(serde_json::json!({ "n": n })))
        }
        GenCmd::MaxcutEdges { file } => {
            let text = read_to_string(file)?;
            let graph = parse_edge_list(&text)?;
            let inst = gen_maxcut(&graph).map_err(|e| CmdError::Data(format!("{e}")))?;
            (
                inst,
                "maxcut-edges",
                None,
                Some(serde_json::json!({ "file": file.display().to_string() })),
            )
        }
    };
    let report = validate(&inst);
    if !report.passed() {
        let failing: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed && !c.warning)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        return Err(CmdError::Data(format!(
            "generated instance failed validation: {}",
            failing.join("; ")
        )));
    }
    let manifest = save_instance(&dir, &inst, kind, seed, params)?;
    println!(
        "wrote {} (n={}, m={}, s_A={}, sha256={})",
        dir.join("instance.dat-s").display(),
        manifest.n,
        manifest.m,
        manifest.s_a,
        &manifest.dat_s_sha256[..12]
    );
    Ok(0)
}

/// Edge-list format: optional `#` comments, first data line is the vertex
/// count, then one `u v` pair per line (0-based).
fn parse_edge_list(text: &str) -> Result<Graph, CmdError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let n: usize = lines
        .next()
        .ok_or_else(|| CmdError::Data("empty edge-list file".into()))?
        .parse()
        .map_err(|_| CmdError::Data("first line must be the vertex count".into()))?;
    let mut edges = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        let u: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| CmdError::Data(format!("bad edge line: {line}")))?;
        let v: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| CmdError::Data(format!("bad edge line: {line}")))?;
        edges.push((u, v));
    }
    Graph::from_edges(n, &edges).map_err(|e| CmdError::Data(format!("{e}")))
}

pub fn build_budget(args: &BudgetArgs) -> ErrorBudget {
    let mut budget = match args.delta {
        Some(d) => ErrorBudget::uniform(d, args.seed),
        None => ErrorBudget::zero(args.seed),
    };
    if let Some(v) = args.delta_hat_y {
        budget.delta_hat_y = v;
    }
    if let Some(v) = args.delta_y {
        budget.delta_y = v;
    }
    if let Some(v) = args.delta_v {
        budget.delta_v = v;
    }
    if let Some(v) = args.delta_s {
        budget.delta_s = v;
    }
    if let Some(v) = args.delta_x {
        budget.delta_x = v;
    }
    if let Some(v) = args.delta_vy {
        budget.delta_vy = v;
    }
    if let Some(v) = args.delta_ey {
        budget.delta_ey = v;
    }
    budget.gamma = args.gamma;
    budget.injection_scale = args.injection_scale;
    budget.ey_absolute = args.ey_absolute;
    budget.noise_mode =
        if args.adversarial { NoiseMode::Adversarial } else { NoiseMode::Isotropic };
    budget
}

fn parse_mode(mode: &str) -> Result<Mode, CmdError> {
    match mode {
        "classical" => Ok(Mode::Classical),
        "qadmm" => Ok(Mode::Qadmm),
        "drs" => Ok(Mode::Drs),
        other => Err(CmdError::Usage(format!(
            "unknown mode '{other}' (expected classical, qadmm or drs)"
        ))),
    }
}

pub struct PreparedRun {
    pub opts: RunOptions,
    pub eps: Option<f64>,
    pub certificate: Option<(CertificateDoc, String)>,
}

/// Builds run options from CLI arguments; constructs and certifies the
/// polynomial pair when the emulated mode runs with a polynomial prox.
pub fn prepare_run(args: &SolveArgs, budget: ErrorBudget) -> Result<PreparedRun, CmdError> {
    let mode = parse_mode(&args.mode)?;
    let (prox, eps, certificate) = if mode == Mode::Qadmm && !args.exact_prox {
        let eps = args.eps;
        let polys = ProxPolys::from_eps(eps).map_err(|e| CmdError::Data(format!("{e}")))?;
        let doc = CertificateDoc {
            coefficients: polys.g1.poly().coeffs().to_vec(),
            degree: polys.g1.degree(),
            eps_target: polys.g1.eps_target(),
            eps_certified: polys.g1.eps_certified(),
            grid_size: polys.g1.grid_size(),
        };
        let bytes = serde_json::to_vec_pretty(&doc)
            .map_err(|e| CmdError::Data(format!("{e}")))?;
        let sha = sha256_hex(&bytes);
        (ProxOperator::Polynomial(polys), Some(eps), Some((doc, sha)))
    } else {
        (ProxOperator::Exact, None, None)
    };
    let stop = if args.no_stop {
        None
    } else {
        Some(StopRule { dual: args.stop_dual, gap: args.stop_gap })
    };
    Ok(PreparedRun {
        opts: RunOptions { mode, budget, prox, k_max: args.k_max, stop },
        eps,
        certificate,
    })
}

fn stop_reason_str(reason: StopReason) -> &'static str {
    match reason {
        StopReason::Converged => "converged",
        StopReason::KMaxExhausted => "k-max-exhausted",
    }
}

fn summarize(inst: &SdpInstance, result: &RunResult) -> RunSummary {
    let last = result.trace.records.last();
    RunSummary {
        avg_objective: last.map(|r| r.avg_objective).unwrap_or(f64::NAN),
        avg_primal: last.map(|r| r.avg_primal).unwrap_or(f64::NAN),
        avg_dual: last.map(|r| r.avg_dual).unwrap_or(f64::NAN),
        avg_complementarity: last.map(|r| r.avg_complementarity).unwrap_or(f64::NAN),
        avg_gap: last.and_then(|r| r.avg_gap),
        sdp_value_unnormalized: inst.obj_scale
            * last.map(|r| r.avg_objective).unwrap_or(f64::NAN),
    }
}

/// Runs one solve and writes `trace.csv`, `ledger.json`, `manifest.json`
/// (and `certificate.json` in polynomial mode) into `dir`.
pub fn solve_into(
    args: &SolveArgs,
    loaded: &LoadedInstance,
    dir: &Path,
) -> Result<(RunResult, RunManifest), CmdError> {
    ensure_dir(dir)?;
    let budget = build_budget(&args.budget);
    let prepared = prepare_run(args, budget)?;
    let result =
        run(&loaded.inst, &prepared.opts).map_err(|e| CmdError::Data(format!("{e}")))?;

    write_trace_csv(&dir.join("trace.csv"), &result.trace)?;
    write_json(&dir.join("ledger.json"), &LedgerDoc::from_ledger(&result.ledger))?;
    let certificate = match &prepared.certificate {
        Some((doc, sha)) => {
            write_json(&dir.join("certificate.json"), doc)?;
            Some(("certificate.json".to_string(), sha.clone()))
        }
        None => None,
    };
    let manifest = RunManifest {
        command: "solve".to_string(),
        instance_path: loaded.dat_s_path.display().to_string(),
        instance_sha256: loaded.sha256.clone(),
        mode: args.mode.clone(),
        gamma: prepared.opts.budget.gamma,
        budget: prepared.opts.budget.clone(),
        prox: if matches!(prepared.opts.prox, ProxOperator::Exact) {
            "exact".to_string()
        } else {
            "polynomial".to_string()
        },
        eps: prepared.eps,
        certificate: certificate.as_ref().map(|(p, _)| p.clone()),
        certificate_sha256: certificate.map(|(_, s)| s),
        k_max: prepared
            .opts
            .k_max
            .unwrap_or_else(|| default_k_max(&loaded.inst, &prepared.opts.stop)),
        stop: prepared.opts.stop,
        seed: args.budget.seed,
        iterations: result.iterations,
        converged: result.converged,
        stop_reason: stop_reason_str(result.stop_reason).to_string(),
        trace: "trace.csv".to_string(),
        ledger: "ledger.json".to_string(),
        summary: summarize(&loaded.inst, &result),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok((result, manifest))
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32, CmdError> {
    let bounds = match (args.r_x, args.r_y, args.r_s) {
        (Some(x), Some(y), Some(s)) => Some((x, y, s)),
        (None, None, None) => None,
        _ => {
            return Err(CmdError::Usage(
                "--r-x, --r-y and --r-s must be given together".into(),
            ))
        }
    };
    let loaded = load_instance(&args.instance, bounds)?;
    let dir = resolve_out_dir(args.out.clone());
    let (result, manifest) = solve_into(args, &loaded, &dir)?;
    println!(
        "mode={} iterations={} stop={} avg_dual={:.3e} avg_gap={} value={:.6}",
        manifest.mode,
        manifest.iterations,
        manifest.stop_reason,
        manifest.summary.avg_dual,
        manifest
            .summary
            .avg_gap
            .map(|g| format!("{g:.3e}"))
            .unwrap_or_else(|| "n/a".to_string()),
        manifest.summary.sdp_value_unnormalized,
    );
    println!("outputs in {}", dir.display());
    Ok(if result.converged { 0 } else { 2 })
}

pub fn cmd_poly(args: &PolyArgs) -> Result<i32, CmdError> {
    let eps_list: Vec<f64> = match &args.sweep {
        Some(spec) => parse_f64_list(spec)?,
        None => vec![args.eps],
    };
    let dir = resolve_out_dir(args.out.clone());
    ensure_dir(&dir)?;
    println!("eps,degree,eps_certified,grid_size");
    for &eps in &eps_list {
        let poly = build_relu_poly(eps).map_err(|e| CmdError::Data(format!("{e}")))?;
        let doc = CertificateDoc {
            coefficients: poly.poly().coeffs().to_vec(),
            degree: poly.degree(),
            eps_target: poly.eps_target(),
            eps_certified: poly.eps_certified(),
            grid_size: poly.grid_size(),
        };
        let name = format!("poly-eps{eps}.json");
        write_json(&dir.join(&name), &doc)?;
        println!("{eps},{},{},{}", doc.degree, doc.eps_certified, doc.grid_size);
    }
    Ok(0)
}

fn parse_f64_list(spec: &str) -> Result<Vec<f64>, CmdError> {
    let values: Result<Vec<f64>, _> =
        spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect();
    let values = values.map_err(|e| CmdError::Usage(format!("bad numeric list: {e}")))?;
    if values.is_empty() {
        return Err(CmdError::Usage("empty numeric list".into()));
    }
    Ok(values)
}

fn parse_usize_list(spec: &str) -> Result<Vec<usize>, CmdError> {
    let values: Result<Vec<usize>, _> =
        spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect();
    let values = values.map_err(|e| CmdError::Usage(format!("bad integer list: {e}")))?;
    if values.is_empty() {
        return Err(CmdError::Usage("empty integer list".into()));
    }
    Ok(values)
}

pub fn cmd_cost(args: &CostArgs) -> Result<i32, CmdError> {
    let ns = match &args.sweep_n {
        Some(spec) => parse_usize_list(spec)?,
        None => vec![args.n],
    };
    let eps_list = match &args.sweep_eps {
        Some(spec) => parse_f64_list(spec)?,
        None => vec![args.eps],
    };

    #[derive(serde::Serialize)]
    struct Row {
        n: usize,
        m: usize,
        s_a: usize,
        eps: f64,
        t_classic: f64,
        t_quant: f64,
        y_update: f64,
        s_update: f64,
        x_update: f64,
        qadmm: f64,
        classical_admm: f64,
        qmwu: f64,
        qipm: f64,
        qadmm_total_quantum: f64,
        qadmm_total_classical: f64,
    }

    let mut rows = Vec::new();
    for &n in &ns {
        for &eps in &eps_list {
            let m = args.m.unwrap_or(n * n);
            let s_a = args.s_a.unwrap_or(m * n * (n + 1) / 2);
            let delta = args.delta;
            let iter = iteration_cost(&CostParams {
                n,
                m,
                kappa_sq: args.kappa_sq,
                r_x: args.r_x,
                r_y: args.r_y,
                r_s: args.r_s,
                s_a,
                delta_hat_y: delta,
                delta_y: delta,
                delta_s: delta,
                delta_x: delta,
                eps,
            })
            .map_err(|e| CmdError::Usage(format!("{e}")))?;
            let table = total_cost_table(&[TotalCostParams {
                n: n as f64,
                m: m as f64,
                s_a: s_a as f64,
                eps,
                r_x: args.r_x,
                r_y: args.r_y,
                r_s: args.r_s,
                r_tr_x: args.r_tr_x,
                kappa_sq: args.kappa_sq,
                kappa0: args.kappa0,
            }])[0];
            rows.push(Row {
                n,
                m,
                s_a,
                eps,
                t_classic: iter.t_classic,
                t_quant: iter.t_quant,
                y_update: iter.y_update,
                s_update: iter.s_update,
                x_update: iter.x_update,
                qadmm: table.qadmm,
                classical_admm: table.classical_admm,
                qmwu: table.qmwu,
                qipm: table.qipm,
                qadmm_total_quantum: table.qadmm_total_quantum,
                qadmm_total_classical: table.qadmm_total_classical,
            });
        }
    }

    let text = if args.format == "json" {
        serde_json::to_string_pretty(&rows).map_err(|e| CmdError::Data(format!("{e}")))?
    } else {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &rows {
            writer.serialize(row).map_err(|e| CmdError::Data(format!("csv: {e}")))?;
        }
        String::from_utf8(
            writer.into_inner().map_err(|e| CmdError::Data(format!("csv: {e}")))?,
        )
        .expect("csv output is utf-8")
    };
    print!("{text}");
    if let Some(out) = &args.out {
        let dir = resolve_out_dir(None);
        let path = if out.is_absolute() { out.clone() } else { dir.join(out) };
        if let Some(parent) = path.parent() {
            ensure_dir(parent)?;
        }
        std::fs::write(&path, text.as_bytes())
            .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(0)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<i32, CmdError> {
    let deltas = parse_f64_list(&args.deltas)?;
    let loaded = load_instance(&args.instance, None)?;
    let dir = resolve_out_dir(args.out.clone());
    ensure_dir(&dir)?;

    struct Child {
        delta: f64,
        dir_name: String,
        result: Result<(RunResult, usize), String>,
    }

    // One run per sweep point, each on its own thread with its own RNG
    // stream; the instance is shared read-only.
    let children: Vec<Child> = std::thread::scope(|scope| {
        let handles: Vec<_> = deltas
            .iter()
            .enumerate()
            .map(|(idx, &delta)| {
                let inst = &loaded.inst;
                let eps = args.eps;
                let exact = args.exact_prox;
                let seed = args.seed;
                let cap = args.k_max_cap;
                scope.spawn(move || {
                    let mut budget = ErrorBudget::uniform(delta, seed);
                    budget.gamma = args.gamma;
                    let prox = if exact {
                        Ok(ProxOperator::Exact)
                    } else {
                        ProxPolys::from_eps(eps).map(ProxOperator::Polynomial)
                    };
                    let k_max = if delta > 0.0 {
                        ((20.0 / delta) as usize).clamp(2000, cap)
                    } else {
                        2000
                    };
                    let result = prox
                        .map_err(|e| format!("{e}"))
                        .and_then(|prox| {
                            run(
                                inst,
                                &RunOptions {
                                    mode: Mode::Qadmm,
                                    budget,
                                    prox,
                                    k_max: Some(k_max),
                                    stop: None,
                                },
                            )
                            .map_err(|e| format!("{e}"))
                        })
                        .map(|r| (r, k_max));
                    Child {
                        delta,
                        dir_name: format!("delta-{idx}"),
                        result,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut rows: Vec<CompareRow> = Vec::new();
    let mut child_dirs = Vec::new();
    for child in &children {
        let (result, k_max) = match &child.result {
            Ok(pair) => pair,
            Err(msg) => return Err(CmdError::Data(format!("delta {}: {msg}", child.delta))),
        };
        let child_dir = dir.join(&child.dir_name);
        ensure_dir(&child_dir)?;
        write_trace_csv(&child_dir.join("trace.csv"), &result.trace)?;
        write_json(&child_dir.join("ledger.json"), &LedgerDoc::from_ledger(&result.ledger))?;
        let series = result.trace.avg_dual_series();
        let plateau =
            plateau_level(&series).map_err(|e| CmdError::Data(format!("{e}")))?;
        let slope = fit_convergence_rate(&series).ok().map(|f| f.slope);
        let last = result.trace.records.last();
        rows.push(CompareRow {
            delta: child.delta,
            seed: args.seed,
            iterations: result.iterations,
            k_max: *k_max,
            plateau,
            slope,
            avg_dual_final: last.map(|r| r.avg_dual).unwrap_or(f64::NAN),
            avg_gap_final: last.and_then(|r| r.avg_gap),
            run_dir: child.dir_name.clone(),
        });
        child_dirs.push(child.dir_name.clone());
    }

    let mut writer = csv::Writer::from_path(dir.join("summary.csv"))
        .map_err(|e| CmdError::Data(format!("csv: {e}")))?;
    for row in &rows {
        writer.serialize(row).map_err(|e| CmdError::Data(format!("csv: {e}")))?;
    }
    writer.flush().map_err(|e| CmdError::Data(format!("csv: {e}")))?;

    let manifest = CompareManifest {
        command: "compare".to_string(),
        instance_path: loaded.dat_s_path.display().to_string(),
        instance_sha256: loaded.sha256.clone(),
        deltas: deltas.clone(),
        eps: if args.exact_prox { None } else { Some(args.eps) },
        prox: if args.exact_prox { "exact".into() } else { "polynomial".into() },
        seed: args.seed,
        children: child_dirs,
        summary_csv: "summary.csv".to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!("delta,plateau,slope,iterations");
    for row in &rows {
        println!(
            "{},{:.6e},{},{}",
            row.delta,
            row.plateau,
            row.slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "n/a".into()),
            row.iterations
        );
    }
    Ok(0)
}

pub fn cmd_plot(args: &PlotArgs) -> Result<i32, CmdError> {
    let mut reader = csv::Reader::from_path(&args.trace)
        .map_err(|e| CmdError::Data(format!("cannot read {}: {e}", args.trace.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CmdError::Data(format!("csv: {e}")))?
        .clone();
    let out_path = match &args.out {
        Some(p) => p.clone(),
        None => resolve_out_dir(None).join("tidy.csv"),
    };
    if let Some(parent) = out_path.parent() {
        ensure_dir(parent)?;
    }
    let mut writer = csv::Writer::from_path(&out_path)
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", out_path.display())))?;
    writer
        .write_record(["k", "series", "value"])
        .map_err(|e| CmdError::Data(format!("csv: {e}")))?;
    for record in reader.records() {
        let record = record.map_err(|e| CmdError::Data(format!("csv: {e}")))?;
        let k = record.get(0).unwrap_or_default();
        for (idx, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() {
                continue;
            }
            let series = headers.get(idx).unwrap_or("unknown");
            writer
                .write_record([k, series, cell])
                .map_err(|e| CmdError::Data(format!("csv: {e}")))?;
        }
    }
    writer.flush().map_err(|e| CmdError::Data(format!("csv: {e}")))?;
    println!("wrote {}", out_path.display());
    Ok(0)
}

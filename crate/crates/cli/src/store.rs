//! Filesystem plumbing: output-directory resolution, hashing, instance
//! save/load and trace serialization. No command writes outside its output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use qadmm_core::problems::{parse_sdpa, sdpa_to_instance, write_sdpa};
use qadmm_core::solver::{ConvergenceTrace, PlantedOptimum, SdpInstance};
use qadmm_core::symlin::SymMat;
use sha2::{Digest, Sha256};

use crate::docs::{InstanceManifest, PlantedDoc};
use crate::CmdError;

/// Default output directory: `--out` flag, then `QADMM_OUT_DIR`, then
/// `./qadmm-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("QADMM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qadmm-out"))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CmdError> {
    fs::create_dir_all(dir)
        .map_err(|e| CmdError::Data(format!("cannot create {}: {e}", dir.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CmdError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CmdError::Data(format!("serialization failed: {e}")))?;
    fs::write(path, text.as_bytes())
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_to_string(path: &Path) -> Result<String, CmdError> {
    fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("cannot read {}: {e}", path.display())))
}

fn sym_to_rows(m: &SymMat) -> Vec<Vec<f64>> {
    (0..m.n()).map(|i| (0..m.n()).map(|j| m.mat()[(i, j)]).collect()).collect()
}

fn rows_to_sym(rows: &[Vec<f64>]) -> Result<SymMat, CmdError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CmdError::Data("ragged matrix in planted-optimum file".into()));
    }
    SymMat::from_fn(n, |i, j| rows[i][j])
        .map_err(|e| CmdError::Data(format!("bad planted matrix: {e}")))
}

/// Writes `instance.dat-s`, `instance.json` and (when planted)
/// `planted.json` into `dir`. Returns the manifest.
pub fn save_instance(
    dir: &Path,
    inst: &SdpInstance,
    kind: &str,
    seed: Option<u64>,
    generator: Option<serde_json::Value>,
) -> Result<InstanceManifest, CmdError> {
    ensure_dir(dir)?;
    let dat_s = write_sdpa(inst);
    let dat_path = dir.join("instance.dat-s");
    fs::write(&dat_path, dat_s.as_bytes())
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", dat_path.display())))?;

    let planted = match &inst.known_optimum {
        Some(opt) => {
            let doc = PlantedDoc {
                rank_r: opt.rank_r,
                x_star: sym_to_rows(&opt.x_star),
                y_star: opt.y_star.iter().copied().collect(),
                s_star: sym_to_rows(&opt.s_star),
            };
            write_json(&dir.join("planted.json"), &doc)?;
            Some("planted.json".to_string())
        }
        None => None,
    };

    let manifest = InstanceManifest {
        kind: kind.to_string(),
        n: inst.n,
        m: inst.m,
        s_a: inst.map.nnz_total(),
        r_x: inst.r_x,
        r_y: inst.r_y,
        r_s: inst.r_s,
        obj_scale: inst.obj_scale,
        seed,
        generator,
        dat_s: "instance.dat-s".to_string(),
        dat_s_sha256: sha256_hex(dat_s.as_bytes()),
        planted,
    };
    write_json(&dir.join("instance.json"), &manifest)?;
    Ok(manifest)
}

/// A loaded instance together with provenance for the run manifest.
pub struct LoadedInstance {
    pub inst: SdpInstance,
    pub dat_s_path: PathBuf,
    pub sha256: String,
}

/// Loads an instance from a directory (containing `instance.json`), a
/// manifest path, or a bare `.dat-s` file. Bare files need the norm bounds
/// passed explicitly (`bounds`); manifest loads take them from the manifest.
pub fn load_instance(
    path: &Path,
    bounds: Option<(f64, f64, f64)>,
) -> Result<LoadedInstance, CmdError> {
    let (manifest_path, manifest): (Option<PathBuf>, Option<InstanceManifest>) = if path.is_dir()
    {
        let mp = path.join("instance.json");
        let text = read_to_string(&mp)?;
        let m = serde_json::from_str(&text)
            .map_err(|e| CmdError::Data(format!("bad manifest {}: {e}", mp.display())))?;
        (Some(mp), Some(m))
    } else if path.extension().is_some_and(|e| e == "json") {
        let text = read_to_string(path)?;
        let m = serde_json::from_str(&text)
            .map_err(|e| CmdError::Data(format!("bad manifest {}: {e}", path.display())))?;
        (Some(path.to_path_buf()), Some(m))
    } else {
        (None, None)
    };

    let (dat_s_path, r_x, r_y, r_s, obj_scale, planted_path) = match (&manifest_path, &manifest) {
        (Some(mp), Some(m)) => {
            let base = mp.parent().unwrap_or_else(|| Path::new("."));
            (
                base.join(&m.dat_s),
                m.r_x,
                m.r_y,
                m.r_s,
                m.obj_scale,
                m.planted.as_ref().map(|p| base.join(p)),
            )
        }
        _ => {
            let (r_x, r_y, r_s) = bounds.ok_or_else(|| {
                CmdError::Usage(
                    "bare .dat-s instance: pass --r-x, --r-y and --r-s (no manifest to read \
                     the solution-norm bounds from)"
                        .into(),
                )
            })?;
            (path.to_path_buf(), r_x, r_y, r_s, 1.0, None)
        }
    };

    let text = read_to_string(&dat_s_path)?;
    let parsed = parse_sdpa(&text).map_err(|e| CmdError::Data(format!("{e}")))?;
    let mut inst = sdpa_to_instance(&parsed, r_x, r_y, r_s)
        .map_err(|e| CmdError::Data(format!("{e}")))?;
    inst.obj_scale *= obj_scale;

    if let Some(pp) = planted_path {
        let text = read_to_string(&pp)?;
        let doc: PlantedDoc = serde_json::from_str(&text)
            .map_err(|e| CmdError::Data(format!("bad planted file {}: {e}", pp.display())))?;
        let planted = PlantedOptimum {
            x_star: rows_to_sym(&doc.x_star)?,
            y_star: DVector::from_vec(doc.y_star.clone()),
            s_star: rows_to_sym(&doc.s_star)?,
            rank_r: doc.rank_r,
        };
        inst = inst.with_known_optimum(planted);
    }

    let sha256 = sha256_hex(text.as_bytes());
    Ok(LoadedInstance { inst, dat_s_path, sha256 })
}

const TRACE_HEADER: &[&str] = &[
    "k",
    "objective",
    "primal",
    "dual",
    "complementarity",
    "dist_to_opt",
    "gate_total",
    "avg_objective",
    "avg_primal",
    "avg_dual",
    "avg_complementarity",
    "avg_gap",
    "err_ytilde_l1",
    "err_ytilde_l2",
    "err_y_l1",
    "err_y_l2",
];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One row per iteration; optional columns are empty when unavailable.
pub fn write_trace_csv(path: &Path, trace: &ConvergenceTrace) -> Result<(), CmdError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(TRACE_HEADER)
        .map_err(|e| CmdError::Data(format!("csv: {e}")))?;
    for r in &trace.records {
        writer
            .write_record(&[
                r.k.to_string(),
                format!("{}", r.objective),
                format!("{}", r.primal),
                format!("{}", r.dual),
                format!("{}", r.complementarity),
                opt_cell(r.dist_to_opt),
                format!("{}", r.gate_total),
                format!("{}", r.avg_objective),
                format!("{}", r.avg_primal),
                format!("{}", r.avg_dual),
                format!("{}", r.avg_complementarity),
                opt_cell(r.avg_gap),
                format!("{}", r.err_ytilde_l1),
                format!("{}", r.err_ytilde_l2),
                format!("{}", r.err_y_l1),
                format!("{}", r.err_y_l2),
            ])
            .map_err(|e| CmdError::Data(format!("csv: {e}")))?;
    }
    writer.flush().map_err(|e| CmdError::Data(format!("csv: {e}")))
}

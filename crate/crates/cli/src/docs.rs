//! Serialized document types: instance and run manifests, ledgers and
//! polynomial certificates. Manifests carry everything needed to re-execute
//! a run byte-identically with the same build.

use qadmm_core::qemul::{ErrorBudget, ResourceLedger};
use qadmm_core::solver::StopRule;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceManifest {
    /// Generator family: `random`, `maxcut-cycle`, `maxcut-complete`,
    /// `maxcut-edges` or `imported`.
    pub kind: String,
    pub n: usize,
    pub m: usize,
    /// Total nonzeros across the constraint matrices.
    pub s_a: usize,
    pub r_x: f64,
    pub r_y: f64,
    pub r_s: f64,
    pub obj_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Raw generator parameters, for exact regeneration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    /// Path of the data file, relative to the manifest.
    pub dat_s: String,
    pub dat_s_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planted: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedDoc {
    pub rank_r: usize,
    pub x_star: Vec<Vec<f64>>,
    pub y_star: Vec<f64>,
    pub s_star: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerDoc {
    pub classical_ops: f64,
    pub qls_time: f64,
    pub lcu_time: f64,
    pub qsvt_queries: f64,
    pub tomography_queries: f64,
    pub gate_total: f64,
    pub model: String,
}

impl LedgerDoc {
    pub fn from_ledger(ledger: &ResourceLedger) -> Self {
        Self {
            classical_ops: ledger.classical_ops,
            qls_time: ledger.qls_time,
            lcu_time: ledger.lcu_time,
            qsvt_queries: ledger.qsvt_queries,
            tomography_queries: ledger.tomography_queries,
            gate_total: ledger.gate_total(),
            model: qadmm_core::qemul::MODEL_CONVENTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub coefficients: Vec<f64>,
    pub degree: usize,
    pub eps_target: f64,
    pub eps_certified: f64,
    pub grid_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub avg_objective: f64,
    pub avg_primal: f64,
    pub avg_dual: f64,
    pub avg_complementarity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_gap: Option<f64>,
    /// `obj_scale * avg_objective`: the objective in original units.
    pub sdp_value_unnormalized: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub instance_path: String,
    pub instance_sha256: String,
    pub mode: String,
    pub gamma: f64,
    pub budget: ErrorBudget,
    /// `exact` or `polynomial`.
    pub prox: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_sha256: Option<String>,
    pub k_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: String,
    pub trace: String,
    pub ledger: String,
    pub summary: RunSummary,
}

// Serialized to CSV: options must serialize (as empty cells), never skip,
// to keep the field count stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub delta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub k_max: usize,
    pub plateau: f64,
    pub slope: Option<f64>,
    pub avg_dual_final: f64,
    pub avg_gap_final: Option<f64>,
    pub run_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareManifest {
    pub command: String,
    pub instance_path: String,
    pub instance_sha256: String,
    pub deltas: Vec<f64>,
    pub eps: Option<f64>,
    pub prox: String,
    pub seed: u64,
    pub children: Vec<String>,
    pub summary_csv: String,
}

//! Report emitters: the sweep/ablation CSV schema and the per-compression
//! JSON metrics, with deterministic formatting so identical runs produce
//! byte-identical outputs.

use serde::{Deserialize, Serialize};

/// Reference deployment measurements for context lines in reports: LLM
/// TFLOPs at a 13.8k-token versus 6.4k-token visual prefix on an 8B host.
/// Reported alongside the proxy for orientation, never asserted against.
pub const REF_TOKENS_BASELINE: f64 = 13_800.0;
pub const REF_TOKENS_COMPRESSED: f64 = 6_400.0;
pub const REF_TFLOPS_BASELINE: f64 = 198.1;
pub const REF_TFLOPS_COMPRESSED: f64 = 99.8;

/// One benchmark run (one scene at one policy, for one pipeline variant).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub scene_seed: u64,
    pub task_kind: String,
    pub variant: String,
    pub rho: f64,
    pub lambda: f64,
    pub tokens_kept: usize,
    pub compression_ratio: f64,
    pub object_preservation: f64,
    pub path_recall: f64,
    pub path_connected_frac: f64,
    pub flops_proxy: f64,
    pub object_vacuous: bool,
    pub path_vacuous: bool,
}

pub const SWEEP_CSV_HEADER: &str = "scene_seed,task_kind,variant,rho,lambda,tokens_kept,\
compression_ratio,object_preservation,path_recall,path_connected_frac,flops_proxy,\
object_vacuous,path_vacuous";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6e},{},{}\n",
            row.scene_seed,
            row.task_kind,
            row.variant,
            row.rho,
            row.lambda,
            row.tokens_kept,
            row.compression_ratio,
            row.object_preservation,
            row.path_recall,
            row.path_connected_frac,
            row.flops_proxy,
            row.object_vacuous,
            row.path_vacuous,
        ));
    }
    out
}

/// JSON metrics written next to each compressed sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompressReport {
    pub n_max: usize,
    pub tokens_kept: usize,
    pub compression_ratio: f64,
    pub lambda: f64,
    pub rho: f64,
    pub n_sem_budget: usize,
    pub n_geo_budget: usize,
    pub semantic_tokens: usize,
    pub geometric_tokens: usize,
    pub router_invoked: bool,
    pub flops_proxy: f64,
}

impl CompressReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Human-readable comparison of a proxy cost against the reference rows.
pub fn flops_context(tokens_kept: usize, flops_proxy: f64) -> String {
    format!(
        "tokens={} proxy={:.3} TFLOPs | reference: {:.0}-token prefix = {} TFLOPs, \
         {:.0}-token prefix = {} TFLOPs (context only)",
        tokens_kept,
        flops_proxy / 1e12,
        REF_TOKENS_BASELINE,
        REF_TFLOPS_BASELINE,
        REF_TOKENS_COMPRESSED,
        REF_TFLOPS_COMPRESSED,
    )
}

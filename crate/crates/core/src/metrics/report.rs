//! Aggregated evaluation report for one model on one dataset.
//!
//! Aggregation over samples: error means (nMAE, nRMSE, rL1, rL2, local
//! variance, F_log) are arithmetic means; worst-case metrics (nLinf,
//! Delta P_max) take the maximum; spectral coherence is computed once over
//! the whole batch as defined. JSON key order is fixed by field order here,
//! and the CSV row follows the summary-table column order
//! (nMAE, nRMSE, local variance, coherence) with token stats appended.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmae: f64,
    pub nrmse: f64,
    pub nlinf: f64,
    pub rl1: Option<f64>,
    pub rl2: Option<f64>,
    pub delta_sigma2_loc: f64,
    pub gamma_min: f64,
    pub f_log: f64,
    /// Set when the raw F_log fell outside [0, 100] and was clamped.
    pub f_log_out_of_range: bool,
    pub delta_p_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utilization: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_bits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub redundancy: Option<f64>,
    pub sample_count: usize,
}

impl MetricsReport {
    /// Clamp F_log into [0, 100], recording whether clamping happened.
    pub fn set_f_log(&mut self, raw: f64) {
        self.f_log_out_of_range = !(0.0..=100.0).contains(&raw);
        self.f_log = raw.clamp(0.0, 100.0);
    }

    pub const CSV_HEADER: &'static str =
        "nmae,nrmse,delta_sigma2_loc,gamma_min,nlinf,rl1,rl2,f_log,delta_p_max,utilization,entropy_bits,redundancy,sample_count";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.nmae,
            self.nrmse,
            self.delta_sigma2_loc,
            self.gamma_min,
            self.nlinf,
            opt(self.rl1),
            opt(self.rl2),
            self.f_log,
            self.delta_p_max,
            opt(self.utilization),
            opt(self.entropy_bits),
            opt(self.redundancy),
            self.sample_count
        )
    }
}

impl Default for MetricsReport {
    fn default() -> Self {
        MetricsReport {
            nmae: 0.0,
            nrmse: 0.0,
            nlinf: 0.0,
            rl1: None,
            rl2: None,
            delta_sigma2_loc: 0.0,
            gamma_min: 0.0,
            f_log: 0.0,
            f_log_out_of_range: false,
            delta_p_max: 0.0,
            utilization: None,
            entropy_bits: None,
            redundancy: None,
            sample_count: 0,
        }
    }
}

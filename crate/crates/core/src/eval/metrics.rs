use crate::error::{ensure, Result};
use serde::{Deserialize, Serialize};

fn check(y: &[f64], p: &[f64]) -> Result<()> {
    ensure!(
        y.len() == p.len(),
        Dimension,
        "{} targets vs {} predictions",
        y.len(),
        p.len()
    );
    ensure!(!y.is_empty(), InvalidArgument, "metrics need at least one residual");
    Ok(())
}

/// Mean squared error over every scalar residual (pixel² when inputs are pixels).
pub fn mse(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    Ok(y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Mean absolute error over every scalar residual.
pub fn mae(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    Ok(y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Labels identifying what a metric was measured on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Context {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub context: Context,
    pub mse: f64,
    pub mae: f64,
}

/// One run's result file: `{context, mse, mae, seed, wall_time_s}`.
///
/// `wall_time_s` is only written when timing is requested, since it would
/// otherwise make repeated runs differ byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResult {
    pub context: Context,
    pub mse: f64,
    pub mae: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunResult {
    pub fn record(&self) -> MetricRecord {
        MetricRecord {
            context: self.context.clone(),
            mse: self.mse,
            mae: self.mae,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

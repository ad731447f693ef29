//! Quantitative diagnostics of learned features and clusterings.

mod cosine;
mod partition;
mod probe;
mod report;

pub use cosine::{cosine_heatmap, cosine_margin, heatmap_csv, heatmap_pgm, order_by, ClassMargin};
pub use partition::{hungarian_accuracy, nmi};
pub use probe::{linear_probe, predict_classes, train_linear_classifier, ProbeConfig};
pub use report::EvalReport;

use crate::error::Result;
use crate::model::{encode_features, Network};
use crate::numerics::dot;
use crate::rate::coding_rate;
use crate::{Matrix, RateParams};

/// Mean `1 − cos(z, ẑ)` and `R(Z)` for samples `x` pushed through the loop.
pub fn transcription_stats(encoder: &Network<f64>, decoder: &Network<f64>, x: &Matrix, p: &RateParams) -> Result<(f64, f64)> {
    let z = encode_features(encoder, x)?;
    let zhat = encode_features(encoder, &decoder.predict(z.matrix())?)?;
    let total: f64 = (0..z.len()).map(|j| 1.0 - dot(&z.column(j), &zhat.column(j))).sum();
    Ok((total / z.len() as f64, coding_rate(&z, p)?))
}

//! The alternating encoder/decoder game and its telemetry.

mod objective;
mod step;
mod telemetry;

pub use objective::{decoder_objective, encoder_objective, EncoderEval, ObjectiveTerms, ObjectiveVariant, VariantTag};
pub use step::{
    decoder_grads, encoder_grads, max_step, min_step, resume_training, run_training, train_step, TrainConfig, TrainState,
};
pub use telemetry::{fmt_f64, format_telemetry, TelemetryRecord, TELEMETRY_HEADER};

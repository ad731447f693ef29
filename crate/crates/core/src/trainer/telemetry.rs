use std::fmt::Write as _;

use crate::trainer::objective::{ObjectiveTerms, VariantTag};

/// Shortest-exact text form used by every numeric text artifact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Terms of one alternation round, evaluated at the start of its max step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TelemetryRecord {
    pub iteration: u64,
    pub variant: VariantTag,
    pub terms: ObjectiveTerms,
    pub encoder_objective: f64,
    /// Decoder objective at the post-update encoder.
    pub decoder_objective: f64,
}

pub const TELEMETRY_HEADER: &str =
    "iteration\tvariant\tR\tdR_pair\tc1_aug\tc2_self\tencoder_objective\tdecoder_objective";

impl TelemetryRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.iteration,
            self.variant,
            fmt_f64(self.terms.expansion),
            fmt_f64(self.terms.pair),
            fmt_f64(self.terms.augmentation),
            fmt_f64(self.terms.self_consistency),
            fmt_f64(self.encoder_objective),
            fmt_f64(self.decoder_objective),
        )
    }
}

/// Header plus one tab-separated line per record.
pub fn format_telemetry(records: &[TelemetryRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.to_line());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn line_layout() {
        let r = TelemetryRecord {
            iteration: 3,
            variant: VariantTag::NoMcr2,
            terms: ObjectiveTerms {
                expansion: 1.0,
                pair: 0.5,
                augmentation: 0.25,
                self_consistency: 0.0,
            },
            encoder_objective: 1.5,
            decoder_objective: -1.0,
        };
        let text = format_telemetry(&[r]);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split('\t').count(), lines[1].split('\t').count());
        assert!(lines[1].starts_with("3\tno_mcr2\t1.0000000000000000e0\t"));
    }
}

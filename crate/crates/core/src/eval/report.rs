use std::fmt::Write as _;

use crate::eval::ClassMargin;
use crate::trainer::fmt_f64;

/// Scalar diagnostics of one evaluation. Absent fields were not computable
/// (for instance truth-dependent metrics on an unlabeled set).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub nmi: Option<f64>,
    pub cluster_accuracy: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub cosine_margin: Option<f64>,
    /// Mean `1 − cos(z, ẑ)` over the evaluated set.
    pub self_consistency: Option<f64>,
    /// `R(Z)` over the evaluated set.
    pub expansion: Option<f64>,
    pub per_class: Vec<ClassMargin>,
}

impl EvalReport {
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("nmi", self.nmi),
            ("cluster_accuracy", self.cluster_accuracy),
            ("probe_accuracy", self.probe_accuracy),
            ("cosine_margin", self.cosine_margin),
            ("self_consistency", self.self_consistency),
            ("expansion", self.expansion),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    /// `key = value`, one per line.
    pub fn to_key_value(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(k, v)| format!("{k} = {}\n", fmt_f64(v)))
            .collect()
    }

    /// Header row of present keys and one value row.
    pub fn to_csv(&self) -> String {
        let f = self.fields();
        let keys: Vec<&str> = f.iter().map(|(k, _)| *k).collect();
        let vals: Vec<String> = f.iter().map(|(_, v)| fmt_f64(*v)).collect();
        format!("{}\n{}\n", keys.join(","), vals.join(","))
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,count,within_abs_cos,cross_abs_cos\n");
        for c in &self.per_class {
            let _ = writeln!(out, "{},{},{},{}", c.class, c.count, fmt_f64(c.within), fmt_f64(c.cross));
        }
        out
    }
}

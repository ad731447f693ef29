use crate::error::{Error, Result};
use crate::{AdamParams, AdamState, Matrix, Network};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub steps: usize,
    pub adam: AdamParams,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            adam: AdamParams::default(),
        }
    }
}

fn check(z: &Matrix, labels: &[usize], what: &'static str) -> Result<()> {
    if z.cols() != labels.len() {
        return Err(Error::LengthMismatch(z.cols(), labels.len()));
    }
    if z.cols() == 0 {
        return Err(Error::dims(what, "≥ 1 sample", 0));
    }
    Ok(())
}

/// Predicted class per column: argmax of the logits, lowest index on ties.
pub fn predict_classes(classifier: &Network, z: &Matrix) -> Result<Vec<usize>> {
    let logits = classifier.predict(z)?;
    Ok((0..logits.cols())
        .map(|j| {
            (0..logits.rows()).fold(0, |best, i| if logits[(i, j)] > logits[(best, j)] { i } else { best })
        })
        .collect())
}

/// Zero-initialised linear softmax classifier trained full-batch with Adam on
/// mean cross-entropy.
pub fn train_linear_classifier(z: &Matrix, labels: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<Network> {
    check(z, labels, "probe training set")?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            limit: classes,
        });
    }
    let mut net = Network::linear_zeros(z.rows(), classes)?;
    let mut opt = AdamState::new(&net);
    let inv_n = 1.0 / z.cols() as f64;
    for _ in 0..cfg.steps {
        let (logits, tape) = net.forward(z)?;
        let mut grad = Matrix::zeros(classes, z.cols());
        for j in 0..z.cols() {
            let m = (0..classes).map(|i| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = (0..classes).map(|i| (logits[(i, j)] - m).exp()).sum();
            for i in 0..classes {
                let p = (logits[(i, j)] - m).exp() / total;
                let y = if labels[j] == i { 1.0 } else { 0.0 };
                grad[(i, j)] = (p - y) * inv_n;
            }
        }
        let (g, _) = net.backward(tape, &grad)?;
        opt.apply(&mut net, &g, &cfg.adam, false)?;
    }
    Ok(net)
}

/// Test accuracy of a linear classifier trained on frozen training features.
pub fn linear_probe(
    z_train: &Matrix,
    labels_train: &[usize],
    z_test: &Matrix,
    labels_test: &[usize],
    cfg: &ProbeConfig,
) -> Result<f64> {
    if z_train.rows() != z_test.rows() {
        return Err(Error::dims("probe feature dim", z_train.rows(), z_test.rows()));
    }
    check(z_test, labels_test, "probe test set")?;
    let classes = labels_train.iter().chain(labels_test).max().map_or(1, |&m| m + 1);
    let net = train_linear_classifier(z_train, labels_train, classes, cfg)?;
    let pred = predict_classes(&net, z_test)?;
    let hits = pred.iter().zip(labels_test).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels_test.len() as f64)
}

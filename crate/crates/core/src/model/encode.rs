use crate::error::{Error, Result};
use crate::model::network::{GradTape, Network, NetworkGrads};
use crate::numerics::Mat;
use crate::rate::{FeatureBatch, ZERO_NORM};
use crate::scalar::Scalar;

/// Network tape plus the column norms removed by the sphere projection.
#[derive(Debug)]
pub struct EncodeTape<T> {
    net: GradTape<T>,
    features: Mat<T>,
    norms: Vec<T>,
}

/// Encoder forward pass followed by projection of each column to the unit
/// sphere.
pub fn encode<T: Scalar>(net: &Network<T>, x: &Mat<T>) -> Result<(FeatureBatch<T>, EncodeTape<T>)> {
    let (raw, tape) = net.forward(x)?;
    let mut features = raw;
    let mut norms = Vec::with_capacity(features.cols());
    for j in 0..features.cols() {
        let n = features.col_norm(j);
        if n < T::lit(ZERO_NORM) {
            return Err(Error::ZeroVector("encode"));
        }
        for i in 0..features.rows() {
            features[(i, j)] /= n;
        }
        norms.push(n);
    }
    let batch = FeatureBatch::unit(features.clone())?;
    Ok((
        batch,
        EncodeTape {
            net: tape,
            features,
            norms,
        },
    ))
}

/// Features only.
pub fn encode_features<T: Scalar>(net: &Network<T>, x: &Mat<T>) -> Result<FeatureBatch<T>> {
    Ok(encode(net, x)?.0)
}

/// Back-propagates a feature gradient through the projection `y = u / ‖u‖`
/// (`∂u = (g − y yᵀg) / ‖u‖`) and then through the network.
pub fn encode_backward<T: Scalar>(
    net: &Network<T>,
    tape: EncodeTape<T>,
    feature_grad: &Mat<T>,
) -> Result<(NetworkGrads<T>, Mat<T>)> {
    let y = &tape.features;
    if feature_grad.shape() != y.shape() {
        return Err(Error::TapeMismatch(format!(
            "feature gradient {:?} vs features {:?}",
            feature_grad.shape(),
            y.shape()
        )));
    }
    let mut graw = Mat::zeros(y.rows(), y.cols());
    for j in 0..y.cols() {
        let inner: T = (0..y.rows()).map(|i| y[(i, j)] * feature_grad[(i, j)]).sum();
        for i in 0..y.rows() {
            graw[(i, j)] = (feature_grad[(i, j)] - y[(i, j)] * inner) / tape.norms[j];
        }
    }
    net.backward(tape.net, &graw)
}

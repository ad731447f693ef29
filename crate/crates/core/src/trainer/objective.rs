use std::fmt;

use crate::error::{Error, Result};
use crate::rate::{coding_rate, coding_rate_grad, mean_paired_distance, pair_rate_reduction, pair_rate_reduction_grads, DistanceMode};
use crate::{Features, Matrix, RateParams};

/// Which terms of the closed-loop objective are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariantTag {
    I,
    II,
    III,
    IV,
    V,
    VI,
    NoMcr2,
}

impl VariantTag {
    pub const ALL: [VariantTag; 7] = [
        VariantTag::I,
        VariantTag::II,
        VariantTag::III,
        VariantTag::IV,
        VariantTag::V,
        VariantTag::VI,
        VariantTag::NoMcr2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantTag::I => "I",
            VariantTag::II => "II",
            VariantTag::III => "III",
            VariantTag::IV => "IV",
            VariantTag::V => "V",
            VariantTag::VI => "VI",
            VariantTag::NoMcr2 => "no_mcr2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn uses_expansion(self) -> bool {
        !matches!(self, VariantTag::IV | VariantTag::VI)
    }

    pub fn uses_pair(self) -> bool {
        !matches!(self, VariantTag::NoMcr2)
    }

    pub fn uses_augmentation(self) -> bool {
        matches!(self, VariantTag::I | VariantTag::III | VariantTag::IV | VariantTag::NoMcr2)
    }

    pub fn uses_self_consistency(self) -> bool {
        matches!(self, VariantTag::I | VariantTag::II | VariantTag::IV | VariantTag::NoMcr2)
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveVariant {
    pub tag: VariantTag,
    pub lambda1: f64,
    pub lambda2: f64,
    pub distance_mode: DistanceMode,
}

impl ObjectiveVariant {
    pub fn new(tag: VariantTag, lambda1: f64, lambda2: f64, distance_mode: DistanceMode) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(Self {
            tag,
            lambda1,
            lambda2,
            distance_mode,
        })
    }

    /// Weight of `R(Z)`: 1 or 0.
    pub fn expansion_weight(&self) -> f64 {
        if self.tag.uses_expansion() { 1.0 } else { 0.0 }
    }

    /// Weight of `ΔR(Z, Ẑ)`: 1 or 0.
    pub fn pair_weight(&self) -> f64 {
        if self.tag.uses_pair() { 1.0 } else { 0.0 }
    }

    /// λ₁, or 0 when the variant drops the augmentation term.
    pub fn effective_lambda1(&self) -> f64 {
        if self.tag.uses_augmentation() { self.lambda1 } else { 0.0 }
    }

    /// λ₂, or 0 when the variant drops the self-consistency term.
    pub fn effective_lambda2(&self) -> f64 {
        if self.tag.uses_self_consistency() { self.lambda2 } else { 0.0 }
    }
}

/// Raw terms of one evaluation, in nats (the constraint terms are batch
/// means of the per-sample distance).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// `R(Z)`.
    pub expansion: f64,
    /// `ΔR(Z, Ẑ)`.
    pub pair: f64,
    /// Mean distance between `z` and its augmentations.
    pub augmentation: f64,
    /// Mean distance between `z` and `ẑ`.
    pub self_consistency: f64,
}

impl ObjectiveTerms {
    /// Value maximised by the encoder.
    pub fn encoder_value(&self, v: &ObjectiveVariant) -> f64 {
        v.expansion_weight() * self.expansion + v.pair_weight() * self.pair
            - v.effective_lambda1() * self.augmentation
            - v.effective_lambda2() * self.self_consistency
    }

    /// Value minimised by the decoder.
    pub fn decoder_value(&self, v: &ObjectiveVariant) -> f64 {
        v.expansion_weight() * self.expansion
            + v.pair_weight() * self.pair
            + v.effective_lambda1() * self.augmentation
            + v.effective_lambda2() * self.self_consistency
    }

    pub fn is_finite(&self) -> bool {
        [self.expansion, self.pair, self.augmentation, self.self_consistency]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Encoder-side value with gradients in all three feature batches.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderEval {
    pub terms: ObjectiveTerms,
    pub value: f64,
    pub grad_z: Matrix,
    pub grad_za: Matrix,
    pub grad_zhat: Matrix,
}

fn check_batches(z: &Features, za: &Features, zhat: &Features) -> Result<usize> {
    let n = z.len();
    if zhat.dim() != z.dim() {
        return Err(Error::dims("Ẑ feature dim", z.dim(), zhat.dim()));
    }
    if za.dim() != z.dim() {
        return Err(Error::dims("Z_a feature dim", z.dim(), za.dim()));
    }
    if zhat.len() != n {
        return Err(Error::dims("Ẑ sample count", n, zhat.len()));
    }
    if n == 0 || za.len() == 0 || za.len() % n != 0 {
        return Err(Error::dims("Z_a sample count (multiple of N)", n, za.len()));
    }
    Ok(za.len() / n)
}

/// Pairs `(i, c·N + i)` linking each sample to each of its augmentations.
fn augmentation_pairs(n: usize, copies: usize) -> Vec<(usize, usize)> {
    (0..copies).flat_map(|c| (0..n).map(move |i| (i, c * n + i))).collect()
}

struct Evaluated {
    terms: ObjectiveTerms,
    grad_expansion: Option<Matrix>,
    grad_pair: Option<(Matrix, Matrix)>,
    grad_aug: (Matrix, Matrix),
    grad_self: (Matrix, Matrix),
}

fn evaluate(
    z: &Features,
    za: &Features,
    zhat: &Features,
    v: &ObjectiveVariant,
    p: &RateParams,
    need_expansion_grad: bool,
) -> Result<Evaluated> {
    let copies = check_batches(z, za, zhat)?;
    let n = z.len();
    let expansion = coding_rate(z, p)?;
    let pair = pair_rate_reduction(z, zhat, p)?;
    let (augmentation, ga_z, ga_za) =
        mean_paired_distance(z.matrix(), za.matrix(), &augmentation_pairs(n, copies), v.distance_mode, p)?;
    let self_pairs: Vec<_> = (0..n).map(|i| (i, i)).collect();
    let (self_consistency, gs_z, gs_zhat) =
        mean_paired_distance(z.matrix(), zhat.matrix(), &self_pairs, v.distance_mode, p)?;
    let grad_expansion = if need_expansion_grad && v.tag.uses_expansion() {
        Some(coding_rate_grad(z, p)?)
    } else {
        None
    };
    let grad_pair = if v.tag.uses_pair() {
        Some(pair_rate_reduction_grads(z, zhat, p)?)
    } else {
        None
    };
    Ok(Evaluated {
        terms: ObjectiveTerms {
            expansion,
            pair,
            augmentation,
            self_consistency,
        },
        grad_expansion,
        grad_pair,
        grad_aug: (ga_z, ga_za),
        grad_self: (gs_z, gs_zhat),
    })
}

/// `R(Z) + ΔR(Z, Ẑ) − λ₁ mean d(z, z_a) − λ₂ mean d(z, ẑ)`, with terms
/// dropped per variant, and its gradients.
pub fn encoder_objective(
    z: &Features,
    za: &Features,
    zhat: &Features,
    v: &ObjectiveVariant,
    p: &RateParams,
) -> Result<EncoderEval> {
    let e = evaluate(z, za, zhat, v, p, true)?;
    let mut grad_z = Matrix::zeros(z.dim(), z.len());
    let mut grad_za = Matrix::zeros(za.dim(), za.len());
    let mut grad_zhat = Matrix::zeros(zhat.dim(), zhat.len());
    if let Some(g) = &e.grad_expansion {
        grad_z.add_assign(g);
    }
    if let Some((gz, gzhat)) = &e.grad_pair {
        grad_z.add_assign(gz);
        grad_zhat.add_assign(gzhat);
    }
    let (l1, l2) = (v.effective_lambda1(), v.effective_lambda2());
    grad_z.axpy(-l1, &e.grad_aug.0);
    grad_za.axpy(-l1, &e.grad_aug.1);
    grad_z.axpy(-l2, &e.grad_self.0);
    grad_zhat.axpy(-l2, &e.grad_self.1);
    Ok(EncoderEval {
        value: e.terms.encoder_value(v),
        terms: e.terms,
        grad_z,
        grad_za,
        grad_zhat,
    })
}

/// `R(Z) + ΔR(Z, Ẑ) + λ₁ mean d(z, z_a) + λ₂ mean d(z, ẑ)` and its gradient
/// in `Ẑ`, the only argument that depends on the decoder.
pub fn decoder_objective(
    z: &Features,
    za: &Features,
    zhat: &Features,
    v: &ObjectiveVariant,
    p: &RateParams,
) -> Result<(ObjectiveTerms, f64, Matrix)> {
    let e = evaluate(z, za, zhat, v, p, false)?;
    let mut grad_zhat = Matrix::zeros(zhat.dim(), zhat.len());
    if let Some((_, gzhat)) = &e.grad_pair {
        grad_zhat.add_assign(gzhat);
    }
    grad_zhat.axpy(v.effective_lambda2(), &e.grad_self.1);
    Ok((e.terms, e.terms.decoder_value(v), grad_zhat))
}

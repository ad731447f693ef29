use crate::data::{AugmentationSpec, Batch, BatchIter, SampleView};
use crate::error::{Error, Result};
use crate::model::{encode, encode_backward, encode_features};
use crate::numerics::{Rng, Stream};
use crate::trainer::objective::{decoder_objective, encoder_objective, ObjectiveTerms, ObjectiveVariant};
use crate::trainer::telemetry::TelemetryRecord;
use crate::{AdamParams, AdamState, Matrix, Network, NetworkGrads, RateParams};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: ObjectiveVariant,
    pub rate: RateParams,
    pub adam: AdamParams,
    pub batch_size: usize,
    /// Total number of alternation rounds; a resumed run stops here too.
    pub iterations: u64,
    pub seed: u64,
    pub stop_grad_through_decoder: bool,
    pub augmentation: AugmentationSpec,
    pub hidden: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub encoder: Network,
    pub decoder: Network,
    pub encoder_opt: AdamState,
    pub decoder_opt: AdamState,
    /// Completed alternation rounds.
    pub iteration: u64,
    /// Records produced since this state was created or loaded.
    pub telemetry: Vec<TelemetryRecord>,
}

impl TrainState {
    pub fn init(input_dim: usize, cfg: &TrainConfig) -> Result<Self> {
        let encoder = Network::encoder(
            input_dim,
            cfg.hidden,
            cfg.feature_dim,
            &mut Rng::stream(cfg.seed, Stream::Init, 0),
        )?;
        let decoder = Network::decoder(
            cfg.feature_dim,
            cfg.hidden,
            input_dim,
            &mut Rng::stream(cfg.seed, Stream::Init, 1),
        )?;
        Ok(Self::from_networks(encoder, decoder))
    }

    pub fn from_networks(encoder: Network, decoder: Network) -> Self {
        Self {
            encoder_opt: AdamState::new(&encoder),
            decoder_opt: AdamState::new(&decoder),
            encoder,
            decoder,
            iteration: 0,
            telemetry: Vec::new(),
        }
    }
}

/// Encoder objective for one batch and its gradient in the encoder
/// parameters, through the whole chain `X → Z → X̂ → Ẑ`. With
/// `stop_grad_through_decoder` the path from `Ẑ` back into `Z` through the
/// decoder is cut; the re-encoding of `X̂` still contributes.
pub fn encoder_grads(
    encoder: &Network,
    decoder: &Network,
    x: &Matrix,
    x_aug: &Matrix,
    variant: &ObjectiveVariant,
    rate: &RateParams,
    stop_grad_through_decoder: bool,
) -> Result<(ObjectiveTerms, f64, NetworkGrads)> {
    let n = x.cols();
    let (zall, tape_all) = encode(encoder, &x.hcat(x_aug)?)?;
    let z = crate::Features::unit(zall.matrix().cols_range(0, n))?;
    let za = crate::Features::unit(zall.matrix().cols_range(n, zall.len()))?;
    let (xhat, tape_dec) = decoder.forward(z.matrix())?;
    let (zhat, tape_hat) = encode(encoder, &xhat)?;
    let eval = encoder_objective(&z, &za, &zhat, variant, rate)?;
    let (mut grads, grad_xhat) = encode_backward(encoder, tape_hat, &eval.grad_zhat)?;
    let mut grad_z = eval.grad_z;
    if !stop_grad_through_decoder {
        let (_, through_decoder) = decoder.backward(tape_dec, &grad_xhat)?;
        grad_z.add_assign(&through_decoder);
    }
    let (direct, _) = encode_backward(encoder, tape_all, &grad_z.hcat(&eval.grad_za)?)?;
    grads.accumulate(&direct);
    Ok((eval.terms, eval.value, grads))
}

/// Decoder objective for one batch and its gradient in the decoder
/// parameters.
pub fn decoder_grads(
    encoder: &Network,
    decoder: &Network,
    x: &Matrix,
    x_aug: &Matrix,
    variant: &ObjectiveVariant,
    rate: &RateParams,
) -> Result<(ObjectiveTerms, f64, NetworkGrads)> {
    let z = encode_features(encoder, x)?;
    let za = encode_features(encoder, x_aug)?;
    let (xhat, tape_dec) = decoder.forward(z.matrix())?;
    let (zhat, tape_hat) = encode(encoder, &xhat)?;
    let (terms, value, grad_zhat) = decoder_objective(&z, &za, &zhat, variant, rate)?;
    let (_, grad_xhat) = encode_backward(encoder, tape_hat, &grad_zhat)?;
    let (grads, _) = decoder.backward(tape_dec, &grad_xhat)?;
    Ok((terms, value, grads))
}

fn check_finite(iteration: u64, phase: &str, terms: &ObjectiveTerms, value: f64, grads: &NetworkGrads) -> Result<()> {
    if terms.is_finite() && value.is_finite() && grads.is_finite() {
        return Ok(());
    }
    Err(Error::NonFiniteLoss {
        iteration,
        detail: format!(
            "{phase} step: R(Z)={} ΔR(Z,Ẑ)={} aug={} self={} value={} max|grad|={}",
            terms.expansion,
            terms.pair,
            terms.augmentation,
            terms.self_consistency,
            value,
            grads.max_abs()
        ),
    })
}

/// Non-finite activations surface as [`Error::NonFiniteLoss`] at `iteration`.
fn as_loss_error(iteration: u64, phase: &str, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFiniteLoss {
            iteration,
            detail: format!("{phase} step: non-finite value in {what}"),
        },
        e => e,
    }
}

/// Adam ascent on the encoder with the decoder frozen. Returns the terms and
/// encoder objective before the update.
pub fn max_step(
    encoder: &mut Network,
    opt: &mut AdamState,
    decoder: &Network,
    batch: &Batch,
    cfg: &TrainConfig,
    iteration: u64,
) -> Result<(ObjectiveTerms, f64)> {
    let (terms, value, g) = encoder_grads(
        encoder,
        decoder,
        &batch.x,
        &batch.x_aug,
        &cfg.variant,
        &cfg.rate,
        cfg.stop_grad_through_decoder,
    )
    .map_err(|e| as_loss_error(iteration, "max", e))?;
    check_finite(iteration, "max", &terms, value, &g)?;
    opt.apply(encoder, &g, &cfg.adam, true)?;
    Ok((terms, value))
}

/// Adam descent on the decoder with the encoder frozen, from a fresh forward
/// pass. Returns the decoder objective before the update.
pub fn min_step(
    encoder: &Network,
    decoder: &mut Network,
    opt: &mut AdamState,
    batch: &Batch,
    cfg: &TrainConfig,
    iteration: u64,
) -> Result<f64> {
    let (terms, value, g) = decoder_grads(encoder, decoder, &batch.x, &batch.x_aug, &cfg.variant, &cfg.rate)
        .map_err(|e| as_loss_error(iteration, "min", e))?;
    check_finite(iteration, "min", &terms, value, &g)?;
    opt.apply(decoder, &g, &cfg.adam, false)?;
    Ok(value)
}

/// One alternation round: [`max_step`] then [`min_step`], then telemetry.
pub fn train_step(state: &mut TrainState, batch: &Batch, cfg: &TrainConfig) -> Result<()> {
    let it = state.iteration;
    let (terms, enc_value) = max_step(&mut state.encoder, &mut state.encoder_opt, &state.decoder, batch, cfg, it)?;
    let dec_value = min_step(&state.encoder, &mut state.decoder, &mut state.decoder_opt, batch, cfg, it)?;
    state.telemetry.push(TelemetryRecord {
        iteration: it,
        variant: cfg.variant.tag,
        terms,
        encoder_objective: enc_value,
        decoder_objective: dec_value,
    });
    state.iteration += 1;
    Ok(())
}

/// Fresh state trained for `cfg.iterations` rounds.
pub fn run_training(cfg: &TrainConfig, data: SampleView<'_>) -> Result<TrainState> {
    let state = TrainState::init(data.dim(), cfg)?;
    resume_training(cfg, data, state, &mut |_| Ok(()))
}

/// Continues `state` until `cfg.iterations` rounds are complete, calling
/// `after_step` after every round.
pub fn resume_training(
    cfg: &TrainConfig,
    data: SampleView<'_>,
    mut state: TrainState,
    after_step: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    if state.encoder.input_dim() != data.dim() {
        return Err(Error::dims("dataset dimension", state.encoder.input_dim(), data.dim()));
    }
    if state.iteration >= cfg.iterations {
        return Ok(state);
    }
    let mut batches = BatchIter::new(data, cfg.batch_size, cfg.seed, cfg.augmentation.clone())?;
    while state.iteration < cfg.iterations {
        let batch = batches.batch_at(state.iteration)?;
        train_step(&mut state, &batch, cfg)?;
        after_step(&state)?;
    }
    Ok(state)
}

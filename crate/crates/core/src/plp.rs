//! Progressive remaining-length prediction.
//!
//! At decoding step `t` (1-based), the model predicts how many tokens are
//! still to come given the pooled prompt feature concatenated with an
//! entropy-guided pooling of the `t - 1` tokens generated so far. The
//! prediction made before any output exists (`t = 1`, empty prefix) targets
//! the full response length; the step-`t` prediction targets `T - (t - 1)`.
//! Sequence loss is the arithmetic mean of the per-step joint losses.

use crate::dataio::ActivationRecord;
use crate::error::{Error, Result};
use crate::head::{forward, loss_gradients, BinLayout, HeadGradients, HeadParams};
use crate::numerics::{ensure_finite, SeededRng};
use crate::pooling::{egtp_pool, egtp_pool_prefix, HiddenSequence};
use crate::trainer::{EpochStats, OptimizerState, TrainConfig, TrainOutcome};

/// Cap on per-sequence training steps; longer sequences are stratified
/// down to this many sampled steps to bound cost. Evaluation never
/// subsamples.
pub const MAX_TRAIN_STEPS_PER_SEQUENCE: usize = 256;

/// One progressive-prediction example: the pooled prompt feature plus the
/// full recorded response activations.
#[derive(Debug, Clone)]
pub struct PlpExample {
    pub prompt_feature: Vec<f64>,
    pub generated: HiddenSequence,
}

impl PlpExample {
    pub fn new(prompt_feature: Vec<f64>, generated: HiddenSequence) -> Result<Self> {
        ensure_finite(&prompt_feature, "PlpExample prompt feature")?;
        if prompt_feature.len() != generated.d() {
            return Err(Error::DimensionMismatch {
                what: "PlpExample prompt feature",
                expected: generated.d(),
                got: prompt_feature.len(),
            });
        }
        Ok(Self {
            prompt_feature,
            generated,
        })
    }

    /// Response length T.
    pub fn total(&self) -> usize {
        self.generated.n()
    }
}

/// Build the step-input vector: the prompt feature concatenated with an
/// EGTP pooling of the first `t` generated tokens (`t = 0` uses a zero
/// vector for the generated half).
pub fn aggregate(
    prompt_feature: &[f64],
    generated: &HiddenSequence,
    t: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    if prompt_feature.len() != generated.d() {
        return Err(Error::DimensionMismatch {
            what: "aggregate prompt feature",
            expected: generated.d(),
            got: prompt_feature.len(),
        });
    }
    if t > generated.n() {
        return Err(Error::InvalidArgument {
            what: "aggregate",
            reason: format!("prefix length {t} exceeds {} generated tokens", generated.n()),
        });
    }
    let mut z = Vec::with_capacity(2 * generated.d());
    z.extend_from_slice(prompt_feature);
    if t == 0 {
        z.extend(std::iter::repeat(0.0).take(generated.d()));
    } else {
        z.extend(egtp_pool_prefix(generated, t, alpha)?.vector);
    }
    Ok(z)
}

/// Tokens still to be generated after `t` are already out.
pub fn remaining_target(total: u32, t: u32) -> Result<u32> {
    if t >= total {
        return Err(Error::InvalidArgument {
            what: "remaining_target",
            reason: format!("step {t} out of range for length {total}"),
        });
    }
    Ok(total - t)
}

/// Mean joint loss and mean gradients over the given 1-based steps.
fn steps_loss(
    example: &PlpExample,
    params: &HeadParams,
    bins: &BinLayout,
    alpha: f64,
    steps: &[usize],
) -> Result<(f64, HeadGradients)> {
    let total = example.total() as u32;
    let mut loss_sum = 0.0;
    let mut grads = HeadGradients::zeros(params.k(), params.d_in());
    for &step in steps {
        let prefix = step - 1;
        let target = remaining_target(total, prefix as u32)?;
        let z = aggregate(&example.prompt_feature, &example.generated, prefix, alpha)?;
        let (loss, g) = loss_gradients(params, &z, target, bins)?;
        loss_sum += loss;
        grads.add(&g);
    }
    let inv = 1.0 / steps.len() as f64;
    grads.scale(inv);
    Ok((loss_sum * inv, grads))
}

/// Average joint loss over all T steps of a sequence, with gradients
/// averaged the same way.
pub fn plp_sequence_loss(
    example: &PlpExample,
    params: &HeadParams,
    bins: &BinLayout,
    alpha: f64,
) -> Result<(f64, HeadGradients)> {
    let steps: Vec<usize> = (1..=example.total()).collect();
    steps_loss(example, params, bins, alpha, &steps)
}

/// Stratified 1-based step sample: one uniform draw per stratum of
/// `[1, total]`, used when a sequence is longer than the training cap.
fn stratified_steps(total: usize, count: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut steps = Vec::with_capacity(count);
    for j in 0..count {
        let lo = 1 + j * total / count;
        let hi = (j + 1) * total / count;
        steps.push(rng.uniform_range(lo as u64, hi.max(lo) as u64) as usize);
    }
    steps
}

fn build_examples(set: &[ActivationRecord], alpha: f64) -> Result<(Vec<PlpExample>, usize)> {
    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for record in set {
        match &record.response {
            Some(resp) => {
                let prompt_feature = egtp_pool(&record.prompt, alpha)?.vector;
                examples.push(PlpExample::new(prompt_feature, resp.clone())?);
            }
            None => skipped += 1,
        }
    }
    Ok((examples, skipped))
}

fn fit_remaining_bins(
    examples: &[PlpExample],
    config: &TrainConfig,
) -> Result<(BinLayout, f64)> {
    let mut targets = Vec::new();
    for ex in examples {
        for rem in 1..=ex.total() {
            targets.push(rem as f64);
        }
    }
    let encoded: Vec<f64> = if config.log_scale {
        targets.iter().map(|v| v.ln()).collect()
    } else {
        targets
    };
    let bins = BinLayout::fit(&encoded, config.k, config.scheme, config.log_scale)?;
    let max = encoded.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm_scale = if config.normalize_mse { max } else { 1.0 };
    if !(norm_scale > 0.0) {
        return Err(Error::DegenerateBins {
            reason: format!("norm_scale {norm_scale} is not positive"),
        });
    }
    Ok((bins, norm_scale))
}

fn train_steps_for(
    example: &PlpExample,
    rng: &mut SeededRng,
) -> Vec<usize> {
    let total = example.total();
    if total <= MAX_TRAIN_STEPS_PER_SEQUENCE {
        (1..=total).collect()
    } else {
        stratified_steps(total, MAX_TRAIN_STEPS_PER_SEQUENCE, rng)
    }
}

fn val_mae_over(
    examples: &[PlpExample],
    params: &HeadParams,
    bins: &BinLayout,
    alpha: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let mut total_err = 0.0;
    let mut count = 0usize;
    for ex in examples {
        for step in train_steps_for(ex, &mut rng) {
            let prefix = step - 1;
            let target = remaining_target(ex.total() as u32, prefix as u32)?;
            let z = aggregate(&ex.prompt_feature, &ex.generated, prefix, alpha)?;
            let out = forward(params, &z, bins)?;
            let y_hat = bins.decode_prediction(out.y_hat).max(1.0);
            total_err += (target as f64 - y_hat).abs();
            count += 1;
        }
    }
    Ok(total_err / count.max(1) as f64)
}

/// Outcome of PLP training, plus how many records lacked response
/// activations and were skipped.
#[derive(Debug, Clone)]
pub struct PlpTrainOutcome {
    pub outcome: TrainOutcome,
    pub skipped_records: usize,
}

/// Train a remaining-length head (input size 2d) with the step-averaged
/// objective. Bins are fit on the remaining-length targets pooled over all
/// steps of the training sequences.
pub fn plp_train(
    train_set: &[ActivationRecord],
    val_set: &[ActivationRecord],
    config: &TrainConfig,
) -> Result<PlpTrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput { what: "train_set" });
    }
    let (train_examples, skipped_train) = build_examples(train_set, config.alpha)?;
    let (val_examples, skipped_val) = build_examples(val_set, config.alpha)?;
    if train_examples.is_empty() {
        return Err(Error::EmptyInput {
            what: "plp_train responses",
        });
    }

    let (bins, norm_scale) = fit_remaining_bins(&train_examples, config)?;
    let d = train_examples[0].generated.d();
    let mut params = HeadParams::zeros(bins.k(), 2 * d, config.lambda, norm_scale)?;
    let mut state = OptimizerState::new(bins.k(), 2 * d);

    let n = train_examples.len();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, HeadParams)> = None;
    let val_seed = config.seed.wrapping_mul(0x9e37_79b9).wrapping_add(1);

    for epoch in 0..config.epochs {
        let mut rng = SeededRng::new(config.seed.wrapping_add(epoch as u64));
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut batch_grads = HeadGradients::zeros(bins.k(), 2 * d);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let ex = &train_examples[i];
                let steps = train_steps_for(ex, &mut rng);
                let (loss, grads) = steps_loss(ex, &params, &bins, config.alpha, &steps)?;
                batch_loss += loss;
                batch_grads.add(&grads);
            }
            batch_grads.scale(1.0 / chunk.len() as f64);
            if !batch_grads.is_finite() {
                return Err(Error::NonFiniteGradient {
                    epoch,
                    batch: batch_idx,
                });
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += batch_loss;
            crate::trainer::adamw_step(&mut params, &mut state, &batch_grads, config)?;
        }

        let train_loss = epoch_loss / n as f64;
        let val_mae = if val_examples.is_empty() {
            f64::NAN
        } else {
            val_mae_over(&val_examples, &params, &bins, config.alpha, val_seed)?
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_mae,
        });
        let key = if val_mae.is_nan() { train_loss } else { val_mae };
        if best.as_ref().map_or(true, |(b, _)| key < *b) {
            best = Some((key, params.clone()));
        }
    }

    let (_, best_params) = best.expect("at least one epoch ran");
    Ok(PlpTrainOutcome {
        outcome: TrainOutcome {
            params: best_params,
            bins,
            history,
            clamped_labels: 0,
        },
        skipped_records: skipped_train + skipped_val,
    })
}

/// One point of the progressive-improvement curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub mae: f64,
}

/// Remaining-length MAE at a list of decode-progress fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlpCurve {
    pub points: Vec<CurvePoint>,
}

impl PlpCurve {
    pub fn to_csv(&self, config_echo: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {config_echo}\n"));
        out.push_str("fraction,mae\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.fraction, p.mae));
        }
        out
    }
}

/// Evaluate remaining-length MAE at `t = floor(f * T)` for each fraction
/// `f`, aggregated over every record that has response activations.
pub fn plp_eval_curve(
    params: &HeadParams,
    bins: &BinLayout,
    dataset: &[ActivationRecord],
    fractions: &[f64],
    alpha: f64,
) -> Result<PlpCurve> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput {
            what: "plp_eval_curve dataset",
        });
    }
    if fractions.is_empty() {
        return Err(Error::EmptyInput {
            what: "plp_eval_curve fractions",
        });
    }
    if fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
        return Err(Error::InvalidArgument {
            what: "fractions",
            reason: format!("fractions {fractions:?} must lie in [0, 1)"),
        });
    }
    if !fractions.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument {
            what: "fractions",
            reason: "fractions must be strictly increasing".into(),
        });
    }
    let (examples, _skipped) = build_examples(dataset, alpha)?;
    if examples.is_empty() {
        return Err(Error::EmptyInput {
            what: "plp_eval_curve responses",
        });
    }
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut total_err = 0.0;
        for ex in &examples {
            let total = ex.total();
            let t = ((fraction * total as f64).floor() as usize).min(total - 1);
            let target = remaining_target(total as u32, t as u32)?;
            let z = aggregate(&ex.prompt_feature, &ex.generated, t, alpha)?;
            let out = forward(params, &z, bins)?;
            let y_hat = bins.decode_prediction(out.y_hat).max(1.0);
            total_err += (target as f64 - y_hat).abs();
        }
        points.push(CurvePoint {
            fraction,
            mae: total_err / examples.len() as f64,
        });
    }
    Ok(PlpCurve { points })
}

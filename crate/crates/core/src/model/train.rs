use super::forward::{forward, loss, loss_and_grad, Batch};
use super::optim::{OptimizerConfig, OptimizerState};
use super::params::Seq2SeqParams;
use super::{ModelConfig, ModelError, Real};
use crate::objectives::Rng;

/// One optimizer update on `batch`. Dropout masks come from `rng`. On a
/// non-finite loss or gradient nothing is modified.
pub fn train_step<T: Real>(
    params: &mut Seq2SeqParams<T>,
    opt: &mut OptimizerState<T>,
    batch: &Batch,
    rng: &mut Rng,
) -> Result<T, ModelError> {
    let (l, grads) = loss_and_grad(params, batch, Some(rng))?;
    if !l.is_finite() || !grads.all_finite() {
        return Err(ModelError::NonFiniteLoss {
            step: opt.encoder_step.max(opt.decoder_step) + 1,
        });
    }
    opt.apply(params, &grads);
    Ok(l)
}

/// `exp` of the mean token NLL over all live positions, dropout off.
pub fn evaluate_perplexity<T: Real>(params: &Seq2SeqParams<T>, batches: &[Batch]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for batch in batches {
        let live = batch.n_live();
        if live == 0 {
            continue;
        }
        let out = forward(params, batch, None)?;
        total += loss(&out.logits, &batch.labels, &batch.label_mask)?.as_f64() * live as f64;
        n += live;
    }
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    Ok((total / n as f64).exp())
}

/// Parameters, optimizer state and dropout stream owned together.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub params: Seq2SeqParams<T>,
    pub opt: OptimizerState<T>,
    pub rng: Rng,
}

impl<T: Real> Trainer<T> {
    /// Fresh model; initialization and dropout use streams derived from
    /// `seed`.
    pub fn new(config: &ModelConfig, opt: OptimizerConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Seq2SeqParams::init(config, &mut Rng::derived(seed, "init"));
        Ok(Self::from_params(params, opt, seed))
    }

    /// Continues from existing weights with a new optimizer.
    pub fn from_params(params: Seq2SeqParams<T>, opt: OptimizerConfig, seed: u64) -> Self {
        let opt = OptimizerState::new(opt, &params);
        Self {
            params,
            opt,
            rng: Rng::derived(seed, "dropout"),
        }
    }

    pub fn step(&mut self, batch: &Batch) -> Result<T, ModelError> {
        train_step(&mut self.params, &mut self.opt, batch, &mut self.rng)
    }

    pub fn steps_taken(&self) -> u64 {
        self.opt.encoder_step
    }
}

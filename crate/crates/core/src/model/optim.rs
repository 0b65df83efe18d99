//! Adam with separate encoder and decoder groups, each with its own warmup
//! schedule and step counter.

use serde::{Deserialize, Serialize};

use super::params::{ParamGroup, Seq2SeqParams};
use super::Real;

/// `peak * min(step / warmup, sqrt(warmup / step))`. Step 0 gives 0.
pub fn lr_schedule(step: u64, peak_lr: f64, warmup: u64) -> f64 {
    if step == 0 {
        return 0.0;
    }
    let warmup = warmup.max(1) as f64;
    let step = step as f64;
    peak_lr * (step / warmup).min((warmup / step).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub peak_lr: f64,
    pub warmup: u64,
}

impl GroupSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        lr_schedule(step, self.peak_lr, self.warmup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub encoder: GroupSchedule,
    pub decoder: GroupSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    fn with(encoder: GroupSchedule, decoder: GroupSchedule) -> Self {
        Self {
            encoder,
            decoder,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }

    /// Encoder peak 2e-5, decoder peak 1e-4, 10,000 warmup steps.
    pub fn pretrain() -> Self {
        Self::with(
            GroupSchedule { peak_lr: 2e-5, warmup: 10_000 },
            GroupSchedule { peak_lr: 1e-4, warmup: 10_000 },
        )
    }

    /// Both peaks 2e-5, 4,000 warmup steps.
    pub fn finetune() -> Self {
        let g = GroupSchedule { peak_lr: 2e-5, warmup: 4_000 };
        Self::with(g, g)
    }

    /// Rates for the small randomly initialized desk model, which trains
    /// for a few thousand steps instead of hundreds of thousands. Keeps the
    /// pre-training ratio of decoder to encoder peak.
    pub fn desk_pretrain() -> Self {
        Self::with(
            GroupSchedule { peak_lr: 1e-3, warmup: 200 },
            GroupSchedule { peak_lr: 2e-3, warmup: 200 },
        )
    }

    pub fn desk_finetune() -> Self {
        let g = GroupSchedule { peak_lr: 1e-3, warmup: 100 };
        Self::with(g, g)
    }

    pub fn schedule(&self, group: ParamGroup) -> GroupSchedule {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Decoder => self.decoder,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::pretrain()
    }
}

/// Moments and step counters of both groups.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    pub encoder_step: u64,
    pub decoder_step: u64,
    pub m: Seq2SeqParams<T>,
    pub v: Seq2SeqParams<T>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, params: &Seq2SeqParams<T>) -> Self {
        Self {
            config,
            encoder_step: 0,
            decoder_step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&self, group: ParamGroup) -> u64 {
        match group {
            ParamGroup::Encoder => self.encoder_step,
            ParamGroup::Decoder => self.decoder_step,
        }
    }

    /// Current learning rate of a group (after the latest update).
    pub fn lr(&self, group: ParamGroup) -> f64 {
        self.config.schedule(group).lr(self.step(group))
    }

    /// One bias-corrected Adam update of every tensor with its group's
    /// learning rate.
    pub fn apply(&mut self, params: &mut Seq2SeqParams<T>, grads: &Seq2SeqParams<T>) {
        self.encoder_step += 1;
        self.decoder_step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let eps = T::lit(c.eps);
        for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
            let step = self.step(p.group) as i32;
            let lr = T::lit(self.config.schedule(p.group).lr(step as u64));
            let corr1 = T::one() - b1.powi(step);
            let corr2 = T::one() - b2.powi(step);
            let m = &mut self.m.tensors[i].value;
            let v = &mut self.v.tensors[i].value;
            ndarray::Zip::from(&mut p.value)
                .and(&g.value)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

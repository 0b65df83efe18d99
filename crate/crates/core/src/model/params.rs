//! Parameter storage.
//!
//! All tensors live in one arena (`Vec<Param>`) in declaration order; the
//! [`Layout`] holds typed indices into it. Gradients and Adam moments reuse
//! the same layout, so they can be walked in lockstep with the parameters.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Real};
use crate::objectives::Rng;

/// Which optimizer a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub group: ParamGroup,
    pub value: Array2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearIdx {
    /// `in x out`
    pub weight: usize,
    /// `1 x out`
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionIdx {
    pub query: LinearIdx,
    pub key: LinearIdx,
    pub value: LinearIdx,
    pub out: LinearIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedForwardIdx {
    pub up: LinearIdx,
    pub down: LinearIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderLayerIdx {
    pub attn_norm: NormIdx,
    pub attn: AttentionIdx,
    pub ffn_norm: NormIdx,
    pub ffn: FeedForwardIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderLayerIdx {
    pub self_norm: NormIdx,
    pub self_attn: AttentionIdx,
    pub cross_norm: NormIdx,
    pub cross_attn: AttentionIdx,
    pub ffn_norm: NormIdx,
    pub ffn: FeedForwardIdx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// `vocab x d_model`, encoder token embedding.
    pub enc_tokens: usize,
    /// Decoder token embedding; equals `enc_tokens` when tied.
    pub dec_tokens: usize,
    /// Output projection (`vocab x d_model`, logits are `h . W^T`); equals
    /// `enc_tokens` when tied.
    pub output: usize,
    pub enc_positions: usize,
    pub dec_positions: usize,
    pub encoder: Vec<EncoderLayerIdx>,
    pub enc_final_norm: NormIdx,
    pub decoder: Vec<DecoderLayerIdx>,
    pub dec_final_norm: NormIdx,
}

/// All weights of the encoder-decoder model.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqParams<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub tensors: Vec<Param<T>>,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

struct Builder<'a, T> {
    tensors: Vec<Param<T>>,
    rng: Option<&'a mut Rng>,
    std: f64,
}

impl<T: Real> Builder<'_, T> {
    fn add(&mut self, name: String, group: ParamGroup, shape: (usize, usize), init: Init) -> usize {
        let value = match (init, self.rng.as_deref_mut()) {
            (Init::Ones, _) => Array2::from_elem(shape, T::one()),
            (Init::Normal, Some(rng)) => {
                let normal = Normal::new(0.0, self.std).expect("valid std");
                Array2::from_shape_simple_fn(shape, || T::lit(normal.sample(rng.inner_mut())))
            }
            _ => Array2::zeros(shape),
        };
        self.tensors.push(Param { name, group, value });
        self.tensors.len() - 1
    }

    fn linear(&mut self, name: &str, group: ParamGroup, inp: usize, out: usize) -> LinearIdx {
        LinearIdx {
            weight: self.add(format!("{name}.weight"), group, (inp, out), Init::Normal),
            bias: self.add(format!("{name}.bias"), group, (1, out), Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, group: ParamGroup, d: usize) -> NormIdx {
        NormIdx {
            gain: self.add(format!("{name}.gain"), group, (1, d), Init::Ones),
            bias: self.add(format!("{name}.bias"), group, (1, d), Init::Zeros),
        }
    }

    fn attention(&mut self, name: &str, group: ParamGroup, d: usize) -> AttentionIdx {
        AttentionIdx {
            query: self.linear(&format!("{name}.query"), group, d, d),
            key: self.linear(&format!("{name}.key"), group, d, d),
            value: self.linear(&format!("{name}.value"), group, d, d),
            out: self.linear(&format!("{name}.out"), group, d, d),
        }
    }

    fn ffn(&mut self, name: &str, group: ParamGroup, d: usize, hidden: usize) -> FeedForwardIdx {
        FeedForwardIdx {
            up: self.linear(&format!("{name}.up"), group, d, hidden),
            down: self.linear(&format!("{name}.down"), group, hidden, d),
        }
    }
}

impl<T: Real> Seq2SeqParams<T> {
    /// Randomly initialized parameters: weights from `N(0, init_std^2)`,
    /// biases zero, norm gains one.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        Self::build(config, Some(rng))
    }

    /// Parameters with every tensor zero (norm gains included), used for
    /// gradients.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut p = Self::build(config, None);
        for t in &mut p.tensors {
            t.value.fill(T::zero());
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Param {
                    name: t.name.clone(),
                    group: t.group,
                    value: Array2::zeros(t.value.raw_dim()),
                })
                .collect(),
        }
    }

    fn build(config: &ModelConfig, rng: Option<&mut Rng>) -> Self {
        use ParamGroup::{Decoder, Encoder};
        let d = config.d_model;
        let mut b = Builder {
            tensors: Vec::new(),
            rng,
            std: config.init_std,
        };
        let enc_tokens = b.add("enc.tokens".into(), Encoder, (config.vocab_size, d), Init::Normal);
        let (dec_tokens, output) = if config.tie_embeddings {
            (enc_tokens, enc_tokens)
        } else {
            (
                b.add("dec.tokens".into(), Decoder, (config.vocab_size, d), Init::Normal),
                b.add("dec.output".into(), Decoder, (config.vocab_size, d), Init::Normal),
            )
        };
        let enc_positions = b.add(
            "enc.positions".into(),
            Encoder,
            (config.max_positions, d),
            Init::Normal,
        );
        let dec_positions = b.add(
            "dec.positions".into(),
            Decoder,
            (config.max_positions, d),
            Init::Normal,
        );
        let encoder = (0..config.enc_layers)
            .map(|l| EncoderLayerIdx {
                attn_norm: b.norm(&format!("enc.{l}.attn_norm"), Encoder, d),
                attn: b.attention(&format!("enc.{l}.attn"), Encoder, d),
                ffn_norm: b.norm(&format!("enc.{l}.ffn_norm"), Encoder, d),
                ffn: b.ffn(&format!("enc.{l}.ffn"), Encoder, d, config.enc_ffn),
            })
            .collect();
        let enc_final_norm = b.norm("enc.final_norm", Encoder, d);
        let decoder = (0..config.dec_layers)
            .map(|l| DecoderLayerIdx {
                self_norm: b.norm(&format!("dec.{l}.self_norm"), Decoder, d),
                self_attn: b.attention(&format!("dec.{l}.self_attn"), Decoder, d),
                cross_norm: b.norm(&format!("dec.{l}.cross_norm"), Decoder, d),
                cross_attn: b.attention(&format!("dec.{l}.cross_attn"), Decoder, d),
                ffn_norm: b.norm(&format!("dec.{l}.ffn_norm"), Decoder, d),
                ffn: b.ffn(&format!("dec.{l}.ffn"), Decoder, d, config.dec_ffn),
            })
            .collect();
        let dec_final_norm = b.norm("dec.final_norm", Decoder, d);
        Self {
            config: config.clone(),
            layout: Layout {
                enc_tokens,
                dec_tokens,
                output,
                enc_positions,
                dec_positions,
                encoder,
                enc_final_norm,
                decoder,
                dec_final_norm,
            },
            tensors: b.tensors,
        }
    }

    pub fn get(&self, idx: usize) -> &Array2<T> {
        &self.tensors[idx].value
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Array2<T> {
        &mut self.tensors[idx].value
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.value += &b.value;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.value.mapv_inplace(|x| x * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.value.iter().all(|x| x.is_finite()))
    }

    /// Element-wise conversion to another precision.
    pub fn cast<U: Real>(&self) -> Seq2SeqParams<U> {
        Seq2SeqParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Param {
                    name: t.name.clone(),
                    group: t.group,
                    value: t.value.mapv(|x| U::lit(x.as_f64())),
                })
                .collect(),
        }
    }
}

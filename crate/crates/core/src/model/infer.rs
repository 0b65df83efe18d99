//! Token-by-token decoding with cached keys and values.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::forward::{embed, encode};
use super::layers::{feed_forward, layer_norm, linear, softmax_rows};
use super::params::Seq2SeqParams;
use super::{ModelError, Real};

/// Decoder bound to one encoded source. Cross-attention keys and values are
/// computed once; each hypothesis carries its own [`DecoderState`].
pub struct IncrementalDecoder<'a, T> {
    params: &'a Seq2SeqParams<T>,
    cross: Vec<(Array2<T>, Array2<T>)>,
}

/// Self-attention keys/values of the tokens fed so far.
#[derive(Debug, Clone)]
pub struct DecoderState<T> {
    keys: Vec<Array2<T>>,
    values: Vec<Array2<T>>,
    len: usize,
}

impl<T> DecoderState<T> {
    /// Number of tokens consumed.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn attend<T: Real>(q: &Array2<T>, k: ArrayView2<T>, v: ArrayView2<T>, n_heads: usize) -> Array2<T> {
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut ctx = Array2::zeros((1, d));
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
    }
    ctx
}

impl<'a, T: Real> IncrementalDecoder<'a, T> {
    pub fn new(params: &'a Seq2SeqParams<T>, source: &[u32]) -> Result<Self, ModelError> {
        let cfg = &params.config;
        if source.is_empty() || source.len() > cfg.max_positions {
            return Err(ModelError::ShapeMismatch(format!(
                "source length {} outside 1..={}",
                source.len(),
                cfg.max_positions
            )));
        }
        if let Some(&bad) = source.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(ModelError::ShapeMismatch(format!("source token {bad} outside vocabulary")));
        }
        let memory = encode(params, source);
        let cross = params
            .layout
            .decoder
            .iter()
            .map(|l| {
                (
                    linear(params, l.cross_attn.key, &memory.view()),
                    linear(params, l.cross_attn.value, &memory.view()),
                )
            })
            .collect();
        Ok(Self { params, cross })
    }

    pub fn start(&self) -> DecoderState<T> {
        let d = self.params.config.d_model;
        let n = self.params.config.dec_layers;
        DecoderState {
            keys: vec![Array2::zeros((0, d)); n],
            values: vec![Array2::zeros((0, d)); n],
            len: 0,
        }
    }

    /// Feeds `token` at the next position and returns the logits for the
    /// position after it.
    pub fn step(&self, state: &mut DecoderState<T>, token: u32) -> Result<Array1<T>, ModelError> {
        let p = self.params;
        let cfg = &p.config;
        if state.len >= cfg.max_positions {
            return Err(ModelError::ShapeMismatch(format!(
                "decoder position {} exceeds max_positions {}",
                state.len, cfg.max_positions
            )));
        }
        if token as usize >= cfg.vocab_size {
            return Err(ModelError::ShapeMismatch(format!("token {token} outside vocabulary")));
        }
        let mut x = embed(p, p.layout.dec_tokens, p.layout.dec_positions, &[token], state.len);
        for (i, l) in p.layout.decoder.iter().enumerate() {
            let (n, _) = layer_norm(p, l.self_norm, &x);
            let q = linear(p, l.self_attn.query, &n.view());
            let k = linear(p, l.self_attn.key, &n.view());
            let v = linear(p, l.self_attn.value, &n.view());
            state.keys[i].push_row(k.row(0)).expect("width matches");
            state.values[i].push_row(v.row(0)).expect("width matches");
            let ctx = attend(&q, state.keys[i].view(), state.values[i].view(), cfg.n_heads);
            x += &linear(p, l.self_attn.out, &ctx.view());

            let (n, _) = layer_norm(p, l.cross_norm, &x);
            let q = linear(p, l.cross_attn.query, &n.view());
            let (ck, cv) = &self.cross[i];
            let ctx = attend(&q, ck.view(), cv.view(), cfg.n_heads);
            x += &linear(p, l.cross_attn.out, &ctx.view());

            let (n, _) = layer_norm(p, l.ffn_norm, &x);
            x += &feed_forward(p, l.ffn, n).0;
        }
        state.len += 1;
        let (h, _) = layer_norm(p, p.layout.dec_final_norm, &x);
        Ok(h.dot(&p.get(p.layout.output).t()).index_axis_move(Axis(0), 0))
    }
}

/// Log-softmax of a logit vector, in `f64`.
pub fn log_softmax<T: Real>(logits: &Array1<T>) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.as_f64()));
    let lse = logits.iter().map(|&v| (v.as_f64() - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&v| v.as_f64() - lse).collect()
}

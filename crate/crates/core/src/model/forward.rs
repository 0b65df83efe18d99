//! Teacher-forced forward pass, loss and exact backward pass.

use ndarray::{s, Array2, Array3, Axis};
use rand::RngCore;
use rayon::prelude::*;

use super::layers::{
    attention, attention_backward, dropout, feed_forward, feed_forward_backward, layer_norm,
    layer_norm_backward, AttentionCache, FfnCache, NormCache,
};
use super::params::Seq2SeqParams;
use super::{ModelError, Real};
use crate::objectives::Rng;
use crate::text::{BOS_ID, EOS_ID, PAD_ID};

/// Padded teacher-forcing batch. Masks are prefixes: each row is live up to
/// its length and padding after.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `B x S`, right-padded with PAD.
    pub src_ids: Array2<u32>,
    pub src_mask: Array2<bool>,
    /// `B x T`: BOS followed by the target.
    pub dec_input: Array2<u32>,
    /// `B x T`: the target followed by EOS, i.e. `dec_input` shifted left.
    pub labels: Array2<u32>,
    pub label_mask: Array2<bool>,
}

impl Batch {
    /// Builds a batch from `(source, target)` pairs; targets get BOS/EOS.
    pub fn from_pairs<S: AsRef<[u32]>, U: AsRef<[u32]>>(pairs: &[(S, U)]) -> Self {
        let b = pairs.len();
        let s_max = pairs.iter().map(|(s, _)| s.as_ref().len()).max().unwrap_or(0);
        let t_max = pairs.iter().map(|(_, t)| t.as_ref().len() + 1).max().unwrap_or(0);
        let mut batch = Batch {
            src_ids: Array2::from_elem((b, s_max), PAD_ID),
            src_mask: Array2::from_elem((b, s_max), false),
            dec_input: Array2::from_elem((b, t_max), PAD_ID),
            labels: Array2::from_elem((b, t_max), PAD_ID),
            label_mask: Array2::from_elem((b, t_max), false),
        };
        for (i, (src, tgt)) in pairs.iter().enumerate() {
            for (j, &id) in src.as_ref().iter().enumerate() {
                batch.src_ids[[i, j]] = id;
                batch.src_mask[[i, j]] = true;
            }
            let tgt = tgt.as_ref();
            batch.dec_input[[i, 0]] = BOS_ID;
            for (j, &id) in tgt.iter().enumerate() {
                batch.dec_input[[i, j + 1]] = id;
                batch.labels[[i, j]] = id;
                batch.label_mask[[i, j]] = true;
            }
            batch.labels[[i, tgt.len()]] = EOS_ID;
            batch.label_mask[[i, tgt.len()]] = true;
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.src_ids.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of live label positions.
    pub fn n_live(&self) -> usize {
        self.label_mask.iter().filter(|&&m| m).count()
    }

    fn live_len(mask: ndarray::ArrayView1<bool>) -> Result<usize, ModelError> {
        let n = mask.iter().take_while(|&&m| m).count();
        if mask.iter().skip(n).any(|&m| m) {
            return Err(ModelError::ShapeMismatch("mask is not a prefix".into()));
        }
        Ok(n)
    }

    /// Per-example `(source_len, target_len)`, checked against the model.
    fn lengths(&self, vocab: usize, max_positions: usize) -> Result<Vec<(usize, usize)>, ModelError> {
        let b = self.len();
        let t = self.dec_input.ncols();
        if self.src_mask.dim() != self.src_ids.dim()
            || self.labels.dim() != (b, t)
            || self.label_mask.dim() != (b, t)
        {
            return Err(ModelError::ShapeMismatch("batch arrays disagree in shape".into()));
        }
        (0..b)
            .map(|i| {
                let sl = Self::live_len(self.src_mask.row(i))?;
                let tl = Self::live_len(self.label_mask.row(i))?;
                if tl > 0 && sl == 0 {
                    return Err(ModelError::ShapeMismatch(format!("example {i} has an empty source")));
                }
                if sl > max_positions || tl > max_positions {
                    return Err(ModelError::ShapeMismatch(format!(
                        "example {i} exceeds max_positions {max_positions}"
                    )));
                }
                let ids = self.src_ids.slice(s![i, ..sl]);
                let dec = self.dec_input.slice(s![i, ..tl]);
                let lab = self.labels.slice(s![i, ..tl]);
                if ids.iter().chain(dec).chain(lab).any(|&id| id as usize >= vocab) {
                    return Err(ModelError::ShapeMismatch(format!(
                        "example {i} has a token id outside vocabulary {vocab}"
                    )));
                }
                Ok((sl, tl))
            })
            .collect()
    }
}

struct EncoderLayerCache<T> {
    attn_norm: NormCache<T>,
    attn: AttentionCache<T>,
    attn_drop: Option<Array2<T>>,
    ffn_norm: NormCache<T>,
    ffn: FfnCache<T>,
    ffn_drop: Option<Array2<T>>,
}

struct DecoderLayerCache<T> {
    self_norm: NormCache<T>,
    self_attn: AttentionCache<T>,
    self_drop: Option<Array2<T>>,
    cross_norm: NormCache<T>,
    cross_attn: AttentionCache<T>,
    cross_drop: Option<Array2<T>>,
    ffn_norm: NormCache<T>,
    ffn: FfnCache<T>,
    ffn_drop: Option<Array2<T>>,
}

pub(crate) struct ExampleCache<T> {
    src: Vec<u32>,
    dec: Vec<u32>,
    enc_emb_drop: Option<Array2<T>>,
    enc_layers: Vec<EncoderLayerCache<T>>,
    enc_final: NormCache<T>,
    dec_emb_drop: Option<Array2<T>>,
    dec_layers: Vec<DecoderLayerCache<T>>,
    dec_final: NormCache<T>,
    hidden: Array2<T>,
}

pub struct ForwardOutput<T> {
    /// `B x T x V`; rows at padded label positions are zero.
    pub logits: Array3<T>,
    caches: Vec<Option<ExampleCache<T>>>,
}

pub(crate) fn embed<T: Real>(
    p: &Seq2SeqParams<T>,
    tokens: usize,
    positions: usize,
    ids: &[u32],
    offset: usize,
) -> Array2<T> {
    let table = p.get(tokens);
    let pos = p.get(positions);
    let mut x = Array2::zeros((ids.len(), table.ncols()));
    for (i, (mut row, &id)) in x.rows_mut().into_iter().zip(ids).enumerate() {
        row.assign(&table.row(id as usize));
        row += &pos.row(offset + i);
    }
    x
}

fn embed_backward<T: Real>(
    grads: &mut Seq2SeqParams<T>,
    tokens: usize,
    positions: usize,
    ids: &[u32],
    dx: &Array2<T>,
) {
    for (i, (&id, row)) in ids.iter().zip(dx.rows()).enumerate() {
        let mut t = grads.get_mut(tokens).row_mut(id as usize);
        t += &row;
        let mut p = grads.get_mut(positions).row_mut(i);
        p += &row;
    }
}

fn residual<T: Real>(x: &mut Array2<T>, mut branch: Array2<T>, rate: f64, rng: Option<&mut Rng>) -> Option<Array2<T>> {
    let mask = dropout(&mut branch, rate, rng);
    *x += &branch;
    mask
}

fn masked<T: Real>(dy: &Array2<T>, mask: &Option<Array2<T>>) -> Array2<T> {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}

/// Memory, per-layer caches, final norm cache and embedding dropout mask.
type EncodeResult<T> = (Array2<T>, Vec<EncoderLayerCache<T>>, NormCache<T>, Option<Array2<T>>);

fn encode_example<T: Real>(
    p: &Seq2SeqParams<T>,
    src: &[u32],
    mut rng: Option<&mut Rng>,
) -> EncodeResult<T> {
    let cfg = &p.config;
    let rate = cfg.enc_dropout;
    let mut x = embed(p, p.layout.enc_tokens, p.layout.enc_positions, src, 0);
    let emb_drop = dropout(&mut x, rate, rng.as_deref_mut());
    let mut caches = Vec::with_capacity(cfg.enc_layers);
    for l in &p.layout.encoder {
        let (n, attn_norm) = layer_norm(p, l.attn_norm, &x);
        let (a, attn) = attention(p, l.attn, n, None, cfg.n_heads, false);
        let attn_drop = residual(&mut x, a, rate, rng.as_deref_mut());
        let (n, ffn_norm) = layer_norm(p, l.ffn_norm, &x);
        let (f, ffn) = feed_forward(p, l.ffn, n);
        let ffn_drop = residual(&mut x, f, rate, rng.as_deref_mut());
        caches.push(EncoderLayerCache {
            attn_norm,
            attn,
            attn_drop,
            ffn_norm,
            ffn,
            ffn_drop,
        });
    }
    let (out, final_norm) = layer_norm(p, p.layout.enc_final_norm, &x);
    (out, caches, final_norm, emb_drop)
}

/// Encoder output for one source, dropout off.
pub(crate) fn encode<T: Real>(p: &Seq2SeqParams<T>, src: &[u32]) -> Array2<T> {
    encode_example(p, src, None).0
}

fn forward_example<T: Real>(
    p: &Seq2SeqParams<T>,
    src: &[u32],
    dec: &[u32],
    mut rng: Option<&mut Rng>,
) -> (Array2<T>, ExampleCache<T>) {
    let cfg = &p.config;
    let (memory, enc_layers, enc_final, enc_emb_drop) = encode_example(p, src, rng.as_deref_mut());
    let rate = cfg.dec_dropout;
    let mut x = embed(p, p.layout.dec_tokens, p.layout.dec_positions, dec, 0);
    let dec_emb_drop = dropout(&mut x, rate, rng.as_deref_mut());
    let mut dec_layers = Vec::with_capacity(cfg.dec_layers);
    for l in &p.layout.decoder {
        let (n, self_norm) = layer_norm(p, l.self_norm, &x);
        let (a, self_attn) = attention(p, l.self_attn, n, None, cfg.n_heads, true);
        let self_drop = residual(&mut x, a, rate, rng.as_deref_mut());
        let (n, cross_norm) = layer_norm(p, l.cross_norm, &x);
        let (c, cross_attn) = attention(p, l.cross_attn, n, Some(memory.clone()), cfg.n_heads, false);
        let cross_drop = residual(&mut x, c, rate, rng.as_deref_mut());
        let (n, ffn_norm) = layer_norm(p, l.ffn_norm, &x);
        let (f, ffn) = feed_forward(p, l.ffn, n);
        let ffn_drop = residual(&mut x, f, rate, rng.as_deref_mut());
        dec_layers.push(DecoderLayerCache {
            self_norm,
            self_attn,
            self_drop,
            cross_norm,
            cross_attn,
            cross_drop,
            ffn_norm,
            ffn,
            ffn_drop,
        });
    }
    let (hidden, dec_final) = layer_norm(p, p.layout.dec_final_norm, &x);
    let logits = hidden.dot(&p.get(p.layout.output).t());
    (
        logits,
        ExampleCache {
            src: src.to_vec(),
            dec: dec.to_vec(),
            enc_emb_drop,
            enc_layers,
            enc_final,
            dec_emb_drop,
            dec_layers,
            dec_final,
            hidden,
        },
    )
}

fn backward_example<T: Real>(p: &Seq2SeqParams<T>, cache: &ExampleCache<T>, dlogits: &Array2<T>) -> Seq2SeqParams<T> {
    let n_heads = p.config.n_heads;
    let lay = &p.layout;
    let mut g = p.zeros_like();
    *g.get_mut(lay.output) += &dlogits.t().dot(&cache.hidden);
    let dh = dlogits.dot(p.get(lay.output));
    let mut dx = layer_norm_backward(p, &mut g, lay.dec_final_norm, &cache.dec_final, &dh);
    let mut dmemory = Array2::zeros((cache.src.len(), p.config.d_model));
    for (l, c) in lay.decoder.iter().zip(&cache.dec_layers).rev() {
        let df = masked(&dx, &c.ffn_drop);
        let dn = feed_forward_backward(p, &mut g, l.ffn, &c.ffn, &df);
        dx += &layer_norm_backward(p, &mut g, l.ffn_norm, &c.ffn_norm, &dn);
        let dc = masked(&dx, &c.cross_drop);
        let (dn, dmem) = attention_backward(p, &mut g, l.cross_attn, &c.cross_attn, &dc, n_heads);
        dmemory += &dmem.expect("cross attention has memory");
        dx += &layer_norm_backward(p, &mut g, l.cross_norm, &c.cross_norm, &dn);
        let da = masked(&dx, &c.self_drop);
        let (dn, _) = attention_backward(p, &mut g, l.self_attn, &c.self_attn, &da, n_heads);
        dx += &layer_norm_backward(p, &mut g, l.self_norm, &c.self_norm, &dn);
    }
    let dx = masked(&dx, &cache.dec_emb_drop);
    embed_backward(&mut g, lay.dec_tokens, lay.dec_positions, &cache.dec, &dx);

    let mut dx = layer_norm_backward(p, &mut g, lay.enc_final_norm, &cache.enc_final, &dmemory);
    for (l, c) in lay.encoder.iter().zip(&cache.enc_layers).rev() {
        let df = masked(&dx, &c.ffn_drop);
        let dn = feed_forward_backward(p, &mut g, l.ffn, &c.ffn, &df);
        dx += &layer_norm_backward(p, &mut g, l.ffn_norm, &c.ffn_norm, &dn);
        let da = masked(&dx, &c.attn_drop);
        let (dn, _) = attention_backward(p, &mut g, l.attn, &c.attn, &da, n_heads);
        dx += &layer_norm_backward(p, &mut g, l.attn_norm, &c.attn_norm, &dn);
    }
    let dx = masked(&dx, &cache.enc_emb_drop);
    embed_backward(&mut g, lay.enc_tokens, lay.enc_positions, &cache.src, &dx);
    g
}

/// Runs the model on every example. With `dropout_rng`, one seed per
/// example is drawn from it in batch order and masks are recorded.
pub fn forward<T: Real>(
    params: &Seq2SeqParams<T>,
    batch: &Batch,
    dropout_rng: Option<&mut Rng>,
) -> Result<ForwardOutput<T>, ModelError> {
    let cfg = &params.config;
    let lengths = batch.lengths(cfg.vocab_size, cfg.max_positions)?;
    let seeds: Vec<Option<u64>> = match dropout_rng {
        Some(rng) => lengths.iter().map(|_| Some(rng.next_u64())).collect(),
        None => vec![None; lengths.len()],
    };
    let results: Vec<Option<(Array2<T>, ExampleCache<T>)>> = lengths
        .par_iter()
        .zip(&seeds)
        .enumerate()
        .map(|(i, (&(sl, tl), seed))| {
            if tl == 0 {
                return None;
            }
            let src = batch.src_ids.slice(s![i, ..sl]).to_vec();
            let dec = batch.dec_input.slice(s![i, ..tl]).to_vec();
            let mut rng = seed.map(Rng::new);
            Some(forward_example(params, &src, &dec, rng.as_mut()))
        })
        .collect();
    let mut logits = Array3::zeros((batch.len(), batch.dec_input.ncols(), cfg.vocab_size));
    let caches = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map(|(l, cache)| {
                logits.slice_mut(s![i, ..l.nrows(), ..]).assign(&l);
                cache
            })
        })
        .collect();
    Ok(ForwardOutput { logits, caches })
}

fn log_softmax_at<T: Real>(row: ndarray::ArrayView1<T>, label: usize) -> T {
    let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
    let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
    row[label] - max - sum.ln()
}

/// Mean negative log-likelihood over live label positions.
pub fn loss<T: Real>(logits: &Array3<T>, labels: &Array2<u32>, mask: &Array2<bool>) -> Result<T, ModelError> {
    let (b, t, v) = logits.dim();
    if labels.dim() != (b, t) || mask.dim() != (b, t) {
        return Err(ModelError::ShapeMismatch(format!(
            "logits {b}x{t}x{v} vs labels {:?} / mask {:?}",
            labels.dim(),
            mask.dim()
        )));
    }
    let mut total = T::zero();
    let mut n = 0usize;
    for ((i, j), &live) in mask.indexed_iter() {
        if !live {
            continue;
        }
        let label = labels[[i, j]] as usize;
        if label >= v {
            return Err(ModelError::ShapeMismatch(format!("label {label} >= vocab {v}")));
        }
        total -= log_softmax_at(logits.slice(s![i, j, ..]), label);
        n += 1;
    }
    if n == 0 {
        return Err(ModelError::AllPadded);
    }
    Ok(total / T::from_usize(n).unwrap())
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn backward<T: Real>(
    params: &Seq2SeqParams<T>,
    batch: &Batch,
    out: &ForwardOutput<T>,
) -> Result<Seq2SeqParams<T>, ModelError> {
    let n = batch.n_live();
    if n == 0 {
        return Err(ModelError::AllPadded);
    }
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let per_example: Vec<Option<Seq2SeqParams<T>>> = out
        .caches
        .par_iter()
        .enumerate()
        .map(|(i, cache)| {
            let cache = cache.as_ref()?;
            let tl = cache.dec.len();
            let mut d = out.logits.slice(s![i, ..tl, ..]).to_owned();
            for (j, mut row) in d.axis_iter_mut(Axis(0)).enumerate() {
                let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum * inv_n);
                row[batch.labels[[i, j]] as usize] -= inv_n;
            }
            Some(backward_example(params, cache, &d))
        })
        .collect();
    let mut grads = params.zeros_like();
    for g in per_example.iter().flatten() {
        grads.add_assign(g);
    }
    Ok(grads)
}

/// Forward, loss and backward in one call.
pub fn loss_and_grad<T: Real>(
    params: &Seq2SeqParams<T>,
    batch: &Batch,
    dropout_rng: Option<&mut Rng>,
) -> Result<(T, Seq2SeqParams<T>), ModelError> {
    let out = forward(params, batch, dropout_rng)?;
    let l = loss(&out.logits, &batch.labels, &batch.label_mask)?;
    let g = backward(params, batch, &out)?;
    Ok((l, g))
}

//! Building blocks with explicit forward caches and backward passes.
//!
//! Every `*_backward` accumulates parameter gradients into `grads` (same
//! layout as the parameters) and returns the gradient with respect to the
//! block input.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{AttentionIdx, FeedForwardIdx, LinearIdx, NormIdx, Seq2SeqParams};
use super::Real;
use crate::objectives::Rng;

const NORM_EPS: f64 = 1e-5;

pub(crate) fn linear<T: Real>(p: &Seq2SeqParams<T>, idx: LinearIdx, x: &ArrayView2<T>) -> Array2<T> {
    x.dot(p.get(idx.weight)) + p.get(idx.bias)
}

/// `dy` is `n x out`, `x` the cached `n x in` input.
pub(crate) fn linear_backward<T: Real>(
    p: &Seq2SeqParams<T>,
    grads: &mut Seq2SeqParams<T>,
    idx: LinearIdx,
    x: &ArrayView2<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    *grads.get_mut(idx.weight) += &x.t().dot(dy);
    *grads.get_mut(idx.bias) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&p.get(idx.weight).t())
}

pub(crate) struct NormCache<T> {
    normalized: Array2<T>,
    inv_std: Array1<T>,
}

pub(crate) fn layer_norm<T: Real>(
    p: &Seq2SeqParams<T>,
    idx: NormIdx,
    x: &Array2<T>,
) -> (Array2<T>, NormCache<T>) {
    let d = T::from_usize(x.ncols()).unwrap();
    let eps = T::lit(NORM_EPS);
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *inv = T::one() / (var + eps).sqrt();
        let scale = *inv;
        row.mapv_inplace(|v| v * scale);
    }
    let y = &normalized * p.get(idx.gain) + p.get(idx.bias);
    (y, NormCache { normalized, inv_std })
}

pub(crate) fn layer_norm_backward<T: Real>(
    p: &Seq2SeqParams<T>,
    grads: &mut Seq2SeqParams<T>,
    idx: NormIdx,
    cache: &NormCache<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    *grads.get_mut(idx.gain) += &(dy * &cache.normalized)
        .sum_axis(Axis(0))
        .insert_axis(Axis(0));
    *grads.get_mut(idx.bias) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * p.get(idx.gain);
    let d = T::from_usize(dy.ncols()).unwrap();
    let mut dx = Array2::zeros(dy.raw_dim());
    for (r, mut out) in dx.rows_mut().into_iter().enumerate() {
        let g = dxhat.row(r);
        let xhat = cache.normalized.row(r);
        let sum_g = g.sum();
        let sum_gx = g.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>();
        let inv = cache.inv_std[r];
        for ((o, &gi), &xi) in out.iter_mut().zip(g).zip(xhat) {
            *o = inv / d * (d * gi - sum_g - xi * sum_gx);
        }
    }
    dx
}

fn gelu<T: Real>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * x * x)
}

pub(crate) struct FfnCache<T> {
    input: Array2<T>,
    pre: Array2<T>,
    hidden: Array2<T>,
}

pub(crate) fn feed_forward<T: Real>(
    p: &Seq2SeqParams<T>,
    idx: FeedForwardIdx,
    x: Array2<T>,
) -> (Array2<T>, FfnCache<T>) {
    let pre = linear(p, idx.up, &x.view());
    let hidden = pre.mapv(gelu);
    let y = linear(p, idx.down, &hidden.view());
    (
        y,
        FfnCache {
            input: x,
            pre,
            hidden,
        },
    )
}

pub(crate) fn feed_forward_backward<T: Real>(
    p: &Seq2SeqParams<T>,
    grads: &mut Seq2SeqParams<T>,
    idx: FeedForwardIdx,
    cache: &FfnCache<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    let dhidden = linear_backward(p, grads, idx.down, &cache.hidden.view(), dy);
    let dpre = dhidden * &cache.pre.mapv(gelu_grad);
    linear_backward(p, grads, idx.up, &cache.input.view(), &dpre)
}

pub(crate) struct AttentionCache<T> {
    query_input: Array2<T>,
    /// `None` for self-attention (keys/values come from `query_input`).
    memory: Option<Array2<T>>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    context: Array2<T>,
}

/// Row-wise softmax of `scores` in place; entries at `-inf` become 0.
pub(crate) fn softmax_rows<T: Real>(scores: &mut Array2<T>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Multi-head scaled dot-product attention of `x` over `memory` (or over
/// itself when `memory` is `None`). With `causal`, query `i` sees keys `<= i`.
pub(crate) fn attention<T: Real>(
    p: &Seq2SeqParams<T>,
    idx: AttentionIdx,
    x: Array2<T>,
    memory: Option<Array2<T>>,
    n_heads: usize,
    causal: bool,
) -> (Array2<T>, AttentionCache<T>) {
    let kv_input = memory.as_ref().unwrap_or(&x).view();
    let q = linear(p, idx.query, &x.view());
    let k = linear(p, idx.key, &kv_input);
    let v = linear(p, idx.value, &kv_input);
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut context = Array2::zeros((q.nrows(), d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        if causal {
            for ((i, j), v) in scores.indexed_iter_mut() {
                if j > i {
                    *v = T::neg_infinity();
                }
            }
        }
        softmax_rows(&mut scores);
        context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let out = linear(p, idx.out, &context.view());
    (
        out,
        AttentionCache {
            query_input: x,
            memory,
            q,
            k,
            v,
            probs,
            context,
        },
    )
}

/// Returns `(d_query_input, d_memory)`; for self-attention both
/// contributions are summed into the first and the second is `None`.
pub(crate) fn attention_backward<T: Real>(
    p: &Seq2SeqParams<T>,
    grads: &mut Seq2SeqParams<T>,
    idx: AttentionIdx,
    cache: &AttentionCache<T>,
    dy: &Array2<T>,
    n_heads: usize,
) -> (Array2<T>, Option<Array2<T>>) {
    let dcontext = linear_backward(p, grads, idx.out, &cache.context.view(), dy);
    let d = cache.q.ncols();
    let dh = d / n_heads;
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dctx = dcontext.slice(cols);
        let dprobs = dctx.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&dctx));
        let mut dscores = probs * &dprobs;
        for (mut row, prow) in dscores.rows_mut().into_iter().zip(probs.rows()) {
            let total = row.sum();
            for (g, &pv) in row.iter_mut().zip(prow) {
                *g = (*g - pv * total) * scale;
            }
        }
        dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
    }
    let kv_input = cache.memory.as_ref().unwrap_or(&cache.query_input).view();
    let mut dx = linear_backward(p, grads, idx.query, &cache.query_input.view(), &dq);
    let mut dmem = linear_backward(p, grads, idx.key, &kv_input, &dk);
    dmem += &linear_backward(p, grads, idx.value, &kv_input, &dv);
    if cache.memory.is_some() {
        (dx, Some(dmem))
    } else {
        dx += &dmem;
        (dx, None)
    }
}

/// Inverted dropout in place; returns the scaled keep mask when active.
pub(crate) fn dropout<T: Real>(
    x: &mut Array2<T>,
    rate: f64,
    rng: Option<&mut Rng>,
) -> Option<Array2<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
        if rng.unit() < rate {
            T::zero()
        } else {
            keep
        }
    });
    *x *= &mask;
    Some(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0f64, -1.2, -0.3, 0.0, 0.4, 1.7, 4.0] {
            let h = 1e-6;
            let numeric = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((numeric - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_respect_masking() {
        let mut m = ndarray::arr2(&[[1.0f64, 2.0, f64::NEG_INFINITY], [0.5, -0.5, 3.0]]);
        softmax_rows(&mut m);
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m[[0, 2]], 0.0);
    }
}

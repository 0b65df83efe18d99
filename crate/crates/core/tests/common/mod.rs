//! Oracles shared by the integration tests.
#![allow(dead_code)]

use seqsum::model::{loss_and_grad, Batch, Seq2SeqParams};
use seqsum::objectives::Rng;

/// A step proportional to `|theta|` is too coarse for unit-valued norm
/// gains (truncation error dominates), so every coordinate uses one scale.
pub const STEP_SCALE: f64 = 1e-2;

/// Denominator floor: loss round-off divided by the step is about 1e-11,
/// which would otherwise dominate coordinates with a zero gradient (key
/// biases cancel in the softmax).
pub const REL_FLOOR: f64 = 1e-5;

pub struct GradCheck {
    pub coords: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Relative error with a floor so that coordinates whose gradient is
/// essentially zero are judged on absolute error.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences on `per_tensor` random coordinates of every tensor,
/// with step `1e-3 * STEP_SCALE`.
pub fn gradient_check(
    params: &Seq2SeqParams<f64>,
    batch: &Batch,
    per_tensor: usize,
    seed: u64,
    floor: f64,
) -> GradCheck {
    let (_, grads) = loss_and_grad(params, batch, None).unwrap();
    let mut rng = Rng::new(seed);
    let mut probe = params.clone();
    let mut out = GradCheck { coords: 0, max_rel_err: 0.0, worst: String::new() };
    for t in 0..params.tensors.len() {
        let (rows, cols) = params.tensors[t].value.dim();
        for _ in 0..per_tensor {
            let (r, c) = (rng.below(rows), rng.below(cols));
            let theta = params.tensors[t].value[[r, c]];
            let h = 1e-3 * STEP_SCALE;
            probe.tensors[t].value[[r, c]] = theta + h;
            let up = loss_and_grad(&probe, batch, None).unwrap().0;
            probe.tensors[t].value[[r, c]] = theta - h;
            let down = loss_and_grad(&probe, batch, None).unwrap().0;
            probe.tensors[t].value[[r, c]] = theta;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors[t].value[[r, c]];
            let e = rel_err(analytic, numeric, floor);
            out.coords += 1;
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = format!(
                    "{}[{r},{c}] analytic {analytic:.3e} numeric {numeric:.3e}",
                    params.tensors[t].name
                );
            }
        }
    }
    out
}

pub fn random_pairs(rng: &mut Rng, vocab: usize, n: usize, src: (usize, usize), tgt: (usize, usize)) -> Vec<(Vec<u32>, Vec<u32>)> {
    (0..n)
        .map(|_| {
            let sl = rng.uniform_inclusive(src.0, src.1);
            let tl = rng.uniform_inclusive(tgt.0, tgt.1);
            let s = (0..sl).map(|_| rng.uniform_inclusive(5, vocab - 1) as u32).collect();
            let t = (0..tl).map(|_| rng.uniform_inclusive(5, vocab - 1) as u32).collect();
            (s, t)
        })
        .collect()
}

/// Sum of teacher-forced log-probabilities of `body` (tokens after BOS).
pub fn sequence_log_prob(params: &Seq2SeqParams<f64>, source: &[u32], body: &[u32]) -> f64 {
    let out = seqsum::model::forward(params, &Batch::from_pairs(&[(source, &body[..body.len() - 1])]), None).unwrap();
    body.iter()
        .enumerate()
        .map(|(t, &tok)| {
            let row = out.logits.slice(ndarray::s![0, t, ..]).to_owned();
            seqsum::model::log_softmax(&row)[tok as usize]
        })
        .sum()
}

/// Best log-probability over every EOS-terminated output with between
/// `min_len` and `max_len - 1` content tokens drawn from all non-EOS ids.
pub fn exhaustive_best(params: &Seq2SeqParams<f64>, source: &[u32], min_len: usize, max_len: usize) -> f64 {
    let vocab = params.config.vocab_size as u32;
    let eos = seqsum::text::EOS_ID;
    let alphabet: Vec<u32> = (0..vocab).filter(|&t| t != eos).collect();
    let mut best = f64::NEG_INFINITY;
    let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
    for len in 0..max_len {
        if len >= min_len {
            for c in &frontier {
                let mut body = c.clone();
                body.push(eos);
                best = best.max(sequence_log_prob(params, source, &body));
            }
        }
        frontier = frontier
            .iter()
            .flat_map(|c| alphabet.iter().map(move |&t| [c.as_slice(), &[t]].concat()))
            .collect();
    }
    best
}

pub fn has_repeated_trigram(tokens: &[u32]) -> bool {
    let mut seen = std::collections::HashSet::new();
    tokens.windows(3).any(|w| !seen.insert(w.to_vec()))
}

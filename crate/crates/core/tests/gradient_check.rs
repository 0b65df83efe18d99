mod common;

use common::{gradient_check, random_pairs, rel_err, REL_FLOOR};
use seqsum::model::{loss_and_grad, Batch, ModelConfig, Seq2SeqParams};
use seqsum::objectives::Rng;

fn check(cfg: &ModelConfig, seed: u64) -> common::GradCheck {
    let params: Seq2SeqParams<f64> = Seq2SeqParams::init(cfg, &mut Rng::new(seed));
    let pairs = random_pairs(&mut Rng::new(seed + 1), cfg.vocab_size, 3, (3, 7), (2, 5));
    gradient_check(&params, &Batch::from_pairs(&pairs), 6, seed + 2, REL_FLOOR)
}

#[test]
fn tied_model_gradients_match_central_differences() {
    let r = check(&ModelConfig::tiny(37), 11);
    println!("coords {} max rel err {:.3e} ({})", r.coords, r.max_rel_err, r.worst);
    assert!(r.coords >= 200);
    assert!(r.max_rel_err <= 1e-5, "{}", r.worst);
}

#[test]
fn untied_single_layer_gradients_match_central_differences() {
    let cfg = ModelConfig {
        tie_embeddings: false,
        n_heads: 4,
        enc_layers: 1,
        dec_layers: 1,
        ..ModelConfig::tiny(37)
    };
    let r = check(&cfg, 21);
    println!("coords {} max rel err {:.3e} ({})", r.coords, r.max_rel_err, r.worst);
    assert!(r.coords >= 200);
    assert!(r.max_rel_err <= 1e-5, "{}", r.worst);
}

/// Single-precision round-off is around 1e-8 absolute, a few parts in 1e4
/// of a 1e-5 gradient; gradients below the floor are judged on absolute
/// error.
const F32_FLOOR: f64 = 1e-3;

#[test]
fn single_precision_gradients_agree_with_double() {
    let cfg = ModelConfig::tiny(37);
    let p64: Seq2SeqParams<f64> = Seq2SeqParams::init(&cfg, &mut Rng::new(31));
    let p32: Seq2SeqParams<f32> = p64.cast();
    let pairs = random_pairs(&mut Rng::new(32), 37, 3, (3, 7), (2, 5));
    let batch = Batch::from_pairs(&pairs);
    let (_, g64) = loss_and_grad(&p64, &batch, None).unwrap();
    let (_, g32) = loss_and_grad(&p32, &batch, None).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in g32.tensors.iter().zip(&g64.tensors) {
        for (&x, &y) in a.value.iter().zip(&b.value) {
            worst = worst.max(rel_err(x as f64, y, F32_FLOOR));
        }
    }
    println!("f32 vs f64 max rel err {worst:.3e}");
    assert!(worst <= 1e-4);
}

//! Central finite differences against the hand-written backward pass of the
//! full online network (encoder, projector, predictor) in f64.
//!
//! cargo run --release --example gradient_check

use rand::Rng;
use stressrep::nn::{HybridLossConfig, ModelConfig, ModelState};
use stressrep::rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig {
        mel_bins: 16,
        channels: vec![4, 8],
        embed_dim: 12,
        proj_hidden: 10,
        pred_hidden: 10,
        d_sup: 9,
        norm_eps: 1e-5,
    };
    let mut r = rng::stream(5, &[]);
    let mut state: ModelState<f64> = ModelState::init(cfg, &mut r)?;
    for t in state.online.tensors.iter_mut().chain(state.target.tensors.iter_mut()) {
        t.data.iter_mut().for_each(|v| *v += r.random_range(-0.2..0.2));
    }
    let frames = 20;
    let v1: Vec<f64> = (0..frames * 16).map(|_| r.random_range(-2.0..2.0)).collect();
    let v2: Vec<f64> = (0..frames * 16).map(|_| r.random_range(-2.0..2.0)).collect();
    let sup: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
    let w = HybridLossConfig::default();

    let mut grads = state.online.zeros_like();
    state.sample_loss_grad(&v1, &v2, frames, &sup, &w, 1.0, &mut grads)?;
    let loss = |s: &ModelState<f64>| {
        let l = s.sample_loss(&v1, &v2, frames, &sup).unwrap();
        w.alpha_ss * l.l_ss + w.alpha_sup * l.l_sup
    };

    let h = 1e-5;
    println!("{:<24} {:>14} {:>14} {:>10}", "parameter", "analytic", "numeric", "rel err");
    let mut worst: f64 = 0.0;
    for (ti, name) in state.online.names.clone().iter().enumerate() {
        for _ in 0..3 {
            let k = r.random_range(0..state.online.tensors[ti].len());
            let mut p = state.clone();
            p.online.tensors[ti].data[k] += h;
            let mut m = state.clone();
            m.online.tensors[ti].data[k] -= h;
            let num = (loss(&p) - loss(&m)) / (2.0 * h);
            let ana = grads.tensors[ti].data[k];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
            println!("{:<24} {ana:>14.6e} {num:>14.6e} {rel:>10.2e}", format!("{name}[{k}]"));
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}

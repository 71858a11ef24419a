//! Two augmented views of a log-mel spectrogram: mixup against a memory of
//! earlier inputs, random resize crop, per-view normalisation.
//!
//! cargo run --release --example augment_views

use stressrep::audio::FrontendConfig;
use stressrep::augment::{make_views, AugmentConfig, MixupMemory, NormStats};
use stressrep::eval::Label;
use stressrep::rng;
use stressrep::synth::{gen_speaker_profile, gen_utterance, SynthConfig};

fn stats(v: &[f32]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let frontend = FrontendConfig::default();
    let specs = (0..8)
        .map(|i| {
            let p = gen_speaker_profile(3, i);
            let label = if i % 2 == 0 { Label::Load } else { Label::NoLoad };
            let w = gen_utterance(&p, label, 1.5, &SynthConfig::default(), &mut rng::stream(3, &[i as u64]))?;
            Ok(frontend.logmel(&w)?)
        })
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
    let norm = NormStats::fit(&specs);
    println!("corpus log-mel mean {:.3} std {:.3}", norm.mean, norm.std);

    let cfg = AugmentConfig::default();
    let mut memory = MixupMemory::new(cfg.memory_capacity);
    let mut r = rng::stream(9, &[]);
    for (i, x) in specs.iter().enumerate() {
        let v = make_views(x, &norm, &mut memory, &cfg, &mut r);
        let (ma, sa) = stats(&v.view_a.values);
        let diff = v
            .view_a
            .values
            .iter()
            .zip(&v.view_b.values)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / v.view_a.values.len() as f64;
        println!(
            "input {i}: {}x{} -> views {}x{}, view A mean {ma:+.3} std {sa:.3}, mean |A-B| {diff:.3}, memory {}",
            x.frames,
            x.mel_bins,
            v.view_a.frames,
            v.view_a.mel_bins,
            memory.len()
        );
    }
    Ok(())
}

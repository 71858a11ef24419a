//! Frame-level descriptors and CPS-115 functionals of one utterance.
//!
//! cargo run --release --example extract_features -- [file.wav]

use stressrep::audio::{load_wav, resample, CANONICAL_RATE};
use stressrep::eval::Label;
use stressrep::features::{apply_functionals, column_names, extract_lld, LldConfig, DESCRIPTORS};
use stressrep::rng;
use stressrep::synth::{gen_speaker_profile, gen_utterance, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let w = match std::env::args().nth(1) {
        Some(p) => {
            let w = load_wav(std::path::Path::new(&p))?;
            if w.sample_rate == CANONICAL_RATE {
                w
            } else {
                resample(&w, CANONICAL_RATE)?
            }
        }
        None => {
            let p = gen_speaker_profile(1, 0);
            println!("synthetic load utterance, speaker base F0 {:.1} Hz", p.base_f0);
            gen_utterance(&p, Label::Load, 2.0, &SynthConfig::default(), &mut rng::stream(1, &[]))?
        }
    };
    let lld = extract_lld(&w, &LldConfig::default())?;
    let voiced = lld.voiced_mask.iter().filter(|&&v| v).count();
    println!("{} frames, {voiced} voiced", lld.frames);
    let sup = apply_functionals(&lld);
    let names = column_names();
    println!("{:<22} {:>12} {:>12} {:>12}", "descriptor", "mean", "std", "p50");
    for (d, name) in DESCRIPTORS.iter().enumerate() {
        let v = &sup.values[d * 5..d * 5 + 5];
        println!("{name:<22} {:>12.4} {:>12.4} {:>12.4}", v[0], v[1], v[3]);
    }
    println!("{} columns, first '{}', last '{}'", sup.dim(), names[0], names[names.len() - 1]);
    Ok(())
}

//! Generate a small two-condition corpus and check the load effects with
//! the pitch tracker.
//!
//! cargo run --release --example synth_corpus -- [out_dir] [seed]

use stressrep::data::load_utterance;
use stressrep::eval::Label;
use stressrep::features::{extract_lld, LldConfig};
use stressrep::synth::gen_corpus;

fn median_f0(path_rec: &stressrep::eval::ManifestRecord) -> f64 {
    let w = load_utterance(path_rec).expect("readable wav");
    let lld = extract_lld(&w, &LldConfig::default()).expect("features");
    let mut f0: Vec<f64> = (0..lld.frames).filter(|&t| lld.voiced_mask[t]).map(|t| lld.get(t, 0)).collect();
    f0.sort_by(f64::total_cmp);
    f0.get(f0.len() / 2).copied().unwrap_or(0.0)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let tmp = tempfile::tempdir()?;
    let out = args.get(1).map(std::path::PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let m = gen_corpus(6, 3, &out, seed)?;
    m.validate(true)?;
    println!("{} utterances, {} speakers in {}", m.len(), m.speakers().len(), out.display());
    println!("{:<8} {:>3} {:>12} {:>12} {:>7}", "speaker", "sex", "F0 no_load", "F0 load", "ratio");
    for spk in m.speakers() {
        let med = |label: Label| {
            let v: Vec<f64> = m
                .records
                .iter()
                .filter(|r| r.speaker == spk && r.label == label)
                .map(median_f0)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (a, b) = (med(Label::NoLoad), med(Label::Load));
        let gender = &m.records.iter().find(|r| r.speaker == spk).unwrap().gender;
        println!("{spk:<8} {gender:>3} {a:>12.1} {b:>12.1} {:>7.3}", b / a);
    }
    Ok(())
}

//! Speaker-independent evaluation of handcrafted features: split, grouped
//! cross-validation over the C grid, held-out UAR, for both
//! standardisation modes.
//!
//! cargo run --release --example evaluate -- [seed]

use stressrep::config::RunConfig;
use stressrep::data::extract_feature_table;
use stressrep::eval::{compare_reports, evaluate, Standardization};
use stressrep::synth::gen_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let dir = tempfile::tempdir()?;
    let manifest = gen_corpus(12, 6, dir.path(), seed)?;
    let cfg = RunConfig::default();
    let table = extract_feature_table(&manifest, &cfg.features.lld_config())?;

    let mut reports = Vec::new();
    for (name, mode) in [("per-partition", Standardization::PerPartition), ("train-fit", Standardization::TrainFit)] {
        let mut ec = cfg.eval.clone();
        ec.seed = seed;
        ec.standardization = mode;
        let r = evaluate(&table, &manifest, &ec, name)?;
        println!("{name}: train speakers {:?}", r.train_speakers);
        println!("  cross-validated UAR by C:");
        for (c, score) in &r.grid_scores {
            println!("    C={c:<8.0e} {score:.4}");
        }
        reports.push(r);
    }
    print!("{}", compare_reports(&reports).0);
    Ok(())
}

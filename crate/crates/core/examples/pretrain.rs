//! Short hybrid pretraining run with a mid-run checkpoint, then resumption
//! from that checkpoint; the resumed run reproduces the uninterrupted one.
//!
//! cargo run --release --example pretrain -- [steps]

use stressrep::config::RunConfig;
use stressrep::synth::gen_corpus;
use stressrep::train::{leading_trailing_means, prepare_corpus, pretrain};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(40);
    let dir = tempfile::tempdir()?;
    let manifest = gen_corpus(6, 4, &dir.path().join("corpus"), 0)?;

    let mut cfg = RunConfig::default();
    cfg.model.channels = vec![16, 32, 64];
    cfg.model.embed_dim = 64;
    cfg.train.batch_size = 8;
    cfg.train.steps = steps;
    cfg.train.checkpoint_interval = steps / 2;
    let corpus = prepare_corpus(&manifest, &cfg.frontend, &cfg.features.lld_config())?;
    let full = pretrain(&corpus, &cfg, &dir.path().join("full"), None)?;
    for row in full.log.rows.iter().step_by((steps as usize / 10).max(1)) {
        println!(
            "step {:>4}  l_ss {:.4}  l_sup {:.4}  l_hybrid {:.4}",
            row.step, row.l_ss, row.l_sup, row.l_hybrid
        );
    }
    let (lead, trail) = leading_trailing_means(&full.log.l_hybrid(), 10);
    println!("mean l_hybrid first 10 steps {lead:.4}, last 10 steps {trail:.4}");

    let mid = dir.path().join("full").join(format!("checkpoint_step{:06}.bin", steps / 2));
    let resumed = pretrain(&corpus, &cfg, &dir.path().join("resumed"), Some(&mid))?;
    let same = std::fs::read(&full.checkpoint)? == std::fs::read(&resumed.checkpoint)?;
    println!("resumed from step {} -> final checkpoint identical: {same}", steps / 2);
    Ok(())
}

//! Synthetic corpus -> handcrafted baseline -> hybrid pretraining ->
//! embeddings -> evaluation, with a random-encoder reference.
//!
//! cargo run --release --example end_to_end -- [steps] [seed]

use std::time::Instant;

use stressrep::config::RunConfig;
use stressrep::data::extract_feature_table;
use stressrep::eval::{compare_reports, evaluate};
use stressrep::synth::gen_corpus;
use stressrep::train::{embed_manifest, pretrain, prepare_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(500);
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let dir = tempfile::tempdir()?;
    let t0 = Instant::now();

    let manifest = gen_corpus(20, 10, &dir.path().join("corpus"), seed)?;
    println!("corpus: {} utterances ({:.1?})", manifest.len(), t0.elapsed());

    let mut cfg = RunConfig::default();
    cfg.train.steps = steps;
    cfg.train.seed = seed;
    cfg.eval.seed = seed;

    let raw = extract_feature_table(&manifest, &cfg.features.lld_config())?;
    let r_raw = evaluate(&raw, &manifest, &cfg.eval, "cps115")?;
    println!("handcrafted features evaluated ({:.1?})", t0.elapsed());

    let corpus = prepare_corpus(&manifest, &cfg.frontend, &cfg.features.lld_config())?;
    let mut random_cfg = cfg.clone();
    random_cfg.train.steps = 1;
    random_cfg.train.lr = 1e-12;
    let rand_out = pretrain(&corpus, &random_cfg, &dir.path().join("random"), None)?;
    let emb = embed_manifest(&rand_out.checkpoint, &manifest, &cfg.frontend)?;
    let r_rand = evaluate(&emb.to_feature_table(), &manifest, &cfg.eval, "random-encoder")?;

    let t1 = Instant::now();
    let out = pretrain(&corpus, &cfg, &dir.path().join("hybrid"), None)?;
    let secs = t1.elapsed().as_secs_f64();
    println!("pretrained {steps} steps in {secs:.1} s ({:.3} s/step)", secs / steps as f64);
    let l = out.log.l_hybrid();
    let w = 50.min(l.len());
    let lead = l[..w].iter().sum::<f64>() / w as f64;
    let trail = l[l.len() - w..].iter().sum::<f64>() / w as f64;
    println!("l_hybrid leading {lead:.4} trailing {trail:.4} ratio {:.3}", trail / lead);

    let emb = embed_manifest(&out.checkpoint, &manifest, &cfg.frontend)?;
    let r_hyb = evaluate(&emb.to_feature_table(), &manifest, &cfg.eval, "hybrid")?;
    let (table, _) = compare_reports(&[r_raw, r_rand, r_hyb]);
    print!("{table}");
    println!("total {:.1?}", t0.elapsed());
    Ok(())
}

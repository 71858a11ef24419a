use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{EvalError, Manifest};
use crate::rng::{self, tag};

/// Number of randomized greedy candidates scored per split.
const CANDIDATES: u64 = 64;
/// Candidates whose train fraction is within this of the best fraction
/// compete on gender balance.
const FRACTION_SLACK: f64 = 0.05;

/// Speaker-level train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn is_train(&self, speaker: &str) -> bool {
        self.train.binary_search_by(|s| s.as_str().cmp(speaker)).is_ok()
    }
}

struct SpeakerStats {
    id: String,
    count: usize,
    genders: BTreeMap<String, usize>,
}

fn speaker_stats(m: &Manifest) -> Vec<SpeakerStats> {
    let mut by: BTreeMap<&str, SpeakerStats> = BTreeMap::new();
    for r in &m.records {
        let s = by.entry(&r.speaker).or_insert_with(|| SpeakerStats {
            id: r.speaker.clone(),
            count: 0,
            genders: BTreeMap::new(),
        });
        s.count += 1;
        *s.genders.entry(r.gender.clone()).or_default() += 1;
    }
    by.into_values().collect()
}

/// Largest absolute difference, over gender labels, between the train and
/// test utterance proportions.
fn gender_gap(stats: &[SpeakerStats], in_train: &[bool]) -> f64 {
    let mut tr: BTreeMap<&str, f64> = BTreeMap::new();
    let mut te: BTreeMap<&str, f64> = BTreeMap::new();
    let (mut ntr, mut nte) = (0.0, 0.0);
    for (s, &t) in stats.iter().zip(in_train) {
        let (map, n) = if t { (&mut tr, &mut ntr) } else { (&mut te, &mut nte) };
        for (g, &c) in &s.genders {
            *map.entry(g.as_str()).or_default() += c as f64;
            *n += c as f64;
        }
    }
    let genders: BTreeSet<&str> = tr.keys().chain(te.keys()).copied().collect();
    genders
        .into_iter()
        .map(|g| {
            let a = tr.get(g).copied().unwrap_or(0.0) / f64::max(ntr, 1.0);
            let b = te.get(g).copied().unwrap_or(0.0) / f64::max(nte, 1.0);
            (a - b).abs()
        })
        .fold(0.0, f64::max)
}

/// Randomized greedy speaker assignment targeting `ratio` of the utterances
/// in train, choosing among candidates the one with the most similar gender
/// mix between partitions.
pub fn split_speaker_independent(m: &Manifest, ratio: f64, seed: u64) -> Result<SplitAssignment, EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::Config(format!("train ratio {ratio} outside (0, 1)")));
    }
    let stats = speaker_stats(m);
    if stats.len() < 4 {
        return Err(EvalError::TooFewSpeakers {
            need: 4,
            got: stats.len(),
        });
    }
    let total: usize = stats.iter().map(|s| s.count).sum();
    let target = ratio * total as f64;

    let mut cands: Vec<(f64, f64, Vec<bool>)> = Vec::new();
    for c in 0..CANDIDATES {
        let mut order: Vec<usize> = (0..stats.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[tag::SPLIT, c]));
        let mut in_train = vec![false; stats.len()];
        let mut count = 0usize;
        for &i in &order {
            let n = stats[i].count;
            if ((count + n) as f64 - target).abs() < (count as f64 - target).abs() {
                in_train[i] = true;
                count += n;
            }
        }
        if count == 0 {
            in_train[order[0]] = true;
            count = stats[order[0]].count;
        }
        if count == total {
            let last = *order.iter().rev().find(|&&i| in_train[i]).unwrap();
            in_train[last] = false;
            count -= stats[last].count;
        }
        let frac_err = (count as f64 / total as f64 - ratio).abs();
        cands.push((frac_err, gender_gap(&stats, &in_train), in_train));
    }
    let best_frac = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let (_, _, chosen) = cands
        .iter()
        .filter(|c| c.0 <= best_frac + FRACTION_SLACK)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("at least one candidate");

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, &t) in stats.iter().zip(chosen) {
        if t {
            train.push(s.id.clone());
        } else {
            test.push(s.id.clone());
        }
    }
    Ok(SplitAssignment { train, test, seed })
}

/// Assign each sample to one of `k` folds so that all samples of a speaker
/// share a fold. Speakers are shuffled, then placed largest-first into the
/// currently smallest fold.
pub fn speaker_folds(groups: &[String], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        *counts.entry(g).or_default() += 1;
    }
    if k < 2 || counts.len() < k {
        return Err(EvalError::InsufficientFolds {
            folds: k,
            reason: format!("{} speakers", counts.len()),
        });
    }
    let mut speakers: Vec<(&str, usize)> = counts.into_iter().collect();
    speakers.shuffle(&mut rng::stream(seed, &[tag::FOLDS]));
    speakers.sort_by(|a, b| b.1.cmp(&a.1));
    let mut load = vec![0usize; k];
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (s, n) in speakers {
        let f = (0..k).min_by_key(|&f| (load[f], f)).unwrap();
        load[f] += n;
        fold_of.insert(s, f);
    }
    Ok(groups.iter().map(|g| fold_of[g.as_str()]).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::eval::{Label, ManifestRecord};
    use proptest::prelude::*;

    pub(crate) fn manifest(spk: &[(usize, &str)]) -> Manifest {
        let mut records = Vec::new();
        for (s, &(n, g)) in spk.iter().enumerate() {
            for u in 0..n {
                records.push(ManifestRecord {
                    utterance_id: format!("s{s:02}_u{u:02}"),
                    path: format!("s{s}_{u}.wav").into(),
                    speaker: format!("spk{s:02}"),
                    gender: g.to_string(),
                    label: if u % 2 == 0 { Label::NoLoad } else { Label::Load },
                    duration: None,
                });
            }
        }
        Manifest::new(records)
    }

    #[test]
    fn ten_by_ten() {
        let spk: Vec<(usize, &str)> = (0..10).map(|i| (10, if i % 2 == 0 { "F" } else { "M" })).collect();
        let m = manifest(&spk);
        let s = split_speaker_independent(&m, 0.7, 3).unwrap();
        assert_eq!(s.train.len(), 7);
        assert_eq!(s.test.len(), 3);
        assert!(s.train.iter().all(|t| !s.test.contains(t)));
        assert_eq!(s, split_speaker_independent(&m, 0.7, 3).unwrap());
    }

    #[test]
    fn too_few_speakers() {
        let m = manifest(&[(5, "F"), (5, "M")]);
        assert!(matches!(
            split_speaker_independent(&m, 0.7, 0),
            Err(EvalError::TooFewSpeakers { .. })
        ));
    }

    #[test]
    fn folds_need_enough_speakers() {
        let g: Vec<String> = ["a", "a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert!(speaker_folds(&g, 5, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn split_and_folds_are_speaker_disjoint(
            spk in proptest::collection::vec((1usize..15, prop_oneof![Just("F"), Just("M")]), 5..25),
            seed in any::<u64>(),
        ) {
            let m = manifest(&spk);
            let s = split_speaker_independent(&m, 0.7, seed).unwrap();
            let all = m.speakers();
            prop_assert_eq!(s.train.len() + s.test.len(), all.len());
            prop_assert!(!s.train.is_empty() && !s.test.is_empty());
            for sp in &all {
                prop_assert!(s.train.contains(sp) != s.test.contains(sp));
            }
            let groups: Vec<String> = m.records.iter().map(|r| r.speaker.clone()).collect();
            let folds = speaker_folds(&groups, 5, seed).unwrap();
            let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
            for (g, f) in groups.iter().zip(&folds) {
                prop_assert_eq!(*seen.entry(g).or_insert(*f), *f);
            }
            prop_assert!((0..5).all(|f| folds.contains(&f)));
        }
    }
}

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion_matrix, recalls, uar_from_confusion};
use super::split::split_speaker_independent;
use super::svm::{select_c, train_svm, SvmConfig, DECADE_GRID};
use super::{EvalError, Label, Manifest};
use crate::features::{FeatureTable, STD_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Standardization {
    /// Each partition uses its own mean and std.
    #[default]
    PerPartition,
    /// Test is transformed with train statistics.
    TrainFit,
}

impl Standardization {
    pub fn as_str(self) -> &'static str {
        match self {
            Standardization::PerPartition => "per-partition",
            Standardization::TrainFit => "train-fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub train_ratio: f64,
    pub grid: Vec<f64>,
    pub folds: usize,
    pub standardization: Standardization,
    pub seed: u64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_ratio: 0.7,
            grid: DECADE_GRID.to_vec(),
            folds: 5,
            standardization: Standardization::PerPartition,
            seed: 0,
            svm_tol: 1e-4,
            svm_max_iter: 10_000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(format!("eval.train_ratio {} outside (0, 1)", self.train_ratio));
        }
        if self.grid.is_empty() || self.grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err("eval.grid must hold positive finite penalties".into());
        }
        if self.folds < 2 {
            return Err("eval.folds must be at least 2".into());
        }
        if !(self.svm_tol > 0.0) || self.svm_max_iter == 0 {
            return Err("eval.svm_tol and eval.svm_max_iter must be positive".into());
        }
        Ok(())
    }

    pub fn svm(&self) -> SvmConfig {
        SvmConfig {
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
            seed: self.seed,
        }
    }
}

fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut clamped = 0;
    let std = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd < STD_FLOOR {
                clamped += 1;
            }
            sd.max(STD_FLOOR)
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} near-constant feature dimension(s); std clamped to {STD_FLOOR:e}");
    }
    (mean, std)
}

fn apply(rows: &[Vec<f64>], mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect())
        .collect()
}

/// Z-normalise train and test partitions per `mode`.
pub fn standardize_partitions(
    train: &[Vec<f64>],
    test: &[Vec<f64>],
    mode: Standardization,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), EvalError> {
    if train.is_empty() || test.is_empty() {
        return Err(EvalError::EmptyPartition);
    }
    let (m_tr, s_tr) = moments(train);
    let (m_te, s_te) = match mode {
        Standardization::PerPartition => moments(test),
        Standardization::TrainFit => (m_tr.clone(), s_tr.clone()),
    };
    Ok((apply(train, &m_tr, &s_tr), apply(test, &m_te, &s_te)))
}

/// Outcome of one downstream evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub feature_schema: String,
    pub feature_dim: usize,
    pub test_uar: f64,
    pub recall_no_load: Option<f64>,
    pub recall_load: Option<f64>,
    /// Rows = true class, columns = predicted, order `[no_load, load]`.
    pub confusion: [[usize; 2]; 2],
    pub selected_c: f64,
    pub fold_uars: Vec<f64>,
    pub grid_scores: Vec<(f64, f64)>,
    pub n_train: usize,
    pub n_test: usize,
    pub train_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    pub seed: u64,
    pub train_ratio: f64,
    pub standardization: String,
    pub cv_folds: usize,
    pub cv_metric: String,
    pub cv_grouping: String,
    pub class_weight: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Manifest(format!("bad report: {e}")))
    }

    /// Human-readable summary.
    pub fn to_table(&self) -> String {
        let fmt = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "evaluation: {}", self.name);
        let _ = writeln!(s, "  features      {} (dim {})", self.feature_schema, self.feature_dim);
        let _ = writeln!(
            s,
            "  split         {} train / {} test utterances, {} / {} speakers",
            self.n_train,
            self.n_test,
            self.train_speakers.len(),
            self.test_speakers.len()
        );
        let _ = writeln!(s, "  selected C    {:e}", self.selected_c);
        let _ = writeln!(s, "  test UAR      {:.4}", self.test_uar);
        let _ = writeln!(s, "  recall        no_load {}  load {}", fmt(self.recall_no_load), fmt(self.recall_load));
        let _ = writeln!(s, "  confusion     true\\pred  no_load  load");
        for (k, l) in [Label::NoLoad, Label::Load].iter().enumerate() {
            let _ = writeln!(
                s,
                "                {:<9}  {:>7}  {:>4}",
                l.as_str(),
                self.confusion[k][0],
                self.confusion[k][1]
            );
        }
        s
    }
}

fn table_rows(features: &FeatureTable) -> HashMap<&str, &[f64]> {
    features
        .ids
        .iter()
        .zip(&features.rows)
        .map(|(id, r)| (id.as_str(), r.as_slice()))
        .collect()
}

/// Split, standardise, select C by speaker-grouped CV on train, refit on all
/// of train and score the test partition.
pub fn evaluate(
    features: &FeatureTable,
    manifest: &Manifest,
    cfg: &EvalConfig,
    name: &str,
) -> Result<EvalReport, EvalError> {
    cfg.validate().map_err(EvalError::Config)?;
    let lookup = table_rows(features);
    // canonical order makes every downstream number independent of input order
    let mut recs: Vec<_> = manifest.records.iter().collect();
    recs.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let dim = features.dim();
    for r in &recs {
        let row = lookup
            .get(r.utterance_id.as_str())
            .ok_or_else(|| EvalError::MissingFeatures(r.utterance_id.clone()))?;
        if row.len() != dim || row.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::Manifest(format!(
                "features for '{}' are malformed or non-finite",
                r.utterance_id
            )));
        }
    }

    let split = split_speaker_independent(manifest, cfg.train_ratio, cfg.seed)?;
    let (tr, te): (Vec<_>, Vec<_>) = recs.iter().partition(|r| split.is_train(&r.speaker));
    let rows = |part: &[&&crate::eval::ManifestRecord]| -> Vec<Vec<f64>> {
        part.iter().map(|r| lookup[r.utterance_id.as_str()].to_vec()).collect()
    };
    let (x_tr, x_te) = standardize_partitions(&rows(&tr), &rows(&te), cfg.standardization)?;
    let y_tr: Vec<usize> = tr.iter().map(|r| r.label.index()).collect();
    let y_te: Vec<usize> = te.iter().map(|r| r.label.index()).collect();
    if !(y_tr.contains(&0) && y_tr.contains(&1)) {
        return Err(EvalError::SingleClass);
    }
    let groups: Vec<String> = tr.iter().map(|r| r.speaker.clone()).collect();

    let svm_cfg = cfg.svm();
    let cv = select_c(&x_tr, &y_tr, &groups, &cfg.grid, cfg.folds, cfg.seed, &svm_cfg)?;
    let model = train_svm(&x_tr, &y_tr, cv.best_c, &svm_cfg)?;
    let pred: Vec<usize> = x_te.iter().map(|x| model.predict(x)).collect();
    let confusion = confusion_matrix(&y_te, &pred)?;
    let [recall_no_load, recall_load] = recalls(&confusion);

    Ok(EvalReport {
        name: name.to_string(),
        feature_schema: features.schema_id.clone(),
        feature_dim: dim,
        test_uar: uar_from_confusion(&confusion),
        recall_no_load,
        recall_load,
        confusion,
        selected_c: cv.best_c,
        fold_uars: cv.fold_uars,
        grid_scores: cv.grid_scores,
        n_train: tr.len(),
        n_test: te.len(),
        train_speakers: split.train,
        test_speakers: split.test,
        seed: cfg.seed,
        train_ratio: cfg.train_ratio,
        standardization: cfg.standardization.as_str().to_string(),
        cv_folds: cfg.folds,
        cv_metric: "uar".into(),
        cv_grouping: "speaker".into(),
        class_weight: "inverse-frequency".into(),
    })
}

/// Rank reports by test UAR (descending, ties by name); returns the text
/// table and the CSV.
pub fn compare_reports(reports: &[EvalReport]) -> (String, String) {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| b.test_uar.total_cmp(&a.test_uar).then_with(|| a.name.cmp(&b.name)));
    let width = sorted.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut text = format!("{:<width$}  {:>6}  {:>8}  {:>8}  {:>8}\n", "name", "UAR", "no_load", "load", "C");
    let mut csv = String::from("name,test_uar,recall_no_load,recall_load,selected_c,feature_dim\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in sorted {
        let _ = writeln!(
            text,
            "{:<width$}  {:>6.4}  {:>8}  {:>8}  {:>8.0e}",
            r.name,
            r.test_uar,
            r.recall_no_load.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.recall_load.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.selected_c
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.name,
            r.test_uar,
            opt(r.recall_no_load),
            opt(r.recall_load),
            r.selected_c,
            r.feature_dim
        );
    }
    (text, csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::split::tests::manifest;
    use rand::Rng;

    fn table(m: &Manifest, f: impl Fn(&crate::eval::ManifestRecord, usize) -> Vec<f64>) -> FeatureTable {
        let rows: Vec<Vec<f64>> = m.records.iter().enumerate().map(|(i, r)| f(r, i)).collect();
        FeatureTable {
            schema_id: "test".into(),
            columns: (0..rows[0].len()).map(|i| format!("f{i}")).collect(),
            ids: m.records.iter().map(|r| r.utterance_id.clone()).collect(),
            rows,
        }
    }

    fn balanced() -> Manifest {
        let spk: Vec<(usize, &str)> = (0..12).map(|i| (10, if i % 2 == 0 { "F" } else { "M" })).collect();
        manifest(&spk)
    }

    #[test]
    fn per_partition_means_are_zero_and_train_fit_differs() {
        let tr = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]];
        let te = vec![vec![10.0, 1.0], vec![12.0, 2.0]];
        let (a, b) = standardize_partitions(&tr, &te, Standardization::PerPartition).unwrap();
        for part in [&a, &b] {
            for d in 0..2 {
                let m: f64 = part.iter().map(|r| r[d]).sum::<f64>() / part.len() as f64;
                assert!(m.abs() < 1e-9);
            }
        }
        assert!(a.iter().flatten().all(|v| v.is_finite()));
        let (_, b) = standardize_partitions(&tr, &te, Standardization::TrainFit).unwrap();
        assert!(b[0][0] > 1.0);
        assert!(standardize_partitions(&[], &te, Standardization::TrainFit).is_err());
    }

    #[test]
    fn oracle_features_give_perfect_uar() {
        let m = balanced();
        let t = table(&m, |r, _| {
            let mut v = vec![0.0; 2];
            v[r.label.index()] = 1.0;
            v
        });
        let rep = evaluate(&t, &m, &EvalConfig::default(), "oracle").unwrap();
        assert_eq!(rep.test_uar, 1.0);
        assert_eq!(rep.test_uar, uar_from_confusion(&rep.confusion));
        assert!(DECADE_GRID.contains(&rep.selected_c));
    }

    #[test]
    fn report_is_order_invariant_and_reproducible() {
        let m = balanced();
        let t = table(&m, |r, i| {
            let mut rng = crate::rng::stream(5, &[i as u64]);
            vec![r.label.sign() * 0.5 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        });
        let cfg = EvalConfig::default();
        let a = evaluate(&t, &m, &cfg, "x").unwrap();
        let mut rev = m.clone();
        rev.records.reverse();
        let mut t2 = t.clone();
        t2.ids.reverse();
        t2.rows.reverse();
        let b = evaluate(&t2, &rev, &cfg, "x").unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(EvalReport::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn missing_features_rejected() {
        let m = balanced();
        let mut t = table(&m, |_, _| vec![0.0]);
        t.ids.pop();
        t.rows.pop();
        assert!(matches!(evaluate(&t, &m, &EvalConfig::default(), "x"), Err(EvalError::MissingFeatures(_))));
    }

    #[test]
    fn comparison_sorted_by_uar_then_name() {
        let m = balanced();
        let t = table(&m, |r, _| vec![r.label.sign()]);
        let mut a = evaluate(&t, &m, &EvalConfig::default(), "b").unwrap();
        let mut b = a.clone();
        b.name = "a".into();
        let mut c = a.clone();
        c.name = "c".into();
        c.test_uar = 0.9;
        a.test_uar = 1.0;
        b.test_uar = 1.0;
        let (text, csv) = compare_reports(&[c, a, b]);
        let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(text.lines().count(), 4);
    }
}

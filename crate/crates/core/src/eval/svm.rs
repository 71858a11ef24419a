use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::uar;
use super::split::speaker_folds;
use super::EvalError;
use crate::rng;

/// The 11 decade penalties 1e-5 ... 1e5.
pub const DECADE_GRID: [f64; 11] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4, 1e5];

const SVM_STREAM: u64 = 0x5356_4d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Relative duality-gap tolerance.
    pub tol: f64,
    /// Maximum number of coordinate-descent epochs.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 10_000,
            seed: 0,
        }
    }
}

/// Linear decision function `w·x + b`; positive means `load`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub epochs: usize,
    pub duality_gap: f64,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Class index (0 = no_load, 1 = load).
    pub fn predict(&self, x: &[f64]) -> usize {
        usize::from(self.decision(x) > 0.0)
    }

    /// Weighted primal objective on `(x, y)` with the solver's class weights.
    pub fn primal_objective(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        let u = sample_penalties(y, self.c);
        primal(&self.weights, self.bias, x, y, &u)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn sign(y: usize) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Inverse-frequency per-sample box bounds `C·n / (2·n_class)`.
pub fn sample_penalties(y: &[usize], c: f64) -> Vec<f64> {
    let n = y.len() as f64;
    let n1 = y.iter().filter(|&&v| v == 1).count() as f64;
    let n0 = n - n1;
    y.iter()
        .map(|&v| c * n / (2.0 * if v == 1 { n1 } else { n0 }))
        .collect()
}

/// `½(‖w‖² + b²) + Σ uᵢ·max(0, 1 − yᵢ(w·xᵢ + b))`. The bias is treated as a
/// weight on a constant unit feature, hence regularised.
pub fn primal(w: &[f64], b: f64, x: &[Vec<f64>], y: &[usize], u: &[f64]) -> f64 {
    let reg = 0.5 * (dot(w, w) + b * b);
    let hinge: f64 = x
        .iter()
        .zip(y)
        .zip(u)
        .map(|((xi, &yi), ui)| ui * (1.0 - sign(yi) * (dot(w, xi) + b)).max(0.0))
        .sum();
    reg + hinge
}

/// L2-regularised hinge-loss linear SVM by dual coordinate descent.
///
/// `y` holds class indices (0/1); both must be present.
pub fn train_svm(x: &[Vec<f64>], y: &[usize], c: f64, cfg: &SvmConfig) -> Result<SvmModel, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(EvalError::InvalidC(c));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(EvalError::SingleClass);
    }
    let d = x[0].len();
    let n = x.len();
    let u = sample_penalties(y, c);
    let q: Vec<f64> = x.iter().map(|xi| dot(xi, xi) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(cfg.seed, &[SVM_STREAM]);
    let mut gap = f64::INFINITY;
    let mut epochs = 0;

    while epochs < cfg.max_iter {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let yi = sign(y[i]);
            let g = yi * (dot(&w, &x[i]) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == u[i] {
                g.max(0.0)
            } else {
                g
            };
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, u[i]);
                let delta = (alpha[i] - old) * yi;
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += delta * xj;
                }
                b += delta;
            }
        }
        let p = primal(&w, b, x, y, &u);
        let dual = alpha.iter().sum::<f64>() - 0.5 * (dot(&w, &w) + b * b);
        gap = p - dual;
        if gap <= cfg.tol * p.abs().max(1e-12) {
            break;
        }
    }
    if epochs == cfg.max_iter {
        log::debug!("svm C={c}: epoch cap reached with duality gap {gap:.3e}");
    }
    Ok(SvmModel {
        weights: w,
        bias: b,
        c,
        epochs,
        duality_gap: gap,
    })
}

/// Outcome of the cross-validated penalty search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub best_c: f64,
    /// Per-fold UAR at `best_c` (empty when the grid has a single value).
    pub fold_uars: Vec<f64>,
    /// `(C, mean fold UAR)` for every grid value, ascending in C.
    pub grid_scores: Vec<(f64, f64)>,
}

fn fit_predict(
    x: &[Vec<f64>],
    y: &[usize],
    train: &[usize],
    test: &[usize],
    c: f64,
    cfg: &SvmConfig,
) -> Result<Vec<usize>, EvalError> {
    let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
    let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    if !(yt.contains(&0) && yt.contains(&1)) {
        // a single-class training fold can only predict that class
        return Ok(vec![yt[0]; test.len()]);
    }
    let m = train_svm(&xt, &yt, c, cfg)?;
    Ok(test.iter().map(|&i| m.predict(&x[i])).collect())
}

/// Grid search over `grid` with speaker-grouped `folds`-fold CV; selects the
/// C with the highest mean fold UAR, ties going to the smallest C.
pub fn select_c(
    x: &[Vec<f64>],
    y: &[usize],
    groups: &[String],
    grid: &[f64],
    folds: usize,
    seed: u64,
    cfg: &SvmConfig,
) -> Result<CvResult, EvalError> {
    if x.len() != y.len() || x.len() != groups.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    if let Some(&bad) = grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(EvalError::InvalidC(bad));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    match grid.len() {
        0 => return Err(EvalError::Config("empty C grid".into())),
        1 => {
            return Ok(CvResult {
                best_c: grid[0],
                fold_uars: Vec::new(),
                grid_scores: Vec::new(),
            })
        }
        _ => {}
    }
    for class in [0, 1] {
        let n = y.iter().filter(|&&v| v == class).count();
        if n < folds {
            return Err(EvalError::InsufficientFolds {
                folds,
                reason: format!("class {class} has {n} samples"),
            });
        }
    }
    let fold_of = speaker_folds(groups, folds, seed)?;
    let parts: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let (te, tr): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| fold_of[i] == f);
            (tr, te)
        })
        .collect();

    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..folds).map(move |f| (g, f)))
        .collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(g, f)| {
            let (tr, te) = &parts[f];
            let pred = fit_predict(x, y, tr, te, grid[g], cfg)?;
            let truth: Vec<usize> = te.iter().map(|&i| y[i]).collect();
            uar(&truth, &pred)
        })
        .collect::<Result<_, _>>()?;

    let grid_scores: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, &c)| (c, scores[g * folds..(g + 1) * folds].iter().sum::<f64>() / folds as f64))
        .collect();
    let mut best = 0;
    for (g, s) in grid_scores.iter().enumerate() {
        if s.1 > grid_scores[best].1 {
            best = g;
        }
    }
    Ok(CvResult {
        best_c: grid[best],
        fold_uars: scores[best * folds..(best + 1) * folds].to_vec(),
        grid_scores,
    })
}

use super::EvalError;

/// 2x2 confusion counts, rows = true class, columns = predicted class
/// (index 0 = no_load, 1 = load).
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize]) -> Result<[[usize; 2]; 2], EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut c = [[0usize; 2]; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        c[t][p] += 1;
    }
    Ok(c)
}

/// Per-class recall; `None` for classes absent from `y_true`.
pub fn recalls(confusion: &[[usize; 2]; 2]) -> [Option<f64>; 2] {
    let mut out = [None; 2];
    for (k, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total > 0 {
            out[k] = Some(row[k] as f64 / total as f64);
        }
    }
    out
}

pub fn uar_from_confusion(confusion: &[[usize; 2]; 2]) -> f64 {
    let present: Vec<f64> = recalls(confusion).into_iter().flatten().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Unweighted mean, over the classes present in `y_true`, of per-class
/// recall. Works for any number of classes.
pub fn uar(y_true: &[usize], y_pred: &[usize]) -> Result<f64, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let k = y_true.iter().chain(y_pred).copied().max().map_or(0, |m| m + 1);
    let mut hit = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        total[t] += 1;
        if t == p {
            hit[t] += 1;
        }
    }
    let recalls: Vec<f64> = (0..k)
        .filter(|&c| total[c] > 0)
        .map(|c| hit[c] as f64 / total[c] as f64)
        .collect();
    if recalls.is_empty() {
        return Ok(0.0);
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

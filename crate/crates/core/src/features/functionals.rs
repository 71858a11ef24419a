use super::{is_voiced_only, LldMatrix, SupervisionVector, N_DESCRIPTORS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Mean,
    Std,
    P20,
    P50,
    P80,
}

pub const FUNCTIONALS: [Functional; 5] = [
    Functional::Mean,
    Functional::Std,
    Functional::P20,
    Functional::P50,
    Functional::P80,
];

impl Functional {
    pub fn name(self) -> &'static str {
        match self {
            Functional::Mean => "mean",
            Functional::Std => "std",
            Functional::P20 => "p20",
            Functional::P50 => "p50",
            Functional::P80 => "p80",
        }
    }
}

/// Percentile of an ascending-sorted slice by linear interpolation between
/// the closest ranks, with rank `h = p * (n - 1)` (the "linear" convention:
/// p=0 is the minimum, p=1 the maximum, p=0.5 the midpoint median).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn summarise(contour: &mut [f64], out: &mut Vec<f64>) {
    if contour.is_empty() {
        out.extend(std::iter::repeat_n(0.0, FUNCTIONALS.len()));
        return;
    }
    let n = contour.len() as f64;
    let mean = contour.iter().sum::<f64>() / n;
    let var = contour.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    contour.sort_by(f64::total_cmp);
    out.push(mean);
    out.push(var.sqrt());
    out.push(percentile(contour, 0.2));
    out.push(percentile(contour, 0.5));
    out.push(percentile(contour, 0.8));
}

/// Summarise each descriptor contour by mean, population std and the 20th,
/// 50th and 80th percentiles. Voiced-only descriptors use voiced frames only;
/// an utterance without voiced frames yields zeros for them.
pub fn apply_functionals(lld: &LldMatrix) -> SupervisionVector {
    let mut values = Vec::with_capacity(N_DESCRIPTORS * FUNCTIONALS.len());
    let mut contour = Vec::with_capacity(lld.frames);
    for d in 0..lld.n_descriptors {
        contour.clear();
        let voiced_only = is_voiced_only(d);
        for t in 0..lld.frames {
            if !voiced_only || lld.voiced_mask[t] {
                contour.push(lld.get(t, d));
            }
        }
        summarise(&mut contour, &mut values);
    }
    SupervisionVector {
        values,
        schema_id: lld.schema_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{SCHEMA_ID, VOICED_ONLY};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(contour: &[f64], voiced: Vec<bool>) -> LldMatrix {
        let frames = contour.len();
        let mut values = vec![0.0; frames * N_DESCRIPTORS];
        for t in 0..frames {
            for d in 0..N_DESCRIPTORS {
                values[t * N_DESCRIPTORS + d] = contour[t];
            }
        }
        LldMatrix {
            values,
            frames,
            n_descriptors: N_DESCRIPTORS,
            schema_id: SCHEMA_ID.into(),
            voiced_mask: voiced,
        }
    }

    /// Sort-based reference, written without sharing code with the
    /// implementation.
    fn oracle(xs: &[f64]) -> [f64; 5] {
        let mut s = xs.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len();
        let mut total = 0.0;
        for v in xs {
            total += v;
        }
        let mean = total / n as f64;
        let mut ss = 0.0;
        for v in xs {
            ss += (v - mean).powi(2);
        }
        let pct = |p: f64| {
            let pos = p * (n as f64 - 1.0);
            let i = pos as usize;
            if i + 1 >= n {
                s[n - 1]
            } else {
                s[i] + (pos - i as f64) * (s[i + 1] - s[i])
            }
        };
        [mean, (ss / n as f64).sqrt(), pct(0.2), pct(0.5), pct(0.8)]
    }

    #[test]
    fn constant_contour() {
        let v = apply_functionals(&matrix(&[2.5; 7], vec![true; 7]));
        for d in 0..N_DESCRIPTORS {
            assert_eq!(&v.values[d * 5..d * 5 + 5], &[2.5, 0.0, 2.5, 2.5, 2.5]);
        }
    }

    #[test]
    fn small_arithmetic_contour() {
        let v = apply_functionals(&matrix(&[1.0, 2.0, 3.0, 4.0, 5.0], vec![true; 5]));
        assert_eq!(v.values[0], 3.0);
        assert_eq!(v.values[3], 3.0);
    }

    #[test]
    fn unvoiced_utterance_zeros_voiced_only_entries() {
        let v = apply_functionals(&matrix(&[1.0, 4.0, 2.0], vec![false; 3]));
        for d in 0..N_DESCRIPTORS {
            let block = &v.values[d * 5..d * 5 + 5];
            if VOICED_ONLY.contains(&d) {
                assert_eq!(block, &[0.0; 5]);
            } else {
                assert!(block[0] > 0.0);
            }
        }
    }

    #[test]
    fn voiced_only_entries_use_voiced_frames() {
        let v = apply_functionals(&matrix(&[10.0, 1.0, 20.0], vec![true, false, true]));
        assert_eq!(v.values[0], 15.0);
        // voicing_prob (index 1) uses all three frames
        assert_eq!(v.values[5], 31.0 / 3.0);
    }

    #[test]
    fn matches_sort_oracle_on_random_contours() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..60);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
            let v = apply_functionals(&matrix(&xs, vec![true; n]));
            let want = oracle(&xs);
            let got = &v.values[..5];
            assert_eq!(got[0], want[0]);
            assert!((got[1] - want[1]).abs() <= 1e-12 * want[1].max(1.0));
            assert_eq!(got[2], want[2]);
            assert_eq!(got[3], want[3]);
            assert_eq!(got[4], want[4]);
        }
    }
}

use super::{FeatureError, SupervisionVector};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension population mean and std (clamped at [`STD_FLOOR`]).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureStandardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub schema_id: String,
}

pub fn fit_standardizer(vectors: &[SupervisionVector]) -> Result<FeatureStandardizer, FeatureError> {
    if vectors.len() < 2 {
        return Err(FeatureError::TooFewVectors(vectors.len()));
    }
    let schema_id = vectors[0].schema_id.clone();
    let dim = vectors[0].dim();
    for v in vectors {
        check(&schema_id, dim, v)?;
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(FeatureStandardizer {
        mean,
        std,
        schema_id,
    })
}

fn check(schema: &str, dim: usize, v: &SupervisionVector) -> Result<(), FeatureError> {
    if v.schema_id != schema {
        return Err(FeatureError::SchemaMismatch {
            expected: schema.to_string(),
            got: v.schema_id.clone(),
        });
    }
    if v.dim() != dim {
        return Err(FeatureError::DimensionMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    Ok(())
}

/// `(v - mean) / std` per dimension.
pub fn standardize(
    v: &SupervisionVector,
    s: &FeatureStandardizer,
) -> Result<SupervisionVector, FeatureError> {
    check(&s.schema_id, s.mean.len(), v)?;
    Ok(SupervisionVector {
        values: v
            .values
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .map(|(x, (m, sd))| (x - m) / sd)
            .collect(),
        schema_id: v.schema_id.clone(),
    })
}

/// Inverse of [`standardize`].
pub fn unstandardize(
    v: &SupervisionVector,
    s: &FeatureStandardizer,
) -> Result<SupervisionVector, FeatureError> {
    check(&s.schema_id, s.mean.len(), v)?;
    Ok(SupervisionVector {
        values: v
            .values
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .map(|(z, (m, sd))| z * sd + m)
            .collect(),
        schema_id: v.schema_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sv(values: Vec<f64>) -> SupervisionVector {
        SupervisionVector {
            values,
            schema_id: "T".into(),
        }
    }

    #[test]
    fn two_point_fit() {
        let s = fit_standardizer(&[sv(vec![0.0, 0.0]), sv(vec![2.0, 2.0])]).unwrap();
        assert_eq!(s.mean, vec![1.0, 1.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
    }

    #[test]
    fn identical_vectors_clamp() {
        let s = fit_standardizer(&[sv(vec![3.0]), sv(vec![3.0]), sv(vec![3.0])]).unwrap();
        assert_eq!(s.std, vec![STD_FLOOR]);
    }

    #[test]
    fn too_few() {
        assert!(matches!(
            fit_standardizer(&[sv(vec![1.0])]),
            Err(FeatureError::TooFewVectors(1))
        ));
    }

    #[test]
    fn transformed_fit_set_is_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vs: Vec<_> = (0..50)
            .map(|_| sv((0..8).map(|d| rng.random_range(-3.0..3.0) * d as f64 + 10.0).collect()))
            .collect();
        let s = fit_standardizer(&vs).unwrap();
        let z: Vec<_> = vs.iter().map(|v| standardize(v, &s).unwrap()).collect();
        for d in 1..8 {
            let col: Vec<f64> = z.iter().map(|v| v.values[d]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_and_mean_plus_std() {
        let s = fit_standardizer(&[sv(vec![1.0, 5.0]), sv(vec![3.0, 9.0])]).unwrap();
        let zero = standardize(&sv(s.mean.clone()), &s).unwrap();
        assert_eq!(zero.values, vec![0.0, 0.0]);
        let plus: Vec<f64> = s.mean.iter().zip(&s.std).map(|(m, d)| m + d).collect();
        assert_eq!(standardize(&sv(plus), &s).unwrap().values, vec![1.0, 1.0]);
    }

    #[test]
    fn round_trip_and_schema_check() {
        let s = fit_standardizer(&[sv(vec![1.0, -5.0]), sv(vec![3.2, 9.0])]).unwrap();
        let v = sv(vec![0.123, 42.0]);
        let back = unstandardize(&standardize(&v, &s).unwrap(), &s).unwrap();
        for (a, b) in back.values.iter().zip(&v.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let other = SupervisionVector {
            values: vec![0.0, 0.0],
            schema_id: "X".into(),
        };
        assert!(matches!(
            standardize(&other, &s),
            Err(FeatureError::SchemaMismatch { .. })
        ));
    }
}

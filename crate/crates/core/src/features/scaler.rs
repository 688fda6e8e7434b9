use serde::{Deserialize, Serialize};

use super::{check_dims, FeatureVector};
use crate::error::{Error, Result};

/// Per-dimension affine map `a·x + b` sending the training minimum to −1 and
/// maximum to +1. Constant dimensions map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    coefficients: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn fit(rows: &[FeatureVector]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::validation("cannot fit a scaler on no rows"))?;
        let dim = first.len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            check_dims(dim, row.len(), "scaler row")?;
            for (d, &v) in row.0.iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let coefficients = lo
            .iter()
            .zip(&hi)
            .map(|(&lo, &hi)| {
                if hi > lo {
                    let a = 2.0 / (hi - lo);
                    (a, -1.0 - a * lo)
                } else {
                    (0.0, 0.0)
                }
            })
            .collect();
        Ok(Scaler { coefficients })
    }

    pub fn identity(dim: usize) -> Self {
        Scaler {
            coefficients: vec![(1.0, 0.0); dim],
        }
    }

    pub fn from_coefficients(coefficients: Vec<(f64, f64)>) -> Self {
        Scaler { coefficients }
    }

    pub fn coefficients(&self) -> &[(f64, f64)] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        check_dims(self.len(), v.len(), "scaler input")?;
        Ok(FeatureVector(
            v.0.iter()
                .zip(&self.coefficients)
                .map(|(&x, &(a, b))| a * x + b)
                .collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = Scaler::fit(&[fv(&[0.0, 7.0]), fv(&[10.0, 7.0]), fv(&[4.0, 7.0])]).unwrap();
        assert_eq!(s.apply(&fv(&[5.0, 7.0])).unwrap().0, vec![0.0, 0.0]);
        assert_eq!(s.apply(&fv(&[0.0, 7.0])).unwrap().0[0], -1.0);
        assert_eq!(s.apply(&fv(&[10.0, 7.0])).unwrap().0[0], 1.0);
        // no clamping on unseen values
        assert_eq!(s.apply(&fv(&[20.0, 7.0])).unwrap().0[0], 3.0);
    }

    #[test]
    fn schema_mismatch() {
        assert!(Scaler::fit(&[fv(&[1.0]), fv(&[1.0, 2.0])]).is_err());
        assert!(Scaler::fit(&[]).is_err());
        let s = Scaler::fit(&[fv(&[1.0, 2.0])]).unwrap();
        assert!(s.apply(&fv(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn training_rows_land_in_unit_box(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)
        ) {
            let rows: Vec<FeatureVector> = rows.into_iter().map(FeatureVector).collect();
            let s = Scaler::fit(&rows).unwrap();
            let scaled: Vec<FeatureVector> = rows.iter().map(|r| s.apply(r).unwrap()).collect();
            for d in 0..3 {
                let col: Vec<f64> = scaled.iter().map(|r| r.0[d]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if s.coefficients()[d].0 == 0.0 {
                    prop_assert!(col.iter().all(|&x| x == 0.0));
                } else {
                    prop_assert!(lo >= -1.0 - 1e-12 && hi <= 1.0 + 1e-12);
                    prop_assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::NetError;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-score transform. Uses the population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    #[serde(default)]
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits one feature per column.
    pub fn fit_columns(columns: &[&[f64]]) -> Result<Self, NetError> {
        if columns.is_empty() {
            return Err(NetError::Empty("normalizer features"));
        }
        let mut mean = Vec::with_capacity(columns.len());
        let mut std = Vec::with_capacity(columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() < 2 {
                return Err(NetError::Shape(format!("feature {j} has {} samples, need at least 2", col.len())));
            }
            let n = col.len() as f64;
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let mut s = var.sqrt();
            if !(s >= STD_FLOOR) {
                log::warn!("feature {j} is constant; std floored at {STD_FLOOR}");
                s = STD_FLOOR;
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Normalizer {
            names: Vec::new(),
            mean,
            std,
        })
    }

    /// Fits one feature per row position.
    pub fn fit_rows(rows: &[&[f64]]) -> Result<Self, NetError> {
        let width = rows.first().map_or(0, |r| r.len());
        if width == 0 {
            return Err(NetError::Empty("normalizer rows"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(NetError::Shape("ragged rows".into()));
        }
        let cols: Vec<Vec<f64>> = (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        Self::fit_columns(&refs)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = names;
        self
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    #[inline]
    pub fn apply(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.std[j]
    }

    #[inline]
    pub fn invert(&self, j: usize, v: f64) -> f64 {
        v * self.std[j] + self.mean[j]
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = self.apply(j, *v);
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = self.invert(j, *v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn population_convention() {
        let n = Normalizer::fit_columns(&[&[1.0, 3.0]]).unwrap();
        assert_eq!(n.mean[0], 2.0);
        assert_eq!(n.std[0], 1.0);
        assert_eq!(n.apply(0, 3.0), 1.0);
    }

    #[test]
    fn constant_feature_is_floored() {
        let n = Normalizer::fit_columns(&[&[5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(n.std[0], STD_FLOOR);
        assert_eq!(n.apply(0, 5.0), 0.0);
    }

    #[test]
    fn rejects_short_or_empty() {
        assert!(Normalizer::fit_columns(&[]).is_err());
        assert!(Normalizer::fit_columns(&[&[1.0]]).is_err());
        assert!(Normalizer::fit_rows(&[&[1.0, 2.0], &[1.0]]).is_err());
    }

    #[test]
    fn test_set_is_not_recentred() {
        let train: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let test: Vec<f64> = (50..100).map(|i| i as f64).collect();
        let n = Normalizer::fit_columns(&[&train]).unwrap();
        let m = test.iter().map(|v| n.apply(0, *v)).sum::<f64>() / test.len() as f64;
        assert!(m > 1.0);
    }

    proptest! {
        #[test]
        fn roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)) {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let n = Normalizer::fit_rows(&refs).unwrap();
            for r in &rows {
                let mut v = r.clone();
                n.apply_row(&mut v);
                n.invert_row(&mut v);
                for (a, b) in v.iter().zip(r) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }
}

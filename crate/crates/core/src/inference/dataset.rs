use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Count responses with a row-major covariate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<u64>,
    x: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(y: Vec<u64>, x: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("dataset has no observations".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Data(format!(
                "{} responses but {} covariate rows",
                y.len(),
                x.len()
            )));
        }
        for (j, row) in x.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::Data(format!(
                    "row {j} has {} covariates, expected {}",
                    row.len(),
                    names.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {j} has non-finite covariate {v}")));
            }
        }
        Ok(Self { y, x, names })
    }

    /// Responses without covariates.
    pub fn intercept_only(y: Vec<u64>) -> Result<Self> {
        let rows = vec![Vec::new(); y.len()];
        Self::new(y, rows, Vec::new())
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, columns: &[String]) -> Result<Self> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| {
                self.names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::Data(format!("unknown covariate `{c}`")))
            })
            .collect::<Result<_>>()?;
        let x = self
            .x
            .iter()
            .map(|row| idx.iter().map(|&k| row[k]).collect())
            .collect();
        Self::new(self.y.clone(), x, columns.to_vec())
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation of the response.
    pub fn sd_y(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let m = self.mean_y();
        let ss: f64 = self.y.iter().map(|&v| (v as f64 - m).powi(2)).sum();
        (ss / (self.len() - 1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Dataset::new(vec![], vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1, 2], vec![vec![0.0]], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![1], vec![vec![0.0, 1.0]], vec!["a".into()]).is_err());
        assert!(Dataset::new(vec![1], vec![vec![f64::NAN]], vec!["a".into()]).is_err());
        let d = Dataset::intercept_only(vec![3]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.n_covariates(), 0);
        assert_eq!(d.sd_y(), 0.0);
    }

    #[test]
    fn select_reorders_columns() {
        let d = Dataset::new(
            vec![0, 1, 4],
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let s = d.select(&["b".into()]).unwrap();
        assert_eq!(s.x()[2], vec![6.0]);
        assert!(d.select(&["c".into()]).is_err());
        assert!((d.mean_y() - 5.0 / 3.0).abs() < 1e-15);
        assert!((d.sd_y() - (13.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}

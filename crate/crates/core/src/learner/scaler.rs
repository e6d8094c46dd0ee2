use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-column z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl ScalerStats {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Config("cannot fit a scaler on zero rows".into()));
        };
        let w = first.len();
        let n = rows.len() as f64;
        let mut mean = alloc::vec![0.0; w];
        for r in rows {
            if r.len() != w {
                return Err(Error::Dimension {
                    what: "scaler row",
                    expected: w,
                    got: r.len(),
                });
            }
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; w];
        for r in rows {
            for j in 0..w {
                let d = r[j] - mean[j];
                var[j] += d * d;
            }
        }
        let mut std = Vec::with_capacity(w);
        let mut constant = Vec::with_capacity(w);
        for j in 0..w {
            let s = (var[j] / n).sqrt();
            let flat = !(s > 1e-9 * mean[j].abs().max(1.0));
            constant.push(flat);
            std.push(if flat { 1.0 } else { s });
        }
        Ok(Self { mean, std, constant })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        self.constant
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(j, _)| j)
            .collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.width() {
            return Err(Error::Dimension {
                what: "scaled vector",
                expected: self.width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        Ok(z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }
}

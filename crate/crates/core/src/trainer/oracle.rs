//! Nearest-centroid baseline on the raw (standardized) modality features.
//!
//! Centroids are fitted per time bin on the training set. The hard score
//! ranks samples by their nearest centroid; the contrast score
//! `||x - μ_last||² - ||x - μ_first||²` measures how much closer a sample is
//! to the earliest-event centroid than to the latest one, which orders
//! samples within a bin as well.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::c_index;
use crate::scalar::{cast, from_usize, Scalar};

use super::cohort;

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidOracle<T> {
    mean: Vec<T>,
    scale: Vec<T>,
    centroids: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    /// Fraction of samples whose nearest centroid is their own bin.
    pub accuracy: f64,
    pub hard_c_index: f64,
    pub contrast_c_index: f64,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

impl<T: Scalar> CentroidOracle<T> {
    pub fn fit(train: &Dataset<T>, k_time: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let dim = train.input_dim();
        let n: T = from_usize(train.len());
        let rows: Vec<Vec<T>> = train.records.iter().map(|r| r.concatenated()).collect();
        let mut mean = vec![T::zero(); dim];
        for r in &rows {
            for (m, &x) in mean.iter_mut().zip(r) {
                *m = *m + x;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut scale = vec![T::zero(); dim];
        for r in &rows {
            for ((s, &x), &m) in scale.iter_mut().zip(r).zip(&mean) {
                *s = *s + (x - m) * (x - m) / n;
            }
        }
        for (s, &m) in scale.iter_mut().zip(&mean) {
            let floor = T::epsilon() * (T::one() + m * m);
            *s = if *s > floor { s.sqrt() } else { T::one() };
        }
        let mut oracle = CentroidOracle {
            mean,
            scale,
            centroids: vec![vec![T::zero(); dim]; k_time],
        };
        let mut counts = vec![0usize; k_time];
        for (rec, r) in train.records.iter().zip(&rows) {
            let b = rec
                .time_bin
                .filter(|&b| b < k_time)
                .ok_or_else(|| Error::Binning(format!("`{}` has no valid bin", rec.sample_id)))?;
            let z = oracle.standardize(r);
            for (c, x) in oracle.centroids[b].iter_mut().zip(z) {
                *c = *c + x;
            }
            counts[b] += 1;
        }
        for (c, &k) in oracle.centroids.iter_mut().zip(&counts) {
            if k == 0 {
                return Err(Error::Empty("time bin in oracle training set"));
            }
            c.iter_mut().for_each(|x| *x = *x / from_usize(k));
        }
        Ok(oracle)
    }

    fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    pub fn nearest(&self, x: &[T]) -> usize {
        let z = self.standardize(x);
        let mut best = 0;
        for (k, c) in self.centroids.iter().enumerate() {
            if sq_dist(&z, c) < sq_dist(&z, &self.centroids[best]) {
                best = k;
            }
        }
        best
    }

    pub fn contrast_risk(&self, x: &[T]) -> T {
        let z = self.standardize(x);
        sq_dist(&z, self.centroids.last().expect("at least one bin")) - sq_dist(&z, &self.centroids[0])
    }

    pub fn evaluate(&self, ds: &Dataset<T>) -> Result<OracleReport> {
        let k = self.centroids.len();
        let rows: Vec<Vec<T>> = ds.records.iter().map(|r| r.concatenated()).collect();
        let nearest: Vec<usize> = rows.iter().map(|r| self.nearest(r)).collect();
        let hits = nearest
            .iter()
            .zip(&ds.records)
            .filter(|(&b, r)| r.time_bin == Some(b))
            .count();
        let hard: Vec<T> = nearest.iter().map(|&b| cast((k - 1 - b) as f64)).collect();
        let contrast: Vec<T> = rows.iter().map(|r| self.contrast_risk(r)).collect();
        Ok(OracleReport {
            accuracy: hits as f64 / ds.len().max(1) as f64,
            hard_c_index: c_index(&cohort(ds, &hard))?,
            contrast_c_index: c_index(&cohort(ds, &contrast))?,
        })
    }
}

//! Quantile binning of survival times.
//!
//! Interior edges sit at the `k/K` quantiles (linear interpolation between
//! order statistics) of the uncensored event times. The outer edges are
//! widened to `0` and `+∞`, so bins are `[e_k, e_{k+1})` and every
//! nonnegative time lands somewhere.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{cmp, fmt17, parse_real, Scalar};
use crate::types::FeatureRecord;

const MAGIC: &str = "featproto-bins 1";

#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges<T> {
    /// `K + 1` ascending edges, `edges[0] = 0`, `edges[K] = +∞`.
    pub edges: Vec<T>,
}

impl<T: Scalar> BinEdges<T> {
    pub fn k(&self) -> usize {
        self.edges.len() - 1
    }

    /// Index of the half-open bin containing `t`.
    pub fn bin_of(&self, t: T) -> usize {
        let interior = &self.edges[1..self.k()];
        interior.partition_point(|&e| e <= t)
    }

    pub fn to_text(&self) -> String {
        let edges: Vec<String> = self.edges.iter().map(|&e| fmt17(e)).collect();
        format!("{MAGIC}\nk {}\nedges {}\n", self.k(), edges.join(" "))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::parse(1, format!("expected header `{MAGIC}`")));
        }
        let k: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("k "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(2, "expected `k <count>`"))?;
        let edges: Vec<T> = lines
            .next()
            .and_then(|l| l.strip_prefix("edges "))
            .ok_or_else(|| Error::parse(3, "expected `edges <reals>`"))?
            .split(' ')
            .map(|t| parse_real(t).ok_or_else(|| Error::parse(3, format!("bad real `{t}`"))))
            .collect::<Result<_>>()?;
        if edges.len() != k + 1 {
            return Err(Error::parse(3, format!("expected {} edges, found {}", k + 1, edges.len())));
        }
        let ok = k >= 1
            && edges[0] == T::zero()
            && edges[k] == T::infinity()
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::parse(3, "edges must rise strictly from 0 to inf"));
        }
        Ok(BinEdges { edges })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac: T = crate::scalar::cast(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Bin edges from the uncensored times of `records` plus each record's bin.
pub fn bin_times<T: Scalar>(records: &[FeatureRecord<T>], k_time: usize) -> Result<(BinEdges<T>, Vec<usize>)> {
    if k_time == 0 {
        return Err(Error::Binning("K_time must be positive".into()));
    }
    if let Some(r) = records.iter().find(|r| !(r.event_time >= T::zero())) {
        return Err(Error::InvalidInput(format!("negative time for {}", r.sample_id)));
    }
    let mut times: Vec<T> = records.iter().filter(|r| !r.censored).map(|r| r.event_time).collect();
    times.sort_by(|&a, &b| cmp(a, b));
    let mut distinct = times.clone();
    distinct.dedup();
    if distinct.len() < k_time {
        return Err(Error::Binning(format!(
            "{} distinct uncensored times, need at least {k_time}",
            distinct.len()
        )));
    }
    let mut edges = vec![T::zero()];
    for k in 1..k_time {
        edges.push(quantile(&times, k as f64 / k_time as f64));
    }
    edges.push(T::infinity());
    if !edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Binning("tied quantiles give empty bins".into()));
    }
    let edges = BinEdges { edges };
    let bins = records.iter().map(|r| edges.bin_of(r.event_time)).collect();
    Ok((edges, bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: f64, censored: bool) -> FeatureRecord<f64> {
        FeatureRecord {
            sample_id: format!("t{t}"),
            modality_blocks: vec![],
            fused: None,
            event_time: t,
            censored,
            time_bin: None,
        }
    }

    #[test]
    fn uniform_hundred_quartiles() {
        let records: Vec<_> = (1..=100).map(|t| rec(t as f64, false)).collect();
        let (edges, bins) = bin_times(&records, 4).unwrap();
        // linear interpolation at (n-1)p: 25.75, 50.5, 75.25
        assert_eq!(edges.edges[1..4], [25.75, 50.5, 75.25]);
        for b in 0..4 {
            assert_eq!(bins.iter().filter(|&&x| x == b).count(), 25);
        }
    }

    #[test]
    fn censored_beyond_last_event_lands_in_last_bin() {
        let mut records: Vec<_> = (1..=10).map(|t| rec(t as f64, false)).collect();
        records.push(rec(1000.0, true));
        let (_, bins) = bin_times(&records, 3).unwrap();
        assert_eq!(*bins.last().unwrap(), 2);
    }

    #[test]
    fn single_bin() {
        let records: Vec<_> = [3.0, 0.0, 9.5].iter().map(|&t| rec(t, false)).collect();
        let (edges, bins) = bin_times(&records, 1).unwrap();
        assert_eq!(edges.edges, vec![0.0, f64::INFINITY]);
        assert_eq!(bins, vec![0, 0, 0]);
    }

    #[test]
    fn too_few_uncensored() {
        let records = vec![rec(1.0, false), rec(2.0, true), rec(3.0, true), rec(1.0, false)];
        assert!(matches!(bin_times(&records, 2), Err(Error::Binning(_))));
    }

    #[test]
    fn sidecar_round_trip() {
        let records: Vec<_> = (1..=37).map(|t| rec(t as f64 * 1.37, false)).collect();
        let (edges, _) = bin_times(&records, 4).unwrap();
        let back = BinEdges::<f64>::from_text(&edges.to_text()).unwrap();
        assert_eq!(back, edges);
        assert!(BinEdges::<f64>::from_text("featproto-bins 1\nk 2\nedges 0 5 3\n").is_err());
    }

    proptest! {
        #[test]
        fn binning_is_monotone(times in prop::collection::vec(0.0f64..100.0, 8..60), a in 0.0f64..120.0, b in 0.0f64..120.0) {
            let records: Vec<_> = times.iter().map(|&t| rec(t, false)).collect();
            if let Ok((edges, _)) = bin_times(&records, 4) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(edges.bin_of(lo) <= edges.bin_of(hi));
            }
        }

        #[test]
        fn distinct_uncensored_counts_balanced(n in 8usize..200, k in 1usize..6, seed in 0u64..1000) {
            // distinct times in a scrambled order
            let records: Vec<_> = (0..n).map(|i| rec(((i as u64 * 7919 + seed) % 10007) as f64 + 0.5, false)).collect();
            let (_, bins) = bin_times(&records, k).unwrap();
            let counts: Vec<usize> = (0..k).map(|b| bins.iter().filter(|&&x| x == b).count()).collect();
            let lo = *counts.iter().min().unwrap();
            let hi = *counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "{:?}", counts);
        }
    }
}

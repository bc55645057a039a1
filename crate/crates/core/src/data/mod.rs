//! Datasets, survival-time binning and the synthetic generator.

mod binning;
mod io;
mod synth;

pub use binning::{bin_times, BinEdges};
pub use io::{load_dataset, read_dataset, write_dataset};
pub use synth::{generate_synthetic, SynthOutput, SynthSpec};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::FeatureRecord;

/// A named modality block and its width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modality {
    pub name: String,
    pub dim: usize,
}

impl Modality {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Modality { name: name.into(), dim }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub modalities: Vec<Modality>,
    pub records: Vec<FeatureRecord<T>>,
    /// Present once the records have been binned.
    pub bin_edges: Option<BinEdges<T>>,
}

/// Sample ids are non-empty and free of whitespace and format separators.
pub fn valid_sample_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c.is_whitespace() || matches!(c, ';' | '=' | ',' | '#' | '|'))
}

impl<T: Scalar> Dataset<T> {
    pub fn new(modalities: Vec<Modality>, records: Vec<FeatureRecord<T>>) -> Result<Self> {
        let ds = Dataset {
            modalities,
            records,
            bin_edges: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Width of the concatenated modality blocks.
    pub fn input_dim(&self) -> usize {
        self.modalities.iter().map(|m| m.dim).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Empty("modality list"));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !valid_sample_id(&r.sample_id) {
                return Err(Error::InvalidInput(format!("bad sample id `{}`", r.sample_id)));
            }
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample id `{}`", r.sample_id)));
            }
            if r.modality_blocks.len() != self.modalities.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.modalities.len(),
                    found: r.modality_blocks.len(),
                });
            }
            for (b, m) in r.modality_blocks.iter().zip(&self.modalities) {
                if b.len() != m.dim {
                    return Err(Error::DimensionMismatch {
                        expected: m.dim,
                        found: b.len(),
                    });
                }
                if b.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("modality block"));
                }
            }
            if !(r.event_time >= T::zero()) || !r.event_time.is_finite() {
                return Err(Error::InvalidInput(format!("bad event time for `{}`", r.sample_id)));
            }
            match (&self.bin_edges, r.time_bin) {
                (Some(edges), Some(bin)) if edges.bin_of(r.event_time) != bin => {
                    return Err(Error::Binning(format!(
                        "`{}` is in bin {bin} but its time falls in bin {}",
                        r.sample_id,
                        edges.bin_of(r.event_time)
                    )));
                }
                (Some(_), None) => {
                    return Err(Error::Binning(format!("`{}` has no time bin", r.sample_id)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Computes bin edges from this dataset and assigns every record.
    pub fn assign_bins(&mut self, k_time: usize) -> Result<()> {
        let (edges, bins) = bin_times(&self.records, k_time)?;
        for (r, b) in self.records.iter_mut().zip(bins) {
            r.time_bin = Some(b);
        }
        self.bin_edges = Some(edges);
        Ok(())
    }

    /// Assigns every record using edges computed elsewhere.
    pub fn apply_bins(&mut self, edges: &BinEdges<T>) {
        for r in &mut self.records {
            r.time_bin = Some(edges.bin_of(r.event_time));
        }
        self.bin_edges = Some(edges.clone());
    }

    /// A new dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Dataset {
            modalities: self.modalities.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            bin_edges: self.bin_edges.clone(),
        }
    }
}

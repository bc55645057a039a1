//! Domain value types shared across modules.

use std::fmt;

use crate::scalar::{cast, cmp, Scalar};

/// One sample: modality blocks, optional fused embedding and survival label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord<T> {
    pub sample_id: String,
    pub modality_blocks: Vec<Vec<T>>,
    pub fused: Option<Vec<T>>,
    /// Event or censoring time in months.
    pub event_time: T,
    /// `true` when the event was not observed.
    pub censored: bool,
    pub time_bin: Option<usize>,
}

impl<T: Scalar> FeatureRecord<T> {
    /// Modality blocks concatenated in order.
    pub fn concatenated(&self) -> Vec<T> {
        self.modality_blocks.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrototypeKind {
    Typical,
    Wandering,
}

impl PrototypeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PrototypeKind::Typical => "typical",
            PrototypeKind::Wandering => "wandering",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "typical" => Some(PrototypeKind::Typical),
            "wandering" => Some(PrototypeKind::Wandering),
            _ => None,
        }
    }
}

impl fmt::Display for PrototypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable prototype identifier: `c{class}-{kind}-{slot}-v{version}`.
pub fn prototype_id(class: usize, kind: PrototypeKind, slot: usize, version: u64) -> String {
    format!("c{class}-{kind}-{slot}-v{version}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source<T> {
    pub sample_id: String,
    pub weight: T,
}

/// Contribution-weighted source samples of a prototype.
///
/// Keeps the `F` heaviest sources in descending weight order; `residual`
/// carries the mass of every truncated source so the full history sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceList<T> {
    pub entries: Vec<Source<T>>,
    pub residual: T,
}

impl<T: Scalar> SourceList<T> {
    pub fn single(sample_id: impl Into<String>) -> Self {
        SourceList {
            entries: vec![Source {
                sample_id: sample_id.into(),
                weight: T::one(),
            }],
            residual: T::zero(),
        }
    }

    /// Full-history weight: stored entries plus residual.
    pub fn total(&self) -> T {
        self.entries.iter().map(|s| s.weight).sum::<T>() + self.residual
    }

    pub fn weight_of(&self, sample_id: &str) -> Option<T> {
        self.entries
            .iter()
            .find(|s| s.sample_id == sample_id)
            .map(|s| s.weight)
    }

    /// Applies one EMA merge: every existing weight (residual included) is
    /// scaled by `lambda` and `sample_id` gains `1 - lambda`.
    pub fn merge(&mut self, sample_id: &str, lambda: f64, top_f: usize) {
        let lam: T = cast(lambda);
        for s in &mut self.entries {
            s.weight = s.weight * lam;
        }
        self.residual = self.residual * lam;
        let fresh = T::one() - lam;
        match self.entries.iter_mut().find(|s| s.sample_id == sample_id) {
            Some(s) => s.weight = s.weight + fresh,
            None => self.entries.push(Source {
                sample_id: sample_id.to_string(),
                weight: fresh,
            }),
        }
        self.truncate(top_f);
    }

    /// Sorts by weight (descending, ties by sample id) and folds everything
    /// past the first `top_f` entries into the residual.
    pub fn truncate(&mut self, top_f: usize) {
        self.entries
            .sort_by(|a, b| cmp(b.weight, a.weight).then_with(|| a.sample_id.cmp(&b.sample_id)));
        if self.entries.len() > top_f {
            let tail: T = self.entries[top_f..].iter().map(|s| s.weight).sum();
            self.residual = self.residual + tail;
            self.entries.truncate(top_f);
        }
    }
}

/// A single prototype vector with type tag, class and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeEntry<T> {
    pub id: String,
    pub class_index: usize,
    pub kind: PrototypeKind,
    pub slot: usize,
    pub vector: Vec<T>,
    pub sources: SourceList<T>,
}

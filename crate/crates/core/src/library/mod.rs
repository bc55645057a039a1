//! The prototype library: typical prototypes `P`, wandering prototypes `W`,
//! the identity map `I` and the provenance store `A`.
//!
//! A library value is an immutable snapshot. Every update consumes a
//! reference to one snapshot and returns a new one with a higher version, so
//! readers holding an older snapshot never observe a partial update.

#[cfg(test)]
pub(crate) mod fixtures;
mod format;
mod init;
mod update;

use std::collections::BTreeMap;

pub use init::{class_center, init_library, ClassFeatureSet, Feature, InitReport};
pub use update::{
    basic_update, ema_merge, ema_update, update_library, ClassUpdate, PrototypeMove, UpdateReport,
};

use crate::config::NormalizationPolicy;
use crate::error::{Error, Result, Violation};
use crate::scalar::{cast, Scalar};
use crate::types::{PrototypeEntry, PrototypeKind, SourceList};

/// Entry of the identity map `I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity {
    pub kind: PrototypeKind,
    pub class_index: usize,
    pub slot: usize,
}

/// Entry of the provenance store `A`. The contribution-weighted source list
/// lives on the prototype entry itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub created_epoch: u64,
    /// Number of EMA merges applied since creation.
    pub merges: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeLibrary<T> {
    pub(crate) version: u64,
    pub(crate) dim: usize,
    pub(crate) normalization: NormalizationPolicy,
    pub(crate) config_hash: String,
    pub(crate) typical: Vec<Vec<PrototypeEntry<T>>>,
    pub(crate) wandering: Vec<Vec<PrototypeEntry<T>>>,
    pub(crate) identity: BTreeMap<String, Identity>,
    pub(crate) provenance: BTreeMap<String, Provenance>,
    pub(crate) centers: Vec<Vec<T>>,
}

impl<T: Scalar> PrototypeLibrary<T> {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.typical.len()
    }

    pub fn k_proto(&self) -> usize {
        self.typical.first().map_or(0, Vec::len)
    }

    pub fn m_wander(&self) -> usize {
        self.wandering.first().map_or(0, Vec::len)
    }

    pub fn normalization(&self) -> NormalizationPolicy {
        self.normalization
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn typical(&self, class: usize) -> &[PrototypeEntry<T>] {
        &self.typical[class]
    }

    pub fn wandering(&self, class: usize) -> &[PrototypeEntry<T>] {
        &self.wandering[class]
    }

    /// Class center `μ_c` maintained by the library.
    pub fn center(&self, class: usize) -> &[T] {
        &self.centers[class]
    }

    /// Effective prototype set of a class: typical entries first, then
    /// wandering entries, each in slot order.
    pub fn effective(&self, class: usize) -> impl Iterator<Item = &PrototypeEntry<T>> {
        self.typical[class].iter().chain(self.wandering[class].iter())
    }

    /// All prototypes ordered by class, kind and slot.
    pub fn entries(&self) -> impl Iterator<Item = &PrototypeEntry<T>> {
        (0..self.classes()).flat_map(move |c| self.effective(c))
    }

    pub fn get(&self, id: &str) -> Option<&PrototypeEntry<T>> {
        let ident = self.identity.get(id)?;
        let list = match ident.kind {
            PrototypeKind::Typical => &self.typical,
            PrototypeKind::Wandering => &self.wandering,
        };
        list.get(ident.class_index)?.get(ident.slot)
    }

    pub fn identity(&self) -> &BTreeMap<String, Identity> {
        &self.identity
    }

    pub fn provenance(&self) -> &BTreeMap<String, Provenance> {
        &self.provenance
    }

    pub fn sources(&self, id: &str) -> Option<&SourceList<T>> {
        self.get(id).map(|e| &e.sources)
    }

    /// Snapshot with every wandering prototype removed; centers unchanged.
    pub fn without_wandering(&self) -> Self {
        let mut lib = self.clone();
        for list in &mut lib.wandering {
            for e in list.drain(..) {
                lib.identity.remove(&e.id);
                lib.provenance.remove(&e.id);
            }
        }
        lib
    }

    /// Checks every structural invariant in one pass over the entries.
    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidLibrary(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let classes = self.classes();
        let k = self.k_proto();
        let m = self.m_wander();
        if classes == 0 {
            v.push(Violation::new("classes", 0, "library has no classes"));
        }
        if self.wandering.len() != classes || self.centers.len() != classes {
            v.push(Violation::new(
                "classes",
                classes,
                "typical, wandering and center lists disagree on class count",
            ));
            return v;
        }
        let tol = weight_tolerance::<T>();
        let mut seen = 0usize;
        for c in 0..classes {
            if self.typical[c].len() != k {
                v.push(Violation::new(format!("P[{c}]"), self.typical[c].len(), format!("expected {k} typical prototypes")));
            }
            if self.wandering[c].len() != m {
                v.push(Violation::new(format!("W[{c}]"), self.wandering[c].len(), format!("expected {m} wandering prototypes")));
            }
            if self.centers[c].len() != self.dim || !self.centers[c].iter().all(|x| x.is_finite()) {
                v.push(Violation::new(format!("center[{c}]"), self.centers[c].len(), "center must be a finite vector of dimension D"));
            }
            for (kind, list) in [
                (PrototypeKind::Typical, &self.typical[c]),
                (PrototypeKind::Wandering, &self.wandering[c]),
            ] {
                for (slot, e) in list.iter().enumerate() {
                    seen += 1;
                    let want = Identity { kind, class_index: c, slot };
                    if e.kind != kind || e.class_index != c || e.slot != slot {
                        v.push(Violation::new(&e.id, format!("{}/{}/{}", e.class_index, e.kind, e.slot), "entry position disagrees with its tags"));
                    }
                    if e.vector.len() != self.dim {
                        v.push(Violation::new(&e.id, e.vector.len(), format!("vector must have dimension {}", self.dim)));
                    } else if !e.vector.iter().all(|x| x.is_finite()) {
                        v.push(Violation::new(&e.id, "non-finite", "vector must be finite"));
                    }
                    match self.identity.get(&e.id) {
                        Some(ident) if *ident == want => {}
                        Some(_) => v.push(Violation::new(&e.id, "I", "identity map disagrees with entry")),
                        None => v.push(Violation::new(&e.id, "I", "missing from identity map")),
                    }
                    if !self.provenance.contains_key(&e.id) {
                        v.push(Violation::new(&e.id, "A", "missing from provenance store"));
                    }
                    let total = e.sources.total();
                    if (total - T::one()).abs() > tol {
                        v.push(Violation::new(&e.id, total, "source weights must sum to 1"));
                    }
                    let bad_weight = e.sources.entries.iter().any(|s| !(s.weight >= T::zero() && s.weight <= T::one() + tol))
                        || e.sources.residual < -tol;
                    let sorted = e.sources.entries.windows(2).all(|w| w[0].weight >= w[1].weight);
                    if bad_weight || !sorted {
                        v.push(Violation::new(&e.id, "sources", "weights must lie in [0,1] in descending order"));
                    }
                }
            }
            if !self.is_collapsed(c) {
                for w in &self.wandering[c] {
                    if self.typical[c].iter().any(|p| p.vector == w.vector) {
                        v.push(Violation::new(&w.id, c, "wandering prototype duplicates a typical prototype"));
                    }
                }
            }
        }
        if self.identity.len() != seen {
            v.push(Violation::new("I", self.identity.len(), format!("expected {seen} ids (duplicates or stale ids)")));
        }
        if self.provenance.len() != seen {
            v.push(Violation::new("A", self.provenance.len(), format!("expected {seen} provenance records")));
        }
        v
    }

    /// A class whose every prototype sits on one point; no wandering
    /// prototype can be distinct from the typical set there.
    fn is_collapsed(&self, class: usize) -> bool {
        let mut all = self.effective(class);
        match all.next() {
            Some(first) => all.all(|e| e.vector == first.vector),
            None => true,
        }
    }

    /// Rebuilds `I` from the entry lists.
    pub(crate) fn reindex(&mut self) {
        self.identity.clear();
        for (kind, lists) in [
            (PrototypeKind::Typical, &self.typical),
            (PrototypeKind::Wandering, &self.wandering),
        ] {
            for (c, list) in lists.iter().enumerate() {
                for (slot, e) in list.iter().enumerate() {
                    self.identity.insert(e.id.clone(), Identity { kind, class_index: c, slot });
                }
            }
        }
    }

    pub(crate) fn recompute_center(&mut self, class: usize) {
        let vectors: Vec<&[T]> = self.typical[class].iter().map(|e| e.vector.as_slice()).collect();
        if let Some(center) = mean_of(&vectors) {
            self.centers[class] = center;
        }
    }
}

pub(crate) fn weight_tolerance<T: Scalar>() -> T {
    let eps: T = T::epsilon() * cast(1e4);
    eps.max(cast(1e-9))
}

pub(crate) fn mean_of<T: Scalar>(vectors: &[&[T]]) -> Option<Vec<T>> {
    let first = vectors.first()?;
    let mut acc = vec![T::zero(); first.len()];
    for v in vectors {
        for (a, &x) in acc.iter_mut().zip(v.iter()) {
            *a = *a + x;
        }
    }
    let n: T = crate::scalar::from_usize(vectors.len());
    Some(acc.into_iter().map(|a| a / n).collect())
}

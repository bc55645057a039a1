//! Multilevel prototype matching.
//!
//! For every class the query is compared against the effective prototype set
//! (typical then wandering). The class logit fuses the mean row similarity,
//! the nearest-prototype similarity and the center similarity:
//! `logit = α·S̄ + β·S_max + γ·S_center`. Logits are interpreted as per-bin
//! hazard logits by [`risk_score`].

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::library::PrototypeLibrary;
use crate::scalar::{all_finite, cast, from_usize, widen, Scalar};
use crate::similarity::{pmdsim_unchecked, pmdsim_with_grad};
use crate::types::{PrototypeKind, Source};

/// Per-class breakdown of one match.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMatch<T> {
    pub class: usize,
    /// Similarity to each effective prototype, typical entries first.
    pub row: Vec<T>,
    pub mean: T,
    pub max: T,
    pub center: T,
    pub logit: T,
    pub nearest_index: usize,
    pub nearest_id: String,
    pub nearest_kind: PrototypeKind,
    /// Heaviest sources of the nearest prototype, at most `F`.
    pub sources: Vec<Source<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationTrace<T> {
    pub classes: Vec<ClassMatch<T>>,
}

impl<T: Scalar> ExplanationTrace<T> {
    pub fn logits(&self) -> Vec<T> {
        self.classes.iter().map(|c| c.logit).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardPrediction<T> {
    pub logits: Vec<T>,
    pub hazards: Vec<T>,
    /// `survival[t] = Π_{i<=t} (1 - hazards[i])`.
    pub survival: Vec<T>,
    /// `-Σ_t survival[t]`; higher means worse prognosis.
    pub risk: T,
}

impl<T: Scalar> HazardPrediction<T> {
    /// Bin with the largest logit; ties go to the earliest bin.
    pub fn predicted_bin(&self) -> usize {
        argmax(&self.logits)
    }
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fusion weights `(α, β, γ)` for the three similarity levels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fusion<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> Fusion<T> {
    pub fn from_config(cfg: &EngineConfig) -> Self {
        Fusion {
            alpha: cast(cfg.alpha_sim),
            beta: cast(cfg.beta_sim),
            gamma: cast(cfg.gamma_sim),
        }
    }

    #[inline]
    pub fn fuse(&self, mean: T, max: T, center: T) -> T {
        self.alpha * mean + self.beta * max + self.gamma * center
    }
}

fn check_query<T: Scalar>(f: &[T], lib: &PrototypeLibrary<T>) -> Result<()> {
    if f.len() != lib.dim() {
        return Err(Error::DimensionMismatch {
            expected: lib.dim(),
            found: f.len(),
        });
    }
    if !all_finite(f) {
        return Err(Error::NonFinite("query feature"));
    }
    Ok(())
}

/// Similarities between `f` and every effective prototype of `class`.
pub fn similarity_row<T: Scalar>(
    f: &[T],
    lib: &PrototypeLibrary<T>,
    class: usize,
    power: T,
) -> Result<Vec<T>> {
    check_query(f, lib)?;
    if class >= lib.classes() {
        return Err(Error::OutOfRange {
            what: "class index",
            value: class,
            bound: lib.classes(),
        });
    }
    let row: Vec<T> = lib
        .effective(class)
        .map(|p| pmdsim_unchecked(f, &p.vector, power))
        .collect();
    if row.is_empty() {
        return Err(Error::Empty("effective prototype set"));
    }
    Ok(row)
}

/// Matches `f` against every class of `lib`, returning the fused logits and
/// the explanation trace.
pub fn mpmatch<T: Scalar>(
    f: &[T],
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
) -> Result<(Vec<T>, ExplanationTrace<T>)> {
    if lib.classes() != cfg.k_time {
        return Err(Error::DimensionMismatch {
            expected: cfg.k_time,
            found: lib.classes(),
        });
    }
    let power: T = cast(cfg.power);
    let fusion = Fusion::from_config(cfg);
    let mut classes = Vec::with_capacity(lib.classes());
    for c in 0..lib.classes() {
        let row = similarity_row(f, lib, c, power)?;
        let mean = row.iter().copied().sum::<T>() / from_usize(row.len());
        let nearest_index = argmax(&row);
        let max = row[nearest_index];
        let center = pmdsim_unchecked(f, lib.center(c), power);
        let logit = fusion.fuse(mean, max, center);
        let nearest = lib
            .effective(c)
            .nth(nearest_index)
            .expect("row index within effective set");
        classes.push(ClassMatch {
            class: c,
            row,
            mean,
            max,
            center,
            logit,
            nearest_index,
            nearest_id: nearest.id.clone(),
            nearest_kind: nearest.kind,
            sources: nearest
                .sources
                .entries
                .iter()
                .take(cfg.top_f_sources)
                .cloned()
                .collect(),
        });
    }
    let trace = ExplanationTrace { classes };
    Ok((trace.logits(), trace))
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Turns per-bin logits into hazards, the survival curve and the risk.
pub fn risk_score<T: Scalar>(logits: &[T]) -> Result<HazardPrediction<T>> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if !all_finite(logits) {
        return Err(Error::NonFinite("logits"));
    }
    let hazards: Vec<T> = logits.iter().map(|&z| sigmoid(z)).collect();
    let mut survival = Vec::with_capacity(hazards.len());
    let mut s = T::one();
    for &h in &hazards {
        s = s * (T::one() - h);
        survival.push(s);
    }
    let risk = -survival.iter().copied().sum::<T>();
    Ok(HazardPrediction {
        logits: logits.to_vec(),
        hazards,
        survival,
        risk,
    })
}

/// Full prediction for one fused feature.
pub fn predict<T: Scalar>(
    f: &[T],
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
) -> Result<(HazardPrediction<T>, ExplanationTrace<T>)> {
    let (logits, trace) = mpmatch(f, lib, cfg)?;
    Ok((risk_score(&logits)?, trace))
}

/// Logits and their Jacobian with respect to `f` (one row per class).
/// Prototypes and centers are constants.
pub(crate) fn logits_with_jacobian<T: Scalar>(
    f: &[T],
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
) -> (Vec<T>, Vec<Vec<T>>) {
    let power: T = cast(cfg.power);
    let fusion = Fusion::from_config(cfg);
    let mut logits = Vec::with_capacity(lib.classes());
    let mut jac = Vec::with_capacity(lib.classes());
    for c in 0..lib.classes() {
        let mut row = Vec::new();
        let mut grads = Vec::new();
        for p in lib.effective(c) {
            let (s, g) = pmdsim_with_grad(f, &p.vector, power);
            row.push(s);
            grads.push(g);
        }
        let n: T = from_usize(row.len());
        let mean = row.iter().copied().sum::<T>() / n;
        let best = argmax(&row);
        let (center, g_center) = pmdsim_with_grad(f, lib.center(c), power);
        logits.push(fusion.fuse(mean, row[best], center));
        let mut g = vec![T::zero(); f.len()];
        for gi in &grads {
            for (acc, &x) in g.iter_mut().zip(gi) {
                *acc = *acc + fusion.alpha * x / n;
            }
        }
        for (j, acc) in g.iter_mut().enumerate() {
            *acc = *acc + fusion.beta * grads[best][j] + fusion.gamma * g_center[j];
        }
        jac.push(g);
    }
    (logits, jac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub sample_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class: usize,
    pub mean: f64,
    pub max: f64,
    pub center: f64,
    pub logit: f64,
    pub nearest_id: String,
    pub nearest_kind: String,
    pub row: Vec<f64>,
    pub sources: Vec<SourceRecord>,
}

/// Machine-readable explanation of one query, written one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sample_id: String,
    pub predicted_bin: usize,
    pub risk: f64,
    pub logits: Vec<f64>,
    pub classes: Vec<ClassRecord>,
}

impl TraceRecord {
    pub fn new<T: Scalar>(
        sample_id: &str,
        prediction: &HazardPrediction<T>,
        trace: &ExplanationTrace<T>,
    ) -> Self {
        TraceRecord {
            sample_id: sample_id.to_string(),
            predicted_bin: prediction.predicted_bin(),
            risk: widen(prediction.risk),
            logits: prediction.logits.iter().map(|&x| widen(x)).collect(),
            classes: trace
                .classes
                .iter()
                .map(|c| ClassRecord {
                    class: c.class,
                    mean: widen(c.mean),
                    max: widen(c.max),
                    center: widen(c.center),
                    logit: widen(c.logit),
                    nearest_id: c.nearest_id.clone(),
                    nearest_kind: c.nearest_kind.as_str().to_string(),
                    row: c.row.iter().map(|&x| widen(x)).collect(),
                    sources: c
                        .sources
                        .iter()
                        .map(|s| SourceRecord {
                            sample_id: s.sample_id.clone(),
                            weight: widen(s.weight),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

use serde::Serialize;

use super::init::{check_dims, entry, pick_wandering, rank_by_similarity, ClassFeatureSet};
use super::{PrototypeLibrary, Provenance};
use crate::config::{validate_config, EngineConfig, UpdateStrategy};
use crate::error::{Error, Result};
use crate::scalar::{cast, dist2, widen, Scalar};
use crate::similarity::{pmdsim_unchecked, power_mean_distance};
use crate::types::PrototypeKind;

/// `λ·old + (1-λ)·new`, elementwise.
pub fn ema_merge<T: Scalar>(old: &[T], new: &[T], lambda: T) -> Vec<T> {
    old.iter()
        .zip(new)
        .map(|(&p, &f)| lambda * p + (T::one() - lambda) * f)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassUpdate {
    pub class: usize,
    pub merged: usize,
    pub replaced: usize,
    pub wandering_refreshed: usize,
    pub wandering_fallback: bool,
}

/// One prototype displacement caused by a merge or replacement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrototypeMove {
    pub prototype_id: String,
    pub sample_id: String,
    /// `||P_new - P_old||`.
    pub displacement: f64,
    /// `||P_old - f||` for the feature that caused the move.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateReport {
    pub epoch: u64,
    pub strategy: UpdateStrategy,
    pub from_version: u64,
    pub to_version: u64,
    pub classes: Vec<ClassUpdate>,
    pub moves: Vec<PrototypeMove>,
}

impl UpdateReport {
    fn new(epoch: u64, strategy: UpdateStrategy, version: u64) -> Self {
        UpdateReport {
            epoch,
            strategy,
            from_version: version,
            to_version: version,
            classes: Vec::new(),
            moves: Vec::new(),
        }
    }

    pub fn total_replaced(&self) -> usize {
        self.classes.iter().map(|c| c.replaced).sum()
    }

    pub fn total_merged(&self) -> usize {
        self.classes.iter().map(|c| c.merged).sum()
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn check_inputs<T: Scalar>(
    lib: &PrototypeLibrary<T>,
    epoch_features: &[ClassFeatureSet<T>],
    cfg: &EngineConfig,
) -> Result<()> {
    validate_config(cfg)?;
    lib.validate()?;
    for set in epoch_features {
        if set.class_index >= lib.classes() {
            return Err(Error::OutOfRange {
                what: "class index",
                value: set.class_index,
                bound: lib.classes(),
            });
        }
        check_dims(set, lib.dim)?;
    }
    Ok(())
}

/// Threshold replacement: a representative feature whose mean dissimilarity
/// to the class's typical prototypes exceeds `θ` replaces the farthest one.
///
/// Candidates are this epoch's top-K features ranked by similarity to the
/// current class center. When nothing is replaced the input snapshot is
/// returned as is, version included.
pub fn basic_update<T: Scalar>(
    lib: &PrototypeLibrary<T>,
    epoch_features: &[ClassFeatureSet<T>],
    cfg: &EngineConfig,
    epoch: u64,
) -> Result<(PrototypeLibrary<T>, UpdateReport)> {
    check_inputs(lib, epoch_features, cfg)?;
    let power: T = cast(cfg.power);
    let theta: T = cast(cfg.theta);
    let mut next = lib.clone();
    let version = lib.version + 1;
    let mut report = UpdateReport::new(epoch, UpdateStrategy::Basic, lib.version);

    for set in epoch_features {
        let c = set.class_index;
        let ranked = rank_by_similarity(&set.features, &next.centers[c], power);
        let mut replaced = 0;
        for f in ranked.into_iter().take(cfg.representatives()) {
            if next.wandering[c].iter().any(|w| w.vector == f.vector) {
                continue;
            }
            let k = next.typical[c].len();
            let dissim: Vec<T> = next.typical[c]
                .iter()
                .map(|p| T::one() + power_mean_distance(&f.vector, &p.vector, power))
                .collect();
            let mean = dissim.iter().copied().sum::<T>() / crate::scalar::from_usize(k);
            if !(mean > theta) {
                continue;
            }
            let mut far = 0;
            for (i, &d) in dissim.iter().enumerate() {
                if d > dissim[far] {
                    far = i;
                }
            }
            let old = std::mem::replace(
                &mut next.typical[c][far],
                entry(c, PrototypeKind::Typical, far, version, f),
            );
            next.provenance.remove(&old.id);
            let new_id = next.typical[c][far].id.clone();
            next.provenance.insert(new_id.clone(), Provenance { created_epoch: epoch, merges: 0 });
            let d = widen(dist2(&old.vector, &f.vector));
            report.moves.push(PrototypeMove {
                prototype_id: new_id,
                sample_id: f.sample_id.clone(),
                displacement: d,
                distance: d,
            });
            replaced += 1;
        }
        if replaced > 0 {
            next.recompute_center(c);
        }
        report.classes.push(ClassUpdate {
            class: c,
            merged: 0,
            replaced,
            wandering_refreshed: 0,
            wandering_fallback: false,
        });
    }

    if report.total_replaced() == 0 {
        return Ok((lib.clone(), report));
    }
    next.version = version;
    next.reindex();
    report.to_version = version;
    Ok((next, report))
}

/// EMA prototype update.
///
/// Each of this epoch's top-K representative features of a class is merged
/// into its most similar typical prototype, `p ← λ·p + (1-λ)·f`, and the
/// prototype's source weights decay by `λ` while the feature enters at
/// `1-λ`. Wandering prototypes are then re-selected from the remaining
/// features of the epoch with the band rule around the refreshed center.
pub fn ema_update<T: Scalar>(
    lib: &PrototypeLibrary<T>,
    epoch_features: &[ClassFeatureSet<T>],
    cfg: &EngineConfig,
    epoch: u64,
) -> Result<(PrototypeLibrary<T>, UpdateReport)> {
    check_inputs(lib, epoch_features, cfg)?;
    let power: T = cast(cfg.power);
    let lambda: T = cast(cfg.lambda);
    let version = lib.version + 1;
    let mut next = lib.clone();
    next.version = version;
    let mut report = UpdateReport::new(epoch, UpdateStrategy::Ema, lib.version);
    report.to_version = version;

    for set in epoch_features {
        let c = set.class_index;
        let ranked = rank_by_similarity(&set.features, &next.centers[c], power);
        let take = cfg.representatives().min(ranked.len());
        let (reps, rest) = ranked.split_at(take);

        for f in reps {
            let mut best = 0;
            let mut best_sim = T::neg_infinity();
            for (i, p) in next.typical[c].iter().enumerate() {
                let s = pmdsim_unchecked(&f.vector, &p.vector, power);
                if s > best_sim {
                    best = i;
                    best_sim = s;
                }
            }
            let proto = &mut next.typical[c][best];
            let merged = ema_merge(&proto.vector, &f.vector, lambda);
            let distance = widen(dist2(&proto.vector, &f.vector));
            let displacement = widen(dist2(&proto.vector, &merged));
            proto.vector = merged;
            proto.sources.merge(&f.sample_id, cfg.lambda, cfg.top_f_sources);
            if let Some(p) = next.provenance.get_mut(&proto.id) {
                p.merges += 1;
            }
            report.moves.push(PrototypeMove {
                prototype_id: proto.id.clone(),
                sample_id: f.sample_id.clone(),
                displacement,
                distance,
            });
        }
        if !reps.is_empty() {
            next.recompute_center(c);
        }

        let m = next.wandering[c].len();
        let mut refreshed = 0;
        let mut fallback = false;
        if m > 0 {
            if rest.len() >= m {
                let exclude: Vec<&[T]> = next.typical[c].iter().map(|e| e.vector.as_slice()).collect();
                let pick = pick_wandering(rest, &next.centers[c], m, cfg.epsilon_fraction, power, &exclude);
                fallback = pick.fallback;
                let fresh: Vec<_> = pick
                    .chosen
                    .iter()
                    .enumerate()
                    .map(|(slot, f)| entry(c, PrototypeKind::Wandering, slot, version, f))
                    .collect();
                for old in std::mem::replace(&mut next.wandering[c], fresh) {
                    next.provenance.remove(&old.id);
                }
                for e in &next.wandering[c] {
                    next.provenance.insert(e.id.clone(), Provenance { created_epoch: epoch, merges: 0 });
                }
                refreshed = m;
            } else {
                // keep the previous wandering set when the epoch is too small
                fallback = true;
            }
        }
        report.classes.push(ClassUpdate {
            class: c,
            merged: reps.len(),
            replaced: 0,
            wandering_refreshed: refreshed,
            wandering_fallback: fallback,
        });
    }
    next.reindex();
    Ok((next, report))
}

/// Dispatches on the configured strategy.
pub fn update_library<T: Scalar>(
    lib: &PrototypeLibrary<T>,
    epoch_features: &[ClassFeatureSet<T>],
    cfg: &EngineConfig,
    epoch: u64,
) -> Result<(PrototypeLibrary<T>, UpdateReport)> {
    match cfg.update_strategy {
        UpdateStrategy::Ema => ema_update(lib, epoch_features, cfg, epoch),
        UpdateStrategy::Basic => basic_update(lib, epoch_features, cfg, epoch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::fixtures::{clustered_sets, library_from, random_library};
    use crate::library::init::Feature;
    use crate::scalar::norm2;
    use proptest::prelude::*;

    fn epoch(class: usize, vectors: &[(&str, Vec<f64>)]) -> ClassFeatureSet<f64> {
        ClassFeatureSet {
            class_index: class,
            features: vectors.iter().map(|(id, v)| Feature::new(*id, v.clone())).collect(),
        }
    }

    fn single_prototype() -> (PrototypeLibrary<f64>, EngineConfig) {
        library_from(&[vec![vec![1.0, 0.0]], vec![vec![-5.0, -5.0]]], 0)
    }

    #[test]
    fn ema_worked_example() {
        assert_eq!(ema_merge(&[1.0, 0.0], &[0.0, 1.0], 0.1), vec![0.1, 0.9]);
        let (lib, cfg) = single_prototype();
        let (next, report) = ema_update(&lib, &[epoch(0, &[("n", vec![0.0, 1.0])])], &cfg, 1).unwrap();
        let p = &next.typical(0)[0];
        assert_eq!(p.vector, vec![0.1, 0.9]);
        assert_eq!(next.center(0), &[0.1, 0.9]);
        assert_eq!(p.sources.weight_of("n"), Some(0.9));
        assert!((p.sources.weight_of("p0-0").unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(report.total_merged(), 1);
        assert_eq!((report.from_version, report.to_version, next.version()), (1, 2, 2));
        assert_eq!(next.provenance()[&p.id].merges, 1);
        next.validate().unwrap();
    }

    #[test]
    fn ema_fixed_point() {
        let (lib, cfg) = single_prototype();
        let (next, _) = ema_update(&lib, &[epoch(0, &[("same", vec![1.0, 0.0])])], &cfg, 1).unwrap();
        let p = &next.typical(0)[0];
        assert_eq!(p.vector, vec![1.0, 0.0]);
        assert_eq!(p.sources.weight_of("same"), Some(0.9));
    }

    #[test]
    fn init_source_decays_geometrically() {
        let (lib, mut cfg) = single_prototype();
        cfg.top_f_sources = 20;
        let mut cur = lib;
        for k in 1..=12u64 {
            let (next, _) = ema_update(&cur, &[epoch(0, &[(&format!("m{k}"), vec![0.5, 0.5])])], &cfg, k).unwrap();
            cur = next;
            let w = cur.typical(0)[0].sources.weight_of("p0-0").unwrap();
            assert!((w - 0.1f64.powi(k as i32)).abs() < 1e-9);
            assert!((cur.typical(0)[0].sources.total() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_updates_keep_invariants_and_old_snapshots() {
        let (lib, cfg) = random_library(3, 6, 2, 4, 8);
        let frozen = lib.clone();
        let frozen_text = lib.to_canonical_text();
        let mut cur = lib.clone();
        for e in 1..=5 {
            let feats = clustered_sets(3, 12, 4, 100 + e, &format!("e{e}-"));
            let (next, report) = ema_update(&cur, &feats, &cfg, e).unwrap();
            next.validate().unwrap();
            assert!(next.version() > cur.version());
            assert_eq!(report.classes.iter().map(|c| c.wandering_refreshed).sum::<usize>(), 6);
            for c in 0..3 {
                for w in next.wandering(c) {
                    assert!(w.id.ends_with(&format!("-v{}", next.version())));
                    assert!(next.typical(c).iter().all(|p| p.vector != w.vector));
                }
            }
            cur = next;
        }
        assert_eq!(lib, frozen);
        assert_eq!(lib.to_canonical_text(), frozen_text);
    }

    #[test]
    fn merge_moves_follow_lambda() {
        let (lib, cfg) = random_library(2, 4, 1, 3, 2);
        let feats = clustered_sets(2, 8, 3, 77, "z");
        let (_, report) = ema_update(&lib, &feats, &cfg, 1).unwrap();
        assert!(!report.moves.is_empty());
        for m in &report.moves {
            assert!((m.displacement - 0.9 * m.distance).abs() < 1e-12);
        }
    }

    fn tight_class() -> (PrototypeLibrary<f64>, EngineConfig) {
        library_from(
            &[
                vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![0.0, 0.1]],
                vec![vec![5.0, 5.0], vec![5.1, 5.0], vec![5.0, 5.1]],
            ],
            0,
        )
    }

    #[test]
    fn basic_below_threshold_keeps_snapshot() {
        let (lib, mut cfg) = tight_class();
        cfg.update_strategy = UpdateStrategy::Basic;
        let (next, report) = update_library(&lib, &[epoch(0, &[("q", vec![0.0, 0.0])])], &cfg, 1).unwrap();
        assert_eq!(next, lib);
        assert_eq!(report.total_replaced(), 0);
        cfg.theta = f64::INFINITY;
        let (next, report) = basic_update(&lib, &[epoch(0, &[("far", vec![10.0, 10.0])])], &cfg, 1).unwrap();
        assert_eq!(next, lib);
        assert_eq!((report.total_replaced(), report.to_version), (0, 1));
    }

    #[test]
    fn basic_replaces_the_farthest_prototype() {
        let (lib, cfg) = tight_class();
        let f = vec![10.0, 10.0];
        let (next, report) = basic_update(&lib, &[epoch(0, &[("far", f.clone())])], &cfg, 3).unwrap();
        assert_eq!(report.total_replaced(), 1);
        let far = lib
            .typical(0)
            .iter()
            .enumerate()
            .max_by(|a, b| {
                let da = norm2(&[a.1.vector[0] - f[0], a.1.vector[1] - f[1]]);
                let db = norm2(&[b.1.vector[0] - f[0], b.1.vector[1] - f[1]]);
                da.total_cmp(&db).then(b.0.cmp(&a.0))
            })
            .unwrap()
            .0;
        let replaced = &next.typical(0)[far];
        assert_eq!(replaced.vector, f);
        assert_eq!(replaced.id, format!("c0-typical-{far}-v2"));
        assert_eq!(next.provenance()[&replaced.id].created_epoch, 3);
        assert!(lib.get(&lib.typical(0)[far].id).is_some());
        assert!(next.get(&lib.typical(0)[far].id).is_none());
        let mean: Vec<f64> = (0..2).map(|d| next.typical(0).iter().map(|p| p.vector[d]).sum::<f64>() / 3.0).collect();
        assert_eq!(next.center(0), mean.as_slice());
        next.validate().unwrap();
    }

    #[test]
    fn rejects_bad_epoch_input() {
        let (lib, cfg) = tight_class();
        assert!(ema_update(&lib, &[epoch(5, &[("a", vec![0.0, 0.0])])], &cfg, 1).is_err());
        assert!(ema_update(&lib, &[epoch(0, &[("a", vec![0.0])])], &cfg, 1).is_err());
        assert!(ema_update(&lib, &[epoch(0, &[("a", vec![f64::NAN, 0.0])])], &cfg, 1).is_err());
    }

    proptest! {
        #[test]
        fn ema_is_convex(
            p in prop::collection::vec(-10.0f64..10.0, 5),
            f in prop::collection::vec(-10.0f64..10.0, 5),
        ) {
            let new = ema_merge(&p, &f, 0.1);
            let before = dist2(&p, &f);
            prop_assert!((dist2(&new, &f) - 0.1 * before).abs() <= 1e-12 * before.max(1.0));
            prop_assert!((dist2(&new, &p) + dist2(&new, &f) - before).abs() <= 1e-12 * before.max(1.0));
        }

        #[test]
        fn tiny_lambda_degenerates_to_replacement(
            p in prop::collection::vec(-1.0f64..1.0, 4),
            f in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let new = ema_merge(&p, &f, 1e-14);
            prop_assert!(new.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}

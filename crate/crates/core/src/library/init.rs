use std::collections::BTreeMap;

use super::{mean_of, PrototypeLibrary, Provenance};
use crate::config::{validate_config, EngineConfig, NormalizationPolicy};
use crate::error::{Error, Result};
use crate::scalar::{cast, cmp, from_usize, Scalar};
use crate::similarity::{l2_normalize, pmdsim_unchecked, power_mean_distance};
use crate::types::{prototype_id, PrototypeEntry, PrototypeKind, SourceList};

#[derive(Debug, Clone, PartialEq)]
pub struct Feature<T> {
    pub sample_id: String,
    pub vector: Vec<T>,
}

impl<T> Feature<T> {
    pub fn new(sample_id: impl Into<String>, vector: Vec<T>) -> Self {
        Feature {
            sample_id: sample_id.into(),
            vector,
        }
    }
}

/// Features whose label equals `class_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFeatureSet<T> {
    pub class_index: usize,
    pub features: Vec<Feature<T>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitReport {
    /// Classes where fewer than `M_wander` distinct candidates fell inside
    /// the wandering band and the nearest-to-mean-distance fallback was used.
    pub band_fallback: Vec<usize>,
}

/// Arithmetic mean of a class's feature vectors.
pub fn class_center<T: Scalar>(features: &ClassFeatureSet<T>) -> Result<Vec<T>> {
    let vectors: Vec<&[T]> = features.features.iter().map(|f| f.vector.as_slice()).collect();
    let dim = vectors.first().ok_or(Error::Empty("class feature set"))?.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(mean_of(&vectors).expect("non-empty"))
}

/// Ranks features by similarity to `center`, most similar first; ties go to
/// the lexicographically lowest sample id.
pub(crate) fn rank_by_similarity<'a, T: Scalar>(
    features: &'a [Feature<T>],
    center: &[T],
    power: T,
) -> Vec<&'a Feature<T>> {
    let mut scored: Vec<(T, &Feature<T>)> = features
        .iter()
        .map(|f| (pmdsim_unchecked(&f.vector, center, power), f))
        .collect();
    scored.sort_by(|a, b| cmp(b.0, a.0).then_with(|| a.1.sample_id.cmp(&b.1.sample_id)));
    scored.into_iter().map(|(_, f)| f).collect()
}

/// Outcome of the wandering band rule.
pub(crate) struct WanderingPick<'a, T> {
    pub chosen: Vec<&'a Feature<T>>,
    pub fallback: bool,
}

/// Picks `count` wandering features from `pool`.
///
/// With `d` the dissimilarity to `center` and `d̄` its mean over the pool,
/// candidates are ranked by `|d - d̄|`. The band `[d̄ - ε, d̄ + ε]`,
/// `ε = epsilon_fraction * d̄`, decides whether the pick is in-band or a
/// fallback. Features whose vector duplicates one in `exclude` are used only
/// when nothing else is left.
pub(crate) fn pick_wandering<'a, T: Scalar>(
    pool: &[&'a Feature<T>],
    center: &[T],
    count: usize,
    epsilon_fraction: f64,
    power: T,
    exclude: &[&[T]],
) -> WanderingPick<'a, T> {
    if count == 0 || pool.is_empty() {
        return WanderingPick {
            chosen: Vec::new(),
            fallback: count > 0,
        };
    }
    let dists: Vec<T> = pool
        .iter()
        .map(|f| T::one() + power_mean_distance(&f.vector, center, power))
        .collect();
    let mean_dist = dists.iter().copied().sum::<T>() / from_usize(pool.len());
    let eps = mean_dist * cast(epsilon_fraction);
    let mut ranked: Vec<(bool, T, &'a Feature<T>)> = pool
        .iter()
        .zip(&dists)
        .map(|(&f, &d)| {
            let duplicate = exclude.contains(&f.vector.as_slice());
            (duplicate, (d - mean_dist).abs(), f)
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| cmp(a.1, b.1))
            .then_with(|| a.2.sample_id.cmp(&b.2.sample_id))
    });
    let in_band = ranked.iter().filter(|(dup, gap, _)| !dup && *gap <= eps).count();
    WanderingPick {
        chosen: ranked.iter().take(count).map(|(_, _, f)| *f).collect(),
        fallback: in_band < count,
    }
}

pub(crate) fn check_dims<T: Scalar>(set: &ClassFeatureSet<T>, dim: usize) -> Result<()> {
    for f in &set.features {
        if f.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.vector.len(),
            });
        }
        if !f.vector.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("class feature"));
        }
    }
    Ok(())
}

pub(crate) fn entry<T: Scalar>(
    class: usize,
    kind: PrototypeKind,
    slot: usize,
    version: u64,
    feature: &Feature<T>,
) -> PrototypeEntry<T> {
    PrototypeEntry {
        id: prototype_id(class, kind, slot, version),
        class_index: class,
        kind,
        slot,
        vector: feature.vector.clone(),
        sources: SourceList::single(feature.sample_id.clone()),
    }
}

/// Builds the initial library from labeled features.
///
/// For each class the `K_proto` features most similar to the class center
/// become typical prototypes; wandering prototypes come from the remaining
/// features via the distance band rule.
pub fn init_library<T: Scalar>(
    data: &[ClassFeatureSet<T>],
    cfg: &EngineConfig,
) -> Result<(PrototypeLibrary<T>, InitReport)> {
    validate_config(cfg)?;
    let mut by_class: Vec<Option<&ClassFeatureSet<T>>> = vec![None; cfg.classes];
    for set in data {
        let slot = by_class.get_mut(set.class_index).ok_or(Error::OutOfRange {
            what: "class index",
            value: set.class_index,
            bound: cfg.classes,
        })?;
        *slot = Some(set);
    }
    let needed = cfg.k_proto + cfg.m_wander;
    let power: T = cast(cfg.power);
    let version = 1;
    let mut report = InitReport::default();
    let mut typical = Vec::with_capacity(cfg.classes);
    let mut wandering = Vec::with_capacity(cfg.classes);
    let mut centers = Vec::with_capacity(cfg.classes);

    for (c, set) in by_class.into_iter().enumerate() {
        let set = match set {
            Some(set) if set.features.len() >= needed => set,
            other => {
                return Err(Error::InsufficientClass {
                    class: c,
                    needed,
                    found: other.map_or(0, |s| s.features.len()),
                })
            }
        };
        check_dims(set, cfg.feature_dim)?;
        let normalized;
        let set = if cfg.normalization == NormalizationPolicy::InitOnly {
            normalized = ClassFeatureSet {
                class_index: c,
                features: set
                    .features
                    .iter()
                    .map(|f| Ok(Feature::new(f.sample_id.clone(), l2_normalize(&f.vector)?.vector)))
                    .collect::<Result<Vec<_>>>()?,
            };
            &normalized
        } else {
            set
        };

        let center = class_center(set)?;
        let ranked = rank_by_similarity(&set.features, &center, power);
        let (chosen, rest) = ranked.split_at(cfg.k_proto);
        let typ: Vec<PrototypeEntry<T>> = chosen
            .iter()
            .enumerate()
            .map(|(slot, f)| entry(c, PrototypeKind::Typical, slot, version, f))
            .collect();
        let exclude: Vec<&[T]> = typ.iter().map(|e| e.vector.as_slice()).collect();
        let pick = pick_wandering(rest, &center, cfg.m_wander, cfg.epsilon_fraction, power, &exclude);
        if pick.fallback {
            report.band_fallback.push(c);
        }
        let wan: Vec<PrototypeEntry<T>> = pick
            .chosen
            .iter()
            .enumerate()
            .map(|(slot, f)| entry(c, PrototypeKind::Wandering, slot, version, f))
            .collect();
        typical.push(typ);
        wandering.push(wan);
        centers.push(center);
    }

    let mut lib = PrototypeLibrary {
        version,
        dim: cfg.feature_dim,
        normalization: cfg.normalization,
        config_hash: cfg.hash(),
        typical,
        wandering,
        identity: BTreeMap::new(),
        provenance: BTreeMap::new(),
        centers,
    };
    lib.reindex();
    lib.provenance = lib
        .identity
        .keys()
        .map(|id| (id.clone(), Provenance { created_epoch: 0, merges: 0 }))
        .collect();
    Ok((lib, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::fixtures::{clustered_sets, config};
    use crate::similarity::pmdsim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(vectors: &[Vec<f64>]) -> ClassFeatureSet<f64> {
        ClassFeatureSet {
            class_index: 0,
            features: vectors
                .iter()
                .enumerate()
                .map(|(i, v)| Feature::new(format!("s{i}"), v.clone()))
                .collect(),
        }
    }

    #[test]
    fn center_small_cases() {
        assert_eq!(class_center(&set(&[vec![0.0, 0.0], vec![2.0, 2.0]])).unwrap(), vec![1.0, 1.0]);
        assert_eq!(class_center(&set(&[vec![0.3, -7.0]])).unwrap(), vec![0.3, -7.0]);
        assert!(matches!(class_center(&set(&[])), Err(Error::Empty(_))));
        assert!(class_center(&set(&[vec![1.0], vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn center_matches_two_pass_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vs: Vec<Vec<f64>> = (0..100).map(|_| (0..6).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let c = class_center(&set(&vs)).unwrap();
        for d in 0..6 {
            let first = vs.iter().map(|v| v[d]).sum::<f64>() / 100.0;
            let correction = vs.iter().map(|v| v[d] - first).sum::<f64>() / 100.0;
            assert!((c[d] - (first + correction)).abs() < 1e-12);
        }
    }

    #[test]
    fn typical_set_is_the_most_similar() {
        let cfg = config(3, 40, 5, 4);
        let sets = clustered_sets(3, 60, 4, 11, "");
        let (lib, _) = init_library(&sets, &cfg).unwrap();
        lib.validate().unwrap();
        assert_eq!(lib.version(), 1);
        for s in &sets {
            let c = s.class_index;
            let center = class_center(s).unwrap();
            let sim = |v: &[f64]| pmdsim(v, &center, 2.0).unwrap();
            let worst_typical = lib.typical(c).iter().map(|p| sim(&p.vector)).fold(f64::INFINITY, f64::min);
            let chosen: Vec<&[f64]> = lib.typical(c).iter().map(|p| p.vector.as_slice()).collect();
            for f in s.features.iter().filter(|f| !chosen.contains(&f.vector.as_slice())) {
                assert!(sim(&f.vector) <= worst_typical);
            }
            for p in lib.effective(c) {
                assert_eq!(p.sources.entries.len(), 1);
                assert_eq!(p.sources.entries[0].weight, 1.0);
                assert!(s.features.iter().any(|f| f.sample_id == p.sources.entries[0].sample_id && f.vector == p.vector));
            }
            assert_eq!(lib.center(c), center.as_slice());
        }
        assert_eq!(lib.identity().len(), 135);
        assert_eq!(lib.provenance().len(), 135);
    }

    #[test]
    fn identical_class_falls_back() {
        let cfg = config(2, 3, 2, 2);
        let mut sets = clustered_sets(2, 5, 2, 1, "");
        for f in &mut sets[1].features {
            f.vector = vec![0.5, 0.5];
        }
        let (lib, report) = init_library(&sets, &cfg).unwrap();
        lib.validate().unwrap();
        assert!(lib.effective(1).all(|p| p.vector == vec![0.5, 0.5]));
        assert!(report.band_fallback.contains(&1));
    }

    #[test]
    fn too_few_features_names_the_class() {
        let cfg = config(2, 3, 2, 2);
        let mut sets = clustered_sets(2, 5, 2, 1, "");
        sets[1].features.truncate(4);
        match init_library(&sets, &cfg) {
            Err(Error::InsufficientClass { class, needed, found }) => assert_eq!((class, needed, found), (1, 5, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn band_half_width_is_a_fraction_of_the_mean() {
        // dissimilarities 1, 2, 5, 10 around the origin: mean 4.5
        let pool: Vec<Feature<f64>> = [0.0, 1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| Feature::new(format!("f{i}"), vec![x]))
            .collect();
        let refs: Vec<&Feature<f64>> = pool.iter().collect();
        let tight = pick_wandering(&refs, &[0.0], 1, 0.10, 2.0, &[]);
        assert!(tight.fallback);
        assert_eq!(tight.chosen[0].sample_id, "f2");
        let wide = pick_wandering(&refs, &[0.0], 1, 0.12, 2.0, &[]);
        assert!(!wide.fallback);
        assert_eq!(wide.chosen[0].sample_id, "f2");
    }
}

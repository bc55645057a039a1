//! Encoder training with periodic prototype-library updates.

mod ablation;
mod encoder;
mod oracle;

pub use ablation::{ablation_run, ablation_table, AblationRow, AblationVariant};
pub use encoder::{EncoderGrad, FusionEncoder};
pub use oracle::{CentroidOracle, OracleReport};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{validate_config, EngineConfig, NormalizationPolicy};
use crate::data::Dataset;
use crate::error::{Error, Result, Violation};
use crate::eval::{c_index, CohortSample};
use crate::library::{init_library, update_library, ClassFeatureSet, Feature, PrototypeLibrary, UpdateReport};
use crate::losses::{total_loss, LossBreakdown, LossSample};
use crate::matching::{predict, ExplanationTrace, HazardPrediction};
use crate::scalar::{cast, widen, Scalar};
use crate::types::FeatureRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Initial step size, cosine-decayed over `epochs`.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 2026,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            v.push(Violation::new("learning_rate", self.learning_rate, "must be finite and nonnegative"));
        }
        if self.batch_size == 0 {
            v.push(Violation::new("batch_size", 0, "must be positive"));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// Step size used during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs == 0 {
            return self.learning_rate;
        }
        let progress = (epoch.saturating_sub(1)) as f64 / self.epochs as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Engine and training settings as one TOML document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigFormat(e.to_string()))?;
        validate_config(&cfg.engine)?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// One line of the metrics history. Epoch 0 describes the initialized state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub learning_rate: f64,
    pub steps: u64,
    pub library_version: u64,
    pub loss: Option<f64>,
    pub contra: Option<f64>,
    pub center: Option<f64>,
    pub surv: Option<f64>,
    pub train_c_index: Option<f64>,
    pub val_c_index: Option<f64>,
    pub merged: usize,
    pub replaced: usize,
}

impl EpochMetrics {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub encoder: FusionEncoder<T>,
    pub library: PrototypeLibrary<T>,
    pub epoch: u64,
    pub step: u64,
    /// Step size of the last completed epoch.
    pub learning_rate: f64,
    pub schedule: TrainConfig,
    pub history: Vec<EpochMetrics>,
}

impl<T: Scalar> TrainState<T> {
    pub fn history_jsonl(&self) -> String {
        self.history.iter().map(|m| m.to_json_line() + "\n").collect()
    }

    /// Encoder and library text with their position in training.
    pub fn dump(&self) -> String {
        format!(
            "epoch {}\nstep {}\n{}{}",
            self.epoch,
            self.step,
            self.encoder.to_text(),
            self.library.to_canonical_text()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub state: TrainState<T>,
    pub updates: Vec<UpdateReport>,
    /// One loss breakdown line per gradient step.
    pub loss_log: Vec<String>,
}

fn check_binned<T: Scalar>(ds: &Dataset<T>, k_time: usize) -> Result<()> {
    for r in &ds.records {
        match r.time_bin {
            Some(b) if b < k_time => {}
            Some(b) => {
                return Err(Error::OutOfRange {
                    what: "time bin",
                    value: b,
                    bound: k_time,
                })
            }
            None => return Err(Error::Binning(format!("`{}` has no time bin", r.sample_id))),
        }
    }
    Ok(())
}

/// Fused features of every record, in record order.
pub fn encode_dataset<T: Scalar>(encoder: &FusionEncoder<T>, ds: &Dataset<T>) -> Result<Vec<Vec<T>>> {
    ds.records.iter().map(|r| encoder.encode(&r.concatenated())).collect()
}

/// Groups fused features by time bin, one set per bin in `0..k_time`.
pub fn class_sets<T: Scalar>(ds: &Dataset<T>, fused: &[Vec<T>], k_time: usize) -> Vec<ClassFeatureSet<T>> {
    let mut sets: Vec<ClassFeatureSet<T>> = (0..k_time)
        .map(|c| ClassFeatureSet {
            class_index: c,
            features: Vec::new(),
        })
        .collect();
    for (r, f) in ds.records.iter().zip(fused) {
        if let Some(b) = r.time_bin {
            sets[b].features.push(Feature::new(r.sample_id.clone(), f.clone()));
        }
    }
    sets
}

/// Batch loss and its gradient with respect to the encoder parameters, with
/// the library held fixed.
pub fn batch_loss<T: Scalar>(
    encoder: &FusionEncoder<T>,
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
    batch: &[&FeatureRecord<T>],
) -> Result<(LossBreakdown<T>, EncoderGrad<T>)> {
    let forwards = batch
        .iter()
        .map(|r| encoder.forward(&r.concatenated()))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<LossSample<'_, T>> = batch
        .iter()
        .zip(&forwards)
        .map(|(r, fw)| {
            Ok(LossSample {
                feature: &fw.y,
                time_bin: r.time_bin.ok_or_else(|| Error::Binning(format!("`{}` has no time bin", r.sample_id)))?,
                censored: r.censored,
            })
        })
        .collect::<Result<_>>()?;
    let loss = total_loss(&samples, lib, cfg)?;
    let mut grad = EncoderGrad::zeros(encoder);
    for (fw, g) in forwards.iter().zip(&loss.feature_grads) {
        encoder.backward(fw, g, &mut grad);
    }
    Ok((loss.breakdown, grad))
}

/// Prediction and explanation for every record.
pub fn predict_dataset<T: Scalar>(
    encoder: &FusionEncoder<T>,
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
    ds: &Dataset<T>,
) -> Result<Vec<(HazardPrediction<T>, ExplanationTrace<T>)>> {
    ds.records
        .iter()
        .map(|r| predict(&encoder.encode(&r.concatenated())?, lib, cfg))
        .collect()
}

pub fn cohort<T: Scalar>(ds: &Dataset<T>, risks: &[T]) -> Vec<CohortSample<T>> {
    ds.records
        .iter()
        .zip(risks)
        .map(|(r, &risk)| CohortSample {
            sample_id: r.sample_id.clone(),
            risk,
            event_time: r.event_time,
            censored: r.censored,
        })
        .collect()
}

fn dataset_c_index<T: Scalar>(
    encoder: &FusionEncoder<T>,
    lib: &PrototypeLibrary<T>,
    cfg: &EngineConfig,
    ds: &Dataset<T>,
) -> Result<Option<f64>> {
    let risks: Vec<T> = predict_dataset(encoder, lib, cfg, ds)?
        .into_iter()
        .map(|(p, _)| p.risk)
        .collect();
    match c_index(&cohort(ds, &risks)) {
        Ok(c) => Ok(Some(c)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn validation_c_index<T: Scalar>(
    state: &TrainState<T>,
    cfg: &EngineConfig,
    validation: Option<&Dataset<T>>,
) -> Result<Option<f64>> {
    match validation {
        Some(v) => dataset_c_index(&state.encoder, &state.library, cfg, v),
        None => Ok(None),
    }
}

fn diverged<T: Scalar>(state: &TrainState<T>) -> Error {
    Error::Diverged {
        epoch: state.epoch,
        step: state.step,
        dump: state.dump(),
    }
}

/// Epoch 0: fits the encoder's input standardization, draws its weights and
/// initializes the library from the encoded training set.
pub fn initial_state<T: Scalar>(
    train: &Dataset<T>,
    validation: Option<&Dataset<T>>,
    cfg: &EngineConfig,
    tcfg: &TrainConfig,
) -> Result<TrainState<T>> {
    validate_config(cfg)?;
    tcfg.validate()?;
    check_binned(train, cfg.k_time)?;
    if let Some(v) = validation {
        check_binned(v, cfg.k_time)?;
    }
    let normalize = cfg.normalization == NormalizationPolicy::AtEncoding;
    let encoder = FusionEncoder::init(train, cfg.feature_dim, normalize, tcfg.seed)?;
    let fused = encode_dataset(&encoder, train)?;
    let (library, init) = init_library(&class_sets(train, &fused, cfg.k_time), cfg)?;
    if !init.band_fallback.is_empty() {
        log::warn!("wandering band fallback in classes {:?}", init.band_fallback);
    }
    let mut state = TrainState {
        encoder,
        library,
        epoch: 0,
        step: 0,
        learning_rate: 0.0,
        schedule: tcfg.clone(),
        history: Vec::new(),
    };
    let metrics = EpochMetrics {
        epoch: 0,
        learning_rate: 0.0,
        steps: 0,
        library_version: state.library.version(),
        loss: None,
        contra: None,
        center: None,
        surv: None,
        train_c_index: dataset_c_index(&state.encoder, &state.library, cfg, train)?,
        val_c_index: validation_c_index(&state, cfg, validation)?,
        merged: 0,
        replaced: 0,
    };
    state.history.push(metrics);
    Ok(state)
}

/// Runs the remaining epochs `state.epoch + 1 ..= tcfg.epochs`.
///
/// Each epoch shuffles with its own seeded stream, so resuming from a saved
/// state reproduces an uninterrupted run.
pub fn resume<T: Scalar>(
    mut state: TrainState<T>,
    train: &Dataset<T>,
    validation: Option<&Dataset<T>>,
    cfg: &EngineConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    validate_config(cfg)?;
    tcfg.validate()?;
    check_binned(train, cfg.k_time)?;
    log::info!(
        "training on {} records, epochs {}..={} (config {})",
        train.len(),
        state.epoch + 1,
        tcfg.epochs,
        cfg.hash()
    );
    let mut updates = Vec::new();
    let mut loss_log = Vec::new();
    for epoch in state.epoch as usize + 1..=tcfg.epochs {
        let lr = tcfg.learning_rate_at(epoch);
        state.epoch = epoch as u64;
        state.learning_rate = lr;
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut steps = 0u64;
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<&FeatureRecord<T>> = chunk.iter().map(|&i| &train.records[i]).collect();
            let (breakdown, grad) = match batch_loss(&state.encoder, &state.library, cfg, &batch) {
                Ok((b, g)) if b.is_finite() && g.weight.iter().chain(&g.bias).all(|x| x.is_finite()) => (b, g),
                Ok(_) | Err(Error::NonFinite(_)) => return Err(diverged(&state)),
                Err(e) => return Err(e),
            };
            loss_log.push(breakdown.to_json_line(state.epoch, state.step));
            let n = batch.len() as f64;
            sums[0] += widen(breakdown.total) * n;
            sums[1] += widen(breakdown.contra) * n;
            sums[2] += widen(breakdown.center) * n;
            sums[3] += widen(breakdown.surv) * n;
            state.encoder.apply(&grad, cast(lr));
            state.step += 1;
            steps += 1;
        }
        let mut merged = 0;
        let mut replaced = 0;
        if epoch % cfg.update_period_epochs == 0 {
            let fused = match encode_dataset(&state.encoder, train) {
                Ok(f) => f,
                Err(Error::NonFinite(_)) => return Err(diverged(&state)),
                Err(e) => return Err(e),
            };
            let sets = class_sets(train, &fused, cfg.k_time);
            let (next, report) = update_library(&state.library, &sets, cfg, state.epoch)?;
            merged = report.total_merged();
            replaced = report.total_replaced();
            state.library = next;
            updates.push(report);
        }
        let n = train.len() as f64;
        let metrics = EpochMetrics {
            epoch: state.epoch,
            learning_rate: lr,
            steps,
            library_version: state.library.version(),
            loss: Some(sums[0] / n),
            contra: Some(sums[1] / n),
            center: Some(sums[2] / n),
            surv: Some(sums[3] / n),
            train_c_index: dataset_c_index(&state.encoder, &state.library, cfg, train)?,
            val_c_index: validation_c_index(&state, cfg, validation)?,
            merged,
            replaced,
        };
        log::debug!("{}", metrics.to_json_line());
        state.history.push(metrics);
    }
    Ok(TrainOutcome {
        state,
        updates,
        loss_log,
    })
}

/// Trains the encoder on `train`, initializing the library from the first
/// encoding and updating it every `update_period_epochs` epochs.
pub fn train<T: Scalar>(
    train: &Dataset<T>,
    validation: Option<&Dataset<T>>,
    cfg: &EngineConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let state = initial_state(train, validation, cfg, tcfg)?;
    resume(state, train, validation, cfg, tcfg)
}

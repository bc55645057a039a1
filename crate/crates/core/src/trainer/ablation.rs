use std::fmt;

use serde::Serialize;

use super::{dataset_c_index, train, TrainConfig, TrainOutcome};
use crate::config::{EngineConfig, UpdateStrategy};
use crate::data::Dataset;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoWandering,
    BasicUpdate,
    NearestOnlyMatch,
    NllOnly,
    ProtoOnly,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::Full,
        AblationVariant::NoWandering,
        AblationVariant::BasicUpdate,
        AblationVariant::NearestOnlyMatch,
        AblationVariant::NllOnly,
        AblationVariant::ProtoOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoWandering => "no_wandering",
            AblationVariant::BasicUpdate => "basic_update",
            AblationVariant::NearestOnlyMatch => "nearest_only_match",
            AblationVariant::NllOnly => "nll_only",
            AblationVariant::ProtoOnly => "proto_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// The configuration this variant trains with.
    pub fn apply(self, cfg: &EngineConfig) -> EngineConfig {
        let mut c = cfg.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoWandering => c.m_wander = 0,
            AblationVariant::BasicUpdate => c.update_strategy = UpdateStrategy::Basic,
            AblationVariant::NearestOnlyMatch => {
                c.alpha_sim = 0.0;
                c.beta_sim = 1.0;
                c.gamma_sim = 0.0;
            }
            AblationVariant::NllOnly => c.beta_loss = 0.0,
            AblationVariant::ProtoOnly => c.beta_loss = 1.0,
        }
        c
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub train_c_index: Option<f64>,
    pub val_c_index: Option<f64>,
    pub library_version: u64,
    pub final_loss: Option<f64>,
}

/// Trains one variant and scores it on `validation`.
pub fn ablation_run<T: Scalar>(
    train_set: &Dataset<T>,
    validation: &Dataset<T>,
    cfg: &EngineConfig,
    tcfg: &TrainConfig,
    variant: AblationVariant,
) -> Result<(AblationRow, TrainOutcome<T>)> {
    let vcfg = variant.apply(cfg);
    let outcome = train(train_set, None, &vcfg, tcfg)?;
    let state = &outcome.state;
    let row = AblationRow {
        variant,
        train_c_index: dataset_c_index(&state.encoder, &state.library, &vcfg, train_set)?,
        val_c_index: dataset_c_index(&state.encoder, &state.library, &vcfg, validation)?,
        library_version: state.library.version(),
        final_loss: state.history.last().and_then(|m| m.loss),
    };
    Ok((row, outcome))
}

fn cell(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.4}"))
}

/// Tab-separated comparison table, one row per variant.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant\ttrain_c_index\tval_c_index\tlibrary_version\tfinal_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.variant,
            cell(r.train_c_index),
            cell(r.val_c_index),
            r.library_version,
            cell(r.final_loss)
        ));
    }
    out
}

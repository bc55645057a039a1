use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const FILE: &str = "manifest.json";

/// Provenance record written once into every output directory.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub engine_version: &'static str,
    pub git_describe: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl Manifest {
    pub fn start(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            engine_version: env!("CARGO_PKG_VERSION"),
            git_describe: env!("FEATPROTO_GIT_DESCRIBE"),
            seed: None,
            config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis()),
            elapsed_ms: 0,
            clock: Some(Instant::now()),
        }
    }

    /// A manifest for a sub-run sharing this one's command line and clock.
    pub fn child(&self) -> Self {
        let mut m = Manifest::start(&self.command);
        m.started_unix_ms = self.started_unix_ms;
        m.clock = self.clock;
        m.seed = self.seed;
        m.config = self.config.clone();
        m.inputs = self.inputs.clone();
        m
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.push((name.to_string(), path.display().to_string()));
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn config(&mut self, config: &impl Serialize) {
        self.config = serde_json::to_value(config).unwrap_or(Value::Null);
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.elapsed_ms = self.clock.map_or(0, |c| c.elapsed().as_millis());
        let path = dir.join(FILE);
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

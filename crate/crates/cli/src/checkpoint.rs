use std::path::Path;

use anyhow::{bail, Context, Result};
use featproto::{BinEdges, Encoder64, Library64, RunConfig};

pub const CONFIG: &str = "config.toml";
pub const ENCODER: &str = "encoder.txt";
pub const LIBRARY: &str = "library.txt";
pub const BINS: &str = "bins.txt";

/// Everything needed to score new samples: the run configuration, the
/// trained encoder, the final library and the training bin edges.
pub struct Checkpoint {
    pub config: RunConfig,
    pub encoder: Encoder64,
    pub library: Library64,
    pub bins: BinEdges<f64>,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<Vec<&'static str>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join(CONFIG), self.config.to_toml())?;
        self.encoder.save(dir.join(ENCODER))?;
        self.library.save(dir.join(LIBRARY))?;
        self.bins.save(dir.join(BINS))?;
        Ok(vec![CONFIG, ENCODER, LIBRARY, BINS])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).with_context(|| format!("reading checkpoint file {}", path.display()))
        };
        let config = RunConfig::from_toml(&read(CONFIG)?).context(CONFIG)?;
        let encoder = Encoder64::from_text(&read(ENCODER)?).context(ENCODER)?;
        let library = Library64::from_canonical_text(&read(LIBRARY)?).context(LIBRARY)?;
        let bins = BinEdges::from_text(&read(BINS)?).context(BINS)?;
        if library.config_hash() != config.engine.hash() {
            bail!(
                "library was built with configuration {} but {CONFIG} hashes to {}",
                library.config_hash(),
                config.engine.hash()
            );
        }
        if encoder.out_dim() != library.dim() {
            bail!(
                "encoder produces {} features but the library expects {}",
                encoder.out_dim(),
                library.dim()
            );
        }
        Ok(Checkpoint {
            config,
            encoder,
            library,
            bins,
        })
    }
}

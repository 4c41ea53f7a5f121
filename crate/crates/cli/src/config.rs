//! Flag structs shared by clap and the JSON config file.
//!
//! Each subcommand's flags are all optional so that a config section can
//! supply them; `merge` lets a flag given on the command line win.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::{CliError, CliResult};

/// Top-level layout of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub threads: Option<usize>,
    #[serde(default)]
    pub toy_model: ToyModelArgs,
    #[serde(default)]
    pub generate: GenerateArgs,
    #[serde(default)]
    pub verify: VerifyArgs,
    #[serde(default)]
    pub toy_data: ToyDataArgs,
    #[serde(default)]
    pub train_acw: TrainArgs,
    #[serde(default)]
    pub evaluate: EvaluateArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

macro_rules! cli_args {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Debug, Default, Clone, Args, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$fmeta])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fills every unset flag from `file`.
            pub fn merge(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field),)* }
            }
        }
    };
}

cli_args!(ToyModelArgs {
    /// Output MDL1 file.
    out: PathBuf,
    seed: u64,
    /// Latitude rings of the ellipsoid grid (default 32, at least 4).
    v_rings: usize,
    /// Identity basis size (default 20).
    k_id: usize,
    /// Expression basis size (default 10).
    k_exp: usize,
});

cli_args!(GenerateArgs {
    /// MDL1 model file.
    model: PathBuf,
    /// Dataset output directory.
    out: PathBuf,
    seed: u64,
    /// Number of identities (default 10).
    identities: usize,
    /// Random expressions per identity besides the neutral one (default 40).
    expressions: usize,
    /// Image side in pixels (default 128).
    resolution: usize,
    /// Focal length in pixels (default 260).
    focal: f64,
    /// Camera distance in mm (default 600).
    radius: f64,
    /// Coefficient truncation in standard deviations (default 3).
    trunc: f64,
});

cli_args!(VerifyArgs {
    /// Dataset directory containing manifest.json.
    data: PathBuf,
    /// Second dataset to compare byte-for-byte.
    against: PathBuf,
    /// Check every n-th normal pixel (default 1).
    sample_stride: usize,
});

cli_args!(ToyDataArgs {
    /// Output directory for the EMB1 files.
    out: PathBuf,
    seed: u64,
    classes: usize,
    dim: usize,
    samples_per_class: usize,
    sigma_clean: f64,
    sigma_corrupt: f64,
    corrupt_fraction: f64,
    corrupt_drift: f64,
});

cli_args!(TrainArgs {
    /// Directory with train_<m>.emb and gallery_<m>.emb files.
    data_dir: PathBuf,
    /// Where heads and loss.csv go (default: the data directory).
    out: PathBuf,
    seed: u64,
    /// Comma-separated modality names (default rgb,depth).
    modalities: String,
    lambda: f64,
    lr: f64,
    batch: usize,
    epochs: usize,
    temperature: f64,
    /// Target mean confidence; lambda then adapts every batch.
    budget: f64,
    hidden: usize,
    train_prototypes: bool,
});

cli_args!(EvaluateArgs {
    /// Directory with gallery_<m>.emb, probe_<m>.emb and probe_tags.csv.
    data_dir: PathBuf,
    /// acw, fixed or single (default acw).
    mode: String,
    /// Comma-separated modality names (default rgb,depth).
    modalities: String,
    /// Fixed-mode weights in modality order, e.g. 1,0.
    weights: String,
    /// Modality for single mode.
    modality: String,
    /// Directory holding head_<m>.acw (default: the data directory).
    heads: PathBuf,
    /// Report directory (default: the data directory).
    out: PathBuf,
    /// Report file stem (default report_<mode>).
    name: String,
});

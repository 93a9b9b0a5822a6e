//! Run configuration: TOML file keys mirror [`RunConfig`]; command-line
//! flags override file values.

use std::path::{Path, PathBuf};

use clap::Args;
use comet::data::SyntheticSpec;
use comet::episodes::EpisodeSpec;
use comet::model::{ModelConfig, TrainConfig, WeightMode};
use comet::nn::DistanceKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_OUT: &str = "comet-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub weight_mode: WeightMode,
    pub distance: DistanceKind,
    /// Append the all-ones concept to the concept set.
    pub whole_input: bool,
    /// Ignore concepts and train the single whole-input learner.
    pub protonet: bool,
    /// Z-score features with statistics of the training split.
    pub standardize: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelOptions {
            hidden: m.hidden,
            embed_dim: m.embed_dim,
            dropout: m.dropout,
            weight_mode: m.weight_mode,
            distance: m.distance,
            whole_input: true,
            protonet: false,
            standardize: false,
        }
    }
}

impl ModelOptions {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            dropout: self.dropout,
            weight_mode: self.weight_mode,
            distance: self.distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataPaths>,
    pub concepts: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    pub episode: EpisodeSpec,
    pub train: TrainConfig,
    pub model: ModelOptions,
    pub output: Option<PathBuf>,
    /// Root seed for sampling, initialization and dropout.
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Checks field ranges and that every referenced file exists.
    pub fn validate(&self) -> CliResult<()> {
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("give either dataset paths or a synthetic spec, not both"))
            }
            (None, None) => {
                return Err(CliError::config(
                    "no data: give --features/--labels/--splits (or [data]) or --synthetic (or [synthetic])",
                ))
            }
            _ => {}
        }
        if let Some(d) = &self.data {
            for (flag, p) in [("features", &d.features), ("labels", &d.labels), ("splits", &d.splits)] {
                require_file(flag, p)?;
            }
        }
        if let Some(c) = &self.concepts {
            if self.synthetic.is_some() {
                return Err(CliError::config("a concepts file cannot be combined with synthetic data"));
            }
            require_file("concepts", c)?;
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        self.episode.validate()?;
        self.train.validate()?;
        let m = &self.model;
        if m.hidden == 0 || m.embed_dim == 0 {
            return Err(CliError::config("model hidden and embed_dim must be >= 1"));
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return Err(CliError::config(format!("dropout {} must be in [0, 1)", m.dropout)));
        }
        Ok(())
    }
}

pub fn require_file(what: &str, p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} file {} does not exist", p.display())))
    }
}

/// Flags shared by every command. Unset flags leave the config file value
/// (or the built-in default) in place.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file whose keys mirror the run configuration
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Feature matrix CSV (header row of feature names)
    #[arg(long, value_name = "FILE", help_heading = "Data")]
    pub features: Option<PathBuf>,
    /// Label file, one class name per row
    #[arg(long, value_name = "FILE", help_heading = "Data")]
    pub labels: Option<PathBuf>,
    /// JSON class split {"train": [...], "val": [...], "test": [...]}
    #[arg(long, value_name = "FILE", help_heading = "Data")]
    pub splits: Option<PathBuf>,
    /// Concept file, one `name: i j k` line per concept
    #[arg(long, value_name = "FILE", help_heading = "Data")]
    pub concepts: Option<PathBuf>,
    /// Use the planted-block synthetic generator instead of files
    #[arg(long, help_heading = "Data")]
    pub synthetic: bool,
    /// Synthetic: number of classes [default: 20]
    #[arg(long, help_heading = "Synthetic data")]
    pub n_classes: Option<usize>,
    /// Synthetic: examples per class [default: 60]
    #[arg(long, help_heading = "Synthetic data")]
    pub per_class: Option<usize>,
    /// Synthetic: number of planted blocks [default: 4]
    #[arg(long, help_heading = "Synthetic data")]
    pub n_blocks: Option<usize>,
    /// Synthetic: features per block [default: 8]
    #[arg(long, help_heading = "Synthetic data")]
    pub block_size: Option<usize>,
    /// Synthetic: pure-noise features [default: 32]
    #[arg(long, help_heading = "Synthetic data")]
    pub noise_features: Option<usize>,
    /// Synthetic: norm of a class mean within a designated block [default: 5]
    #[arg(long, help_heading = "Synthetic data")]
    pub signal: Option<f64>,
    /// Synthetic: noise standard deviation [default: 1]
    #[arg(long, help_heading = "Synthetic data")]
    pub noise_sd: Option<f64>,
    /// Synthetic: generator seed [default: 7]
    #[arg(long, help_heading = "Synthetic data")]
    pub synth_seed: Option<u64>,

    /// Classes per episode [default: 5]
    #[arg(long, help_heading = "Episodes")]
    pub way: Option<usize>,
    /// Support examples per class [default: 5]
    #[arg(long, help_heading = "Episodes")]
    pub shot: Option<usize>,
    /// Query examples per class [default: 16]
    #[arg(long, help_heading = "Episodes")]
    pub query: Option<usize>,

    /// Training episodes [default: 1000]
    #[arg(long, help_heading = "Training")]
    pub episodes: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long, help_heading = "Training")]
    pub lr: Option<f64>,
    /// L2 weight decay [default: 0]
    #[arg(long, help_heading = "Training")]
    pub weight_decay: Option<f64>,
    /// Evaluation episodes [default: 600]
    #[arg(long, help_heading = "Training")]
    pub eval_episodes: Option<usize>,
    /// Episodes per validation pass [default: 100]
    #[arg(long, help_heading = "Training")]
    pub val_episodes: Option<usize>,
    /// Validate every N training episodes [default: 100]
    #[arg(long, help_heading = "Training")]
    pub val_every: Option<usize>,
    /// Log every N training episodes [default: 100]
    #[arg(long, help_heading = "Training")]
    pub log_every: Option<usize>,

    /// Hidden width of each concept learner [default: 64]
    #[arg(long, help_heading = "Model")]
    pub hidden: Option<usize>,
    /// Embedding width [default: 64]
    #[arg(long, help_heading = "Model")]
    pub embed_dim: Option<usize>,
    /// Dropout rate [default: 0.2]
    #[arg(long, help_heading = "Model")]
    pub dropout: Option<f64>,
    /// per_concept or shared [default: per_concept]
    #[arg(long, help_heading = "Model")]
    pub weight_mode: Option<WeightMode>,
    /// euclidean or cosine [default: euclidean]
    #[arg(long, help_heading = "Model")]
    pub distance: Option<DistanceKind>,
    /// Do not append the whole-input concept
    #[arg(long, help_heading = "Model")]
    pub no_whole_input: bool,
    /// Train plain ProtoNet (whole-input concept only); concepts are ignored
    #[arg(long, help_heading = "Model")]
    pub protonet: bool,
    /// Z-score features using training-split statistics
    #[arg(long, help_heading = "Model")]
    pub standardize: bool,

    /// Root seed for every random stream [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: comet-out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write flat CSV tables
    #[arg(long)]
    pub csv: bool,
}

impl RunArgs {
    /// File values (if any) overlaid with the flags that were given.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let a = self;
        if a.features.is_some() || a.labels.is_some() || a.splits.is_some() {
            let base = cfg.data.take();
            let pick = |flag: &Option<PathBuf>, file: Option<&PathBuf>, name: &str| -> CliResult<PathBuf> {
                flag.clone()
                    .or_else(|| file.cloned())
                    .ok_or_else(|| CliError::config(format!("--{name} is required with dataset files")))
            };
            cfg.data = Some(DataPaths {
                features: pick(&a.features, base.as_ref().map(|d| &d.features), "features")?,
                labels: pick(&a.labels, base.as_ref().map(|d| &d.labels), "labels")?,
                splits: pick(&a.splits, base.as_ref().map(|d| &d.splits), "splits")?,
            });
        }
        set(&mut cfg.concepts, a.concepts.clone().map(Some));
        let synth_flags = a.n_classes.is_some()
            || a.per_class.is_some()
            || a.n_blocks.is_some()
            || a.block_size.is_some()
            || a.noise_features.is_some()
            || a.signal.is_some()
            || a.noise_sd.is_some()
            || a.synth_seed.is_some();
        if a.synthetic || synth_flags {
            let s = cfg.synthetic.get_or_insert_with(SyntheticSpec::default);
            set(&mut s.n_classes, a.n_classes);
            set(&mut s.per_class, a.per_class);
            set(&mut s.n_blocks, a.n_blocks);
            set(&mut s.block_size, a.block_size);
            set(&mut s.n_noise_features, a.noise_features);
            set(&mut s.signal_strength, a.signal);
            set(&mut s.noise_sd, a.noise_sd);
            set(&mut s.seed, a.synth_seed);
        }
        set(&mut cfg.episode.way, a.way);
        set(&mut cfg.episode.shot, a.shot);
        set(&mut cfg.episode.query_per_class, a.query);
        let t = &mut cfg.train;
        set(&mut t.episodes, a.episodes);
        set(&mut t.lr, a.lr);
        set(&mut t.weight_decay, a.weight_decay);
        set(&mut t.eval_episodes, a.eval_episodes);
        set(&mut t.val_episodes, a.val_episodes);
        set(&mut t.val_every, a.val_every);
        set(&mut t.log_every, a.log_every);
        let m = &mut cfg.model;
        set(&mut m.hidden, a.hidden);
        set(&mut m.embed_dim, a.embed_dim);
        set(&mut m.dropout, a.dropout);
        set(&mut m.weight_mode, a.weight_mode);
        set(&mut m.distance, a.distance);
        if a.no_whole_input {
            m.whole_input = false;
        }
        m.protonet |= a.protonet;
        m.standardize |= a.standardize;
        set(&mut cfg.seed, a.seed);
        set(&mut cfg.output, a.out.clone().map(Some));
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

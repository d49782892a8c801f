//! Flat, typed pipeline configuration.
//!
//! Loaded from a TOML file of top-level keys; every key can be overridden by
//! a command-line flag. Relative paths in a file resolve against the file's
//! directory, relative paths on the command line against the working
//! directory.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use domshift_core::divergence::{DEFAULT_ITERATIONS, DEFAULT_SAMPLE_SIZE, DEFAULT_WORKING_SIZE};
use domshift_core::grouping::DEFAULT_MIN_TOTAL;
use domshift_core::image_stats::DEFAULT_SAMPLE_PER_CLASS;
use domshift_core::tsne::TsneConfig;
use domshift_core::{BootstrapConfig, SplitSpec};

use crate::error::{CliError, Result};

pub const CACHE_DIR_ENV: &str = "DOMSHIFT_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Catalog CSV files, merged in order.
    pub catalogs: Vec<PathBuf>,
    /// Directory holding `{image_id}.png` / `.jpg` files.
    pub image_root: Option<PathBuf>,
    /// Embedding CSV; without it the cosine and t-SNE stages are skipped.
    pub embeddings: Option<PathBuf>,
    /// Directory of `{dataset}.csv` prediction files.
    pub predictions_dir: Option<PathBuf>,
    pub localization_map: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Abbreviation of the source dataset, e.g. `H`.
    pub source: String,
    pub seed: u64,
    pub min_total: usize,
    pub train_fraction: f64,
    pub lesion_aware: bool,
    pub iterations: usize,
    pub sample_size: usize,
    pub sweep_sizes: Vec<usize>,
    pub stats_per_class: usize,
    /// Images larger than this on either side are resized to a square of
    /// this size before histogramming. 0 disables resizing.
    pub working_size: usize,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_max_points: usize,
    /// Balanced-accuracy decision threshold on prediction scores.
    pub threshold: f64,
    pub skip_stats: bool,
    pub skip_divergence: bool,
    pub skip_sweep: bool,
    pub skip_tsne: bool,
    pub skip_metrics: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            catalogs: Vec::new(),
            image_root: None,
            embeddings: None,
            predictions_dir: None,
            localization_map: None,
            output_dir: PathBuf::from("domshift-out"),
            source: "H".into(),
            seed: 0,
            min_total: DEFAULT_MIN_TOTAL,
            train_fraction: 0.8,
            lesion_aware: true,
            iterations: DEFAULT_ITERATIONS,
            sample_size: DEFAULT_SAMPLE_SIZE,
            sweep_sizes: vec![50, 100, 150, 200, 250],
            stats_per_class: DEFAULT_SAMPLE_PER_CLASS,
            working_size: DEFAULT_WORKING_SIZE,
            perplexity: 30.0,
            tsne_iterations: 1000,
            tsne_max_points: 5000,
            threshold: 0.5,
            skip_stats: false,
            skip_divergence: false,
            skip_sweep: false,
            skip_tsne: false,
            skip_metrics: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file and anchors its relative paths at the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.catalogs.iter_mut().for_each(fix);
        for p in [
            &mut self.image_root,
            &mut self.embeddings,
            &mut self.predictions_dir,
            &mut self.localization_map,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.catalogs.is_empty() {
            return Err(CliError::Config("no catalogs given".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.iterations == 0 || self.sample_size < 2 {
            return Err(CliError::Config("iterations must be >= 1 and sample_size >= 2".into()));
        }
        if self.sweep_sizes.iter().any(|&s| s < 2) {
            return Err(CliError::Config("sweep sizes must be >= 2".into()));
        }
        if self.source.is_empty() {
            return Err(CliError::Config("source abbreviation is empty".into()));
        }
        let mut paths: Vec<&PathBuf> = self.catalogs.iter().collect();
        paths.extend(self.image_root.iter());
        paths.extend(self.embeddings.iter());
        paths.extend(self.predictions_dir.iter());
        paths.extend(self.localization_map.iter());
        for p in paths {
            if !p.exists() {
                return Err(CliError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            iterations: self.iterations,
            sample_size: self.sample_size,
            seed: self.seed,
            per_class: true,
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            lesion_aware: self.lesion_aware,
        }
    }

    pub fn tsne(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.tsne_iterations,
            max_points: self.tsne_max_points,
            seed: self.seed,
            ..TsneConfig::default()
        }
    }
}

/// Flag forms of every config key.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Catalog CSV (repeatable; replaces the configured list)
    #[arg(long = "catalog")]
    pub catalogs: Vec<PathBuf>,
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub predictions_dir: Option<PathBuf>,
    #[arg(long)]
    pub localization_map: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_total: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub lesion_aware: Option<bool>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',')]
    pub sweep_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub stats_per_class: Option<usize>,
    #[arg(long)]
    pub working_size: Option<usize>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub tsne_iterations: Option<usize>,
    #[arg(long)]
    pub tsne_max_points: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub skip_stats: bool,
    #[arg(long)]
    pub skip_divergence: bool,
    #[arg(long)]
    pub skip_sweep: bool,
    #[arg(long)]
    pub skip_tsne: bool,
    #[arg(long)]
    pub skip_metrics: bool,
}

impl ConfigArgs {
    /// File values first, then flags on top.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if !self.catalogs.is_empty() {
            cfg.catalogs = self.catalogs.clone();
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                })*
            };
        }
        take!(image_root, embeddings, predictions_dir, localization_map);
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
            };
        }
        set!(
            output_dir,
            source,
            seed,
            min_total,
            train_fraction,
            lesion_aware,
            iterations,
            sample_size,
            sweep_sizes,
            stats_per_class,
            working_size,
            perplexity,
            tsne_iterations,
            tsne_max_points,
            threshold
        );
        cfg.skip_stats |= self.skip_stats;
        cfg.skip_divergence |= self.skip_divergence;
        cfg.skip_sweep |= self.skip_sweep;
        cfg.skip_tsne |= self.skip_tsne;
        cfg.skip_metrics |= self.skip_metrics;
        Ok(cfg)
    }
}

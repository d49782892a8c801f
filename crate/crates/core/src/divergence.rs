//! Image-space (Jensen-Shannon) and feature-space (cosine) divergence between
//! two datasets, estimated by bootstrap resampling.
//!
//! A "pairwise" value between two samples is the mean of the element metric
//! over every cross pair. For JSD the element metric is the mean over the
//! three channel histograms. Logs are base 2 so JSD lies in `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::RgbImage;
use crate::metadata::LesionClass;
use crate::rng::stream;

pub const BINS: usize = 256;
pub const DEFAULT_ITERATIONS: usize = 30;
pub const DEFAULT_SAMPLE_SIZE: usize = 250;
/// Working resolution images are resampled to before histogramming.
pub const DEFAULT_WORKING_SIZE: usize = 224;

/// Above this many cross pairs the pair matrix is not precomputed.
const PAIR_CACHE_LIMIT: usize = 4_000_000;
const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DivergenceError {
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("no {class} items on the {side} side")]
    EmptyClass { side: &'static str, class: LesionClass },
    #[error("sample size sweep needs at least one size")]
    EmptySizes,
    #[error("invalid bootstrap config: {0}")]
    InvalidConfig(String),
    #[error("cannot compare {0} items with {1} items")]
    MetricMismatch(Metric, Metric),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "jsd")]
    Jsd,
    #[serde(rename = "cosine")]
    Cosine,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Jsd => "jsd",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalized 256-bin intensity histogram for each RGB channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelHistogram {
    channels: Box<[[f64; BINS]; 3]>,
}

impl PixelHistogram {
    pub fn channel(&self, c: usize) -> &[f64; BINS] {
        &self.channels[c]
    }

    pub fn from_channels(channels: [[f64; BINS]; 3]) -> Result<Self, DivergenceError> {
        for ch in &channels {
            check_distribution(ch)?;
        }
        Ok(PixelHistogram {
            channels: Box::new(channels),
        })
    }
}

pub fn histogram(img: &RgbImage) -> PixelHistogram {
    let mut counts = [[0u64; BINS]; 3];
    for p in img.pixels() {
        for c in 0..3 {
            counts[c][p[c] as usize] += 1;
        }
    }
    let n = img.pixel_count() as f64;
    let mut channels = Box::new([[0.0; BINS]; 3]);
    for c in 0..3 {
        for b in 0..BINS {
            channels[c][b] = counts[c][b] as f64 / n;
        }
    }
    PixelHistogram { channels }
}

fn check_distribution(p: &[f64]) -> Result<(), DivergenceError> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(DivergenceError::NotADistribution(format!("entry {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(DivergenceError::NotADistribution(format!("mass {total}")));
    }
    Ok(())
}

/// Per-bin sum of both KL halves against the mixture. Exactly symmetric.
fn jsd_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = (a + b) * 0.5;
        let ta = if a > 0.0 { a * (a / m).log2() } else { 0.0 };
        let tb = if b > 0.0 { b * (b / m).log2() } else { 0.0 };
        acc += 0.5 * ta + 0.5 * tb;
    }
    acc.clamp(0.0, 1.0)
}

/// Jensen-Shannon divergence (base 2) between two distributions.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::DimMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(jsd_raw(p, q))
}

/// Channel-mean JSD between two image histograms.
pub fn histogram_jsd(a: &PixelHistogram, b: &PixelHistogram) -> f64 {
    (0..3).map(|c| jsd_raw(a.channel(c), b.channel(c))).sum::<f64>() / 3.0
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, DivergenceError> {
    if u.len() != v.len() {
        return Err(DivergenceError::DimMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(DivergenceError::ZeroVector);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Items of one dataset/class cell, in whatever space the metric needs.
#[derive(Debug, Clone, Copy)]
pub enum ItemSet<'a> {
    Histograms(&'a [PixelHistogram]),
    Embeddings(&'a [Vec<f64>]),
}

impl ItemSet<'_> {
    pub fn metric(&self) -> Metric {
        match self {
            ItemSet::Histograms(_) => Metric::Jsd,
            ItemSet::Embeddings(_) => Metric::Cosine,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ItemSet::Histograms(h) => h.len(),
            ItemSet::Embeddings(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn same_metric(a: &ItemSet, b: &ItemSet) -> Result<Metric, DivergenceError> {
    if a.metric() != b.metric() {
        return Err(DivergenceError::MetricMismatch(a.metric(), b.metric()));
    }
    Ok(a.metric())
}

fn pair_value(a: &ItemSet, b: &ItemSet, i: usize, j: usize) -> Result<f64, DivergenceError> {
    match (a, b) {
        (ItemSet::Histograms(x), ItemSet::Histograms(y)) => Ok(histogram_jsd(&x[i], &y[j])),
        (ItemSet::Embeddings(x), ItemSet::Embeddings(y)) => cosine(&x[i], &y[j]),
        _ => Err(DivergenceError::MetricMismatch(a.metric(), b.metric())),
    }
}

/// Mean element metric over all `|a| * |b|` cross pairs.
pub fn pairwise_metric(a: &ItemSet, b: &ItemSet) -> Result<f64, DivergenceError> {
    let all_a: Vec<usize> = (0..a.len()).collect();
    let all_b: Vec<usize> = (0..b.len()).collect();
    pairwise_indexed(a, b, &all_a, &all_b, None)
}

/// Cross-pair mean over index selections; sums row by row in selection order.
fn pairwise_indexed(
    a: &ItemSet,
    b: &ItemSet,
    ia: &[usize],
    ib: &[usize],
    cache: Option<&PairMatrix>,
) -> Result<f64, DivergenceError> {
    same_metric(a, b)?;
    if ia.is_empty() || ib.is_empty() {
        return Err(DivergenceError::InvalidConfig("empty pair set".into()));
    }
    let mut total = 0.0;
    for &i in ia {
        let mut row = 0.0;
        for &j in ib {
            row += match cache {
                Some(m) => m.get(i, j),
                None => pair_value(a, b, i, j)?,
            };
        }
        total += row;
    }
    Ok(total / (ia.len() * ib.len()) as f64)
}

struct PairMatrix {
    cols: usize,
    values: Vec<f64>,
}

impl PairMatrix {
    fn compute(a: &ItemSet, b: &ItemSet) -> Result<Self, DivergenceError> {
        let cols = b.len();
        let rows: Result<Vec<Vec<f64>>, _> = (0..a.len())
            .into_par_iter()
            .map(|i| (0..cols).map(|j| pair_value(a, b, i, j)).collect())
            .collect();
        Ok(PairMatrix {
            cols,
            values: rows?.concat(),
        })
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub per_class: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: DEFAULT_ITERATIONS,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            per_class: true,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), DivergenceError> {
        if self.iterations < 1 {
            return Err(DivergenceError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.sample_size < 2 {
            return Err(DivergenceError::InvalidConfig("sample_size must be >= 2".into()));
        }
        Ok(())
    }
}

/// Bootstrap distribution of one (metric, source, target, class) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSummary {
    pub metric: Metric,
    pub source: String,
    pub target: String,
    pub class: LesionClass,
    pub sample_size: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation of `values`.
    pub std: f64,
}

/// Mean, median (midpoint of the two central values for even counts) and
/// population standard deviation.
pub fn describe(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    (mean, median, var.sqrt())
}

/// Names a divergence cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellKey {
    pub source: String,
    pub target: String,
    pub class: LesionClass,
}

impl CellKey {
    pub fn new(source: impl Into<String>, target: impl Into<String>, class: LesionClass) -> Self {
        CellKey {
            source: source.into(),
            target: target.into(),
            class,
        }
    }
}

/// Indices drawn with replacement for iteration `iteration`: source first, then target.
fn draw(seed: u64, iteration: usize, n_source: usize, n_target: usize, size: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream(seed, iteration as u64);
    let a = (0..size).map(|_| rng.random_range(0..n_source)).collect();
    let b = (0..size).map(|_| rng.random_range(0..n_target)).collect();
    (a, b)
}

/// Resamples `sample_size` items with replacement from each side per
/// iteration and records the pairwise metric. The RNG stream of iteration
/// `k` depends only on `(seed, k)`.
pub fn bootstrap_divergence(
    source: &ItemSet,
    target: &ItemSet,
    key: &CellKey,
    cfg: &BootstrapConfig,
) -> Result<DivergenceSummary, DivergenceError> {
    let cache = prepare(source, target, key, cfg)?;
    run_bootstrap(source, target, key, cfg, cache.as_ref())
}

fn prepare(
    source: &ItemSet,
    target: &ItemSet,
    key: &CellKey,
    cfg: &BootstrapConfig,
) -> Result<Option<PairMatrix>, DivergenceError> {
    cfg.validate()?;
    same_metric(source, target)?;
    if source.is_empty() {
        return Err(DivergenceError::EmptyClass {
            side: "source",
            class: key.class,
        });
    }
    if target.is_empty() {
        return Err(DivergenceError::EmptyClass {
            side: "target",
            class: key.class,
        });
    }
    if source.len() * target.len() <= PAIR_CACHE_LIMIT {
        Ok(Some(PairMatrix::compute(source, target)?))
    } else {
        Ok(None)
    }
}

fn run_bootstrap(
    source: &ItemSet,
    target: &ItemSet,
    key: &CellKey,
    cfg: &BootstrapConfig,
    cache: Option<&PairMatrix>,
) -> Result<DivergenceSummary, DivergenceError> {
    let values: Result<Vec<f64>, _> = (0..cfg.iterations)
        .into_par_iter()
        .map(|k| {
            let (ia, ib) = draw(cfg.seed, k, source.len(), target.len(), cfg.sample_size);
            pairwise_indexed(source, target, &ia, &ib, cache)
        })
        .collect();
    let values = values?;
    let (mean, median, std) = describe(&values);
    Ok(DivergenceSummary {
        metric: source.metric(),
        source: key.source.clone(),
        target: key.target.clone(),
        class: key.class,
        sample_size: cfg.sample_size,
        values,
        mean,
        median,
        std,
    })
}

/// One bootstrap summary per sample size, all sharing `cfg.seed`.
pub fn sample_size_sweep(
    source: &ItemSet,
    target: &ItemSet,
    key: &CellKey,
    sizes: &[usize],
    cfg: &BootstrapConfig,
) -> Result<BTreeMap<usize, DivergenceSummary>, DivergenceError> {
    if sizes.is_empty() {
        return Err(DivergenceError::EmptySizes);
    }
    let cache = prepare(source, target, key, cfg)?;
    let mut out = BTreeMap::new();
    for &size in sizes {
        let sized = BootstrapConfig {
            sample_size: size,
            ..*cfg
        };
        sized.validate()?;
        out.insert(size, run_bootstrap(source, target, key, &sized, cache.as_ref())?);
    }
    Ok(out)
}

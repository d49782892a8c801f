//! Stage orchestration: ingest, group, stats, divergence, sweep, t-SNE,
//! metrics, correlation, report.
//!
//! The comparison set is the source training split against its holdout and
//! every other kept group. Each stage writes its artifacts through an
//! [`ArtifactWriter`]; the run manifest lists them with checksums and is
//! written even when a stage fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use domshift_core::divergence::{
    bootstrap_divergence, histogram, sample_size_sweep, CellKey, DivergenceSummary, Metric, PixelHistogram,
};
use domshift_core::embedding::{read_embeddings, EmbeddingMatrix};
use domshift_core::grouping::{leakage_guard, stratified_split, GroupManifest, GroupedDataset};
use domshift_core::image::RgbImage;
use domshift_core::image_stats::{image_stats, sample_per_class, summarize, ImageStatsRecord, Property};
use domshift_core::metadata::{detect_duplicates, parse_catalog, Catalog, LesionClass, LocalizationMap, Origin};
use domshift_core::metrics::{
    auroc, balanced_accuracy, correlation_matrix, performance_drop, CorrelationMatrix, MetricsError, PerformanceRow,
    PerformanceTable, PredictionSet,
};
use domshift_core::synth::ClassItems;
use domshift_core::tsne::tsne;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::report::{self, Artifact, ArtifactWriter, ProjectionRow, StatsRow};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "PNG", "JPG", "JPEG"];

/// Which stages a command runs. Ingest and grouping always run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stages {
    pub group_report: bool,
    pub stats: bool,
    pub divergence: bool,
    pub sweep: bool,
    pub tsne: bool,
    pub metrics: bool,
    pub correlate: bool,
}

impl Stages {
    pub fn all() -> Self {
        Stages {
            group_report: true,
            stats: true,
            divergence: true,
            sweep: true,
            tsne: true,
            metrics: true,
            correlate: true,
        }
    }

    /// Applies the config's skip switches.
    pub fn without_skipped(mut self, cfg: &PipelineConfig) -> Self {
        self.stats &= !cfg.skip_stats;
        self.divergence &= !cfg.skip_divergence;
        self.sweep &= !cfg.skip_sweep;
        self.tsne &= !cfg.skip_tsne;
        self.metrics &= !cfg.skip_metrics;
        self.correlate &= self.divergence && self.metrics;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<Artifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    /// `path -> sha256` of every artifact.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub error: CliError,
    pub manifest: RunManifest,
}

/// Honors `SOURCE_DATE_EPOCH` so that manifests can be made reproducible too.
fn now_unix() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupReport {
    pub source: String,
    pub source_origin: Origin,
    pub min_total: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub source_train: String,
    pub source_holdout: String,
    /// Source train, source holdout, then every other kept group.
    pub datasets: Vec<GroupedDataset>,
    pub removed: Vec<GroupedDataset>,
}

#[derive(Debug, Clone, Serialize)]
struct Summary<'a> {
    source_train: &'a str,
    datasets: Vec<&'a str>,
    removed: Vec<&'a str>,
    images: usize,
    hue_method: &'static str,
    quartile_method: &'static str,
    warnings: &'a [String],
}

pub fn read_catalogs(paths: &[PathBuf]) -> Result<Catalog> {
    let mut parts = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("catalog");
        parts.push(parse_catalog(&bytes, name).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?);
    }
    Ok(Catalog::merge(parts, "merged")?)
}

pub fn read_localization_map(path: Option<&Path>) -> Result<LocalizationMap> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            Ok(LocalizationMap::from_csv(&bytes)?)
        }
        None => Ok(LocalizationMap::default_map()),
    }
}

/// Origin whose abbreviation prefix equals the configured source.
pub fn resolve_source(catalog: &Catalog, source: &str) -> Result<Origin> {
    let mut seen: Vec<&Origin> = catalog.records().iter().map(|r| &r.origin).collect();
    seen.sort();
    seen.dedup();
    seen.into_iter()
        .find(|o| o.abbrev_prefix() == source)
        .cloned()
        .ok_or_else(|| CliError::Data(format!("no origin with abbreviation `{source}` in the catalogs")))
}

/// Groups the catalog and splits the source group.
pub fn build_groups(catalog: &Catalog, cfg: &PipelineConfig) -> Result<GroupReport> {
    let map = read_localization_map(cfg.localization_map.as_deref())?;
    let origin = resolve_source(catalog, &cfg.source)?;
    let manifest = GroupManifest::build(catalog, &origin, &map, cfg.min_total)?;
    let source = manifest.get(&cfg.source).ok_or_else(|| {
        CliError::Data(format!(
            "source group `{}` has at most {} images and was excluded",
            cfg.source, cfg.min_total
        ))
    })?;
    let (train, holdout) = stratified_split(source, &cfg.split(), catalog)?;
    let shared = leakage_guard(&train, &holdout, catalog);
    if !shared.is_empty() {
        return Err(CliError::Data(format!("{} lesions on both sides of the split", shared.len())));
    }
    let mut datasets = vec![train, holdout];
    datasets.extend(manifest.groups.iter().filter(|g| g.abbrev != cfg.source).cloned());
    Ok(GroupReport {
        source: cfg.source.clone(),
        source_origin: origin,
        min_total: cfg.min_total,
        seed: cfg.seed,
        train_fraction: cfg.train_fraction,
        source_train: datasets[0].abbrev.clone(),
        source_holdout: datasets[1].abbrev.clone(),
        datasets,
        removed: manifest.removed,
    })
}

pub fn find_image(root: &Path, image_id: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| root.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RgbImage::new(w, h, img.into_raw())?)
}

/// Per-image products of one decoding pass.
#[derive(Default)]
struct ImageProducts {
    histograms: HashMap<String, PixelHistogram>,
    stats: HashMap<String, ImageStatsRecord>,
}

fn process_images(
    root: &Path,
    hist_ids: &[&String],
    stats_ids: &HashSet<&String>,
    working_size: usize,
) -> Result<ImageProducts> {
    let mut ids: Vec<&String> = hist_ids.to_vec();
    ids.extend(stats_ids.iter().copied().filter(|id| !hist_ids.contains(id)));
    let want_hist: HashSet<&String> = hist_ids.iter().copied().collect();
    let results: Vec<Result<(String, Option<PixelHistogram>, Option<ImageStatsRecord>)>> = ids
        .par_iter()
        .map(|id| {
            let path = find_image(root, id)
                .ok_or_else(|| CliError::Data(format!("no image file for `{id}` under {}", root.display())))?;
            let img = load_image(&path)?;
            let stats = stats_ids.contains(id).then(|| image_stats(&img));
            let hist = want_hist.contains(id).then(|| {
                if working_size > 0 && (img.width() > working_size || img.height() > working_size) {
                    histogram(&img.resize_nearest(working_size, working_size).expect("non-zero size"))
                } else {
                    histogram(&img)
                }
            });
            Ok(((*id).clone(), hist, stats))
        })
        .collect();
    let mut out = ImageProducts::default();
    for r in results {
        let (id, h, s) = r?;
        if let Some(h) = h {
            out.histograms.insert(id.clone(), h);
        }
        if let Some(s) = s {
            out.stats.insert(id, s);
        }
    }
    Ok(out)
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    stages: Stages,
    writer: ArtifactWriter,
    records: Vec<StageRecord>,
    warnings: Vec<String>,
}

impl Run<'_> {
    fn mark(&mut self, name: &str, status: StageStatus, note: Option<String>) {
        if let Some(n) = &note {
            if status == StageStatus::Skipped {
                warn!("{name}: {n}");
                self.warnings.push(format!("{name}: {n}"));
            }
        }
        self.records.push(StageRecord {
            name: name.into(),
            status,
            note,
        });
    }
}

/// Runs the selected stages. On failure the partial manifest is still written.
pub fn run_pipeline(cfg: &PipelineConfig, stages: Stages) -> std::result::Result<RunManifest, RunFailure> {
    let started = now_unix();
    let writer = match ArtifactWriter::new(&cfg.output_dir) {
        Ok(w) => w,
        Err(error) => {
            return Err(RunFailure {
                error,
                manifest: RunManifest {
                    tool: env!("CARGO_PKG_NAME").into(),
                    version: env!("CARGO_PKG_VERSION").into(),
                    config: cfg.clone(),
                    started_unix: started,
                    finished_unix: now_unix(),
                    stages: Vec::new(),
                    artifacts: Vec::new(),
                    error: None,
                },
            })
        }
    };
    let mut run = Run {
        cfg,
        stages,
        writer,
        records: Vec::new(),
        warnings: Vec::new(),
    };
    let outcome = execute(&mut run);
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        started_unix: started,
        finished_unix: now_unix(),
        stages: run.records,
        artifacts: run.writer.artifacts().to_vec(),
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    manifest.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let written = report::write_atomic(&cfg.output_dir.join(MANIFEST_FILE), &report::json_bytes(&manifest));
    match (outcome, written) {
        (Ok(()), Ok(())) => Ok(manifest),
        (Err(error), _) | (Ok(()), Err(error)) => Err(RunFailure { error, manifest }),
    }
}

fn execute(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let stages = run.stages;
    cfg.validate()?;

    let catalog = read_catalogs(&cfg.catalogs)?;
    info!("ingested {} records", catalog.len());
    let dups = detect_duplicates(&catalog);
    if !dups.is_empty() {
        let images: usize = dups.iter().map(|d| d.image_ids.len()).sum();
        let msg = format!("{} lesions have several images ({images} images); sampling keeps them all", dups.len());
        warn!("{msg}");
        run.warnings.push(msg);
    }
    run.mark("ingest", StageStatus::Ok, None);

    let groups = build_groups(&catalog, cfg)?;
    if stages.group_report {
        run.writer.write("groups.json", &report::json_bytes(&groups))?;
        run.writer.write("group_table.csv", &report::group_table(&groups.datasets))?;
    }
    run.mark("group", StageStatus::Ok, None);
    let datasets = &groups.datasets;
    let source = &datasets[0];
    let targets = &datasets[1..];

    let embeddings = match &cfg.embeddings {
        Some(p) if stages.divergence || stages.sweep || stages.tsne => {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            Some(read_embeddings(&bytes)?)
        }
        _ => None,
    };

    // one decoding pass serves stats and histograms
    let need_hist = stages.divergence || stages.sweep;
    let mut stats_plan: Vec<(usize, LesionClass, Vec<String>)> = Vec::new();
    if stages.stats {
        for (di, d) in datasets.iter().enumerate() {
            for class in LesionClass::ALL {
                match sample_per_class(d, &catalog, class, cfg.stats_per_class, cfg.seed) {
                    Ok(ids) => stats_plan.push((di, class, ids)),
                    Err(e) => run.warnings.push(format!("stats: {e}")),
                }
            }
        }
    }
    let products = match &cfg.image_root {
        Some(root) if need_hist || stages.stats => {
            let hist_ids: Vec<&String> = if need_hist {
                datasets.iter().flat_map(|d| d.member_ids.iter()).collect()
            } else {
                Vec::new()
            };
            let stats_ids: HashSet<&String> = stats_plan.iter().flat_map(|(_, _, ids)| ids.iter()).collect();
            Some(process_images(root, &hist_ids, &stats_ids, cfg.working_size)?)
        }
        _ => None,
    };

    if !stages.stats {
        run.mark("stats", StageStatus::Skipped, None);
    } else if let Some(p) = &products {
        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        for (di, class, ids) in &stats_plan {
            let name = datasets[*di].abbrev.as_str();
            let recs: Vec<ImageStatsRecord> = ids.iter().map(|id| p.stats[id]).collect();
            for (id, s) in ids.iter().zip(&recs) {
                rows.push(StatsRow {
                    image_id: id,
                    class: *class,
                    dataset: name,
                    stats: *s,
                });
            }
            for prop in Property::ALL {
                summaries.push((name.to_string(), *class, prop, summarize(&recs, prop, true)?));
            }
        }
        run.writer.write("stats.csv", &report::stats_csv(&rows))?;
        run.writer.write("stats_summary.csv", &report::stats_summary_csv(&summaries))?;
        run.mark("stats", StageStatus::Ok, None);
    } else {
        run.mark("stats", StageStatus::Skipped, Some("no image_root configured".into()));
    }

    let mut metrics_available = Vec::new();
    if need_hist && products.is_some() {
        metrics_available.push(Metric::Jsd);
    }
    if (stages.divergence || stages.sweep) && embeddings.is_some() {
        metrics_available.push(Metric::Cosine);
    }

    let mut main_summaries: Vec<DivergenceSummary> = Vec::new();
    if stages.divergence || stages.sweep {
        let mut sweep_summaries = Vec::new();
        for &metric in &metrics_available {
            for target in targets {
                for class in LesionClass::ALL {
                    let src_ids: Vec<&String> = source.members_of(&catalog, class).collect();
                    let tgt_ids: Vec<&String> = target.members_of(&catalog, class).collect();
                    if src_ids.is_empty() || tgt_ids.is_empty() {
                        run.warnings.push(format!("{metric}: {} has no {class} images, cell skipped", target.abbrev));
                        continue;
                    }
                    let key = CellKey::new(source.abbrev.clone(), target.abbrev.clone(), class);
                    let (sa, ta) = match metric {
                        Metric::Jsd => {
                            let h = &products.as_ref().expect("checked").histograms;
                            let pick = |ids: &[&String]| ClassItems::Hist(ids.iter().map(|id| h[*id].clone()).collect());
                            (pick(&src_ids), pick(&tgt_ids))
                        }
                        Metric::Cosine => {
                            let e = embeddings.as_ref().expect("checked");
                            (
                                ClassItems::Emb(embedding_rows(e, &src_ids)?),
                                ClassItems::Emb(embedding_rows(e, &tgt_ids)?),
                            )
                        }
                    };
                    let (a, b) = (sa.as_item_set(), ta.as_item_set());
                    if stages.divergence {
                        main_summaries.push(bootstrap_divergence(&a, &b, &key, &cfg.bootstrap())?);
                    }
                    if stages.sweep {
                        let sweep = sample_size_sweep(&a, &b, &key, &cfg.sweep_sizes, &cfg.bootstrap())?;
                        sweep_summaries.extend(sweep.into_values());
                    }
                }
            }
        }
        let note = match (metrics_available.contains(&Metric::Jsd), metrics_available.contains(&Metric::Cosine)) {
            (true, true) => None,
            (true, false) => Some("cosine skipped: no embeddings configured".to_string()),
            (false, true) => Some("jsd skipped: no image_root configured".to_string()),
            (false, false) => Some("no images or embeddings configured".to_string()),
        };
        if let Some(n) = &note {
            warn!("{n}");
            run.warnings.push(n.clone());
        }
        for (flag, name) in [(stages.divergence, "divergence"), (stages.sweep, "sweep")] {
            if !flag {
                run.mark(name, StageStatus::Skipped, None);
            } else if metrics_available.is_empty() {
                run.mark(name, StageStatus::Skipped, note.clone());
            } else {
                run.mark(name, StageStatus::Ok, note.clone());
            }
        }
        if stages.divergence && !metrics_available.is_empty() {
            run.writer.write("divergence_iterations.csv", &report::divergence_csv(&main_summaries))?;
            run.writer.write("divergence_summary.csv", &report::divergence_summary_csv(&main_summaries))?;
        }
        if stages.sweep && !metrics_available.is_empty() {
            run.writer.write("sweep.csv", &report::sweep_csv(&sweep_summaries))?;
        }
    } else {
        run.mark("divergence", StageStatus::Skipped, None);
        run.mark("sweep", StageStatus::Skipped, None);
    }

    if !stages.tsne {
        run.mark("tsne", StageStatus::Skipped, None);
    } else if let Some(e) = &embeddings {
        let mut owner: HashMap<&String, &str> = HashMap::new();
        for d in datasets {
            for id in &d.member_ids {
                owner.insert(id, &d.abbrev);
            }
        }
        let ids: Vec<&String> = datasets.iter().flat_map(|d| d.member_ids.iter()).collect();
        let missing = ids.iter().filter(|id| e.position(id).is_none()).count();
        if missing > 0 {
            return Err(CliError::Data(format!("{missing} grouped images have no embedding")));
        }
        let proj = tsne(&e.select(ids.iter().copied()), &cfg.tsne())?;
        if proj.unconverged_rows > 0 {
            run.warnings.push(format!("tsne: {} rows missed the perplexity target", proj.unconverged_rows));
        }
        let rows: Vec<ProjectionRow> = proj
            .ids
            .iter()
            .zip(&proj.coords)
            .map(|(id, xy)| ProjectionRow {
                image_id: id.clone(),
                xy: *xy,
                dataset: owner[id].to_string(),
                class: catalog.get(id).and_then(|r| r.class()).expect("grouped images have a class"),
            })
            .collect();
        run.writer.write("projection.csv", &report::projection_csv(&rows))?;
        run.mark("tsne", StageStatus::Ok, None);
    } else {
        run.mark("tsne", StageStatus::Skipped, Some("no embeddings configured".into()));
    }

    let mut table = None;
    if !stages.metrics {
        run.mark("metrics", StageStatus::Skipped, None);
    } else if let Some(dir) = &cfg.predictions_dir {
        let t = performance_table(dir, &groups, &main_summaries, cfg.threshold, &mut run.warnings)?;
        run.writer.write("performance.csv", &report::performance_csv(&t))?;
        run.mark("metrics", StageStatus::Ok, None);
        table = Some(t);
    } else {
        run.mark("metrics", StageStatus::Skipped, Some("no predictions_dir configured".into()));
    }

    match (&table, stages.correlate) {
        (Some(t), true) if !main_summaries.is_empty() => {
            let mut matrices: Vec<CorrelationMatrix> = Vec::new();
            for class in LesionClass::ALL {
                match correlation_matrix(t, class) {
                    Ok(m) => matrices.push(m),
                    Err(e @ (MetricsError::TooFew { .. } | MetricsError::ZeroVariance)) => {
                        run.warnings.push(format!("correlation for {class} skipped: {e}"));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            run.writer.write("correlation.json", &report::json_bytes(&matrices))?;
            run.mark("correlate", StageStatus::Ok, None);
        }
        (_, true) => run.mark(
            "correlate",
            StageStatus::Skipped,
            Some("needs divergence summaries and predictions".into()),
        ),
        (_, false) => run.mark("correlate", StageStatus::Skipped, None),
    }

    let summary = Summary {
        source_train: &groups.source_train,
        datasets: datasets.iter().map(|d| d.abbrev.as_str()).collect(),
        removed: groups.removed.iter().map(|d| d.abbrev.as_str()).collect(),
        images: datasets.iter().map(|d| d.total()).sum(),
        hue_method: domshift_core::image_stats::HUE_METHOD,
        quartile_method: domshift_core::image_stats::QUARTILE_METHOD,
        warnings: &run.warnings,
    };
    let bytes = report::json_bytes(&summary);
    run.writer.write("summary.json", &bytes)?;
    run.mark("report", StageStatus::Ok, None);
    Ok(())
}

fn embedding_rows(e: &EmbeddingMatrix, ids: &[&String]) -> Result<Vec<Vec<f64>>> {
    ids.iter()
        .map(|id| {
            e.position(id)
                .map(|i| e.row(i).to_vec())
                .ok_or_else(|| CliError::Data(format!("no embedding for `{id}`")))
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    PredictionSet::from_csv(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// AUROC and drops per dataset, joined with the divergence means.
///
/// Predictions are read from `{dataset}.csv`; the source holdout's file is
/// the reference for the drops.
fn performance_table(
    dir: &Path,
    groups: &GroupReport,
    summaries: &[DivergenceSummary],
    threshold: f64,
    warnings: &mut Vec<String>,
) -> Result<PerformanceTable> {
    let reference_path = dir.join(format!("{}.csv", groups.source_holdout));
    let reference = if reference_path.is_file() {
        let p = read_predictions(&reference_path)?;
        Some((auroc(&p)?, balanced_accuracy(&p, threshold)?))
    } else {
        warnings.push(format!("metrics: no reference predictions at {}", reference_path.display()));
        None
    };
    let mean_of = |metric: Metric, target: &str, class: LesionClass| {
        summaries
            .iter()
            .find(|s| s.metric == metric && s.target == target && s.class == class)
            .map(|s| s.mean)
    };
    let mut rows = Vec::new();
    for d in &groups.datasets[1..] {
        let path = dir.join(format!("{}.csv", d.abbrev));
        let scored = if path.is_file() {
            let p = read_predictions(&path)?;
            Some((auroc(&p)?, balanced_accuracy(&p, threshold)?))
        } else {
            warnings.push(format!("metrics: no predictions for {}", d.abbrev));
            None
        };
        for class in LesionClass::ALL {
            rows.push(PerformanceRow {
                dataset: d.abbrev.clone(),
                class,
                jsd_mean: mean_of(Metric::Jsd, &d.abbrev, class),
                cosine_mean: mean_of(Metric::Cosine, &d.abbrev, class),
                auroc: scored.map(|s| s.0),
                auroc_drop: scored.zip(reference).map(|(s, r)| performance_drop(r.0, s.0)),
                balanced_accuracy_drop: scored.zip(reference).map(|(s, r)| performance_drop(r.1, s.1)),
            });
        }
    }
    Ok(PerformanceTable { rows })
}

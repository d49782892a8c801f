//! Plot-ready CSV and JSON artifacts.
//!
//! Every CSV starts with one of the headers below. Floats use the shortest
//! representation that round-trips, so identical inputs give identical bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use domshift_core::divergence::DivergenceSummary;
use domshift_core::grouping::GroupedDataset;
use domshift_core::image_stats::{BoxSummary, ImageStatsRecord, Property};
use domshift_core::metadata::LesionClass;
use domshift_core::metrics::PerformanceTable;

use crate::error::{CliError, Result};

pub const GROUP_TABLE_HEADER: &[&str] = &[
    "dataset",
    "origin",
    "rule",
    "biological_shift",
    "technical_shift",
    "melanoma",
    "nevus",
    "total",
];
pub const STATS_HEADER: &[&str] = &[
    "image_id",
    "class",
    "dataset",
    "brightness",
    "rms_contrast",
    "saturation",
    "hue",
    "blur",
];
pub const STATS_SUMMARY_HEADER: &[&str] = &[
    "dataset",
    "class",
    "property",
    "n",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "lower_fence",
    "upper_fence",
];
pub const DIVERGENCE_HEADER: &[&str] = &["metric", "source", "target", "class", "iteration", "value"];
pub const DIVERGENCE_SUMMARY_HEADER: &[&str] = &[
    "metric",
    "source",
    "target",
    "class",
    "sample_size",
    "iterations",
    "mean",
    "median",
    "std",
];
pub const SWEEP_HEADER: &[&str] = &["metric", "source", "target", "class", "sample_size", "mean", "median", "std"];
pub const PROJECTION_HEADER: &[&str] = &["image_id", "x", "y", "dataset", "class"];
pub const PERFORMANCE_HEADER: &[&str] = &[
    "dataset",
    "class",
    "jsd_mean",
    "cosine_mean",
    "auroc",
    "auroc_drop",
    "balanced_accuracy_drop",
];

/// File names of every artifact the pipeline can emit, with their headers.
pub const CSV_ARTIFACTS: &[(&str, &[&str])] = &[
    ("group_table.csv", GROUP_TABLE_HEADER),
    ("stats.csv", STATS_HEADER),
    ("stats_summary.csv", STATS_SUMMARY_HEADER),
    ("divergence_iterations.csv", DIVERGENCE_HEADER),
    ("divergence_summary.csv", DIVERGENCE_SUMMARY_HEADER),
    ("sweep.csv", SWEEP_HEADER),
    ("projection.csv", PROJECTION_HEADER),
    ("performance.csv", PERFORMANCE_HEADER),
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn group_table(datasets: &[GroupedDataset]) -> Vec<u8> {
    csv_bytes(
        GROUP_TABLE_HEADER,
        datasets.iter().map(|g| {
            vec![
                g.abbrev.clone(),
                g.origin.to_string(),
                g.rule.to_string(),
                g.flags.biological_shift.to_string(),
                g.flags.technical_shift.to_string(),
                g.class_counts.melanoma.to_string(),
                g.class_counts.nevus.to_string(),
                g.total().to_string(),
            ]
        }),
    )
}

pub struct StatsRow<'a> {
    pub image_id: &'a str,
    pub class: LesionClass,
    pub dataset: &'a str,
    pub stats: ImageStatsRecord,
}

pub fn stats_csv(rows: &[StatsRow]) -> Vec<u8> {
    csv_bytes(
        STATS_HEADER,
        rows.iter().map(|r| {
            let mut v = vec![r.image_id.to_string(), r.class.to_string(), r.dataset.to_string()];
            v.extend(Property::ALL.iter().map(|&p| r.stats.get(p).to_string()));
            v
        }),
    )
}

pub fn stats_summary_csv(rows: &[(String, LesionClass, Property, BoxSummary)]) -> Vec<u8> {
    csv_bytes(
        STATS_SUMMARY_HEADER,
        rows.iter().map(|(dataset, class, prop, s)| {
            vec![
                dataset.clone(),
                class.to_string(),
                prop.name().to_string(),
                s.n.to_string(),
                s.min.to_string(),
                s.q1.to_string(),
                s.median.to_string(),
                s.q3.to_string(),
                s.max.to_string(),
                s.lower_fence.to_string(),
                s.upper_fence.to_string(),
            ]
        }),
    )
}

pub fn divergence_csv(summaries: &[DivergenceSummary]) -> Vec<u8> {
    csv_bytes(
        DIVERGENCE_HEADER,
        summaries.iter().flat_map(|s| {
            s.values.iter().enumerate().map(move |(k, v)| {
                vec![
                    s.metric.to_string(),
                    s.source.clone(),
                    s.target.clone(),
                    s.class.to_string(),
                    k.to_string(),
                    v.to_string(),
                ]
            })
        }),
    )
}

pub fn divergence_summary_csv(summaries: &[DivergenceSummary]) -> Vec<u8> {
    csv_bytes(
        DIVERGENCE_SUMMARY_HEADER,
        summaries.iter().map(|s| {
            vec![
                s.metric.to_string(),
                s.source.clone(),
                s.target.clone(),
                s.class.to_string(),
                s.sample_size.to_string(),
                s.values.len().to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.std.to_string(),
            ]
        }),
    )
}

pub fn sweep_csv(summaries: &[DivergenceSummary]) -> Vec<u8> {
    csv_bytes(
        SWEEP_HEADER,
        summaries.iter().map(|s| {
            vec![
                s.metric.to_string(),
                s.source.clone(),
                s.target.clone(),
                s.class.to_string(),
                s.sample_size.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.std.to_string(),
            ]
        }),
    )
}

pub struct ProjectionRow {
    pub image_id: String,
    pub xy: [f64; 2],
    pub dataset: String,
    pub class: LesionClass,
}

pub fn projection_csv(rows: &[ProjectionRow]) -> Vec<u8> {
    csv_bytes(
        PROJECTION_HEADER,
        rows.iter().map(|r| {
            vec![
                r.image_id.clone(),
                r.xy[0].to_string(),
                r.xy[1].to_string(),
                r.dataset.clone(),
                r.class.to_string(),
            ]
        }),
    )
}

pub fn performance_csv(table: &PerformanceTable) -> Vec<u8> {
    csv_bytes(
        PERFORMANCE_HEADER,
        table.rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.class.to_string(),
                opt(r.jsd_mean),
                opt(r.cosine_mean),
                opt(r.auroc),
                opt(r.auroc_drop),
                opt(r.balanced_accuracy_drop),
            ]
        }),
    )
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable report");
    out.push(b'\n');
    out
}

/// Checks the header and that every row has a value for each column.
pub fn validate_csv(bytes: &[u8], header: &[&str]) -> std::result::Result<usize, String> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let got = r.headers().map_err(|e| e.to_string())?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(format!("header {:?}, expected {:?}", got.iter().collect::<Vec<_>>(), header));
    }
    let mut n = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != header.len() {
            return Err(format!("row {} has {} fields", i + 2, rec.len()));
        }
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes artifacts under one directory, remembering their checksums.
pub struct ArtifactWriter {
    root: PathBuf,
    written: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        self.written.retain(|a| a.path != name);
        self.written.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.written
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Temp file plus rename, so readers never see a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

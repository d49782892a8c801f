//! Domain-shift analysis for dermoscopic image catalogs.
//!
//! The crate covers the whole primary pipeline:
//!
//! * [`metadata`] parses catalogs and maps raw localizations to buckets.
//! * [`grouping`] turns a catalog into age/localization/origin domains,
//!   drops small ones and splits the source into train and holdout.
//! * [`image_stats`] computes brightness, contrast, saturation, hue and blur.
//! * [`divergence`] estimates JSD and cosine similarity between datasets by
//!   bootstrap resampling.
//! * [`embedding`] and [`tsne`] read feature matrices and project them to 2-D.
//! * [`metrics`] evaluates prediction files and correlates shift with
//!   performance drop.
//! * [`synth`] generates corpora with known shifts for validation.

pub mod divergence;
pub mod embedding;
pub mod grouping;
pub mod image;
pub mod image_stats;
pub mod metadata;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod tsne;

pub use divergence::{BootstrapConfig, DivergenceSummary, Metric};
pub use embedding::EmbeddingMatrix;
pub use grouping::{GroupManifest, GroupedDataset, SplitSpec};
pub use image::RgbImage;
pub use metadata::{Catalog, LesionClass, LocalizationBucket, LocalizationMap, MetadataRecord, Origin};

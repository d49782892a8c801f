//! A synthetic multi-origin archive on disk.
//!
//! Every (origin, rule) group is its own corpus with an acquisition shift
//! whose intensity grows with the origin's offset plus the rule's offset,
//! so divergence from the source and the classifier's loss both follow one
//! knob. The world contains PNG images, a catalog, synthetic embeddings,
//! predictions from a centroid classifier fit on the source training split,
//! and a ready-to-run config.

use std::path::Path;

use image::ImageFormat;
use log::info;

use domshift_core::embedding::{write_embeddings, EmbeddingMatrix};
use domshift_core::grouping::GroupRule;
use domshift_core::image_stats::image_stats;
use domshift_core::metadata::{write_catalog, Catalog, LesionClass, Origin};
use domshift_core::rng::derive_seed;
use domshift_core::synth::{
    classifier_features, gen_corpus_with, synthetic_embedding, CentroidClassifier, RecordTemplate, ShiftSpec,
    SYNTH_RESOLUTION,
};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::pipeline::build_groups;
use crate::report::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub seed: u64,
    /// `(origin, shift offset)`; the first entry is the source.
    pub origins: Vec<(Origin, f64)>,
    /// Images per rule, in `GroupRule::LEAVES` order.
    pub sizes: [usize; 5],
    /// Shift offset per rule, in `GroupRule::LEAVES` order.
    pub rule_offsets: [f64; 5],
    pub min_total: usize,
    pub resolution: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 0,
            origins: vec![(Origin::Ham, 0.0), (Origin::Bcn, 1.0), (Origin::Msk, 2.0)],
            sizes: [200, 70, 60, 60, 40],
            rule_offsets: [0.0, 0.3, 0.5, 0.7, 0.9],
            min_total: 50,
            resolution: SYNTH_RESOLUTION,
        }
    }
}

/// Age and localization that the rule tree sends to `rule`.
fn template_for(rule: &GroupRule) -> (u16, &'static str) {
    use domshift_core::metadata::LocalizationBucket as B;
    if !rule.is_default() && rule.bucket.is_none() {
        return (22, "posterior torso");
    }
    match rule.bucket {
        Some(B::HeadNeck) => (55, "head/neck"),
        Some(B::PalmsSoles) => (55, "palms/soles"),
        Some(B::OralGenital) => (55, "oral/genital"),
        _ => (55, "anterior torso"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: PipelineConfig,
    pub images: usize,
    pub prediction_files: usize,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

/// Writes the world under `dir` and returns the config written to `dir/config.toml`.
pub fn write_world(spec: &WorldSpec, dir: &Path) -> Result<World> {
    if spec.origins.is_empty() {
        return Err(CliError::Usage("a synthetic world needs at least one origin".into()));
    }
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(io(&image_dir))?;

    let mut records = Vec::new();
    let mut images = Vec::new();
    for (oi, (origin, origin_offset)) in spec.origins.iter().enumerate() {
        for (li, rule) in GroupRule::LEAVES.iter().enumerate() {
            let n = spec.sizes[li];
            if n == 0 {
                continue;
            }
            let intensity = origin_offset + spec.rule_offsets[li];
            let group_seed = derive_seed(spec.seed, (oi * 8 + li) as u64);
            let (age, loc) = template_for(rule);
            let template = RecordTemplate {
                id_prefix: format!("syn_{}{}", origin.abbrev_prefix(), rule.suffix()).to_ascii_lowercase(),
                origin: origin.clone(),
                age_years: age,
                localization: loc.into(),
                melanoma_fraction: 0.4,
            };
            let shift = if intensity == 0.0 {
                ShiftSpec::identity()
            } else {
                ShiftSpec::acquisition(intensity, group_seed)
            };
            let corpus = gen_corpus_with(n, group_seed, &shift, &template, spec.resolution);
            records.extend(corpus.catalog.records().iter().cloned());
            images.extend(corpus.images);
        }
    }
    let catalog = Catalog::new(records, "synthetic")?;
    for (r, img) in catalog.records().iter().zip(&images) {
        let path = image_dir.join(format!("{}.png", r.image_id));
        let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("buffer matches dimensions");
        buf.save_with_format(&path, ImageFormat::Png)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    write_atomic(&dir.join("catalog.csv"), &write_catalog(&catalog))?;

    let stats: Vec<_> = images.iter().map(image_stats).collect();
    let ids: Vec<String> = catalog.records().iter().map(|r| r.image_id.clone()).collect();
    let rows: Vec<Vec<f64>> = ids
        .iter()
        .zip(&stats)
        .map(|(id, s)| synthetic_embedding(s, id, spec.seed))
        .collect();
    let emb = EmbeddingMatrix::from_rows(ids.clone(), &rows)?;
    write_atomic(&dir.join("embeddings.csv"), &write_embeddings(&emb))?;

    let config = PipelineConfig {
        catalogs: vec!["catalog.csv".into()],
        image_root: Some("images".into()),
        embeddings: Some("embeddings.csv".into()),
        predictions_dir: Some("predictions".into()),
        output_dir: "out".into(),
        source: spec.origins[0].0.abbrev_prefix(),
        seed: spec.seed,
        min_total: spec.min_total,
        threshold: 0.0,
        tsne_iterations: 500,
        tsne_max_points: 400,
        perplexity: 20.0,
        ..PipelineConfig::default()
    };
    std::fs::write(dir.join("config.toml"), config.to_toml()).map_err(io(dir))?;

    // predictions from a classifier fit on the same split the pipeline will make
    let mut anchored = config.clone();
    anchored.localization_map = None;
    let groups = build_groups(&catalog, &anchored)?;
    let index: std::collections::HashMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let features_of = |members: &[String]| -> (Vec<Vec<f64>>, Vec<LesionClass>) {
        members
            .iter()
            .map(|id| {
                let i = index[id.as_str()];
                let class = catalog.records()[i].class().expect("synthetic records have a class");
                (classifier_features(&stats[i]), class)
            })
            .unzip()
    };
    let (train_x, train_y) = features_of(&groups.datasets[0].member_ids);
    let clf = CentroidClassifier::fit(&train_x, &train_y);
    let pred_dir = dir.join("predictions");
    std::fs::create_dir_all(&pred_dir).map_err(io(&pred_dir))?;
    for d in &groups.datasets[1..] {
        let (x, y) = features_of(&d.member_ids);
        let preds = clf.predict(&d.member_ids, &x, &y);
        write_atomic(&pred_dir.join(format!("{}.csv", d.abbrev)), &preds.to_csv())?;
    }
    info!(
        "synthetic world: {} images, {} datasets, {} removed",
        catalog.len(),
        groups.datasets.len(),
        groups.removed.len()
    );
    Ok(World {
        config,
        images: catalog.len(),
        prediction_files: groups.datasets.len() - 1,
    })
}

//! Synthetic dermoscopy-like corpora with controlled acquisition shifts.
//!
//! Base images are procedural: a shaded skin-tone field with one pigmented
//! blob. Melanoma blobs are larger, darker and more irregular than nevus
//! blobs. A [`ShiftSpec`] is then applied per pixel (hue rotation, contrast
//! scaling about mid-gray, brightness offset, Gaussian noise). Corpora built
//! from the same base seed share their base images, so two corpora differ
//! only by the shift.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::divergence::{
    bootstrap_divergence, histogram, BootstrapConfig, CellKey, DivergenceError, DivergenceSummary,
    ItemSet, Metric, PixelHistogram,
};
use crate::image::RgbImage;
use crate::image_stats::{image_stats, pixel_to_hsv, ImageStatsRecord};
use crate::metadata::{Catalog, Diagnosis, LesionClass, MetadataRecord, Origin};
use crate::metrics::PredictionSet;
use crate::rng::{keyed_hash, stream};

pub const SYNTH_RESOLUTION: usize = 64;
/// Dimensions of Gaussian noise appended to synthetic embeddings.
pub const EMBEDDING_NOISE_DIMS: usize = 4;
pub const EMBEDDING_NOISE_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Added to every channel, in `[-0.5, 0.5]` of full scale.
    pub brightness_offset: f64,
    /// Multiplies deviations from mid-gray; must be positive.
    pub contrast_scale: f64,
    pub hue_rotation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ShiftSpec {
    pub fn identity() -> Self {
        ShiftSpec {
            brightness_offset: 0.0,
            contrast_scale: 1.0,
            hue_rotation: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn brightness(offset: f64) -> Self {
        ShiftSpec {
            brightness_offset: offset,
            ..Self::identity()
        }
    }

    /// A mixed acquisition shift whose every component grows with `intensity`.
    pub fn acquisition(intensity: f64, seed: u64) -> Self {
        ShiftSpec {
            brightness_offset: (0.15 * intensity).clamp(-0.5, 0.5),
            contrast_scale: 1.0 / (1.0 + 0.4 * intensity),
            hue_rotation: 12.0 * intensity,
            noise_sigma: 0.05 * intensity,
            seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.brightness_offset == 0.0
            && self.contrast_scale == 1.0
            && self.hue_rotation.rem_euclid(360.0) == 0.0
            && self.noise_sigma == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(-0.5..=0.5).contains(&self.brightness_offset) {
            return Err(format!("brightness_offset {} outside [-0.5, 0.5]", self.brightness_offset));
        }
        if !(self.contrast_scale > 0.0) || !self.contrast_scale.is_finite() {
            return Err(format!("contrast_scale {} must be positive", self.contrast_scale));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        if !self.hue_rotation.is_finite() {
            return Err("hue_rotation must be finite".into());
        }
        Ok(())
    }
}

/// Metadata stamped onto every record of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTemplate {
    pub id_prefix: String,
    pub origin: Origin,
    pub age_years: u16,
    pub localization: String,
    pub melanoma_fraction: f64,
}

impl Default for RecordTemplate {
    fn default() -> Self {
        RecordTemplate {
            id_prefix: "syn".into(),
            origin: Origin::Ham,
            age_years: 50,
            localization: "anterior torso".into(),
            melanoma_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub images: Vec<RgbImage>,
    pub catalog: Catalog,
    pub applied: ShiftSpec,
}

impl SynthCorpus {
    pub fn image_ids(&self) -> impl Iterator<Item = &String> {
        self.catalog.records().iter().map(|r| &r.image_id)
    }

    /// Images of one class, in corpus order.
    pub fn class_images(&self, class: LesionClass) -> Vec<&RgbImage> {
        self.catalog
            .records()
            .iter()
            .zip(&self.images)
            .filter(|(r, _)| r.class() == Some(class))
            .map(|(_, img)| img)
            .collect()
    }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Float RGB in `[0, 1]`, row-major.
fn base_image(rng: &mut ChaCha8Rng, class: LesionClass, size: usize) -> Vec<[f64; 3]> {
    let melanoma = class == LesionClass::Melanoma;
    let skin_r = rng.random_range(0.74..0.88);
    let skin = [
        skin_r,
        skin_r * rng.random_range(0.70..0.80),
        skin_r * rng.random_range(0.55..0.68),
    ];
    let (fx, fy) = (rng.random_range(0.03..0.12), rng.random_range(0.03..0.12));
    let (phx, phy) = (rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
    let c = size as f64 / 2.0;
    let (cx, cy) = (c + rng.random_range(-4.0..4.0), c + rng.random_range(-4.0..4.0));
    let scale = size as f64 / 64.0;
    let radius = scale * if melanoma { rng.random_range(12.0..19.0) } else { rng.random_range(8.0..13.0) };
    let aspect = rng.random_range(0.8..1.2);
    let irregular = if melanoma { rng.random_range(0.12..0.25) } else { rng.random_range(0.0..0.06) };
    let lobes = rng.random_range(3..7) as f64;
    let lobe_phase = rng.random_range(0.0..6.3);
    let shade = rng.random_range(0.9..1.1);
    let pigment = if melanoma {
        [0.30 * shade, 0.18 * shade, 0.13 * shade]
    } else {
        [0.55 * shade, 0.37 * shade, 0.24 * shade]
    };
    let veil = if melanoma { rng.random_range(0.2..0.5) } else { 0.0 };
    let texture = Normal::new(0.0, 0.012).expect("valid sigma");

    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let light = 1.0 + 0.06 * (fx * xf + phx).sin() * (fy * yf + phy).cos();
            let (dx, dy) = (xf - cx, (yf - cy) * aspect);
            let r = (dx * dx + dy * dy).sqrt();
            let theta = dy.atan2(dx);
            let edge = radius * (1.0 + irregular * (lobes * theta + lobe_phase).sin());
            let alpha = 1.0 - smoothstep(edge - 1.5 * scale, edge + 1.5 * scale, r);
            // blue-gray veil patches inside melanoma blobs
            let v = veil * (0.5 + 0.5 * (0.35 * xf + lobe_phase).sin() * (0.3 * yf).cos());
            let lesion = [
                pigment[0] * (1.0 - v) + 0.35 * v,
                pigment[1] * (1.0 - v) + 0.38 * v,
                pigment[2] * (1.0 - v) + 0.45 * v,
            ];
            let mut px = [0.0; 3];
            for ch in 0..3 {
                let base = skin[ch] * light * (1.0 - alpha) + lesion[ch] * alpha;
                px[ch] = (base + texture.sample(rng)).clamp(0.0, 1.0);
            }
            out.push(px);
        }
    }
    out
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn rotate_hue(px: [f64; 3], degrees: f64) -> [f64; 3] {
    let max = px[0].max(px[1]).max(px[2]);
    let min = px[0].min(px[1]).min(px[2]);
    if max == min {
        return px;
    }
    let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    let (h, _, _) = pixel_to_hsv([to_u8(px[0]), to_u8(px[1]), to_u8(px[2])]);
    let s = (max - min) / max;
    hsv_to_rgb(h + degrees, s, max)
}

fn quantize(px: &[[f64; 3]], size: usize) -> RgbImage {
    let data = px
        .iter()
        .flat_map(|p| p.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
        .collect();
    RgbImage::new(size, size, data).expect("square synthetic image")
}

/// Applies `shift` to a quantized image. Neutral components are skipped, so
/// the identity shift returns the input unchanged.
pub fn apply_shift(img: &RgbImage, shift: &ShiftSpec, noise_stream: u64) -> RgbImage {
    if shift.is_identity() {
        return img.clone();
    }
    let mut rng = stream(shift.seed, noise_stream);
    let noise = (shift.noise_sigma > 0.0).then(|| Normal::new(0.0, shift.noise_sigma).expect("valid sigma"));
    let data = img
        .pixels()
        .flat_map(|p| {
            let mut px = p.map(|v| v as f64 / 255.0);
            if shift.hue_rotation.rem_euclid(360.0) != 0.0 {
                px = rotate_hue(px, shift.hue_rotation);
            }
            for v in px.iter_mut() {
                if shift.contrast_scale != 1.0 {
                    *v = 0.5 + (*v - 0.5) * shift.contrast_scale;
                }
                *v += shift.brightness_offset;
                if let Some(n) = &noise {
                    *v += n.sample(&mut rng);
                }
            }
            px.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    RgbImage::new(img.width(), img.height(), data).expect("same shape")
}

pub fn gen_corpus(n: usize, base_seed: u64, shift: &ShiftSpec) -> SynthCorpus {
    gen_corpus_with(n, base_seed, shift, &RecordTemplate::default(), SYNTH_RESOLUTION)
}

/// Generates `n` images and their catalog. Image `i` depends only on
/// `(base_seed, i)` before the shift and `(shift.seed, base_seed, i)` for
/// the shift noise.
pub fn gen_corpus_with(
    n: usize,
    base_seed: u64,
    shift: &ShiftSpec,
    template: &RecordTemplate,
    size: usize,
) -> SynthCorpus {
    let mut images = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(base_seed, i as u64);
        let class = if rng.random::<f64>() < template.melanoma_fraction {
            LesionClass::Melanoma
        } else {
            LesionClass::Nevus
        };
        let base = quantize(&base_image(&mut rng, class, size), size);
        images.push(apply_shift(&base, shift, keyed_hash(base_seed, &i.to_string())));
        records.push(MetadataRecord {
            image_id: format!("{}_{i:05}", template.id_prefix),
            lesion_id: None,
            diagnosis: match class {
                LesionClass::Melanoma => Diagnosis::Melanoma,
                LesionClass::Nevus => Diagnosis::Nevus,
            },
            age_years: Some(template.age_years),
            localization_raw: template.localization.clone(),
            origin: template.origin.clone(),
            sex: None,
        });
    }
    SynthCorpus {
        images,
        catalog: Catalog::new(records, template.id_prefix.clone()).expect("generated ids are unique"),
        applied: *shift,
    }
}

/// Model-free embedding: centred image statistics followed by seeded noise.
///
/// The leading constant keeps every vector away from the origin so that
/// cosine similarity responds to the statistics rather than to noise.
pub fn synthetic_embedding(stats: &ImageStatsRecord, image_id: &str, seed: u64) -> Vec<f64> {
    let mut v = vec![
        1.0,
        4.0 * (stats.brightness - 0.5),
        4.0 * (stats.rms_contrast - 0.15),
        4.0 * (stats.saturation - 0.4),
        (1.0 + stats.blur * 100.0).ln(),
    ];
    let mut rng = stream(seed, keyed_hash(seed, image_id));
    let noise = Normal::new(0.0, EMBEDDING_NOISE_SIGMA).expect("valid sigma");
    v.extend((0..EMBEDDING_NOISE_DIMS).map(|_| noise.sample(&mut rng)));
    v
}

/// Feature vector used by [`CentroidClassifier`].
pub fn classifier_features(stats: &ImageStatsRecord) -> Vec<f64> {
    vec![
        stats.brightness,
        stats.rms_contrast,
        stats.saturation,
        (1.0 + stats.blur * 100.0).ln(),
    ]
}

/// Standardized nearest-centroid melanoma scorer fit on source images.
///
/// Stands in for a trained classifier in synthetic end-to-end runs: fit on
/// source features, its ranking quality degrades as target images drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    melanoma: Vec<f64>,
    nevus: Vec<f64>,
}

impl CentroidClassifier {
    /// Panics unless both classes are present.
    pub fn fit(features: &[Vec<f64>], classes: &[LesionClass]) -> Self {
        let d = features[0].len();
        let n = features.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| features.iter().map(|f| f[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| {
                let var = features.iter().map(|f| (f[k] - mean[k]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(1e-12)
            })
            .collect();
        let centroid = |class: LesionClass| {
            let members: Vec<&Vec<f64>> = features
                .iter()
                .zip(classes)
                .filter(|(_, &c)| c == class)
                .map(|(f, _)| f)
                .collect();
            assert!(!members.is_empty(), "no {class} samples");
            (0..d)
                .map(|k| members.iter().map(|f| (f[k] - mean[k]) / scale[k]).sum::<f64>() / members.len() as f64)
                .collect::<Vec<f64>>()
        };
        CentroidClassifier {
            melanoma: centroid(LesionClass::Melanoma),
            nevus: centroid(LesionClass::Nevus),
            mean,
            scale,
        }
    }

    /// Higher means more melanoma-like.
    pub fn score(&self, features: &[f64]) -> f64 {
        let (mut dm, mut dn) = (0.0, 0.0);
        for k in 0..features.len() {
            let z = (features[k] - self.mean[k]) / self.scale[k];
            dm += (z - self.melanoma[k]).powi(2);
            dn += (z - self.nevus[k]).powi(2);
        }
        dn - dm
    }

    pub fn predict(&self, ids: &[String], features: &[Vec<f64>], classes: &[LesionClass]) -> PredictionSet {
        PredictionSet {
            entries: ids
                .iter()
                .zip(features)
                .zip(classes)
                .map(|((id, f), &c)| crate::metrics::Prediction {
                    id: id.clone(),
                    score: self.score(f),
                    label: u8::from(c == LesionClass::Melanoma),
                })
                .collect(),
        }
    }
}

/// Compares a base corpus with brightness-shifted copies of itself.
///
/// Returns one bootstrap summary per delta for the given class. `deltas`
/// must be ascending and contain 0.
pub fn monotonicity_experiment(
    metric: Metric,
    deltas: &[f64],
    n: usize,
    base_seed: u64,
    class: LesionClass,
    cfg: &BootstrapConfig,
) -> Result<Vec<(f64, DivergenceSummary)>, DivergenceError> {
    if deltas.is_empty() || !deltas.contains(&0.0) || deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(DivergenceError::InvalidConfig("deltas must be ascending and include 0".into()));
    }
    let base = gen_corpus(n, base_seed, &ShiftSpec::identity());
    let base_items = class_items(&base, class, metric, cfg.seed);
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let shifted = gen_corpus(n, base_seed, &ShiftSpec::brightness(delta));
        let items = class_items(&shifted, class, metric, cfg.seed);
        let key = CellKey::new("base", format!("delta={delta}"), class);
        let summary = match (&base_items, &items) {
            (ClassItems::Hist(a), ClassItems::Hist(b)) => {
                bootstrap_divergence(&ItemSet::Histograms(a), &ItemSet::Histograms(b), &key, cfg)?
            }
            (ClassItems::Emb(a), ClassItems::Emb(b)) => {
                bootstrap_divergence(&ItemSet::Embeddings(a), &ItemSet::Embeddings(b), &key, cfg)?
            }
            _ => unreachable!("same metric on both sides"),
        };
        out.push((delta, summary));
    }
    Ok(out)
}

/// Owned per-class inputs for either metric.
#[derive(Debug, Clone)]
pub enum ClassItems {
    Hist(Vec<PixelHistogram>),
    Emb(Vec<Vec<f64>>),
}

impl ClassItems {
    pub fn as_item_set(&self) -> ItemSet<'_> {
        match self {
            ClassItems::Hist(h) => ItemSet::Histograms(h),
            ClassItems::Emb(e) => ItemSet::Embeddings(e),
        }
    }
}

/// Histograms or synthetic embeddings of one class of a corpus.
pub fn class_items(corpus: &SynthCorpus, class: LesionClass, metric: Metric, embed_seed: u64) -> ClassItems {
    let pairs = corpus
        .catalog
        .records()
        .iter()
        .zip(&corpus.images)
        .filter(|(r, _)| r.class() == Some(class));
    match metric {
        Metric::Jsd => ClassItems::Hist(pairs.map(|(_, img)| histogram(img)).collect()),
        Metric::Cosine => ClassItems::Emb(
            pairs
                .map(|(r, img)| synthetic_embedding(&image_stats(img), &r.image_id, embed_seed))
                .collect(),
        ),
    }
}

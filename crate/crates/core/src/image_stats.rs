//! Per-image technical properties and box-plot summaries.
//!
//! All properties are computed in HSV space with V in `[0, 1]`:
//! brightness is the mean of V, RMS contrast the population standard
//! deviation of V, saturation the mean of S, hue the circular mean of H over
//! chromatic pixels, and blur the population variance of the 4-neighbour
//! Laplacian of V (border pixels replicated).

use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grouping::GroupedDataset;
use crate::image::RgbImage;
use crate::metadata::{Catalog, LesionClass};
use crate::rng::stream;

pub const DEFAULT_SAMPLE_PER_CLASS: usize = 450;

/// Quartile convention used by [`summarize`], reported alongside results.
pub const QUARTILE_METHOD: &str = "linear interpolation between order statistics, inclusive (Hyndman-Fan type 7)";
pub const HUE_METHOD: &str = "circular mean over pixels with S > 0";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("cannot summarize an empty set")]
    EmptyInput,
    #[error("group {group} has no {class} members")]
    EmptyClass { group: String, class: LesionClass },
}

/// HSV planes: hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvPlanes {
    pub width: usize,
    pub height: usize,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

/// Hexcone conversion of a single pixel.
pub fn pixel_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max as f64 / 255.0;
    if max == min {
        return (0.0, 0.0, v);
    }
    let delta = (max - min) as f64;
    let s = delta / max as f64;
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let h = if max as f64 == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max as f64 == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

pub fn rgb_to_hsv(img: &RgbImage) -> HsvPlanes {
    let n = img.pixel_count();
    let (mut h, mut s, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for p in img.pixels() {
        let (ph, ps, pv) = pixel_to_hsv(p);
        h.push(ph);
        s.push(ps);
        v.push(pv);
    }
    HsvPlanes {
        width: img.width(),
        height: img.height(),
        h,
        s,
        v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageStatsRecord {
    pub brightness: f64,
    pub rms_contrast: f64,
    pub saturation: f64,
    pub hue: f64,
    pub blur: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Brightness,
    RmsContrast,
    Saturation,
    Hue,
    Blur,
}

impl Property {
    pub const ALL: [Property; 5] = [
        Property::Brightness,
        Property::RmsContrast,
        Property::Saturation,
        Property::Hue,
        Property::Blur,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Property::Brightness => "brightness",
            Property::RmsContrast => "rms_contrast",
            Property::Saturation => "saturation",
            Property::Hue => "hue",
            Property::Blur => "blur",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ImageStatsRecord {
    pub fn get(&self, p: Property) -> f64 {
        match p {
            Property::Brightness => self.brightness,
            Property::RmsContrast => self.rms_contrast,
            Property::Saturation => self.saturation,
            Property::Hue => self.hue,
            Property::Blur => self.blur,
        }
    }
}

// Both accumulate deviations from the first value, so constant input
// yields its value and zero variance exactly.
fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

fn population_variance(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    let n = xs.len() as f64;
    let m = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    xs.iter().map(|x| (x - x0 - m) * (x - x0 - m)).sum::<f64>() / n
}

/// 4-neighbour Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]` with replicated borders.
pub fn laplacian(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, width as isize - 1) as usize;
        let y = y.clamp(0, height as isize - 1) as usize;
        plane[y * width + x]
    };
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            out.push(at(x, y - 1) + at(x - 1, y) + at(x + 1, y) + at(x, y + 1) - 4.0 * at(x, y));
        }
    }
    out
}

/// Circular mean of angles in degrees, mapped to `[0, 360)`. `None` when empty or balanced.
pub fn circular_mean_deg(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        let r = a.to_radians();
        s += r.sin();
        c += r.cos();
        n += 1;
    }
    if n == 0 || (s.abs() < 1e-12 && c.abs() < 1e-12) {
        return None;
    }
    let deg = s.atan2(c).to_degrees().rem_euclid(360.0);
    Some(if deg >= 360.0 { 0.0 } else { deg })
}

pub fn image_stats(img: &RgbImage) -> ImageStatsRecord {
    let hsv = rgb_to_hsv(img);
    let brightness = mean(&hsv.v);
    let rms_contrast = population_variance(&hsv.v).sqrt();
    let saturation = mean(&hsv.s);
    let hue = circular_mean_deg(
        hsv.h
            .iter()
            .zip(&hsv.s)
            .filter(|(_, &s)| s > 0.0)
            .map(|(&h, _)| h),
    )
    .unwrap_or(0.0);
    let blur = population_variance(&laplacian(&hsv.v, hsv.width, hsv.height));
    ImageStatsRecord {
        brightness,
        rms_contrast,
        saturation,
        hue,
        blur,
    }
}

/// Five-number summary with Tukey fences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub n: usize,
    pub outliers_excluded: bool,
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Box-plot summary of raw values.
///
/// Quartiles always use every value. With `exclude_outliers`, `min`/`max`
/// are the most extreme values inside the 1.5 IQR fences (the whisker ends).
pub fn summarize_values(values: &[f64], exclude_outliers: bool) -> Result<BoxSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lower_fence = q1 - 1.5 * iqr;
    let upper_fence = q3 + 1.5 * iqr;
    let (min, max) = if exclude_outliers {
        let inside = || sorted.iter().copied().filter(|&v| v >= lower_fence && v <= upper_fence);
        // q1 and q3 lie inside the fences, so at least one value qualifies.
        let lo = inside().next().unwrap_or(q1).min(q1);
        let hi = inside().next_back().unwrap_or(q3).max(q3);
        (lo, hi)
    } else {
        (sorted[0], sorted[sorted.len() - 1])
    };
    Ok(BoxSummary {
        min,
        q1,
        median,
        q3,
        max,
        lower_fence,
        upper_fence,
        n: values.len(),
        outliers_excluded: exclude_outliers,
    })
}

pub fn summarize(
    records: &[ImageStatsRecord],
    property: Property,
    exclude_outliers: bool,
) -> Result<BoxSummary, StatsError> {
    let values: Vec<f64> = records.iter().map(|r| r.get(property)).collect();
    summarize_values(&values, exclude_outliers)
}

/// Seeded sample without replacement of up to `n` members of `class`, in member order.
pub fn sample_per_class(
    group: &GroupedDataset,
    catalog: &Catalog,
    class: LesionClass,
    n: usize,
    seed: u64,
) -> Result<Vec<String>, StatsError> {
    let members: Vec<&String> = group.members_of(catalog, class).collect();
    if members.is_empty() {
        return Err(StatsError::EmptyClass {
            group: group.abbrev.clone(),
            class,
        });
    }
    if members.len() <= n {
        return Ok(members.into_iter().cloned().collect());
    }
    let mut rng = stream(seed, class as u64);
    let mut picked = index::sample(&mut rng, members.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| members[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hsv_reference_pixels() {
        assert_eq!(pixel_to_hsv([255, 0, 0]), (0.0, 1.0, 1.0));
        let (h, s, v) = pixel_to_hsv([128, 128, 128]);
        assert_eq!((h, s), (0.0, 0.0));
        assert_abs_diff_eq!(v, 128.0 / 255.0);
        let (h, s, v) = pixel_to_hsv([64, 128, 192]);
        assert_abs_diff_eq!(h, 210.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 192.0 / 255.0);
        // magenta-ish wraps negative hue into [0, 360)
        let (h, _, _) = pixel_to_hsv([255, 0, 10]);
        assert!(h > 357.0 && h < 360.0);
    }

    #[test]
    fn constant_gray_image() {
        let img = RgbImage::filled(7, 5, [128, 128, 128]).unwrap();
        let st = image_stats(&img);
        assert_abs_diff_eq!(st.brightness, 128.0 / 255.0, epsilon = 1e-15);
        assert_eq!(st.rms_contrast, 0.0);
        assert_eq!(st.blur, 0.0);
        assert_eq!(st.saturation, 0.0);
        assert_eq!(st.hue, 0.0);
    }

    #[test]
    fn two_pixel_contrast() {
        let img = RgbImage::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let st = image_stats(&img);
        assert_abs_diff_eq!(st.brightness, 0.5);
        assert_abs_diff_eq!(st.rms_contrast, 0.5);
    }

    #[test]
    fn checkerboard_blur_matches_direct_convolution() {
        let img = RgbImage::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { [255; 3] } else { [0; 3] })
            .unwrap();
        // Direct evaluation of the kernel with clamped coordinates.
        let v = |x: i32, y: i32| -> f64 {
            let (x, y) = (x.clamp(0, 3), y.clamp(0, 3));
            if (x + y) % 2 == 0 { 1.0 } else { 0.0 }
        };
        let mut resp = Vec::new();
        for y in 0..4 {
            for x in 0..4 {
                let mut acc = 0.0;
                for (dx, dy, w) in [(0, -1, 1.0), (-1, 0, 1.0), (0, 0, -4.0), (1, 0, 1.0), (0, 1, 1.0)] {
                    acc += w * v(x + dx, y + dy);
                }
                resp.push(acc);
            }
        }
        let m = resp.iter().sum::<f64>() / 16.0;
        let var = resp.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 16.0;
        // Interior cells respond with +-4, edge/corner cells with +-3/+-2.
        assert_abs_diff_eq!(image_stats(&img).blur, var, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 9.5, epsilon = 1e-12);
    }

    #[test]
    fn hue_uses_circular_mean() {
        // 350 deg and 10 deg average to 0, not 180.
        let a = [255u8, 0, 43]; // ~350
        let b = [255u8, 43, 0]; // ~10
        let img = RgbImage::new(2, 1, [a, b].concat()).unwrap();
        let h = image_stats(&img).hue;
        assert!(!(1.0..359.0).contains(&h), "hue {h}");
    }

    #[test]
    fn quartiles_one_to_nine() {
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let b = summarize_values(&v, false).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 3.0, 5.0, 7.0, 9.0));
        assert_eq!((b.lower_fence, b.upper_fence), (-3.0, 13.0));
    }

    #[test]
    fn single_value_summary() {
        let b = summarize_values(&[0.42], true).unwrap();
        for x in [b.min, b.q1, b.median, b.q3, b.max] {
            assert_eq!(x, 0.42);
        }
    }

    #[test]
    fn outlier_excluded_from_max() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let b = summarize_values(&v, true).unwrap();
        assert_eq!(b.max, 9.0);
        assert!(b.outliers_excluded);
        assert_eq!(summarize_values(&v, false).unwrap().max, 100.0);
    }

    #[test]
    fn empty_summary_errors() {
        assert_eq!(summarize(&[], Property::Blur, false), Err(StatsError::EmptyInput));
    }
}

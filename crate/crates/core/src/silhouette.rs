//! Silhouette extraction: grayscale, local max normalization, Otsu threshold,
//! morphological opening, largest connected component and hole filling.

use std::collections::VecDeque;

use rayon::prelude::*;
use thiserror::Error;

use crate::image::{BinaryMask, GrayImage, RgbImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SilhouetteError {
    #[error("segmentation produced an empty silhouette")]
    EmptySilhouette,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        }
    }
}

/// Structuring element for binary morphology. Offsets are cell − anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: u32,
    height: u32,
    cells: Vec<bool>,
    anchor: (u32, u32),
}

impl StructuringElement {
    pub fn new(width: u32, height: u32, cells: Vec<bool>, anchor: (u32, u32)) -> Result<Self, SilhouetteError> {
        if cells.len() != width as usize * height as usize {
            return Err(SilhouetteError::Config("structuring element size mismatch".into()));
        }
        if anchor.0 >= width || anchor.1 >= height {
            return Err(SilhouetteError::Config("anchor outside structuring element".into()));
        }
        if !cells.iter().any(|&c| c) {
            return Err(SilhouetteError::Config("structuring element has no cells".into()));
        }
        Ok(Self { width, height, cells, anchor })
    }

    /// Full `n`×`n` square anchored at its center.
    pub fn square(n: u32) -> Result<Self, SilhouetteError> {
        if n == 0 || n.is_multiple_of(2) {
            return Err(SilhouetteError::Config(format!("square size must be odd and ≥1, got {n}")));
        }
        Self::new(n, n, vec![true; (n * n) as usize], (n / 2, n / 2))
    }

    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cells[(y * self.width + x) as usize] {
                    out.push((x as i64 - self.anchor.0 as i64, y as i64 - self.anchor.1 as i64));
                }
            }
        }
        out
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::square(3).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Side of the normalization window (odd).
    pub window: u32,
    pub se: StructuringElement,
    pub connectivity: Connectivity,
    /// Baseline mode: grayscale + Otsu only.
    pub naive: bool,
    /// Invert grayscale so a dark object on a bright background becomes bright.
    pub invert: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window: 3,
            se: StructuringElement::default(),
            connectivity: Connectivity::Eight,
            naive: false,
            invert: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), SilhouetteError> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(SilhouetteError::Config(format!("window must be odd and ≥1, got {}", self.window)));
        }
        Ok(())
    }
}

/// Luma conversion with 0.299/0.587/0.114 weights.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img.data().iter().map(|&px| luma(px)).collect();
    GrayImage::new(img.width(), img.height(), data).unwrap()
}

#[inline]
pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8
}

pub fn invert(img: &GrayImage) -> GrayImage {
    let data = img.data().iter().map(|&v| 255 - v).collect();
    GrayImage::new(img.width(), img.height(), data).unwrap()
}

/// Divides each pixel by the maximum of the `window`×`window` neighborhood
/// centered on it (clipped at the borders) and rescales to [0, 255].
/// A zero maximum yields zero.
pub fn normalize_local(img: &GrayImage, window: u32) -> GrayImage {
    assert!(window % 2 == 1, "window must be odd");
    let (w, h) = (img.width() as usize, img.height() as usize);
    let r = (window / 2) as usize;
    let src = img.data();

    // Separable max filter: rows, then columns.
    let mut row_max = vec![0u8; w * h];
    row_max.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let row = &src[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            *o = *row[lo..=hi].iter().max().unwrap();
        }
    });
    let mut out = vec![0u8; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for (x, o) in dst.iter_mut().enumerate() {
            let m = (lo..=hi).map(|yy| row_max[yy * w + x]).max().unwrap();
            let p = src[y * w + x];
            *o = if m == 0 { 0 } else { (255.0 * p as f64 / m as f64).round() as u8 };
        }
    });
    GrayImage::new(img.width(), img.height(), out).unwrap()
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    hist
}

/// Otsu threshold of an image; class 0 is pixels ≤ t.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    otsu_threshold_hist(&histogram(img))
}

/// Otsu threshold from a 256-bin histogram. Maximizes ω₀ω₁(μ₀−μ₁)² with the
/// smallest t winning ties. A single-valued histogram returns that value.
pub fn otsu_threshold_hist(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    assert!(total > 0, "empty histogram");
    let occupied: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    if occupied.len() == 1 {
        return occupied[0] as u8;
    }
    // Integer moments keep the comparison exact; the score below is
    // n²·σ_b² = (n·s₀ − n₀·s)² · n₀n₁ / (n₀n₁)², compared as a rational.
    let n = total as u128;
    let s: u128 = (0..256).map(|i| hist[i] as u128 * i as u128).sum();
    let mut n0: u128 = 0;
    let mut s0: u128 = 0;
    let mut best_t = 0usize;
    // best = num/den with num = (n·s₀ − n₀·s)², den = n₀·n₁
    let mut best: Option<(u128, u128)> = None;
    for t in 0..256 {
        n0 += hist[t] as u128;
        s0 += hist[t] as u128 * t as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n * s0).abs_diff(n0 * s);
        let num = diff * diff;
        let den = n0 * n1;
        let better = match best {
            None => true,
            Some((bn, bd)) => ratio_gt(num, den, bn, bd),
        };
        if better {
            best = Some((num, den));
            best_t = t;
        }
    }
    best_t as u8
}

/// a/b > c/d for non-negative integers, without overflow.
fn ratio_gt(a: u128, b: u128, c: u128, d: u128) -> bool {
    // Compare a·d with c·b using 256-bit products split into halves.
    mul_wide(a, d) > mul_wide(c, b)
}

fn mul_wide(x: u128, y: u128) -> (u128, u128) {
    let mask = u64::MAX as u128;
    let (x0, x1) = (x & mask, x >> 64);
    let (y0, y1) = (y & mask, y >> 64);
    let p00 = x0 * y0;
    let p01 = x0 * y1;
    let p10 = x1 * y0;
    let p11 = x1 * y1;
    let mid = (p00 >> 64) + (p01 & mask) + (p10 & mask);
    let lo = (p00 & mask) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// Foreground iff pixel > t.
pub fn threshold_apply(img: &GrayImage, t: u8) -> BinaryMask {
    let data = img.data().iter().map(|&v| v > t).collect();
    BinaryMask::new(img.width(), img.height(), data).unwrap()
}

/// Out-of-bounds neighbors count as background.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offsets = se.offsets();
    let w = mask.width();
    let mut out = BinaryMask::filled(mask.width(), mask.height(), false);
    out.data_mut().par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let (x, y) = (x as i64, y as i64);
            *o = offsets.iter().all(|&(dx, dy)| mask.get_or_false(x + dx, y + dy));
        }
    });
    out
}

/// Union of the element translated to every foreground pixel; out-of-bounds
/// targets are dropped.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offsets = se.offsets();
    let w = mask.width();
    let mut out = BinaryMask::filled(mask.width(), mask.height(), false);
    // out[p] = ∃ b: mask[p − b]
    out.data_mut().par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let (x, y) = (x as i64, y as i64);
            *o = offsets.iter().any(|&(dx, dy)| mask.get_or_false(x - dx, y - dy));
        }
    });
    out
}

/// Opening: erosion followed by dilation with the same element.
pub fn morph_open(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Component id per pixel (`u32::MAX` for background) and component sizes,
/// numbered in row-major order of each component's first pixel.
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![u32::MAX; mask.data().len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if !mask.data()[start] || labels[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if mask.data()[j] && labels[j] == u32::MAX {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest connected component; ties go to the component
/// whose first pixel comes first in row-major order.
pub fn largest_component(mask: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let (labels, sizes) = label_components(mask, conn);
    let mut out = BinaryMask::filled(mask.width(), mask.height(), false);
    let Some(best) = sizes.iter().enumerate().fold(None, |acc: Option<(usize, usize)>, (i, &s)| match acc {
        Some((_, bs)) if bs >= s => acc,
        _ => Some((i, s)),
    }) else {
        return out;
    };
    for (o, &l) in out.data_mut().iter_mut().zip(&labels) {
        *o = l == best.0 as u32;
    }
    out
}

/// Background pixels not 4-connected to the image border become foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let data = mask.data();
    let mut outside = vec![false; data.len()];
    let mut queue = VecDeque::new();
    let seed = |x: i64, y: i64, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = (y * w + x) as usize;
        if !data[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i as i64) % w, (i as i64) / w);
        for &(dx, dy) in Connectivity::Four.offsets() {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                seed(nx, ny, &mut outside, &mut queue);
            }
        }
    }
    let out = outside.iter().map(|&o| !o).collect();
    BinaryMask::new(mask.width(), mask.height(), out).unwrap()
}

/// Full silhouette chain for one view. In naive mode only grayscale
/// conversion and Otsu thresholding are applied.
pub fn extract_silhouette(img: &RgbImage, cfg: &PreprocessConfig) -> Result<BinaryMask, SilhouetteError> {
    cfg.validate()?;
    let mut gray = to_grayscale(img);
    if cfg.invert {
        gray = invert(&gray);
    }
    let mask = if cfg.naive {
        threshold_apply(&gray, otsu_threshold(&gray))
    } else {
        let norm = normalize_local(&gray, cfg.window);
        let binary = threshold_apply(&norm, otsu_threshold(&norm));
        let opened = morph_open(&binary, &cfg.se);
        fill_holes(&largest_component(&opened, cfg.connectivity))
    };
    if mask.is_empty_mask() {
        return Err(SilhouetteError::EmptySilhouette);
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        BinaryMask::from_fn(w, h, |x, y| rows[y as usize].as_bytes()[x as usize] == b'#')
    }

    #[test]
    fn grayscale_weights() {
        assert_eq!(luma([255, 255, 255]), 255);
        assert_eq!(luma([0, 0, 0]), 0);
        assert_eq!(luma([255, 0, 0]), 76);
        assert_eq!(luma([0, 255, 0]), 150);
        assert_eq!(luma([0, 0, 255]), 29);
    }

    #[test]
    fn normalize_constant_and_zero() {
        let c = GrayImage::filled(6, 4, 7);
        assert!(normalize_local(&c, 3).data().iter().all(|&v| v == 255));
        let z = GrayImage::filled(6, 4, 0);
        assert!(normalize_local(&z, 3).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn normalize_ramp_matches_double_loop() {
        // 5×5 ramp 10·(x + 5y); reference values from a direct windowed max
        let img = GrayImage::from_fn(5, 5, |x, y| (10 * (x + 5 * y)) as u8);
        let expected: [u8; 25] = [
            0, 36, 64, 85, 113, //
            116, 128, 137, 146, 164, //
            159, 165, 170, 174, 188, //
            182, 185, 188, 191, 202, //
            243, 243, 244, 244, 255,
        ];
        let got = normalize_local(&img, 3);
        // spot check against the formula for two pixels
        assert_eq!(got.get(0, 1), (255.0f64 * 50.0 / 110.0).round() as u8);
        assert_eq!(got.get(0, 1), 116);
        assert_eq!(got.get(4, 4), 255);
        assert_eq!(got.data(), &expected);
    }

    #[test]
    fn otsu_examples() {
        let img = GrayImage::new(6, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        assert_eq!(otsu_threshold(&img), 0);
        assert_eq!(threshold_apply(&img, 0).count(), 3);
        assert_eq!(otsu_threshold(&GrayImage::filled(3, 3, 128)), 128);
    }

    #[test]
    fn threshold_examples() {
        let img = GrayImage::new(2, 1, vec![10, 200]).unwrap();
        assert_eq!(threshold_apply(&img, 100).data(), &[false, true]);
        assert_eq!(threshold_apply(&img, 255).count(), 0);
    }

    #[test]
    fn opening_examples() {
        let se = StructuringElement::square(3).unwrap();
        let mut dot = BinaryMask::filled(9, 9, false);
        dot.set(4, 4, true);
        assert!(morph_open(&dot, &se).is_empty_mask());

        let square = BinaryMask::from_fn(14, 14, |x, y| (2..12).contains(&x) && (2..12).contains(&y));
        assert_eq!(morph_open(&square, &se), square);
        // touching the border is fine too: out-of-bounds is background for erosion
        let corner = BinaryMask::from_fn(10, 10, |x, y| x < 5 && y < 5);
        assert_eq!(morph_open(&corner, &se), corner);
    }

    #[test]
    fn asymmetric_element_opening_is_anti_extensive() {
        let se = StructuringElement::new(2, 1, vec![true, true], (0, 0)).unwrap();
        let m = mask_from(&["#.##.", ".###.", "#...#"]);
        let o = morph_open(&m, &se);
        assert!(o.is_subset_of(&m));
        assert_eq!(morph_open(&o, &se), o);
        assert_eq!(o, mask_from(&["..##.", ".###.", "....."]));
    }

    #[test]
    fn largest_component_examples() {
        let m = mask_from(&[
            "###.....", //
            "###...##",
            "###...##",
            "......#.",
        ]);
        let l = largest_component(&m, Connectivity::Eight);
        assert_eq!(l.count(), 9);
        assert!(l.get(0, 0) && !l.get(6, 1));
        assert!(largest_component(&BinaryMask::filled(4, 4, false), Connectivity::Eight).is_empty_mask());
    }

    #[test]
    fn largest_component_tie_goes_to_first_in_row_major() {
        let m = mask_from(&["...##", "##.##", "##..."]);
        let l = largest_component(&m, Connectivity::Four);
        assert!(l.get(3, 0) && !l.get(0, 1));
    }

    #[test]
    fn connectivity_matters_for_diagonals() {
        let m = mask_from(&["#..", ".#.", "..#"]);
        assert_eq!(largest_component(&m, Connectivity::Eight).count(), 3);
        assert_eq!(largest_component(&m, Connectivity::Four).count(), 1);
    }

    #[test]
    fn fill_holes_examples() {
        let ring = BinaryMask::from_fn(21, 21, |x, y| {
            let d2 = (x as i64 - 10).pow(2) + (y as i64 - 10).pow(2);
            (25..=64).contains(&d2)
        });
        let disk = BinaryMask::from_fn(21, 21, |x, y| (x as i64 - 10).pow(2) + (y as i64 - 10).pow(2) <= 64);
        assert_eq!(fill_holes(&ring), disk);
        assert_eq!(fill_holes(&disk), disk);
        // a diagonal gap does not let background escape under 4-connectivity
        let diamond = mask_from(&[".....", "..#..", ".#.#.", "..#..", "....."]);
        assert_eq!(fill_holes(&diamond).count(), 5);
    }

    #[test]
    fn blank_image_is_empty_silhouette() {
        let img = RgbImage::filled(16, 16, [40, 40, 40]);
        let cfg = PreprocessConfig::default();
        assert_eq!(extract_silhouette(&img, &cfg), Err(SilhouetteError::EmptySilhouette));
        let naive = PreprocessConfig { naive: true, ..PreprocessConfig::default() };
        assert_eq!(extract_silhouette(&img, &naive), Err(SilhouetteError::EmptySilhouette));
    }

    #[test]
    fn bad_window_rejected() {
        let cfg = PreprocessConfig { window: 4, ..PreprocessConfig::default() };
        assert!(matches!(
            extract_silhouette(&RgbImage::filled(4, 4, [0, 0, 0]), &cfg),
            Err(SilhouetteError::Config(_))
        ));
    }

    #[test]
    fn wide_product_compare() {
        assert!(ratio_gt(u128::MAX, 1, u128::MAX - 1, 1));
        assert!(!ratio_gt(3, 6, 1, 2));
        assert!(ratio_gt(u128::MAX, 2, u128::MAX / 2 - 1, 1));
    }
}

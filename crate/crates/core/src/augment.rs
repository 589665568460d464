//! Image augmentation and per-channel zero-centering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::resize_bilinear;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Chance that the whole transform chain is applied to an image.
    pub probability: f64,
    pub flip: bool,
    /// Hue shift range `±hue_delta` (fraction of a full turn).
    pub hue_delta: f32,
    pub saturation: (f32, f32),
    pub brightness_delta: f32,
    pub contrast: (f32, f32),
    /// Zoom factor range; the zoomed image is center-cropped to size.
    pub zoom: (f32, f32),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            probability: 0.25,
            flip: true,
            hue_delta: 0.08,
            saturation: (0.8, 1.2),
            brightness_delta: 0.1,
            contrast: (0.8, 1.2),
            zoom: (1.0, 1.15),
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { probability: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!("augmentation probability {} outside [0, 1]", self.probability)));
        }
        let ordered = |(lo, hi): (f32, f32)| lo <= hi && lo > 0.0;
        if !ordered(self.saturation) || !ordered(self.contrast) || !ordered(self.zoom) || self.zoom.0 < 1.0 {
            return Err(Error::Config("augmentation ranges must be positive, ordered, and zoom ≥ 1".into()));
        }
        Ok(())
    }
}

pub fn flip_horizontal(img: &mut [f32], h: usize, w: usize, c: usize) {
    for y in 0..h {
        let row = &mut img[y * w * c..(y + 1) * w * c];
        for x in 0..w / 2 {
            for ch in 0..c {
                row.swap(x * c + ch, (w - 1 - x) * c + ch);
            }
        }
    }
}

fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn adjust_hsv(img: &mut [f32], hue_shift: f32, sat_scale: f32) {
    for px in img.chunks_exact_mut(3) {
        let [h, s, v] = rgb_to_hsv([px[0], px[1], px[2]]);
        let rgb = hsv_to_rgb([h + hue_shift, (s * sat_scale).clamp(0.0, 1.0), v]);
        px.copy_from_slice(&rgb);
    }
}

fn adjust_contrast(img: &mut [f32], c: usize, factor: f32) {
    let n = (img.len() / c) as f32;
    for ch in 0..c {
        let mean = img.iter().skip(ch).step_by(c).sum::<f32>() / n;
        for v in img.iter_mut().skip(ch).step_by(c) {
            *v = mean + factor * (*v - mean);
        }
    }
}

fn zoom_center(img: &mut [f32], h: usize, w: usize, c: usize, factor: f32) {
    let ch = ((h as f32 / factor).round() as usize).clamp(1, h);
    let cw = ((w as f32 / factor).round() as usize).clamp(1, w);
    if ch == h && cw == w {
        return;
    }
    let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
    let mut crop = Vec::with_capacity(ch * cw * c);
    for y in y0..y0 + ch {
        crop.extend_from_slice(&img[(y * w + x0) * c..(y * w + x0 + cw) * c]);
    }
    img.copy_from_slice(&resize_bilinear(&crop, ch, cw, c, h, w));
}

/// With probability `cfg.probability`, applies flip, hue, saturation,
/// brightness, contrast and zoom (each sampled from its range) to one
/// `h×w×c` image, then clips to `[0, 1]`. Hue and saturation need RGB.
pub fn augment<R: Rng>(img: &mut [f32], h: usize, w: usize, c: usize, cfg: &AugmentConfig, rng: &mut R) {
    if cfg.probability <= 0.0 || !rng.gen_bool(cfg.probability.min(1.0)) {
        return;
    }
    if cfg.flip && rng.gen_bool(0.5) {
        flip_horizontal(img, h, w, c);
    }
    let hue = rng.gen_range(-cfg.hue_delta..=cfg.hue_delta);
    let sat = rng.gen_range(cfg.saturation.0..=cfg.saturation.1);
    if c == 3 {
        adjust_hsv(img, hue, sat);
    }
    let bright = rng.gen_range(-cfg.brightness_delta..=cfg.brightness_delta);
    img.iter_mut().for_each(|v| *v += bright);
    adjust_contrast(img, c, rng.gen_range(cfg.contrast.0..=cfg.contrast.1));
    zoom_center(img, h, w, c, rng.gen_range(cfg.zoom.0..=cfg.zoom.1));
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Subtracts `means[ch]` from channel `ch` of an `…×C` tensor.
pub fn zero_center<T: Real>(batch: &mut Tensor<T>, means: &[f64]) {
    let c = means.len();
    if c == 0 || means.iter().all(|&m| m == 0.0) {
        return;
    }
    let means: Vec<T> = means.iter().map(|&m| T::of(m)).collect();
    for px in batch.data_mut().chunks_mut(c) {
        for (v, &m) in px.iter_mut().zip(&means) {
            *v -= m;
        }
    }
}

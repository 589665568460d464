//! Datasets, checkpoints and activation export.

mod checkpoint;
mod fer2013;
mod feature_maps;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use fer2013::{load_fer2013, scan_fer2013, Fer2013Summary, FER2013_CLASSES, FER2013_PAPER_COUNTS, FER2013_PIXELS};
pub use feature_maps::{dump_feature_maps, feature_grid};
pub use synth::{synth_blobs, VA_ANCHORS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Images `N×H×W×3` in `[0, 1]` with class labels and, optionally,
/// (valence, arousal) targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// `N×2` valence/arousal targets in `[-1, 1]`.
    pub dimensional: Option<Tensor<f32>>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[H, W, C]` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let per: usize = self.image_shape().iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut va = Vec::new();
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            if let Some(d) = &self.dimensional {
                va.extend_from_slice(&d.data()[2 * i..2 * i + 2]);
            }
        }
        let [h, w, c] = self.image_shape();
        Self {
            name: self.name.clone(),
            images: Tensor::new([indices.len(), h, w, c], data).expect("sizes agree"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            dimensional: self.dimensional.as_ref().map(|_| Tensor::new([indices.len(), 2], va).expect("sizes agree")),
            splits: indices.iter().map(|&i| self.splits[i]).collect(),
        }
    }

    pub fn split(&self, split: Split) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.splits[i] == split).collect();
        self.subset(&idx)
    }

    /// Box-filter downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        let [h, w, c] = self.image_shape();
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::InvalidArgument(format!("cannot downsample {h}×{w} by {factor}")));
        }
        let (oh, ow) = (h / factor, w / factor);
        let n = self.len();
        let src = self.images.data();
        let mut out = vec![0.0f32; n * oh * ow * c];
        let scale = 1.0 / (factor * factor) as f32;
        for s in 0..n {
            for y in 0..oh {
                for x in 0..ow {
                    for ch in 0..c {
                        let mut acc = 0.0f32;
                        for dy in 0..factor {
                            for dx in 0..factor {
                                acc += src[((s * h + y * factor + dy) * w + x * factor + dx) * c + ch];
                            }
                        }
                        out[((s * oh + y) * ow + x) * c + ch] = acc * scale;
                    }
                }
            }
        }
        let mut ds = self.clone();
        ds.images = Tensor::new([n, oh, ow, c], out)?;
        Ok(ds)
    }

    /// Per-channel mean over every pixel of every image.
    pub fn channel_means(&self) -> Vec<f64> {
        let c = self.image_shape()[2];
        let mut sums = vec![0.0f64; c];
        for px in self.images.data().chunks(c) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let count = (self.images.len() / c.max(1)).max(1) as f64;
        sums.into_iter().map(|s| s / count).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let [height, width, channels] = self.image_shape();
        DatasetStats {
            name: self.name.clone(),
            samples: self.len(),
            height,
            width,
            channels,
            channel_means: self.channel_means(),
            class_names: self.class_names.clone(),
            class_counts: self.class_histogram(),
        }
    }
}

/// Summary written next to training outputs; `channel_means` feeds zero-centering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub channel_means: Vec<f64>,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
}

impl DatasetStats {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Bilinear resize of one `h×w×c` image (half-pixel centers, edge clamp).
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; oh * ow * c];
    let sy = h as f32 / oh as f32;
    let sx = w as f32 / ow as f32;
    let coord = |o: usize, scale: f32, extent: usize| {
        let p = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (extent - 1) as f32);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(extent - 1);
        (i0, i1, p - i0 as f32)
    };
    for y in 0..oh {
        let (y0, y1, fy) = coord(y, sy, h);
        for x in 0..ow {
            let (x0, x1, fx) = coord(x, sx, w);
            for ch in 0..c {
                let at = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
                let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
                out[(y * ow + x) * c + ch] = top + fy * (bottom - top);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let images = Tensor::new([2, 2, 2, 3], (0..24).map(|v| v as f32 / 24.0).collect()).unwrap();
        Dataset {
            name: "tiny".into(),
            images,
            labels: vec![1, 0],
            class_names: vec!["a".into(), "b".into()],
            dimensional: Some(Tensor::new([2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap()),
            splits: vec![Split::Train, Split::Test],
        }
    }

    #[test]
    fn subset_keeps_rows_together() {
        let d = tiny();
        let s = d.subset(&[1]);
        assert_eq!(s.labels, vec![0]);
        assert_eq!(s.images.data(), &d.images.data()[12..]);
        assert_eq!(s.dimensional.unwrap().data(), &[0.3, 0.4]);
        assert_eq!(d.split(Split::Test).len(), 1);
    }

    #[test]
    fn downsample_averages_blocks() {
        let d = tiny().downsample(2).unwrap();
        assert_eq!(d.image_shape(), [1, 1, 3]);
        let want = (3 + 6 + 9) as f32 / 4.0 / 24.0;
        assert!((d.images.data()[0] - want).abs() < 1e-6);
        assert!(tiny().downsample(3).is_err());
    }

    #[test]
    fn bilinear_resize_preserves_constants() {
        let src = vec![0.25f32; 48 * 48];
        let out = resize_bilinear(&src, 48, 48, 1, 64, 64);
        assert!(out.iter().all(|&v| v == 0.25));
    }
}

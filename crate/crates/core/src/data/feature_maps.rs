use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::network::Model;
use crate::tensor::Tensor;

const MID_GRAY: u8 = 128;

/// Tiles the channels of one `H×W×C` activation into a grayscale grid of
/// `ceil(√C)` columns, each tile min-max normalized on its own. Constant
/// tiles render as uniform mid-gray. Returns `(width, height, pixels)`.
pub fn feature_grid(map: &[f32], h: usize, w: usize, c: usize) -> (usize, usize, Vec<u8>) {
    let cols = (1..=c).find(|k| k * k >= c).unwrap_or(1);
    let rows = c.div_ceil(cols).max(1);
    let (gw, gh) = (cols * w, rows * h);
    let mut px = vec![0u8; gw * gh];
    for ch in 0..c {
        let vals = (0..h * w).map(|i| map[i * c + ch]);
        let (lo, hi) = vals.clone().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, u), v| (l.min(v), u.max(v)));
        let (ty, tx) = (ch / cols, ch % cols);
        for (i, v) in vals.enumerate() {
            let g = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { MID_GRAY };
            px[(ty * h + i / w) * gw + tx * w + i % w] = g;
        }
    }
    (gw, gh, px)
}

/// Writes `layerNNN.png` per selector (see [`Model::layer_node`]) for the
/// first image of `image` (`1×H×W×3`, raw `[0, 1]`). Every selector is
/// checked before anything is written.
pub fn dump_feature_maps(model: &Model<f32>, image: &Tensor<f32>, layers: &[usize], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let nodes = layers.iter().map(|&d| model.layer_node(d)).collect::<Result<Vec<_>>>()?;
    if nodes.is_empty() {
        return Ok(Vec::new());
    }
    if image.rank() != 4 || image.shape()[0] != 1 {
        return Err(Error::Shape(format!("feature maps need a single 1×H×W×C image, got {:?}", image.shape())));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let values = model.evaluate(image, &nodes)?;
    let mut written = Vec::with_capacity(layers.len());
    for (&depth, value) in layers.iter().zip(&values) {
        let s = value.shape();
        let (gw, gh, px) = feature_grid(value.data(), s[1], s[2], s[3]);
        let path = out_dir.join(format!("layer{depth:03}.png"));
        let mut enc = png::Encoder::new(BufWriter::new(File::create(&path)?), gw as u32, gh as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header()?.write_image_data(&px)?;
        written.push(path);
    }
    Ok(written)
}

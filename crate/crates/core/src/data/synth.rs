use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SIDE: usize = 64;

const NAMES: [&str; 8] = ["hstripes", "vstripes", "checker", "disc", "ring", "diagonal", "ramp", "cross"];

/// Tints are shared by classes `c` and `c + 4`, so colour alone never
/// separates all eight families.
const PALETTE: [[f32; 3]; 4] = [[0.90, 0.35, 0.30], [0.35, 0.80, 0.40], [0.35, 0.45, 0.90], [0.90, 0.80, 0.35]];

const TINT_JITTER: f32 = 0.15;
const PIXEL_NOISE: f32 = 0.2;
/// Noise shared by each `BLOCK×BLOCK` tile, which survives downsampling.
const BLOCK: usize = 4;
const BLOCK_NOISE: f32 = 0.35;

/// Fixed (valence, arousal) anchor of each synthetic class.
pub const VA_ANCHORS: [[f32; 2]; 8] = [
    [0.8, 0.5],
    [-0.6, 0.6],
    [-0.7, -0.3],
    [0.3, -0.6],
    [0.0, 0.8],
    [-0.2, -0.8],
    [0.6, -0.1],
    [-0.8, 0.1],
];

const VA_NOISE: f64 = 0.05;

/// Whether pixel `(y, x)` belongs to the foreground of `class` for the
/// sampled `phase` and `size`. Integer arithmetic only, so renders are
/// identical on every platform.
fn foreground(class: usize, y: i32, x: i32, phase: i32, size: i32) -> bool {
    let c = SIDE as i32 / 2;
    match class {
        0 => (y + phase).rem_euclid(16) < 8,
        1 => (x + phase).rem_euclid(16) < 8,
        2 => ((y + phase) / 12 + (x + phase) / 12) % 2 == 0,
        3 => {
            let (dy, dx) = (y - c - phase / 4, x - c + phase / 4);
            dy * dy + dx * dx <= size * size
        }
        4 => {
            let (dy, dx) = (y - c, x - c);
            let r2 = dy * dy + dx * dx;
            r2 <= size * size && r2 >= (size - 7) * (size - 7)
        }
        5 => (x + y + phase).rem_euclid(20) < 10,
        6 => x + phase / 2 >= c,
        _ => (y - c).abs() < 5 + phase / 8 || (x - c).abs() < 5 + phase / 8,
    }
}

/// Deterministic synthetic dataset of `classes ≤ 8` texture families, each
/// a tinted pattern of random contrast over a darker random background with
/// tile and pixel noise,
/// rendered at 64×64×3. Dimensional targets are the class anchor plus
/// Gaussian noise (σ = 0.05) clipped to `[-1, 1]`.
pub fn synth_blobs(classes: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    if classes == 0 || classes > NAMES.len() {
        return Err(Error::InvalidArgument(format!("synthetic classes must be in 1..=8, got {classes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, VA_NOISE).expect("positive std");
    let n = classes * per_class;
    let per = SIDE * SIDE * 3;
    let mut images = vec![0.0f32; n * per];
    let mut labels = Vec::with_capacity(n);
    let mut va = Vec::with_capacity(2 * n);
    for i in 0..n {
        let class = i % classes;
        let phase = rng.gen_range(0..16);
        let size = rng.gen_range(14..24);
        let mut fg = PALETTE[class % PALETTE.len()];
        for v in &mut fg {
            *v = (*v + rng.gen_range(-TINT_JITTER..TINT_JITTER)).clamp(0.0, 1.0);
        }
        let bg = rng.gen_range(0.05f32..0.3);
        let contrast = rng.gen_range(0.3f32..1.0);
        let tiles = SIDE / BLOCK;
        let blocks: Vec<f32> = (0..tiles * tiles * 3).map(|_| rng.gen_range(-BLOCK_NOISE..BLOCK_NOISE)).collect();
        let img = &mut images[i * per..(i + 1) * per];
        for y in 0..SIDE {
            for x in 0..SIDE {
                let on = foreground(class, y as i32, x as i32, phase, size);
                let tile = ((y / BLOCK) * tiles + x / BLOCK) * 3;
                for ch in 0..3 {
                    let base = if on { bg + contrast * (fg[ch] - bg) } else { bg } + blocks[tile + ch];
                    img[(y * SIDE + x) * 3 + ch] = (base + rng.gen_range(-PIXEL_NOISE..PIXEL_NOISE)).clamp(0.0, 1.0);
                }
            }
        }
        labels.push(class);
        for d in 0..2 {
            va.push((VA_ANCHORS[class][d] as f64 + noise.sample(&mut rng)).clamp(-1.0, 1.0) as f32);
        }
    }
    Ok(Dataset {
        name: format!("synth:K={classes},n={per_class},seed={seed}"),
        images: Tensor::new([n, SIDE, SIDE, 3], images)?,
        labels,
        class_names: NAMES[..classes].iter().map(|s| s.to_string()).collect(),
        dimensional: Some(Tensor::new([n, 2], va)?),
        splits: vec![Split::Train; n],
    })
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{ImageGrid, Mask, SegmentMask, SegmentationMap};

use super::config::{SynthConfig, TestWatermark};

pub const HORSE: u8 = 0;
pub const ZEBRA: u8 = 1;
pub const WATERMARK: &str = "watermark";
pub const BACKGROUND: &str = "background";

pub fn class_name(label: u8) -> &'static str {
    if label == ZEBRA {
        "zebra"
    } else {
        "horse"
    }
}

struct Part {
    name: &'static str,
    /// Texture contrast multiplier.
    gain: f64,
    /// Half-open (row0, row1, col0, col1) on a 32-pixel reference grid.
    rects: &'static [(usize, usize, usize, usize)],
}

// Painted in order; later parts overwrite earlier ones.
const PARTS: [Part; 10] = [
    Part { name: "tail", gain: 0.7, rects: &[(15, 21, 6, 9)] },
    Part { name: "torso", gain: 1.0, rects: &[(15, 21, 9, 22)] },
    Part { name: "belly", gain: 0.8, rects: &[(21, 23, 10, 21)] },
    Part { name: "legs", gain: 0.8, rects: &[(23, 28, 10, 12), (23, 28, 18, 20)] },
    Part { name: "hooves", gain: 0.4, rects: &[(28, 30, 10, 12), (28, 30, 18, 20)] },
    Part { name: "mane", gain: 1.4, rects: &[(11, 16, 19, 23)] },
    Part { name: "head", gain: 1.0, rects: &[(11, 16, 23, 28)] },
    Part { name: "ears", gain: 0.9, rects: &[(9, 11, 23, 26)] },
    Part { name: "eyes", gain: 1.5, rects: &[(12, 14, 25, 27)] },
    Part { name: "muzzle", gain: 1.1, rects: &[(14, 17, 27, 30)] },
];

/// Every segment name a sample can carry.
pub const PART_NAMES: [&str; 12] =
    [BACKGROUND, "tail", "torso", "belly", "legs", "hooves", "mane", "head", "ears", "eyes", "muzzle", WATERMARK];

const WATERMARK_LABEL: u8 = PARTS.len() as u8 + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub grid: ImageGrid,
    /// Row-major intensities in [0, 1].
    pub pixels: Vec<f64>,
    pub label: u8,
    pub watermark_present: bool,
    pub watermark_mask: Mask,
    /// Non-empty ground-truth masks; together they cover the grid.
    pub part_masks: Vec<(String, Mask)>,
}

impl SynthSample {
    pub fn segmentation(&self) -> SegmentationMap {
        let segments = self
            .part_masks
            .iter()
            .map(|(n, m)| SegmentMask::new(n.clone(), m.clone()).expect("part masks are non-empty"))
            .collect();
        SegmentationMap::new(self.grid, segments, self.id.clone()).expect("part masks are distinct and on-grid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<SynthSample>,
    pub test_clean: Vec<SynthSample>,
    pub test_watermarked: Vec<SynthSample>,
}

/// A generated image before the watermark decision.
struct Base {
    id: String,
    label: u8,
    pixels: Vec<f64>,
    labels: Vec<u8>,
    /// Top-left pixel of the watermark should this image receive one.
    watermark_origin: (usize, usize),
}

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const MARKING_STREAM: u64 = 3;

fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | index);
    rng
}

fn scale(v: usize, size: usize) -> usize {
    v * size / 32
}

fn generate_base(cfg: &SynthConfig, label: u8, id: String, rng: &mut ChaCha8Rng) -> Base {
    let size = cfg.image_size;
    let grid_len = size * size;
    let dy = rng.random_range(-1i64..=1);
    let dx = rng.random_range(-1i64..=1);
    let shift = |v: usize, d: i64| (scale(v, size) as i64 + d).clamp(0, size as i64) as usize;

    let mut labels = vec![0u8; grid_len];
    for (k, part) in PARTS.iter().enumerate() {
        for &(r0, r1, c0, c1) in part.rects {
            for r in shift(r0, dy)..shift(r1, dy).max(shift(r0, dy) + 1).min(size) {
                for c in shift(c0, dx)..shift(c1, dx).max(shift(c0, dx) + 1).min(size) {
                    labels[r * size + c] = k as u8 + 1;
                }
            }
        }
    }

    let background = rng.random_range(0.2..0.4);
    let offset = Normal::new(0.0, cfg.body_noise).expect("validated").sample(rng);
    let noise = Normal::new(0.0, cfg.pixel_noise).expect("validated");

    let texture = if label == ZEBRA {
        let theta: f64 = rng.random_range(-0.35..0.35);
        let phase: f64 = rng.random();
        let (s, c) = theta.sin_cos();
        let freq = cfg.stripe_frequency;
        (0..grid_len)
            .map(|i| {
                let (r, col) = ((i / size) as f64, (i % size) as f64);
                f64::from(u8::from((freq * (col * c + r * s) + phase).rem_euclid(1.0) < 0.5))
            })
            .collect::<Vec<f64>>()
    } else {
        // Poisson blob centres over the animal's bounding box give expected coverage blob_density
        let (mut rmin, mut rmax, mut cmin, mut cmax) = (size, 0, size, 0);
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                rmin = rmin.min(i / size);
                rmax = rmax.max(i / size);
                cmin = cmin.min(i % size);
                cmax = cmax.max(i % size);
            }
        }
        let area = ((rmax + 1 - rmin) * (cmax + 1 - cmin)) as f64;
        let disc = std::f64::consts::PI * cfg.blob_radius * cfg.blob_radius;
        let count = ((1.0 / (1.0 - cfg.blob_density)).ln() * area / disc).round() as usize;
        let centres: Vec<(f64, f64)> = (0..count)
            .map(|_| {
                (
                    rng.random_range(rmin as f64 - 0.5..rmax as f64 + 0.5),
                    rng.random_range(cmin as f64 - 0.5..cmax as f64 + 0.5),
                )
            })
            .collect();
        let r2 = cfg.blob_radius * cfg.blob_radius;
        (0..grid_len)
            .map(|i| {
                let (r, col) = ((i / size) as f64, (i % size) as f64);
                f64::from(u8::from(centres.iter().any(|(cr, cc)| (r - cr).powi(2) + (col - cc).powi(2) <= r2)))
            })
            .collect()
    };

    let pixels = (0..grid_len)
        .map(|i| {
            let v = match labels[i] {
                0 => background,
                l => cfg.body_level + offset + cfg.texture_contrast * PARTS[l as usize - 1].gain * texture[i],
            };
            (v + noise.sample(rng)).clamp(0.0, 1.0)
        })
        .collect();

    let corner = rng.random_range(0..4u8);
    let jy = rng.random_range(0..=cfg.jitter);
    let jx = rng.random_range(0..=cfg.jitter);
    let near = 1 + jy;
    let far_r = size - 1 - jy - cfg.watermark_size;
    let near_c = 1 + jx;
    let far_c = size - 1 - jx - cfg.watermark_size;
    let watermark_origin = match corner {
        0 => (near, near_c),
        1 => (near, far_c),
        2 => (far_r, near_c),
        _ => (far_r, far_c),
    };
    Base { id, label, pixels, labels, watermark_origin }
}

fn realise(cfg: &SynthConfig, base: &Base, watermark: bool) -> SynthSample {
    let size = cfg.image_size;
    let grid = ImageGrid::new(size, size).expect("validated size");
    let mut pixels = base.pixels.clone();
    let mut labels = base.labels.clone();
    if watermark {
        let (r0, c0) = base.watermark_origin;
        for r in r0..r0 + cfg.watermark_size {
            for c in c0..c0 + cfg.watermark_size {
                pixels[r * size + c] = cfg.watermark_intensity;
                labels[r * size + c] = WATERMARK_LABEL;
            }
        }
    }
    let label_name = |l: u8| match l {
        0 => BACKGROUND,
        WATERMARK_LABEL => WATERMARK,
        l => PARTS[l as usize - 1].name,
    };
    let mut part_masks = Vec::new();
    let mut watermark_mask = Mask::empty(grid);
    for l in 0..=WATERMARK_LABEL {
        let mask = Mask::from_fn(grid, |r, c| labels[r * size + c] == l);
        if l == WATERMARK_LABEL {
            watermark_mask = mask.clone();
        }
        if !mask.is_empty() {
            part_masks.push((label_name(l).to_string(), mask));
        }
    }
    SynthSample {
        id: base.id.clone(),
        grid,
        pixels,
        label: base.label,
        watermark_present: watermark,
        watermark_mask,
        part_masks,
    }
}

fn bases(cfg: &SynthConfig, stream: u64, split: &str, per_class: usize) -> Vec<Base> {
    let mut out = Vec::with_capacity(2 * per_class);
    for label in [HORSE, ZEBRA] {
        for i in 0..per_class {
            let index = u64::from(label) * per_class as u64 + i as u64;
            let mut rng = stream_rng(cfg.seed, stream, index);
            out.push(generate_base(cfg, label, format!("{split}-{}-{i:04}", class_name(label)), &mut rng));
        }
    }
    out
}

/// Number of marked class-1 training images: floor(prevalence * n), with a
/// guard against products such as 0.29 * 100 landing just below an integer.
pub(crate) fn marked_count(prevalence: f64, n: usize) -> usize {
    ((prevalence * n as f64) + 1e-9).floor() as usize
}

/// Deterministic in the seed. Image content does not depend on the
/// prevalence, and the marked training zebras at a higher prevalence are a
/// superset of those at a lower one.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_train;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(cfg.seed, MARKING_STREAM, 0));
    let mut marked = vec![false; n];
    for &i in &order[..marked_count(cfg.watermark_prevalence, n)] {
        marked[i] = true;
    }

    let train = bases(cfg, TRAIN_STREAM, "train", n)
        .iter()
        .enumerate()
        .map(|(i, b)| realise(cfg, b, b.label == ZEBRA && marked[i - n]))
        .collect();
    let test = bases(cfg, TEST_STREAM, "test", cfg.n_test);
    let test_clean = test.iter().map(|b| realise(cfg, b, false)).collect();
    let test_watermarked =
        test.iter().map(|b| realise(cfg, b, cfg.test_watermark == TestWatermark::All || b.label == ZEBRA)).collect();
    Ok(Dataset { train, test_clean, test_watermarked })
}

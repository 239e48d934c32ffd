//! Synthetic factor-labeled image generation and weak-label fabrication.
//!
//! Two desk-scale datasets:
//!   - `blobs`: 16x16 images with a 3x3 bright blob at one of 10 anchor
//!     positions (discrete factor = position), nuisance factors are a
//!     brightness jitter in [0.6, 1.0] and a 1-pixel placement jitter.
//!   - `bars`: 16x16 images of a line through the center at angle
//!     t in [0, 360) (cyclic factor), nuisance factors are thickness in
//!     {1, 2} and brightness jitter. t and t+180 render identically.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::similarity::{LabelKind, PairBatch};
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 16;
pub const BLOB_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Discrete,
    Cyclic,
}

impl std::fmt::Display for FactorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorKind::Discrete => write!(f, "discrete"),
            FactorKind::Cyclic => write!(f, "cyclic"),
        }
    }
}

impl std::str::FromStr for FactorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(FactorKind::Discrete),
            "cyclic" => Ok(FactorKind::Cyclic),
            other => Err(Error::Config(format!("unknown factor kind {:?}", other))),
        }
    }
}

/// Ground-truth factor values, used only for label fabrication and
/// evaluation; the encoder never sees them.
#[derive(Clone, Debug)]
pub struct FactorTable {
    pub kind: FactorKind,
    /// Class id (discrete) or angle in degrees [0, 360) (cyclic).
    pub values: Vec<f64>,
}

impl FactorTable {
    pub fn new(kind: FactorKind, values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            match kind {
                FactorKind::Discrete => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::Domain(format!("bad discrete factor {}", v)));
                    }
                }
                FactorKind::Cyclic => {
                    if !(0.0..360.0).contains(&v) {
                        return Err(Error::Domain(format!("angle {} outside [0,360)", v)));
                    }
                }
            }
        }
        Ok(FactorTable { kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LabelGenConfig {
    /// Fraction of all N(N-1)/2 unordered pairs that receive a label.
    pub proportion: f64,
    /// RBF bandwidth in degrees for real-valued labels.
    pub rbf_sigma: f64,
    /// Noise level gamma: flip probability (binary) or Gaussian variance (real).
    pub noise_gamma: f64,
    pub kind: LabelKind,
    pub seed: u64,
}

impl Default for LabelGenConfig {
    fn default() -> Self {
        LabelGenConfig {
            proportion: 1e-4,
            rbf_sigma: 30.0,
            noise_gamma: 0.0,
            kind: LabelKind::Binary,
            seed: 0,
        }
    }
}

impl LabelGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return Err(Error::Config(format!("proportion {} outside (0,1]", self.proportion)));
        }
        if !(self.rbf_sigma > 0.0) {
            return Err(Error::Config("rbf_sigma must be positive".into()));
        }
        if self.noise_gamma < 0.0 {
            return Err(Error::Config("noise_gamma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Blob anchor centers: 10 points on a radius-5 circle around the image
/// center, far enough apart to stay distinct under 1-pixel jitter.
fn blob_anchors() -> [(i32, i32); BLOB_CLASSES] {
    let mut out = [(0, 0); BLOB_CLASSES];
    for (k, slot) in out.iter_mut().enumerate() {
        let ang = 2.0 * std::f64::consts::PI * k as f64 / BLOB_CLASSES as f64;
        let r = 7.5 + 5.0 * ang.cos();
        let c = 7.5 + 5.0 * ang.sin();
        *slot = (r.round() as i32, c.round() as i32);
    }
    out
}

/// Images as [n, 16, 16] tensor plus the ground-truth factor table.
pub fn gen_synthetic(name: &str, n: usize, seed: u64) -> Result<(Tensor, FactorTable)> {
    if n < 2 {
        return Err(Error::Config("need at least 2 instances".into()));
    }
    match name {
        "blobs" => gen_blobs(n, seed),
        "bars" => gen_bars(n, seed),
        other => Err(Error::Config(format!("unknown dataset {:?}", other))),
    }
}

fn gen_blobs(n: usize, seed: u64) -> Result<(Tensor, FactorTable)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let anchors = blob_anchors();
    let side = IMAGE_SIDE as i32;
    let mut data = vec![0.0; n * IMAGE_SIDE * IMAGE_SIDE];
    let mut factors = Vec::with_capacity(n);
    for img in 0..n {
        let class = rng.gen_range(0..BLOB_CLASSES);
        let brightness = rng.gen_range(0.6..=1.0);
        let jr = rng.gen_range(-1..=1);
        let jc = rng.gen_range(-1..=1);
        let (cr, cc) = anchors[class];
        let (cr, cc) = ((cr + jr).clamp(1, side - 2), (cc + jc).clamp(1, side - 2));
        let base = img * IMAGE_SIDE * IMAGE_SIDE;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (r, c) = (cr + dr, cc + dc);
                data[base + (r * side + c) as usize] = brightness;
            }
        }
        factors.push(class as f64);
    }
    Ok((
        Tensor::new(vec![n, IMAGE_SIDE, IMAGE_SIDE], data)?,
        FactorTable::new(FactorKind::Discrete, factors)?,
    ))
}

fn render_bar(out: &mut [f64], angle: f64, thickness: f64, brightness: f64) {
    let center = (IMAGE_SIDE as f64 - 1.0) / 2.0;
    let rad = angle.to_radians();
    // unit normal to the line direction
    let (nx, ny) = (-rad.sin(), rad.cos());
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let dx = c as f64 - center;
            let dy = r as f64 - center;
            let dist = (dx * nx + dy * ny).abs();
            if dist <= thickness / 2.0 {
                out[r * IMAGE_SIDE + c] = brightness;
            }
        }
    }
}

fn gen_bars(n: usize, seed: u64) -> Result<(Tensor, FactorTable)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * IMAGE_SIDE * IMAGE_SIDE];
    let mut factors = Vec::with_capacity(n);
    for img in 0..n {
        // a line is invariant under half-turns, so its orientation lives
        // in [0,180); the cyclic factor is the doubled orientation, which
        // the image then identifies uniquely over the full circle
        let t: f64 = rng.gen_range(0.0..360.0);
        let thickness = if rng.gen_bool(0.5) { 1.0 } else { 2.0 };
        let brightness = rng.gen_range(0.6..=1.0);
        let base = img * IMAGE_SIDE * IMAGE_SIDE;
        render_bar(
            &mut data[base..base + IMAGE_SIDE * IMAGE_SIDE],
            t / 2.0,
            thickness,
            brightness,
        );
        factors.push(t);
    }
    Ok((
        Tensor::new(vec![n, IMAGE_SIDE, IMAGE_SIDE], data)?,
        FactorTable::new(FactorKind::Cyclic, factors)?,
    ))
}

/// Number of labeled pairs implied by a proportion: ceil(p * N(N-1)/2).
pub fn pair_count(n: usize, proportion: f64) -> usize {
    let total = n as f64 * (n as f64 - 1.0) / 2.0;
    (proportion * total).ceil() as usize
}

fn sample_pairs(n: usize, count: usize, rng: &mut ChaCha12Rng) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    let count = count.min(total);
    if count * 3 > total {
        // dense regime: enumerate and shuffle a prefix
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        for k in 0..count {
            let pick = rng.gen_range(k..all.len());
            all.swap(k, pick);
        }
        all.truncate(count);
        all
    } else {
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                out.push(key);
            }
        }
        out
    }
}

/// Indicator labels y = 1(t_i == t_j) over a uniform pair subsample.
pub fn make_binary_labels(t: &FactorTable, cfg: &LabelGenConfig) -> Result<PairBatch> {
    cfg.validate()?;
    if t.kind != FactorKind::Discrete {
        return Err(Error::Config(
            "binary labels require a discrete factor".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let pairs = sample_pairs(t.len(), pair_count(t.len(), cfg.proportion), &mut rng);
    let rows: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(i, j)| (i, j, if t.values[i] == t.values[j] { 1.0 } else { 0.0 }))
        .collect();
    PairBatch::from_rows(&rows)
}

/// Cyclic angular difference in degrees: delta(350, 20) = 30.
pub fn angle_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// RBF labels y = exp(-delta(t_i, t_j)^2 / sigma^2) over a uniform subsample.
pub fn make_rbf_labels(t: &FactorTable, cfg: &LabelGenConfig) -> Result<PairBatch> {
    cfg.validate()?;
    if t.kind != FactorKind::Cyclic {
        return Err(Error::Config("RBF labels require a cyclic factor".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let pairs = sample_pairs(t.len(), pair_count(t.len(), cfg.proportion), &mut rng);
    let s2 = cfg.rbf_sigma * cfg.rbf_sigma;
    let rows: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(i, j)| {
            let d = angle_delta(t.values[i], t.values[j]);
            (i, j, (-d * d / s2).exp())
        })
        .collect();
    PairBatch::from_rows(&rows)
}

/// Label corruption: binary labels flip with probability gamma; real labels
/// get N(0, gamma) noise (gamma is the variance) and are clipped to [0,1].
pub fn inject_noise(pairs: &PairBatch, cfg: &LabelGenConfig) -> Result<PairBatch> {
    cfg.validate()?;
    if cfg.noise_gamma == 0.0 {
        return Ok(pairs.clone());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(0x6e6f697365));
    let y: Vec<f64> = match cfg.kind {
        LabelKind::Binary => pairs
            .y
            .iter()
            .map(|&v| {
                if rng.gen_bool(cfg.noise_gamma.min(1.0)) {
                    1.0 - v
                } else {
                    v
                }
            })
            .collect(),
        LabelKind::Real => {
            let sd = cfg.noise_gamma.sqrt();
            pairs
                .y
                .iter()
                .map(|&v| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    (v + sd * eps).clamp(0.0, 1.0)
                })
                .collect()
        }
    };
    PairBatch::new(pairs.i_idx.clone(), pairs.j_idx.clone(), y)
}

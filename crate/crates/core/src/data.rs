//! Synthetic datasets, weak/strong augmentation, IDX byte codec and the
//! labeled/unlabeled batch sampler.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// How a flat feature row is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputLayout {
    Vector { dim: usize },
    /// Height × width × channels, channel fastest; pixels in `[0, 1]`.
    Image { height: usize, width: usize, channels: usize },
}

impl InputLayout {
    pub fn dim(&self) -> usize {
        match *self {
            InputLayout::Vector { dim } => dim,
            InputLayout::Image { height, width, channels } => height * width * channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub layout: InputLayout,
}

/// One row of a dataset; `y` is absent for unlabeled use.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: Option<usize>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, classes: usize, layout: InputLayout) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Length {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if layout.dim() != features.cols() {
            return Err(Error::Dimension {
                context: "dataset layout",
                expected: layout.dim(),
                found: features.cols(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(alloc::format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example(&self, i: usize, labeled: bool) -> Example<'_> {
        Example {
            x: self.features.row(i),
            y: labeled.then(|| self.labels[i]),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    pub fn select(&self, indices: &[usize]) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(indices.len(), self.features.cols());
        for (r, &i) in indices.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.features.row(i));
        }
        m
    }
}

fn linspace(start: f64, end: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (end - start) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| start + step * i as f64)
}

/// Two interleaved half circles: class 0 on the unit upper arc, class 1 on
/// the lower arc shifted by `(1, 0.5)`. Points are evenly spaced along each
/// arc, shuffled, then perturbed by `N(0, σ²)`.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::InvalidArgument(alloc::format!("two moons needs a positive even n, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Range {
            what: "two moons noise",
            value: noise,
            range: "[0, inf)",
        });
    }
    let half = n / 2;
    let mut points: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for t in linspace(0.0, core::f64::consts::PI, half) {
        points.push(([libm::cos(t), libm::sin(t)], 0));
    }
    for t in linspace(0.0, core::f64::consts::PI, half) {
        points.push(([1.0 - libm::cos(t), 0.5 - libm::sin(t)], 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points.shuffle(&mut rng);
    let mut features = DenseMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("validated noise"));
    for (i, (p, y)) in points.into_iter().enumerate() {
        let row = features.row_mut(i);
        row.copy_from_slice(&p);
        if let Some(d) = &normal {
            for v in row.iter_mut() {
                *v += d.sample(&mut rng);
            }
        }
        labels.push(y);
    }
    Dataset::new(features, labels, 2, InputLayout::Vector { dim: 2 })
}

/// `classes` isotropic Gaussian blobs of `per_class` points each. Centers are
/// drawn uniformly from `[-separation, separation]^dim`.
pub fn gen_gaussian_mixture(
    per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    std_dev: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "gaussian mixture needs classes >= 2, per_class >= 1 and dim >= 1".into(),
        ));
    }
    if !(std_dev >= 0.0 && std_dev.is_finite() && separation > 0.0 && separation.is_finite()) {
        return Err(Error::Range {
            what: "gaussian mixture scale",
            value: if std_dev >= 0.0 { separation } else { std_dev },
            range: "std_dev >= 0, separation > 0",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = Uniform::new_inclusive(-separation, separation).expect("validated separation");
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| centre.sample(&mut rng)).collect())
        .collect();
    let mut order: Vec<usize> = (0..classes * per_class).map(|i| i % classes).collect();
    order.shuffle(&mut rng);
    let normal = (std_dev > 0.0).then(|| Normal::new(0.0, std_dev).expect("validated std_dev"));
    let mut features = DenseMatrix::zeros(order.len(), dim);
    for (i, &y) in order.iter().enumerate() {
        for (v, c) in features.row_mut(i).iter_mut().zip(&centres[y]) {
            *v = c + normal.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        }
    }
    Dataset::new(features, order, classes, InputLayout::Vector { dim })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Weak additive noise scale for vectors.
    pub weak_noise: f64,
    /// Strong noise is `strong_noise_factor · weak_noise`.
    pub strong_noise_factor: f64,
    /// Probability that a vector coordinate is zeroed in a strong view.
    pub mask_fraction: f64,
    /// Maximum image translation in pixels.
    pub max_shift: usize,
    /// Fraction of the image area covered by the strong-view cutout.
    pub cutout_fraction: f64,
    /// Half-width of the uniform brightness offset in strong image views.
    pub brightness: f64,
    /// Standard deviation of per-pixel noise in strong image views.
    pub pixel_jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            weak_noise: 0.1,
            strong_noise_factor: 3.0,
            mask_fraction: 0.2,
            max_shift: 2,
            cutout_fraction: 0.25,
            brightness: 0.2,
            pixel_jitter: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("weak_noise", self.weak_noise, self.weak_noise >= 0.0),
            ("strong_noise_factor", self.strong_noise_factor, self.strong_noise_factor >= 0.0),
            ("mask_fraction", self.mask_fraction, (0.0..=1.0).contains(&self.mask_fraction)),
            ("cutout_fraction", self.cutout_fraction, (0.0..=1.0).contains(&self.cutout_fraction)),
            ("brightness", self.brightness, self.brightness >= 0.0),
            ("pixel_jitter", self.pixel_jitter, self.pixel_jitter >= 0.0),
        ];
        for (what, value, ok) in checks {
            if !(ok && value.is_finite()) {
                return Err(Error::Range {
                    what,
                    value,
                    range: "see AugmentConfig",
                });
            }
        }
        Ok(())
    }
}

fn add_noise<R: Rng + ?Sized>(v: &mut [f64], std_dev: f64, rng: &mut R) {
    if std_dev > 0.0 {
        let d = Normal::new(0.0, std_dev).expect("nonnegative finite std_dev");
        for x in v.iter_mut() {
            *x += d.sample(rng);
        }
    }
}

/// One augmented view of `x`. Vectors: weak adds `N(0, weak_noise²)`; strong
/// adds noise at `strong_noise_factor` times that scale, then zeroes each
/// coordinate with probability `mask_fraction`. Images: weak is a random
/// horizontal flip and translation; strong adds a cutout square, a brightness
/// offset and per-pixel noise. Image views are clamped to `[0, 1]`.
pub fn augment<R: Rng + ?Sized>(
    x: &[f64],
    layout: InputLayout,
    strength: Strength,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Vec<f64> {
    match layout {
        InputLayout::Vector { .. } => {
            let mut v = x.to_vec();
            match strength {
                Strength::Weak => add_noise(&mut v, cfg.weak_noise, rng),
                Strength::Strong => {
                    add_noise(&mut v, cfg.weak_noise * cfg.strong_noise_factor, rng);
                    for c in v.iter_mut() {
                        if rng.random_bool(cfg.mask_fraction) {
                            *c = 0.0;
                        }
                    }
                }
            }
            v
        }
        InputLayout::Image { height, width, channels } => {
            let mut v = flip_shift(x, height, width, channels, cfg.max_shift, rng);
            if strength == Strength::Strong {
                cutout(&mut v, height, width, channels, cfg.cutout_fraction, rng);
                if cfg.brightness > 0.0 {
                    let b = rng.random_range(-cfg.brightness..=cfg.brightness);
                    v.iter_mut().for_each(|p| *p += b);
                }
                add_noise(&mut v, cfg.pixel_jitter, rng);
            }
            v.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
            v
        }
    }
}

fn flip_shift<R: Rng + ?Sized>(x: &[f64], h: usize, w: usize, c: usize, max_shift: usize, rng: &mut R) -> Vec<f64> {
    let flip = rng.random_bool(0.5);
    let s = max_shift as i64;
    let dy = rng.random_range(-s..=s);
    let dx = rng.random_range(-s..=s);
    let mut out = vec![0.0; x.len()];
    for r in 0..h {
        let sr = r as i64 - dy;
        if sr < 0 || sr >= h as i64 {
            continue;
        }
        for col in 0..w {
            let mut sc = col as i64 - dx;
            if sc < 0 || sc >= w as i64 {
                continue;
            }
            if flip {
                sc = w as i64 - 1 - sc;
            }
            let src = (sr as usize * w + sc as usize) * c;
            let dst = (r * w + col) * c;
            out[dst..dst + c].copy_from_slice(&x[src..src + c]);
        }
    }
    out
}

fn cutout<R: Rng + ?Sized>(v: &mut [f64], h: usize, w: usize, c: usize, fraction: f64, rng: &mut R) {
    let side = libm::round(libm::sqrt(fraction * (h * w) as f64)) as usize;
    if side == 0 {
        return;
    }
    let (sh, sw) = (side.min(h), side.min(w));
    let top = rng.random_range(0..=h - sh);
    let left = rng.random_range(0..=w - sw);
    for r in top..top + sh {
        for col in left..left + sw {
            let i = (r * w + col) * c;
            v[i..i + c].iter_mut().for_each(|p| *p = 0.5);
        }
    }
}

/// Which rows are labeled; every training row is also in the unlabeled pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Picks `per_class` labeled rows from each class.
pub fn split_labeled<R: Rng + ?Sized>(data: &Dataset, per_class: usize, rng: &mut R) -> Result<Split> {
    let mut labeled = Vec::with_capacity(per_class * data.classes);
    for class in 0..data.classes {
        let members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        if members.len() < per_class {
            return Err(Error::Sampling {
                class,
                available: members.len(),
                needed: per_class,
            });
        }
        labeled.extend(sample(rng, members.len(), per_class).into_iter().map(|j| members[j]));
    }
    labeled.sort_unstable();
    Ok(Split {
        labeled,
        unlabeled: (0..data.len()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    /// Weak views of the labeled rows.
    pub labeled: DenseMatrix,
    pub labels: Vec<usize>,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_weak: DenseMatrix,
    pub unlabeled_strong: DenseMatrix,
    pub unlabeled_indices: Vec<usize>,
}

/// `batch_size / K` labeled rows per class and `mu · batch_size` distinct
/// unlabeled rows, each with a weak and a strong view.
pub fn sample_batch<R: Rng + ?Sized>(
    data: &Dataset,
    split: &Split,
    batch_size: usize,
    mu: usize,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<MixedBatch> {
    let k = data.classes;
    if batch_size == 0 || !batch_size.is_multiple_of(k) {
        return Err(Error::InvalidArgument(alloc::format!(
            "batch size {batch_size} is not a positive multiple of {k} classes"
        )));
    }
    let per_class = batch_size / k;
    let mut labeled_indices = Vec::with_capacity(batch_size);
    for class in 0..k {
        let members: Vec<usize> = split.labeled.iter().copied().filter(|&i| data.labels[i] == class).collect();
        if members.len() < per_class {
            return Err(Error::Sampling {
                class,
                available: members.len(),
                needed: per_class,
            });
        }
        labeled_indices.extend(sample(rng, members.len(), per_class).into_iter().map(|j| members[j]));
    }
    let n_u = mu * batch_size;
    if split.unlabeled.len() < n_u {
        return Err(Error::Sampling {
            class: usize::MAX,
            available: split.unlabeled.len(),
            needed: n_u,
        });
    }
    let unlabeled_indices: Vec<usize> = sample(rng, split.unlabeled.len(), n_u)
        .into_iter()
        .map(|j| split.unlabeled[j])
        .collect();

    let dim = data.features.cols();
    let mut labeled = DenseMatrix::zeros(batch_size, dim);
    for (r, &i) in labeled_indices.iter().enumerate() {
        let v = augment(data.features.row(i), data.layout, Strength::Weak, cfg, rng);
        labeled.row_mut(r).copy_from_slice(&v);
    }
    let mut unlabeled_weak = DenseMatrix::zeros(n_u, dim);
    let mut unlabeled_strong = DenseMatrix::zeros(n_u, dim);
    for (r, &i) in unlabeled_indices.iter().enumerate() {
        let x = data.features.row(i);
        unlabeled_weak
            .row_mut(r)
            .copy_from_slice(&augment(x, data.layout, Strength::Weak, cfg, rng));
        unlabeled_strong
            .row_mut(r)
            .copy_from_slice(&augment(x, data.layout, Strength::Strong, cfg, rng));
    }
    Ok(MixedBatch {
        labels: labeled_indices.iter().map(|&i| data.labels[i]).collect(),
        labeled,
        labeled_indices,
        unlabeled_weak,
        unlabeled_strong,
        unlabeled_indices,
    })
}

const IDX_UNSIGNED_BYTE: u8 = 0x08;

/// An IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses big-endian IDX: two zero bytes, type code, rank, one `u32` per
/// dimension, then the payload. Only the unsigned-byte type is accepted.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Format("IDX header shorter than 4 bytes".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(alloc::format!(
            "bad IDX magic {:02x}{:02x}",
            bytes[0],
            bytes[1]
        )));
    }
    if bytes[2] != IDX_UNSIGNED_BYTE {
        return Err(Error::Format(alloc::format!(
            "unsupported IDX element type 0x{:02x}",
            bytes[2]
        )));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Length {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let payload = &bytes[header..];
    if payload.len() != count {
        return Err(Error::Length {
            expected: count,
            found: payload.len(),
        });
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Result<Vec<u8>> {
    let count: usize = array.dims.iter().product();
    if count != array.data.len() {
        return Err(Error::Length {
            expected: count,
            found: array.data.len(),
        });
    }
    if array.dims.len() > u8::MAX as usize {
        return Err(Error::Format("IDX rank above 255".into()));
    }
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + count);
    out.extend_from_slice(&[0, 0, IDX_UNSIGNED_BYTE, array.dims.len() as u8]);
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::Format("IDX dimension above u32::MAX".into()))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    Ok(out)
}

/// Images as rows scaled to `[0, 1]`; a rank-3 array is `n × h × w`, rank 4
/// adds a trailing channel axis.
pub fn idx_images(array: &IdxArray) -> Result<(DenseMatrix, InputLayout)> {
    let (n, height, width, channels) = match array.dims[..] {
        [n, h, w] => (n, h, w, 1),
        [n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(Error::Format(alloc::format!(
                "IDX images need rank 3 or 4, got {}",
                array.dims.len()
            )))
        }
    };
    let values = array.data.iter().map(|&b| b as f64 / 255.0).collect();
    let features = DenseMatrix::from_vec(n, height * width * channels, values)?;
    Ok((features, InputLayout::Image { height, width, channels }))
}

pub fn idx_labels(array: &IdxArray) -> Result<Vec<usize>> {
    if array.dims.len() != 1 {
        return Err(Error::Format(alloc::format!(
            "IDX labels need rank 1, got {}",
            array.dims.len()
        )));
    }
    Ok(array.data.iter().map(|&b| b as usize).collect())
}

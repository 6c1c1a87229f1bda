//! Dataset acquisition and preparation: binary parsers for IDX and CIFAR-10
//! files, synthetic generators, class filtering, normalization, and seeded
//! balanced splits.

mod cifar;
mod idx;
mod synth;

pub use cifar::{load_cifar10_binary, save_cifar10_binary};
pub use idx::{load_idx_images, load_idx_labels, load_idx_pool, save_idx_images, save_idx_labels, IdxImages};
pub use synth::{gen_digit_pool, gen_synthetic_gaussians, sample_gaussian_task};

use crate::error::{Error, Result};
use crate::models::{Dataset, FeatureBounds};
use crate::numerics::{DenseMatrix, RngStream};
use crate::scalar::Real;

/// Raw byte-valued samples before class filtering and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPool {
    n: usize,
    m: usize,
    /// Row-major `n x m` feature bytes.
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl RawPool {
    pub fn new(n: usize, m: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != n * m {
            return Err(Error::Shape {
                context: "RawPool::new",
                details: format!("{} pixels for {}x{}", pixels.len(), n, m),
            });
        }
        if labels.len() != n {
            return Err(Error::Shape {
                context: "RawPool::new",
                details: format!("{} labels for {} samples", labels.len(), n),
            });
        }
        Ok(Self { n, m, pixels, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn sample(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.m..(i + 1) * self.m]
    }

    /// Joins pools with identical feature width (e.g. original train + test).
    pub fn concat(pools: &[RawPool]) -> Result<RawPool> {
        let m = pools.first().map_or(0, |p| p.m);
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        let mut n = 0;
        for p in pools {
            if p.m != m {
                return Err(Error::Shape {
                    context: "RawPool::concat",
                    details: format!("widths {} vs {}", m, p.m),
                });
            }
            pixels.extend_from_slice(&p.pixels);
            labels.extend_from_slice(&p.labels);
            n += p.n;
        }
        RawPool::new(n, m, pixels, labels)
    }
}

/// Pixel normalization applied when raw bytes become features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `x / 255` into `[0, 1]`.
    UnitInterval,
    /// `x / 127.5 - 1` into `[-1, 1]`.
    SymmetricUnit,
}

impl Normalization {
    fn apply<T: Real>(self, byte: u8) -> T {
        match self {
            Normalization::UnitInterval => T::of(byte as f64 / 255.0),
            Normalization::SymmetricUnit => T::of(byte as f64 / 127.5 - 1.0),
        }
    }

    fn bounds<T: Real>(self, m: usize) -> FeatureBounds<T> {
        match self {
            Normalization::UnitInterval => FeatureBounds::uniform(T::zero(), T::one(), m),
            Normalization::SymmetricUnit => FeatureBounds::uniform(-T::one(), T::one(), m),
        }
        .expect("static bounds")
    }
}

/// Balanced binary-task split description.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// `(label_a -> 0, label_b -> 1)` in the raw pool's label space.
    pub class_pair: (u8, u8),
    pub normalization: Normalization,
    pub seed: u64,
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_train", self.n_train),
            ("n_val", self.n_val),
            ("n_test", self.n_test),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{} must be >= 1", name)));
            }
            if n % 2 != 0 {
                return Err(Error::Config(format!(
                    "{} = {} must be even for balanced splits",
                    name, n
                )));
            }
        }
        if self.class_pair.0 == self.class_pair.1 {
            return Err(Error::Config("class pair labels must differ".into()));
        }
        Ok(())
    }
}

/// Filters the pool to the class pair, maps labels to `{0, 1}`, and draws
/// balanced disjoint train/validation/test splits with the seeded RNG;
/// features are normalized and bounded per `spec.normalization`.
pub fn make_binary_task<T: Real>(
    pool: &RawPool,
    spec: &SplitSpec,
) -> Result<(Dataset<T>, Dataset<T>, Dataset<T>)> {
    spec.validate()?;
    let per_class = [spec.n_train / 2, spec.n_val / 2, spec.n_test / 2];
    let needed: usize = per_class.iter().sum();

    let mut rng = RngStream::new(spec.seed).derive("binary-task-split");
    let mut chosen: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (class_idx, &raw_label) in [spec.class_pair.0, spec.class_pair.1].iter().enumerate() {
        let mut members: Vec<usize> = (0..pool.n())
            .filter(|&i| pool.labels()[i] == raw_label)
            .collect();
        if members.len() < needed {
            return Err(Error::InsufficientSamples(format!(
                "class {} has {} samples, {} needed",
                raw_label,
                members.len(),
                needed
            )));
        }
        rng.shuffle(&mut members);
        members.truncate(needed);
        chosen[class_idx] = members;
    }

    let bounds = spec.normalization.bounds::<T>(pool.m());
    let mut offsets = [0usize, 0];
    let mut build = |count_per_class: usize| -> Result<Dataset<T>> {
        let n = count_per_class * 2;
        let mut data = Vec::with_capacity(n * pool.m());
        let mut labels = Vec::with_capacity(n);
        for class_idx in 0..2 {
            let start = offsets[class_idx];
            for &src in &chosen[class_idx][start..start + count_per_class] {
                data.extend(pool.sample(src).iter().map(|&b| spec.normalization.apply::<T>(b)));
                labels.push(class_idx as u8);
            }
            offsets[class_idx] += count_per_class;
        }
        let x = DenseMatrix::new(n, pool.m(), data)?;
        Dataset::new(x, labels, bounds.clone())
    };

    let train = build(per_class[0])?;
    let val = build(per_class[1])?;
    let test = build(per_class[2])?;
    Ok((train, val, test))
}

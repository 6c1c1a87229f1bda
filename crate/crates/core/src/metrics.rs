//! Evaluation measures: classification test error, top-k feature extraction,
//! Kuncheva's consistency index, and parameter-norm diagnostics.

use crate::error::{Error, Result};
use crate::models::{forward, Dataset, ModelSpec, ParamVector};
use crate::scalar::Real;

/// A set of selected feature indices out of a universe of size `universe`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    indices: Vec<usize>,
    universe: usize,
}

impl FeatureSet {
    pub fn new(mut indices: Vec<usize>, universe: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.len() >= universe {
            return Err(Error::Config(format!(
                "feature set size {} must be within (0, {})",
                indices.len(),
                universe
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= universe) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: universe,
            });
        }
        Ok(Self { indices, universe })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    fn intersection_size(&self, other: &Self) -> usize {
        // Both sides sorted.
        let (mut i, mut j, mut r) = (0, 0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    r += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        r
    }
}

/// Fraction of rows where the thresholded prediction disagrees with the
/// label. Probability ties at 0.5 predict class 1.
pub fn test_error<T: Real>(
    spec: &ModelSpec<T>,
    w: &ParamVector<T>,
    data: &Dataset<T>,
) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::InsufficientSamples("empty evaluation set".into()));
    }
    let probs = forward(spec, w, data.x())?;
    let half = T::of(0.5);
    let wrong = probs
        .iter()
        .zip(data.y())
        .filter(|(p, &y)| {
            let pred: u8 = if **p >= half { 1 } else { 0 };
            pred != y
        })
        .count();
    Ok(wrong as f64 / data.n() as f64)
}

/// Per-input-feature salience: for logistic regression the absolute weight,
/// for an MLP the L2 norm of the feature's outgoing first-layer weights.
fn feature_scores<T: Real>(w: &ParamVector<T>) -> Vec<T> {
    let layer = w.layout().layers[0].clone();
    let weights = w.weights(0);
    (0..layer.in_dim)
        .map(|i| {
            let mut acc = T::zero();
            for o in 0..layer.out_dim {
                let v = weights[o * layer.in_dim + i];
                acc = acc + v * v;
            }
            acc.sqrt()
        })
        .collect()
}

/// Indices of the `k` input features with the largest salience; ties break
/// toward the lower index.
pub fn top_k_features<T: Real>(w: &ParamVector<T>, k: usize) -> Result<FeatureSet> {
    let m = w.layout().layers[0].in_dim;
    if k == 0 || k >= m {
        return Err(Error::Config(format!("k = {} must be within (0, {})", k, m)));
    }
    let scores = feature_scores(w);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    FeatureSet::new(order, m)
}

/// Kuncheva's consistency index `(r d - k²) / (k (d - k))` for two feature
/// subsets of equal size `k` over a universe of size `d`, with
/// `r = |A ∩ B|`. 1 means identical sets, 0 chance-level overlap.
pub fn kuncheva_index(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.universe != b.universe {
        return Err(Error::Config(format!(
            "feature sets over different universes: {} vs {}",
            a.universe, b.universe
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "feature sets of different sizes: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let d = a.universe as f64;
    let k = a.len() as f64;
    let r = a.intersection_size(b) as f64;
    Ok((r * d - k * k) / (k * (d - k)))
}

/// Squared L2 norms normalized by parameter count, per layer and total.
/// Biases are included; this is a descriptive diagnostic, not the penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNorms<T> {
    /// `||w_layer||² / d_layer` per layer.
    pub per_layer: Vec<T>,
    /// `||w||² / d` over the whole vector.
    pub total: T,
}

pub fn weight_norms<T: Real>(w: &ParamVector<T>) -> WeightNorms<T> {
    let layout = w.layout().clone();
    let per_layer = (0..layout.layers.len())
        .map(|l| {
            let layer = &layout.layers[l];
            let sq = w.weights(l).iter().chain(w.biases(l)).map(|v| *v * *v).sum::<T>();
            sq / T::of(layer.param_len() as f64)
        })
        .collect();
    let total = w.data().iter().map(|v| *v * *v).sum::<T>() / T::of(w.len() as f64);
    WeightNorms { per_layer, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, FeatureBounds, InitScheme, ParamLayout};
    use crate::numerics::{DenseMatrix, RngStream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn featureset(idx: &[usize], d: usize) -> FeatureSet {
        FeatureSet::new(idx.to_vec(), d).unwrap()
    }

    #[test]
    fn test_error_perfect_and_degenerate() {
        let spec = ModelSpec::logistic(1);
        let bounds = FeatureBounds::uniform(-10.0, 10.0, 1).unwrap();
        let x = DenseMatrix::from_rows(&[&[1.0], &[-1.0], &[2.0], &[-2.0]]).unwrap();
        let data = Dataset::new(x, vec![1, 0, 1, 0], bounds).unwrap();

        let w = ParamVector::from_data(spec.layout(), vec![5.0, 0.0]).unwrap();
        assert_eq!(test_error(&spec, &w, &data).unwrap(), 0.0);

        // w = 0: every probability is exactly 0.5 and predicts class 1.
        let zero = init_params(&spec, InitScheme::Zeros);
        assert_eq!(test_error(&spec, &zero, &data).unwrap(), 0.5);
    }

    #[test]
    fn test_error_counts_misclassifications() {
        let spec = ModelSpec::logistic(1);
        let bounds = FeatureBounds::uniform(-10.0, 10.0, 1).unwrap();
        let x = DenseMatrix::from_rows(&[&[1.0], &[2.0], &[-1.0], &[-3.0]]).unwrap();
        // Third point mislabeled relative to the slope-5 model.
        let data = Dataset::new(x, vec![1, 1, 1, 0], bounds).unwrap();
        let w = ParamVector::from_data(spec.layout(), vec![5.0, 0.0]).unwrap();
        assert_eq!(test_error(&spec, &w, &data).unwrap(), 0.25);
    }

    #[test]
    fn test_error_invariant_under_row_permutation() {
        let mut rng = RngStream::new(5);
        let spec = ModelSpec::logistic(3);
        let bounds = FeatureBounds::uniform(-10.0, 10.0, 3).unwrap();
        let x = DenseMatrix::from_fn(12, 3, |_, _| rng.uniform(-1.0, 1.0));
        let y: Vec<u8> = (0..12).map(|_| rng.below(2) as u8).collect();
        let data = Dataset::new(x, y, bounds).unwrap();
        let w = ParamVector::from_data(
            spec.layout(),
            (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let base = test_error(&spec, &w, &data).unwrap();
        let mut perm: Vec<usize> = (0..12).collect();
        rng.shuffle(&mut perm);
        let shuffled = data.subset(&perm).unwrap();
        assert_eq!(test_error(&spec, &w, &shuffled).unwrap(), base);
    }

    #[test]
    fn top_k_magnitude_order_and_ties() {
        let layout = ParamLayout::flat(3);
        let w = ParamVector::from_data(layout, vec![0.1, -5.0, 3.0]).unwrap();
        let top = top_k_features(&w, 2).unwrap();
        assert_eq!(top.indices(), &[1, 2]);

        let layout = ParamLayout::flat(4);
        let w = ParamVector::from_data(layout, vec![2.0, 2.0, 2.0, 2.0]).unwrap();
        let top = top_k_features(&w, 2).unwrap();
        assert_eq!(top.indices(), &[0, 1]);
    }

    #[test]
    fn top_k_rejects_k_out_of_range() {
        let w = ParamVector::from_data(ParamLayout::flat(3), vec![1.0, 2.0, 3.0]).unwrap();
        assert!(top_k_features(&w, 3).is_err());
        assert!(top_k_features(&w, 0).is_err());
    }

    #[test]
    fn top_k_matches_full_sort_oracle() {
        let mut rng = RngStream::new(77);
        for _ in 0..20 {
            let m = 12;
            let data: Vec<f64> = (0..m).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let w = ParamVector::from_data(ParamLayout::flat(m), data.clone()).unwrap();
            let k = 1 + rng.below(m - 1);
            let got = top_k_features(&w, k).unwrap();

            let mut pairs: Vec<(usize, f64)> =
                data.iter().map(|v| v.abs()).enumerate().collect();
            pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut want: Vec<usize> = pairs[..k].iter().map(|(i, _)| *i).collect();
            want.sort_unstable();
            assert_eq!(got.indices(), want.as_slice());
        }
    }

    #[test]
    fn top_k_invariant_under_positive_scaling() {
        let data = vec![0.4, -1.5, 0.9, 2.2, -0.1];
        let w = ParamVector::from_data(ParamLayout::flat(5), data.clone()).unwrap();
        let scaled =
            ParamVector::from_data(ParamLayout::flat(5), data.iter().map(|v| v * 7.5).collect())
                .unwrap();
        assert_eq!(
            top_k_features(&w, 3).unwrap(),
            top_k_features(&scaled, 3).unwrap()
        );
    }

    #[test]
    fn kuncheva_identity_and_hand_values() {
        let a = featureset(&[0, 3, 7], 10);
        assert_relative_eq!(kuncheva_index(&a, &a).unwrap(), 1.0, epsilon = 1e-15);

        // d = 10, k = 3, r = 2 -> (20 - 9) / 21.
        let b = featureset(&[0, 3, 9], 10);
        assert_relative_eq!(kuncheva_index(&a, &b).unwrap(), 11.0 / 21.0, epsilon = 1e-15);

        // r = k²/d: chance level is exactly zero (d = 8, k = 4, r = 2).
        let c = featureset(&[0, 1, 2, 3], 8);
        let d = featureset(&[2, 3, 4, 5], 8);
        assert_relative_eq!(kuncheva_index(&c, &d).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kuncheva_rejects_mismatched_sets() {
        let a = featureset(&[0, 1], 10);
        let b = featureset(&[0, 1, 2], 10);
        assert!(kuncheva_index(&a, &b).is_err());
        let c = featureset(&[0, 1], 12);
        assert!(kuncheva_index(&a, &c).is_err());
    }

    proptest! {
        #[test]
        fn kuncheva_symmetric(seed in 0u64..500) {
            let mut rng = RngStream::new(seed);
            let d = 6 + rng.below(20);
            let k = 1 + rng.below(d - 1);
            let pool: Vec<usize> = (0..d).collect();
            let a = FeatureSet::new(rng.distinct_from(&pool, k).unwrap(), d).unwrap();
            let b = FeatureSet::new(rng.distinct_from(&pool, k).unwrap(), d).unwrap();
            let ab = kuncheva_index(&a, &b).unwrap();
            let ba = kuncheva_index(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(kuncheva_index(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn weight_norm_diagnostics() {
        let spec = ModelSpec::<f64>::mlp(vec![2, 2, 1], 0.01).unwrap();
        let zero = init_params(&spec, InitScheme::Zeros);
        let norms = weight_norms(&zero);
        assert!(norms.per_layer.iter().all(|&v| v == 0.0));
        assert_eq!(norms.total, 0.0);

        // Single layer w = [3, 4], d = 2: 25 / 2 = 12.5.
        let w = ParamVector::from_data(ParamLayout::flat(2), vec![3.0, 4.0]).unwrap();
        let norms = weight_norms(&w);
        assert_relative_eq!(norms.per_layer[0], 12.5, epsilon = 1e-12);
        assert_relative_eq!(norms.total, 12.5, epsilon = 1e-12);

        // Partition identity: Σ_layers d_g * value_g = d * total.
        let mut rng = RngStream::new(13);
        let w = ParamVector::from_data(
            spec.layout(),
            (0..spec.layout().len).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let norms = weight_norms(&w);
        let lhs: f64 = norms
            .per_layer
            .iter()
            .enumerate()
            .map(|(l, &v)| v * w.layout().layers[l].param_len() as f64)
            .sum();
        assert_relative_eq!(lhs, norms.total * w.len() as f64, epsilon = 1e-10);
    }
}

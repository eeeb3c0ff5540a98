//! Hard and soft k-nearest-neighbour predictors, and the attendance
//! diagnostic that links the soft predictor's temperature to basin width.

use serde::Serialize;

use crate::dynamics::{flow, FlowConfig};
use crate::error::{check_dim, Error, Result};
use crate::landscape::{softmax, EnergyLandscape, MemorySet};
use crate::vecops;

/// A prediction in both numeric and categorical form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Weighted mean of the labels read as numbers.
    pub mean_label: f64,
    /// Weight per class, ordered like `MemorySet::classes()`.
    pub distribution: Vec<f64>,
    pub classes: Vec<u32>,
}

impl Prediction {
    fn from_weights(memories: &MemorySet, weights: &[f64]) -> Self {
        let classes = memories.classes();
        let mut distribution = vec![0.0; classes.len()];
        let mut mean_label = 0.0;
        for (w, &l) in weights.iter().zip(memories.labels()) {
            let k = classes.binary_search(&l).expect("label present");
            distribution[k] += w;
            mean_label += w * l as f64;
        }
        Self {
            mean_label,
            distribution,
            classes,
        }
    }

    /// Class with the largest weight; ties go to the smaller label.
    pub fn argmax_class(&self) -> u32 {
        let mut best = 0;
        for k in 1..self.distribution.len() {
            if self.distribution[k] > self.distribution[best] {
                best = k;
            }
        }
        self.classes[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftWeights {
    pub weights: Vec<f64>,
    pub tau: f64,
}

impl SoftWeights {
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }

    /// `exp(entropy)`: how many memories the weights effectively cover.
    pub fn effective_count(&self) -> f64 {
        self.entropy().exp()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

/// Unweighted average over the `k` closest memories (ties by lower index).
pub fn knn_predict(memories: &MemorySet, query: &[f64], k: usize) -> Result<Prediction> {
    check_dim(memories.dim(), query.len())?;
    if k == 0 || k > memories.len() {
        return Err(Error::input(format!("k must lie in 1..={}, got {k}", memories.len())));
    }
    let classes = memories.classes();
    let mut counts = vec![0usize; classes.len()];
    let mut label_sum = 0.0;
    for (i, _) in memories.ranked_by_distance(query).into_iter().take(k) {
        let l = memories.label(i);
        counts[classes.binary_search(&l).expect("label present")] += 1;
        label_sum += l as f64;
    }
    Ok(Prediction {
        mean_label: label_sum / k as f64,
        distribution: counts.iter().map(|&c| c as f64 / k as f64).collect(),
        classes,
    })
}

/// Softmax-weighted average with `w_i ∝ exp(-|q - x_i|^2 / tau)`.
pub fn soft_knn_predict(memories: &MemorySet, query: &[f64], tau: f64) -> Result<(Prediction, SoftWeights)> {
    check_dim(memories.dim(), query.len())?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::input(format!("tau must be positive and finite, got {tau}")));
    }
    let logits: Vec<f64> = memories
        .points()
        .iter()
        .map(|p| -vecops::sq_dist(query, p) / tau)
        .collect();
    let weights = softmax(&logits);
    let pred = Prediction::from_weights(memories, &weights);
    Ok((pred, SoftWeights { weights, tau }))
}

/// Landscape weights at the end of the flow from `query`, reported with the
/// equivalent soft-k-NN temperature `tau = 2 / beta`.
pub fn attendance_profile(landscape: &EnergyLandscape, query: &[f64], config: &FlowConfig) -> Result<SoftWeights> {
    let r = flow(landscape, query, config)?;
    Ok(SoftWeights {
        weights: landscape.weights(&r.terminal)?,
        tau: 2.0 / landscape.beta(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn zero_one() -> MemorySet {
        MemorySet::new(vec![vec![0.0], vec![1.0]], vec![0, 1]).unwrap()
    }

    #[test]
    fn k_equal_n_is_global_mean() {
        let m = MemorySet::new(vec![vec![0.0], vec![1.0], vec![5.0]], vec![0, 1, 1]).unwrap();
        let p = knn_predict(&m, &[0.1], 3).unwrap();
        assert_abs_diff_eq!(p.mean_label, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn one_nn() {
        let p = knn_predict(&zero_one(), &[0.25], 1).unwrap();
        assert_eq!(p.mean_label, 0.0);
        assert_eq!(p.argmax_class(), 0);
    }

    #[test]
    fn k_out_of_range() {
        assert!(knn_predict(&zero_one(), &[0.0], 0).is_err());
        assert!(knn_predict(&zero_one(), &[0.0], 3).is_err());
    }

    #[test]
    fn distance_ties_go_to_lower_index() {
        let m = MemorySet::new(vec![vec![1.0], vec![-1.0]], vec![4, 2]).unwrap();
        let p = knn_predict(&m, &[0.0], 1).unwrap();
        assert_eq!(p.argmax_class(), 4);
    }

    #[test]
    fn soft_weights_two_memories() {
        // e^{-0.125}, e^{-1.125} normalized: e / (1 + e)
        let (p, w) = soft_knn_predict(&zero_one(), &[0.25], 0.5).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(w.weights[0], e / (1.0 + e), epsilon = 1e-12);
        assert_abs_diff_eq!(w.weights[0], 0.7310, epsilon = 1e-3);
        assert_abs_diff_eq!(p.mean_label, 0.2690, epsilon = 1e-3);
    }

    #[test]
    fn soft_limits() {
        let m = MemorySet::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![0, 1, 1]).unwrap();
        let (p, _) = soft_knn_predict(&m, &[0.4], 1e8).unwrap();
        assert_abs_diff_eq!(p.mean_label, 2.0 / 3.0, epsilon = 1e-6);
        let (p, _) = soft_knn_predict(&m, &[0.4], 1e-8).unwrap();
        assert_eq!(p.mean_label, 0.0);
        assert!(soft_knn_predict(&m, &[0.4], 0.0).is_err());
    }

    #[test]
    fn attendance_single_memory() {
        let m = MemorySet::new(vec![vec![0.7]], vec![0]).unwrap();
        let l = EnergyLandscape::new(m, 2.0).unwrap();
        let w = attendance_profile(&l, &[3.0], &FlowConfig::default()).unwrap();
        assert_eq!(w.weights, vec![1.0]);
        assert_abs_diff_eq!(w.effective_count(), 1.0, epsilon = 1e-15);
    }
}

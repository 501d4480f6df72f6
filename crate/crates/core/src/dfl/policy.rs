//! Soft top-K selection.
//!
//! Selection probabilities are `K * softmax(index / temperature)`. Any arm
//! whose probability would exceed one is pinned at one and the remaining
//! budget is redistributed over the other arms in proportion to their softmax
//! weights, so the expected number selected is exactly `min(K, N)`.

/// Per-step soft selection over a set of arms.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPolicy {
    pub selection_logits: Vec<f64>,
    pub temperature: f64,
    pub budget: usize,
    probs: Vec<f64>,
    free: Vec<bool>,
    free_mass: f64,
}

impl SoftPolicy {
    pub fn new(indices: &[f64], budget: usize, temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        let n = indices.len();
        let logits: Vec<f64> = indices.iter().map(|x| x / temperature).collect();
        let mut probs = vec![0.0; n];
        let mut free = vec![true; n];
        let mut free_mass = 0.0;
        if budget >= n {
            probs.iter_mut().for_each(|p| *p = 1.0);
            free.iter_mut().for_each(|f| *f = false);
        } else if budget > 0 {
            let mut clamped = 0usize;
            loop {
                free_mass = (budget - clamped) as f64;
                let top = logits
                    .iter()
                    .zip(&free)
                    .filter(|(_, &f)| f)
                    .map(|(z, _)| *z)
                    .fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
                let total: f64 = weights
                    .iter()
                    .zip(&free)
                    .filter(|(_, &f)| f)
                    .map(|(w, _)| w)
                    .sum();
                let mut changed = false;
                for i in 0..n {
                    if free[i] {
                        probs[i] = free_mass * weights[i] / total;
                        if probs[i] > 1.0 {
                            free[i] = false;
                            probs[i] = 1.0;
                            clamped += 1;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
        } else {
            free.iter_mut().for_each(|f| *f = false);
        }
        Self {
            selection_logits: logits,
            temperature,
            budget,
            probs,
            free,
            free_mass,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Maps `d(loss)/d(prob)` to `d(loss)/d(index)`.
    pub fn backprop(&self, upstream: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.probs.len()];
        if self.free_mass <= 0.0 {
            return out;
        }
        let inner: f64 = (0..self.probs.len())
            .filter(|&i| self.free[i])
            .map(|i| upstream[i] * self.probs[i])
            .sum::<f64>()
            / self.free_mass;
        for i in 0..out.len() {
            if self.free[i] {
                out[i] = self.probs[i] * (upstream[i] - inner) / self.temperature;
            }
        }
        out
    }
}

pub fn policy_probs(indices: &[f64], budget: usize, temperature: f64) -> Vec<f64> {
    SoftPolicy::new(indices, budget, temperature).into_probs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_indices() {
        let p = policy_probs(&[0.3; 4], 2, 0.5);
        assert!(p.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn low_temperature_is_hard_top_k() {
        let p = policy_probs(&[0.9, 0.1, 0.5, 0.3], 2, 1e-4);
        assert!(p[0] >= 1.0 - 1e-3 && p[2] >= 1.0 - 1e-3);
        assert!(p[1] <= 1e-3 && p[3] <= 1e-3);
    }

    #[test]
    fn scalar_softmax() {
        let p = policy_probs(&[1.0, 0.0, 0.0], 1, 1.0);
        let z = 1f64.exp() + 2.0;
        let expected = [1f64.exp() / z, 1.0 / z, 1.0 / z];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clamped_mass_is_redistributed() {
        let p = policy_probs(&[5.0, 0.0, 0.0, 0.0], 2, 1.0);
        assert_eq!(p[0], 1.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn budget_edges() {
        assert_eq!(policy_probs(&[0.1, 0.2], 0, 1.0), vec![0.0, 0.0]);
        assert_eq!(policy_probs(&[0.1, 0.2], 3, 1.0), vec![1.0, 1.0]);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let x = [0.4, -0.2, 1.3, 0.1, 0.9];
        let upstream = [0.3, -1.0, 0.5, 2.0, -0.7];
        let pol = SoftPolicy::new(&x, 2, 0.7);
        let g = pol.backprop(&upstream);
        let f = |x: &[f64]| -> f64 {
            policy_probs(x, 2, 0.7)
                .iter()
                .zip(upstream)
                .map(|(p, u)| p * u)
                .sum()
        };
        for k in 0..x.len() {
            let mut hi = x;
            let mut lo = x;
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            let fd = (f(&hi) - f(&lo)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8, "{k}: {fd} vs {}", g[k]);
        }
    }
}

//! Finite mixtures of univariate Gaussians.

use alloc::vec::Vec;

use crate::special::{std_normal_cdf, std_normal_sf};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    /// `(weight, mean, variance)`, weights summing to one.
    components: Vec<(f64, f64, f64)>,
}

impl GaussianMixture {
    /// Weights are normalised; components with zero weight are dropped.
    pub fn new(components: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let mut c: Vec<_> = components.into_iter().filter(|c| c.0 > 0.0).collect();
        let total: f64 = c.iter().map(|c| c.0).sum();
        c.iter_mut().for_each(|c| c.0 /= total);
        Self { components: c }
    }

    pub fn single(mean: f64, var: f64) -> Self {
        Self { components: alloc::vec![(1.0, mean, var)] }
    }

    pub fn components(&self) -> &[(f64, f64, f64)] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|&(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self.components.iter().map(|&(w, m, v)| w * (v + m * m)).sum();
        (second - mean * mean).max(0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|&(w, m, v)| w * component_cdf(x, m, v)).sum()
    }

    /// `P(X > x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m, v)| {
                w * if v > 0.0 {
                    std_normal_sf((x - m) / libm::sqrt(v))
                } else if m > x {
                    1.0
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Quantile by bisection on the CDF to an absolute width of 1e-10.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(_, m, v) in &self.components {
            let s = libm::sqrt(v);
            lo = lo.min(m - 40.0 * s);
            hi = hi.max(m + 40.0 * s);
        }
        if lo == hi {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-10 || mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn component_cdf(x: f64, m: f64, v: f64) -> f64 {
    if v > 0.0 {
        std_normal_cdf((x - m) / libm::sqrt(v))
    } else if x >= m {
        1.0
    } else {
        0.0
    }
}

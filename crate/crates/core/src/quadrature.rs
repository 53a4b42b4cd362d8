//! Tensor Gauss–Legendre rules on the unit box.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::geom::{Point, MAX_DIM};

/// Points per axis used for dual functionals and Gram entries of degree-`p`
/// spaces.
pub fn functional_points(p: usize) -> usize {
    (2 * p + 1).div_ceil(2) + 1
}

/// Points per axis for error norms of smooth fields.
pub fn norm_points(p: usize) -> usize {
    p + 4
}

/// Gauss–Legendre nodes and weights on `[0, 1]`, nodes ascending.
pub fn unit_rule(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    let rule = GaussLegendre::new(n);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Tensor rule on the reference box `[0,1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub per_axis: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn tensor(dim: usize, per_axis: usize) -> Self {
        let line = unit_rule(per_axis);
        let n = line.len();
        let total = n.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for lin in 0..total {
            let mut r = [0.0; MAX_DIM];
            let mut w = 1.0;
            let mut rem = lin;
            for v in r.iter_mut().take(dim) {
                let (x, wx) = line[rem % n];
                *v = x;
                w *= wx;
                rem /= n;
            }
            points.push(r);
            weights.push(w);
        }
        Self {
            dim,
            per_axis: n,
            points,
            weights,
        }
    }

    /// Exact for per-axis polynomial degree up to this value.
    pub fn exact_degree(&self) -> usize {
        2 * self.per_axis - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_exactly() {
        let q = QuadratureRule::tensor(2, 3);
        for a in 0..=5 {
            for b in 0..=5 {
                let s: f64 = q
                    .iter()
                    .map(|(r, w)| w * r[0].powi(a) * r[1].powi(b))
                    .sum();
                let exact = 1.0 / ((a + 1) * (b + 1)) as f64;
                assert!((s - exact).abs() < 1e-14, "{a} {b}");
            }
        }
    }

    #[test]
    fn functional_rule_size() {
        assert_eq!(functional_points(2), 4);
        assert_eq!(functional_points(3), 5);
    }
}

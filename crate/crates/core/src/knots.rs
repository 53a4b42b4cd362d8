//! Local knot vectors, single B-spline evaluation and knot overlap.

use serde::{Deserialize, Serialize};

use crate::error::{BasisError, DualityError};

/// The `p + 2` knots of one univariate B-spline of degree `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LocalKnotVector(Vec<f64>);

impl LocalKnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self, BasisError> {
        let bad = |reason: &str| BasisError::InvalidKnots {
            knots: knots.clone(),
            reason: reason.to_string(),
        };
        if knots.len() < 2 {
            return Err(bad("needs at least two knots"));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(bad("knots must be finite"));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(bad("knots must be nondecreasing"));
        }
        if !(knots[0] < knots[knots.len() - 1]) {
            return Err(bad("first knot must be below the last"));
        }
        let p = knots.len() - 2;
        if max_multiplicity(&knots) > p + 1 {
            return Err(bad("knot multiplicity exceeds degree + 1"));
        }
        Ok(Self(knots))
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 2
    }

    pub fn knots(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Nonempty knot intervals `[lo, hi)` of the support, in order.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.0
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1]))
            .collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_unchecked(&self.0, x)
    }
}

impl TryFrom<Vec<f64>> for LocalKnotVector {
    type Error = BasisError;
    fn try_from(v: Vec<f64>) -> Result<Self, BasisError> {
        Self::new(v)
    }
}

impl From<LocalKnotVector> for Vec<f64> {
    fn from(k: LocalKnotVector) -> Vec<f64> {
        k.0
    }
}

pub fn max_multiplicity(knots: &[f64]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (i, k) in knots.iter().enumerate() {
        run = if i > 0 && *k == knots[i - 1] { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

/// Value of the B-spline with local knots `knots` at `x`; zero outside the
/// half-open support `[first, last)`.
pub fn eval_univariate(knots: &[f64], x: f64) -> Result<f64, BasisError> {
    LocalKnotVector::new(knots.to_vec()).map(|k| k.eval(x))
}

fn eval_unchecked(knots: &[f64], x: f64) -> f64 {
    let n = knots.len();
    if !(x >= knots[0] && x < knots[n - 1]) {
        return 0.0;
    }
    eval_piece(knots, x, x, 0)[0]
}

/// Value and derivatives up to `order` of the polynomial piece that the
/// B-spline takes on the knot interval containing `at`, evaluated at `x`.
///
/// Selecting the piece by `at` instead of `x` lets element-wise code
/// evaluate closures of elements without one-sided ambiguity.
pub fn eval_piece(knots: &[f64], at: f64, x: f64, order: usize) -> Vec<f64> {
    let n = knots.len();
    let p = n - 2;
    // table[k][i] = N_{i,k}(x) restricted to the chosen interval
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
    table.push(
        (0..n - 1)
            .map(|i| if knots[i] <= at && at < knots[i + 1] { 1.0 } else { 0.0 })
            .collect(),
    );
    for k in 1..=p {
        let prev = &table[k - 1];
        let row = (0..n - 1 - k)
            .map(|i| {
                let mut v = 0.0;
                let d1 = knots[i + k] - knots[i];
                if d1 > 0.0 {
                    v += (x - knots[i]) / d1 * prev[i];
                }
                let d2 = knots[i + k + 1] - knots[i + 1];
                if d2 > 0.0 {
                    v += (knots[i + k + 1] - x) / d2 * prev[i + 1];
                }
                v
            })
            .collect();
        table.push(row);
    }
    (0..=order).map(|m| derivative(knots, &table, 0, p, m)).collect()
}

/// Value and first derivative of the piece selected by `at`; allocation
/// free for degrees below 15.
pub fn eval_piece1(knots: &[f64], at: f64, x: f64) -> [f64; 2] {
    const CAP: usize = 16;
    let n = knots.len();
    if n > CAP {
        let v = eval_piece(knots, at, x, 1);
        return [v[0], v[1]];
    }
    let p = n - 2;
    let mut row = [0.0; CAP];
    for i in 0..n - 1 {
        row[i] = if knots[i] <= at && at < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut lower = [0.0; 2];
    for k in 1..=p {
        if k == p {
            lower = [row[0], row[1]];
        }
        for i in 0..n - 1 - k {
            let mut v = 0.0;
            let d1 = knots[i + k] - knots[i];
            if d1 > 0.0 {
                v += (x - knots[i]) / d1 * row[i];
            }
            let d2 = knots[i + k + 1] - knots[i + 1];
            if d2 > 0.0 {
                v += (knots[i + k + 1] - x) / d2 * row[i + 1];
            }
            row[i] = v;
        }
    }
    if p == 0 {
        return [row[0], 0.0];
    }
    let mut d = 0.0;
    let d1 = knots[p] - knots[0];
    if d1 > 0.0 {
        d += lower[0] / d1;
    }
    let d2 = knots[p + 1] - knots[1];
    if d2 > 0.0 {
        d -= lower[1] / d2;
    }
    [row[0], p as f64 * d]
}

fn derivative(knots: &[f64], table: &[Vec<f64>], i: usize, k: usize, m: usize) -> f64 {
    if m == 0 {
        return table[k][i];
    }
    if m > k {
        return 0.0;
    }
    let mut v = 0.0;
    let d1 = knots[i + k] - knots[i];
    if d1 > 0.0 {
        v += derivative(knots, table, i, k - 1, m - 1) / d1;
    }
    let d2 = knots[i + k + 1] - knots[i + 1];
    if d2 > 0.0 {
        v -= derivative(knots, table, i + 1, k - 1, m - 1) / d2;
    }
    k as f64 * v
}

/// Knots of `N(alpha * x + beta)` expressed as a B-spline in `x`.
pub fn reparametrize(knots: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let mut out: Vec<f64> = knots.iter().map(|k| (k - beta) / alpha).collect();
    if alpha < 0.0 {
        out.reverse();
    }
    out
}

/// Two local knot vectors placed as windows of one common knot vector:
/// `first[i] = common[i + offset_first]`, likewise for `second`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapWitness {
    pub common: Vec<f64>,
    pub offset_first: usize,
    pub offset_second: usize,
}

/// Shortest common knot vector containing both inputs as contiguous
/// windows, if one exists. Ties prefer `first` to start the vector.
pub fn overlap(first: &[f64], second: &[f64]) -> Result<Option<OverlapWitness>, DualityError> {
    if first.len() != second.len() {
        return Err(DualityError::LengthMismatch(first.len(), second.len()));
    }
    let n = first.len();
    let p = n.saturating_sub(2);
    for shift in 0..=n {
        for (lead, tail, swapped) in [(first, second, false), (second, first, true)] {
            if let Some(common) = merge(lead, tail, shift, p) {
                let (offset_first, offset_second) = if swapped { (shift, 0) } else { (0, shift) };
                return Ok(Some(OverlapWitness {
                    common,
                    offset_first,
                    offset_second,
                }));
            }
            if shift == 0 {
                break;
            }
        }
    }
    Ok(None)
}

fn merge(lead: &[f64], tail: &[f64], shift: usize, p: usize) -> Option<Vec<f64>> {
    let n = lead.len();
    if (0..n - shift).any(|i| lead[shift + i] != tail[i]) {
        return None;
    }
    let mut common = lead.to_vec();
    common.extend_from_slice(&tail[n - shift..]);
    if common.windows(2).any(|w| w[1] < w[0]) || max_multiplicity(&common) > p + 1 {
        return None;
    }
    Some(common)
}

/// Whether the two vectors differ and are windows of one knot vector.
pub fn overlap_and_differ(a: &[f64], b: &[f64]) -> bool {
    a != b && matches!(overlap(a, b), Ok(Some(_)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piece_derivative_matches_closed_form() {
        // (1 - x)^2 on [0, 1)
        let k = [0.0, 0.0, 0.0, 1.0];
        let v = eval_piece(&k, 0.5, 0.25, 2);
        assert!((v[0] - 0.5625).abs() < 1e-15);
        assert!((v[1] + 1.5).abs() < 1e-15);
        assert!((v[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fast_piece_matches_general() {
        let k = [0.0, 0.5, 0.5, 1.5, 2.0];
        for &x in &[0.2, 0.5, 0.9, 1.7] {
            for &at in &[0.25, 1.0, 1.75] {
                let v = eval_piece(&k, at, x, 1);
                let f = eval_piece1(&k, at, x);
                assert!((v[0] - f[0]).abs() < 1e-14 && (v[1] - f[1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn piece_selection_evaluates_closed_end() {
        let k = [0.0, 1.0, 1.0, 1.0];
        assert_eq!(eval_piece(&k, 0.5, 1.0, 0)[0], 1.0);
        assert_eq!(eval_univariate(&k, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn reparametrized_knots_give_same_values() {
        let k = [0.0, 1.0, 2.0, 3.0];
        let r = reparametrize(&k, -0.5, 2.0);
        for x in [-1.5, -0.3, 0.7, 2.5] {
            let a = eval_univariate(&k, -0.5 * x + 2.0).unwrap();
            let b = eval_univariate(&r, x).unwrap();
            assert!((a - b).abs() < 1e-14, "{x}: {a} vs {b}");
        }
    }
}

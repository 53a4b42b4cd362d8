//! Reference-cell geometry: points, dihedral orientations of the unit box and
//! d-linear cell maps.
//!
//! Every element of every chart is the d-linear image of the unit box
//! `[0,1]^d`. Corners are numbered in tensor order: corner `c` sits at the
//! reference position whose axis-`a` coordinate is bit `a` of `c`.

use serde::{Deserialize, Serialize};

/// Maximum supported parametric dimension.
pub const MAX_DIM: usize = 3;

/// A point in at most three dimensions; coordinates beyond the active
/// dimension are kept at zero.
pub type Point = [f64; MAX_DIM];

/// Absolute tolerance for point identity in chart coordinates.
pub const GEOM_TOL: f64 = 1e-12;

pub fn point_from_slice(xs: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..xs.len()].copy_from_slice(xs);
    p
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs_diff(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reference position of tensor-order corner `c`.
pub fn corner_position(c: usize, dim: usize) -> Point {
    let mut p = [0.0; MAX_DIM];
    for (a, x) in p.iter_mut().enumerate().take(dim) {
        *x = ((c >> a) & 1) as f64;
    }
    p
}

pub fn corner_count(dim: usize) -> usize {
    1 << dim
}

fn permutations(dim: usize) -> Vec<[u8; MAX_DIM]> {
    match dim {
        1 => vec![[0, 1, 2]],
        2 => vec![[0, 1, 2], [1, 0, 2]],
        3 => vec![
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ],
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// A symmetry of the unit box: input axis `a` is sent to output axis
/// `perm[a]`, reflected first when `flip[a]` is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Orientation {
    pub dim: u8,
    pub perm: [u8; MAX_DIM],
    pub flip: [bool; MAX_DIM],
}

impl Orientation {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim: dim as u8,
            perm: [0, 1, 2],
            flip: [false; MAX_DIM],
        }
    }

    pub fn count(dim: usize) -> usize {
        permutations(dim).len() << dim
    }

    /// Decodes `code = rank(perm) * 2^d + flip_mask`, permutations ranked
    /// lexicographically.
    pub fn from_code(dim: usize, code: u32) -> Option<Self> {
        let perms = permutations(dim);
        let rank = (code >> dim) as usize;
        let perm = *perms.get(rank)?;
        let mut flip = [false; MAX_DIM];
        for (a, f) in flip.iter_mut().enumerate().take(dim) {
            *f = (code >> a) & 1 == 1;
        }
        Some(Self {
            dim: dim as u8,
            perm,
            flip,
        })
    }

    pub fn code(&self) -> u32 {
        let dim = self.dim as usize;
        let rank = permutations(dim)
            .iter()
            .position(|p| p[..dim] == self.perm[..dim])
            .expect("orientation holds a valid permutation");
        let mut mask = 0u32;
        for a in 0..dim {
            if self.flip[a] {
                mask |= 1 << a;
            }
        }
        ((rank as u32) << dim) | mask
    }

    pub fn all(dim: usize) -> impl Iterator<Item = Orientation> {
        (0..Self::count(dim) as u32).map(move |c| Self::from_code(dim, c).unwrap())
    }

    pub fn apply(&self, r: &Point) -> Point {
        let mut out = [0.0; MAX_DIM];
        for a in 0..self.dim as usize {
            let v = if self.flip[a] { 1.0 - r[a] } else { r[a] };
            out[self.perm[a] as usize] = v;
        }
        out
    }

    /// Linear part as a matrix `m[out][in]`.
    pub fn matrix(&self) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..self.dim as usize {
            m[self.perm[a] as usize][a] = if self.flip[a] { -1.0 } else { 1.0 };
        }
        m
    }

    pub fn apply_corner(&self, c: usize) -> usize {
        let dim = self.dim as usize;
        let p = self.apply(&corner_position(c, dim));
        (0..dim).map(|a| (p[a].round() as usize) << a).sum()
    }

    /// `self` after `first`: `(self ∘ first)(r) = self(first(r))`.
    pub fn after(&self, first: &Orientation) -> Orientation {
        let dim = self.dim as usize;
        let mut perm = [0, 1, 2];
        let mut flip = [false; MAX_DIM];
        for a in 0..dim {
            let mid = first.perm[a] as usize;
            perm[a] = self.perm[mid];
            flip[a] = first.flip[a] ^ self.flip[mid];
        }
        Orientation {
            dim: self.dim,
            perm,
            flip,
        }
    }

    pub fn inverse(&self) -> Orientation {
        let dim = self.dim as usize;
        let mut perm = [0, 1, 2];
        let mut flip = [false; MAX_DIM];
        for a in 0..dim {
            let b = self.perm[a] as usize;
            perm[b] = a as u8;
            flip[b] = self.flip[a];
        }
        Orientation {
            dim: self.dim,
            perm,
            flip,
        }
    }

    /// The unique orientation sending corner images as listed, if any.
    pub fn from_corner_map(dim: usize, map: &[usize]) -> Option<Orientation> {
        Self::all(dim).find(|o| (0..corner_count(dim)).all(|c| o.apply_corner(c) == map[c]))
    }
}

/// A d-linear map from the unit box onto a cell, given by its corner images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMap {
    pub dim: usize,
    pub corners: Vec<Point>,
}

impl CellMap {
    pub fn new(dim: usize, corners: Vec<Point>) -> Self {
        debug_assert_eq!(corners.len(), corner_count(dim));
        Self { dim, corners }
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn axis_box(dim: usize, lo: &Point, hi: &Point) -> Self {
        let corners = (0..corner_count(dim))
            .map(|c| {
                let mut p = [0.0; MAX_DIM];
                for a in 0..dim {
                    p[a] = if (c >> a) & 1 == 1 { hi[a] } else { lo[a] };
                }
                p
            })
            .collect();
        Self { dim, corners }
    }

    fn weights(&self, r: &Point) -> Vec<f64> {
        (0..self.corners.len())
            .map(|c| {
                (0..self.dim)
                    .map(|a| if (c >> a) & 1 == 1 { r[a] } else { 1.0 - r[a] })
                    .product()
            })
            .collect()
    }

    pub fn eval(&self, r: &Point) -> Point {
        let w = self.weights(r);
        let mut out = [0.0; MAX_DIM];
        for (c, wc) in w.iter().enumerate() {
            for a in 0..self.dim {
                out[a] += wc * self.corners[c][a];
            }
        }
        out
    }

    /// `jac[i][j] = ∂x_i / ∂r_j`.
    pub fn jacobian(&self, r: &Point) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        for (c, corner) in self.corners.iter().enumerate() {
            for j in 0..self.dim {
                let mut dw = if (c >> j) & 1 == 1 { 1.0 } else { -1.0 };
                for a in 0..self.dim {
                    if a != j {
                        dw *= if (c >> a) & 1 == 1 { r[a] } else { 1.0 - r[a] };
                    }
                }
                for i in 0..self.dim {
                    jac[i][j] += dw * corner[i];
                }
            }
        }
        jac
    }

    pub fn det_jacobian(&self, r: &Point) -> f64 {
        det(&self.jacobian(r), self.dim)
    }

    pub fn centroid(&self) -> Point {
        self.eval(&[0.5; MAX_DIM])
    }

    /// Newton inversion; `None` when the iteration fails to converge.
    pub fn inverse(&self, x: &Point) -> Option<Point> {
        let mut r = [0.5; MAX_DIM];
        for a in self.dim..MAX_DIM {
            r[a] = 0.0;
        }
        for _ in 0..50 {
            let f = self.eval(&r);
            let mut res = [0.0; MAX_DIM];
            for a in 0..self.dim {
                res[a] = x[a] - f[a];
            }
            let j = self.jacobian(&r);
            let step = solve_small(&j, &res, self.dim)?;
            let mut norm = 0.0f64;
            for a in 0..self.dim {
                r[a] += step[a];
                norm = norm.max(step[a].abs());
            }
            if norm < 1e-15 {
                break;
            }
        }
        let f = self.eval(&r);
        if max_abs_diff(&f, x) > 1e-10 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return None;
        }
        Some(r)
    }

    /// Reference coordinates of `x` when it lies in the closed cell (with
    /// tolerance `tol` in reference units).
    pub fn locate(&self, x: &Point, tol: f64) -> Option<Point> {
        let r = self.inverse(x)?;
        (0..self.dim)
            .all(|a| r[a] >= -tol && r[a] <= 1.0 + tol)
            .then_some(r)
    }

    /// Sub-cell `[lo, hi] ⊂ [0,1]^d` in reference coordinates, as a new map.
    pub fn sub_cell(&self, lo: &Point, hi: &Point) -> CellMap {
        let corners = (0..corner_count(self.dim))
            .map(|c| {
                let mut r = [0.0; MAX_DIM];
                for a in 0..self.dim {
                    r[a] = if (c >> a) & 1 == 1 { hi[a] } else { lo[a] };
                }
                self.eval(&r)
            })
            .collect();
        CellMap {
            dim: self.dim,
            corners,
        }
    }
}

pub fn det(m: &[[f64; MAX_DIM]; MAX_DIM], dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Solves `m x = b` for `dim <= 3` by Cramer's rule.
pub fn solve_small(m: &[[f64; MAX_DIM]; MAX_DIM], b: &Point, dim: usize) -> Option<Point> {
    let d = det(m, dim);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; MAX_DIM];
    for col in 0..dim {
        let mut mc = *m;
        for row in 0..dim {
            mc[row][col] = b[row];
        }
        x[col] = det(&mc, dim) / d;
    }
    Some(x)
}

pub fn invert_small(m: &[[f64; MAX_DIM]; MAX_DIM], dim: usize) -> Option<[[f64; MAX_DIM]; MAX_DIM]> {
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    for col in 0..dim {
        let mut e = [0.0; MAX_DIM];
        e[col] = 1.0;
        let x = solve_small(m, &e, dim)?;
        for row in 0..dim {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for dim in 1..=3 {
            for o in Orientation::all(dim) {
                assert_eq!(Orientation::from_code(dim, o.code()), Some(o));
                let inv = o.inverse();
                assert_eq!(inv.after(&o), Orientation::identity(dim));
                assert_eq!(o.after(&inv), Orientation::identity(dim));
            }
        }
        assert_eq!(Orientation::count(2), 8);
        assert_eq!(Orientation::count(3), 48);
    }

    #[test]
    fn composition_matches_application() {
        let r = [0.2, 0.7, 0.4];
        for a in Orientation::all(3) {
            for b in Orientation::all(3).step_by(5) {
                let lhs = a.after(&b).apply(&r);
                let rhs = a.apply(&b.apply(&r));
                assert!(max_abs_diff(&lhs, &rhs) < 1e-15);
            }
        }
    }

    #[test]
    fn bilinear_inverse_recovers_reference_point() {
        let cell = CellMap::new(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [-0.2, 0.9, 0.0], [1.1, 1.3, 0.0]],
        );
        let r = [0.3, 0.8, 0.0];
        let x = cell.eval(&r);
        let back = cell.inverse(&x).unwrap();
        assert!(max_abs_diff(&r, &back) < 1e-13);
        assert!(cell.det_jacobian(&r) > 0.0);
    }

    #[test]
    fn corner_map_recovers_orientation() {
        for o in Orientation::all(2) {
            let map: Vec<usize> = (0..4).map(|c| o.apply_corner(c)).collect();
            assert_eq!(Orientation::from_corner_map(2, &map), Some(o));
        }
    }
}

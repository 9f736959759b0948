//! Shared Gauss-Newton machinery for image alignment.
//!
//! Both the global registration and the LK tracker solve small normal
//! equations over warp parameters. To keep the 6x6 (or 4x4) systems well
//! conditioned regardless of where the region sits in the frame, parameters
//! are updated in a normalized frame `x~ = (x - c) / s` whose origin is the
//! centroid of the sample points and whose unit is their RMS radius. The
//! reparameterization is linear, so additive updates there are additive
//! updates of the absolute warp parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::AffineWarp;

/// Condition number above which a Gauss-Newton system is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionModel {
    /// Rotation, uniform scale and translation (4 DOF).
    Similarity,
    /// Full affine (6 DOF).
    Affine,
}

impl MotionModel {
    pub fn dof(self) -> usize {
        match self {
            MotionModel::Similarity => 4,
            MotionModel::Affine => 6,
        }
    }

    pub fn from_dof(dof: usize) -> Option<Self> {
        match dof {
            4 => Some(MotionModel::Similarity),
            6 => Some(MotionModel::Affine),
            _ => None,
        }
    }

    /// Adds a parameter increment `dq` (length `dof`) to a normalized warp.
    pub(crate) fn apply_increment(self, w: &AffineWarp, dq: &[f64], scale: f64) -> AffineWarp {
        let mut p = w.p;
        match self {
            MotionModel::Affine => {
                for (pi, d) in p.iter_mut().zip(dq) {
                    *pi += scale * d;
                }
            }
            MotionModel::Similarity => {
                p[0] += scale * dq[0];
                p[1] += scale * dq[1];
                p[2] -= scale * dq[1];
                p[3] += scale * dq[0];
                p[4] += scale * dq[2];
                p[5] += scale * dq[3];
            }
        }
        AffineWarp::new(p)
    }

    /// Jacobian row of the intensity w.r.t. the normalized parameters at the
    /// normalized point `(xn, yn)`, given the image gradient `(gx, gy)` in
    /// absolute pixels and the frame scale.
    #[inline]
    pub(crate) fn jacobian_row(
        self,
        xn: f64,
        yn: f64,
        gx: f64,
        gy: f64,
        s: f64,
        out: &mut [f64; 6],
    ) {
        let gx = gx * s;
        let gy = gy * s;
        match self {
            MotionModel::Affine => {
                *out = [gx * xn, gy * xn, gx * yn, gy * yn, gx, gy];
            }
            MotionModel::Similarity => {
                out[0] = gx * xn + gy * yn;
                out[1] = gy * xn - gx * yn;
                out[2] = gx;
                out[3] = gy;
            }
        }
    }
}

/// Normalizing frame `x~ = (x - c) / s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Frame {
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
}

impl Frame {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a (f64, f64)> + Clone) -> Self {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in points.clone() {
            sx += x;
            sy += y;
            n += 1;
        }
        if n == 0 {
            return Frame {
                cx: 0.0,
                cy: 0.0,
                s: 1.0,
            };
        }
        let (cx, cy) = (sx / n as f64, sy / n as f64);
        let ss: f64 = points
            .into_iter()
            .map(|&(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
            .sum();
        let s = (ss / n as f64).sqrt().max(1.0);
        Frame { cx, cy, s }
    }

    #[inline]
    pub fn normalize(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.cx) / self.s, (y - self.cy) / self.s)
    }

    fn forward(&self) -> AffineWarp {
        let k = 1.0 / self.s;
        AffineWarp::new([k, 0.0, 0.0, k, -self.cx * k, -self.cy * k])
    }

    fn backward(&self) -> AffineWarp {
        AffineWarp::new([self.s, 0.0, 0.0, self.s, self.cx, self.cy])
    }

    /// `N ∘ W ∘ N⁻¹`
    pub fn to_normalized(&self, w: &AffineWarp) -> AffineWarp {
        self.forward().compose(w).compose(&self.backward())
    }

    /// `N⁻¹ ∘ W~ ∘ N`
    pub fn from_normalized(&self, w: &AffineWarp) -> AffineWarp {
        self.backward().compose(w).compose(&self.forward())
    }
}

/// Accumulator for `H = Σ JᵀJ`, `g = Σ Jᵀ r` with `r = template - warped`.
#[derive(Clone, Debug)]
pub(crate) struct NormalEquations {
    dof: usize,
    h: [f64; 36],
    g: [f64; 6],
    pub sse: f64,
    pub count: usize,
}

impl NormalEquations {
    pub fn new(dof: usize) -> Self {
        Self {
            dof,
            h: [0.0; 36],
            g: [0.0; 6],
            sse: 0.0,
            count: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, row: &[f64; 6], residual: f64) {
        let n = self.dof;
        for i in 0..n {
            let ri = row[i];
            self.g[i] += ri * residual;
            for j in i..n {
                self.h[i * 6 + j] += ri * row[j];
            }
        }
        self.sse += residual * residual;
        self.count += 1;
    }

    pub fn mse(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            self.sse / self.count as f64
        }
    }

    /// Solves `H dq = g`, failing when `H` is numerically singular.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.dof;
        let h = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.h[a * 6 + b]
        });
        let eig = SymmetricEigen::new(h);
        let max = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(max > 0.0) || !(condition <= MAX_CONDITION) {
            return Err(Error::SingularHessian { condition });
        }
        let g = DVector::from_column_slice(&self.g[..n]);
        let vt_g = eig.eigenvectors.transpose() * g;
        let scaled = DVector::from_fn(n, |i, _| vt_g[i] / eig.eigenvalues[i]);
        Ok((&eig.eigenvectors * scaled).iter().cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame {
            cx: 400.0,
            cy: 250.0,
            s: 37.0,
        };
        let w = AffineWarp::new([1.01, 0.02, -0.03, 0.98, 5.0, -2.0]);
        let back = f.from_normalized(&f.to_normalized(&w));
        assert!(back.max_param_diff(&w) < 1e-12);
    }

    #[test]
    fn similarity_increment_stays_similarity() {
        let w = MotionModel::Similarity.apply_increment(
            &AffineWarp::IDENTITY,
            &[0.1, 0.2, 3.0, 4.0],
            1.0,
        );
        assert_eq!(w.p[0], w.p[3]);
        assert_eq!(w.p[1], -w.p[2]);
    }

    #[test]
    fn zero_system_is_singular() {
        let ne = NormalEquations::new(6);
        assert!(matches!(ne.solve(), Err(Error::SingularHessian { .. })));
    }

    #[test]
    fn solves_diagonal_system() {
        let mut ne = NormalEquations::new(4);
        for i in 0..4 {
            let mut row = [0.0; 6];
            row[i] = 2.0;
            ne.add(&row, 1.0);
        }
        let x = ne.solve().unwrap();
        for v in x {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }
}

//! Discrete negative Laplacians on uniform interior meshes and cached
//! direct solvers for the shifted operators `I + σA`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Finite-difference negative Laplacian with zero Dirichlet boundary values
/// eliminated.
///
/// For `dim == 2` the unknowns are ordered row-major over `(i, j)`, so
/// unknown `q = i * n + j` couples to `q ± 1` (same row) and `q ± n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Laplacian {
    dim: usize,
    n: usize,
    h: f64,
}

impl Laplacian {
    /// Builds the operator on `n` interior points per direction of a domain
    /// of the given length, so `h = domain_length / (n + 1)`.
    pub fn new(dim: usize, n: usize, domain_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDimension(dim));
        }
        if n < 2 {
            return Err(Error::InvalidPointCount(n));
        }
        if !(domain_length > 0.0) || !domain_length.is_finite() {
            return Err(Error::param("domain_length", "must be positive and finite"));
        }
        Ok(Self {
            dim,
            n,
            h: domain_length / (n as f64 + 1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior points per direction.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of unknowns, `n` or `n²`.
    pub fn len(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-bandwidth of the matrix in the chosen unknown ordering.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n
        }
    }

    /// Closed-form 2-norm: `(d / h²) · 4 sin²(nπ / (2(n+1)))`.
    pub fn spectral_norm(&self) -> f64 {
        let s = libm::sin(self.n as f64 * PI / (2.0 * (self.n as f64 + 1.0)));
        self.dim as f64 * 4.0 * s * s / (self.h * self.h)
    }

    /// Matrix entry `A[row][col]`.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let inv_h2 = 1.0 / (self.h * self.h);
        if row == col {
            return 2.0 * self.dim as f64 * inv_h2;
        }
        let adjacent = match self.dim {
            1 => row.abs_diff(col) == 1,
            _ => {
                let (ri, rj) = (row / self.n, row % self.n);
                let (ci, cj) = (col / self.n, col % self.n);
                (ri == ci && rj.abs_diff(cj) == 1) || (rj == cj && ri.abs_diff(ci) == 1)
            }
        };
        if adjacent {
            -inv_h2
        } else {
            0.0
        }
    }

    /// Dense row-major copy; intended for small instances and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let len = self.len();
        let mut out = vec![0.0; len * len];
        for r in 0..len {
            let lo = r.saturating_sub(self.bandwidth());
            let hi = (r + self.bandwidth() + 1).min(len);
            for c in lo..hi {
                out[r * len + c] = self.entry(r, c);
            }
        }
        out
    }

    /// `out = A v`, using the stencil directly.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let len = self.len();
        assert!(
            v.len() == len && out.len() == len,
            "laplacian: length mismatch"
        );
        let inv_h2 = 1.0 / (self.h * self.h);
        let n = self.n;
        if self.dim == 1 {
            out[0] = (2.0 * v[0] - v[1]) * inv_h2;
            for i in 1..n - 1 {
                out[i] = (2.0 * v[i] - v[i - 1] - v[i + 1]) * inv_h2;
            }
            out[n - 1] = (2.0 * v[n - 1] - v[n - 2]) * inv_h2;
            return;
        }
        for i in 0..n {
            for j in 0..n {
                let q = i * n + j;
                let mut acc = 4.0 * v[q];
                if j > 0 {
                    acc -= v[q - 1];
                }
                if j + 1 < n {
                    acc -= v[q + 1];
                }
                if i > 0 {
                    acc -= v[q - n];
                }
                if i + 1 < n {
                    acc -= v[q + n];
                }
                out[q] = acc * inv_h2;
            }
        }
    }

    /// Checked `A v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    /// Factors `I + σA` once for repeated solves.
    pub fn factor_shifted(&self, sigma: f64) -> Result<ShiftedFactorization> {
        ShiftedFactorization::new(*self, sigma)
    }
}

/// Banded Cholesky factor of `I + σA`.
///
/// Row `i` of the factor is stored as the `bw + 1` entries of columns
/// `i - bw ..= i`; columns before 0 are padding.
#[derive(Debug, Clone)]
pub struct ShiftedFactorization {
    source: Laplacian,
    sigma: f64,
    bw: usize,
    factor: Vec<f64>,
}

impl ShiftedFactorization {
    pub fn new(source: Laplacian, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", "shift must be positive and finite"));
        }
        Self::weighted(source, 1.0, sigma)
    }

    /// Factors `A` itself, for computing unconstrained minimizers.
    pub(crate) fn unshifted(source: Laplacian) -> Result<Self> {
        Self::weighted(source, 0.0, 1.0)
    }

    /// Factors `identity · I + sigma · A`.
    fn weighted(source: Laplacian, identity: f64, sigma: f64) -> Result<Self> {
        let len = source.len();
        let bw = source.bandwidth();
        let width = bw + 1;
        let mut l = vec![0.0; len * width];
        // l[i * width + (j + bw - i)] holds L[i][j] for i - bw <= j <= i
        let at = |i: usize, j: usize| i * width + j + bw - i;
        for i in 0..len {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let a = if i == j {
                    identity + sigma * source.entry(i, j)
                } else {
                    sigma * source.entry(i, j)
                };
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = a;
                for k in k0..j {
                    sum -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::NotPositiveDefinite(i));
                    }
                    l[at(i, i)] = libm::sqrt(sum);
                } else {
                    l[at(i, j)] = sum / l[at(j, j)];
                }
            }
        }
        Ok(Self {
            source,
            sigma,
            bw,
            factor: l,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn source(&self) -> &Laplacian {
        &self.source
    }

    /// Overwrites `x` (holding the right-hand side) with `(I + σA)⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let len = self.source.len();
        assert_eq!(x.len(), len, "shifted solve: length mismatch");
        let bw = self.bw;
        let width = bw + 1;
        let l = &self.factor;
        for i in 0..len {
            let row = &l[i * width..(i + 1) * width];
            let j0 = i.saturating_sub(bw);
            let mut sum = x[i];
            for j in j0..i {
                sum -= row[j + bw - i] * x[j];
            }
            x[i] = sum / row[bw];
        }
        for i in (0..len).rev() {
            let mut sum = x[i];
            let k1 = (i + bw).min(len - 1);
            for k in i + 1..=k1 {
                sum -= l[k * width + i + bw - k] * x[k];
            }
            x[i] = sum / l[i * width + bw];
        }
    }

    /// Checked solve returning a fresh vector.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.source.len() {
            return Err(Error::LengthMismatch {
                expected: self.source.len(),
                actual: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}

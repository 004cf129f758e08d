//! 3x3 Hermitian matrices stored as their upper triangle.

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::types::TargetVector;

/// Hermitian 3x3 matrix; the lower triangle is implied by conjugation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HermitianMatrix3 {
    pub c11: f64,
    pub c22: f64,
    pub c33: f64,
    pub c12: Complex64,
    pub c13: Complex64,
    pub c23: Complex64,
}

/// Relative tolerance used for positive-semidefiniteness checks.
pub const PSD_REL_TOL: f64 = 1e-9;

impl HermitianMatrix3 {
    pub const ZERO: HermitianMatrix3 = HermitianMatrix3 {
        c11: 0.0,
        c22: 0.0,
        c33: 0.0,
        c12: Complex64::new(0.0, 0.0),
        c13: Complex64::new(0.0, 0.0),
        c23: Complex64::new(0.0, 0.0),
    };

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    pub fn diag(c11: f64, c22: f64, c33: f64) -> Self {
        Self {
            c11,
            c22,
            c33,
            ..Self::ZERO
        }
    }

    /// `s s^H`, with `c_ij = s_i * conj(s_j)`.
    pub fn outer_product(s: &TargetVector) -> Self {
        Self {
            c11: s.hh.norm_sqr(),
            c22: s.hv.norm_sqr(),
            c33: s.vv.norm_sqr(),
            c12: s.hh * s.hv.conj(),
            c13: s.hh * s.vv.conj(),
            c23: s.hv * s.vv.conj(),
        }
    }

    /// `self += w * s s^H`.
    #[inline]
    pub fn add_weighted_outer(&mut self, s: &TargetVector, w: f64) {
        self.c11 += w * s.hh.norm_sqr();
        self.c22 += w * s.hv.norm_sqr();
        self.c33 += w * s.vv.norm_sqr();
        self.c12 += (s.hh * s.hv.conj()).scale(w);
        self.c13 += (s.hh * s.vv.conj()).scale(w);
        self.c23 += (s.hv * s.vv.conj()).scale(w);
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            c11: self.c11 * k,
            c22: self.c22 * k,
            c33: self.c33 * k,
            c12: self.c12.scale(k),
            c13: self.c13.scale(k),
            c23: self.c23.scale(k),
        }
    }

    /// Element-wise division by a real scalar.
    pub fn div_scalar(&self, k: f64) -> Self {
        Self {
            c11: self.c11 / k,
            c22: self.c22 / k,
            c33: self.c33 / k,
            c12: self.c12 / k,
            c13: self.c13 / k,
            c23: self.c23 / k,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            c11: self.c11 + o.c11,
            c22: self.c22 + o.c22,
            c33: self.c33 + o.c33,
            c12: self.c12 + o.c12,
            c13: self.c13 + o.c13,
            c23: self.c23 + o.c23,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            c11: self.c11 - o.c11,
            c22: self.c22 - o.c22,
            c33: self.c33 - o.c33,
            c12: self.c12 - o.c12,
            c13: self.c13 - o.c13,
            c23: self.c23 - o.c23,
        }
    }

    pub fn trace(&self) -> f64 {
        self.c11 + self.c22 + self.c33
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.c11 * self.c11
            + self.c22 * self.c22
            + self.c33 * self.c33
            + 2.0 * (self.c12.norm_sqr() + self.c13.norm_sqr() + self.c23.norm_sqr()))
        .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.c11.is_finite()
            && self.c22.is_finite()
            && self.c33.is_finite()
            && self.c12.is_finite()
            && self.c13.is_finite()
            && self.c23.is_finite()
    }

    /// Element `(i, j)` of the full matrix, zero-based.
    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        let re = |v: f64| Complex64::new(v, 0.0);
        match (i, j) {
            (0, 0) => re(self.c11),
            (1, 1) => re(self.c22),
            (2, 2) => re(self.c33),
            (0, 1) => self.c12,
            (1, 0) => self.c12.conj(),
            (0, 2) => self.c13,
            (2, 0) => self.c13.conj(),
            (1, 2) => self.c23,
            (2, 1) => self.c23.conj(),
            _ => panic!("index ({i}, {j}) out of range for a 3x3 matrix"),
        }
    }

    pub fn to_matrix(&self) -> Matrix3<Complex64> {
        Matrix3::from_fn(|i, j| self.element(i, j))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.to_matrix());
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Positive semidefinite up to `PSD_REL_TOL * trace`.
    pub fn is_psd(&self) -> bool {
        let tol = PSD_REL_TOL * self.trace().abs();
        self.c11 >= 0.0 && self.c22 >= 0.0 && self.c33 >= 0.0 && self.min_eigenvalue() >= -tol
    }

    /// Lower-triangular Cholesky factor `L` with `L L^H = self`.
    ///
    /// Fails with the smallest eigenvalue when the matrix is not positive definite.
    pub fn cholesky(&self) -> Result<[[Complex64; 3]; 3]> {
        let min_ev = self.min_eigenvalue();
        if !(min_ev > 0.0) {
            return Err(Error::NotPositiveDefinite { eigenvalue: min_ev });
        }
        let a = |i, j| self.element(i, j);
        let zero = Complex64::new(0.0, 0.0);
        let mut l = [[zero; 3]; 3];
        for j in 0..3 {
            let mut d = a(j, j).re;
            for k in 0..j {
                d -= l[j][k].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { eigenvalue: min_ev });
            }
            let ljj = d.sqrt();
            l[j][j] = Complex64::new(ljj, 0.0);
            for i in (j + 1)..3 {
                let mut v = a(i, j);
                for k in 0..j {
                    v -= l[i][k] * l[j][k].conj();
                }
                l[i][j] = v / ljj;
            }
        }
        Ok(l)
    }

    /// The nine reals in storage order
    /// `[c11, c22, c33, Re c12, Im c12, Re c13, Im c13, Re c23, Im c23]`.
    pub fn to_reals(&self) -> [f64; 9] {
        [
            self.c11,
            self.c22,
            self.c33,
            self.c12.re,
            self.c12.im,
            self.c13.re,
            self.c13.im,
            self.c23.re,
            self.c23.im,
        ]
    }

    pub fn from_reals(v: [f64; 9]) -> Self {
        Self {
            c11: v[0],
            c22: v[1],
            c33: v[2],
            c12: Complex64::new(v[3], v[4]),
            c13: Complex64::new(v[5], v[6]),
            c23: Complex64::new(v[7], v[8]),
        }
    }
}

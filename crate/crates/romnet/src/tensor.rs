//! Symmetric second-order tensors in Mandel notation.
//!
//! Component order is `[11, 22, 33, √2·23, √2·13, √2·12]`. With the √2
//! scaling on the shear entries, the double contraction of two symmetric
//! tensors is the plain dot product of their component vectors, and 6×6
//! stiffness matrices act on strain vectors by ordinary matrix-vector
//! multiplication.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Symmetric second-order tensor (Mandel components).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymTensor(pub [f64; 6]);

impl SymTensor {
    pub const ZERO: SymTensor = SymTensor([0.0; 6]);

    /// Second-order identity tensor.
    pub fn identity() -> Self {
        SymTensor([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    /// Builds the tensor from physical components of a symmetric matrix.
    pub fn from_components(t11: f64, t22: f64, t33: f64, t23: f64, t13: f64, t12: f64) -> Self {
        SymTensor([t11, t22, t33, SQRT2 * t23, SQRT2 * t13, SQRT2 * t12])
    }

    /// Symmetrized dyadic product `sym(a ⊗ b)`.
    pub fn sym_dyad(a: &[f64; 3], b: &[f64; 3]) -> Self {
        Self::from_components(
            a[0] * b[0],
            a[1] * b[1],
            a[2] * b[2],
            0.5 * (a[1] * b[2] + a[2] * b[1]),
            0.5 * (a[0] * b[2] + a[2] * b[0]),
            0.5 * (a[0] * b[1] + a[1] * b[0]),
        )
    }

    /// Physical (i, j) component.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.0[0],
            (1, 1) => self.0[1],
            (2, 2) => self.0[2],
            (1, 2) => self.0[3] / SQRT2,
            (0, 2) => self.0[4] / SQRT2,
            (0, 1) => self.0[5] / SQRT2,
            _ => unreachable!("index out of range"),
        }
    }

    /// Double contraction `a : b`.
    pub fn dot(&self, other: &SymTensor) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// Deviatoric part `s = t − tr(t)/3 · 1`.
    pub fn deviator(&self) -> SymTensor {
        let p = self.trace() / 3.0;
        let mut d = *self;
        d.0[0] -= p;
        d.0[1] -= p;
        d.0[2] -= p;
        d
    }

    /// Frobenius norm `√(t : t)`.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Add for SymTensor {
    type Output = SymTensor;
    fn add(self, rhs: SymTensor) -> SymTensor {
        let mut out = self;
        out += rhs;
        out
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, rhs: SymTensor) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a += b;
        }
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    fn sub(self, rhs: SymTensor) -> SymTensor {
        let mut out = self;
        out -= rhs;
        out
    }
}

impl SubAssign for SymTensor {
    fn sub_assign(&mut self, rhs: SymTensor) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a -= b;
        }
    }
}

impl Mul<f64> for SymTensor {
    type Output = SymTensor;
    fn mul(self, rhs: f64) -> SymTensor {
        SymTensor(self.0.map(|v| v * rhs))
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        SymTensor(self.0.map(|v| -v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn contraction_matches_matrix_form() {
        let a = SymTensor::from_components(1.0, 2.0, 3.0, 0.4, 0.5, 0.6);
        let b = SymTensor::from_components(-0.3, 1.1, 0.2, 0.7, -0.9, 0.05);
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                direct += a.get(i, j) * b.get(i, j);
            }
        }
        assert_abs_diff_eq!(a.dot(&b), direct, epsilon = 1e-14);
    }

    #[test]
    fn deviator_is_traceless() {
        let a = SymTensor::from_components(4.0, -1.0, 2.5, 0.3, 0.0, 1.2);
        assert_abs_diff_eq!(a.deviator().trace(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sym_dyad_of_orthogonal_unit_vectors_has_half_norm() {
        let l = [1.0 / SQRT2, -1.0 / SQRT2, 0.0];
        let n = [1.0 / 3f64.sqrt(); 3];
        let m = SymTensor::sym_dyad(&l, &n);
        assert_abs_diff_eq!(m.dot(&m), 0.5, epsilon = 1e-14);
    }
}

//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Cholesky factor if `m` is symmetric positive definite.
pub fn cholesky(m: &Mat) -> Option<Cholesky<f64, Dyn>> {
    if m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

pub fn is_positive_definite(m: &Mat) -> bool {
    cholesky(m).is_some()
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Quadratic form `vᵀ M v`.
pub fn quad_form(m: &Mat, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// `tr(H⁻¹ A)` for symmetric positive-definite `H`.
pub fn trace_inv_prod(h: &Mat, a: &Mat) -> Result<f64> {
    let chol = cholesky(h).ok_or(Error::DegenerateHessian)?;
    Ok(chol.solve(a).trace())
}

/// Inverse of an SPD matrix.
pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    Ok(cholesky(m).ok_or(Error::DegenerateHessian)?.inverse())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Positive semi-definiteness up to a relative tolerance on the spectrum.
pub fn is_psd(m: &Mat, rel_tol: f64) -> bool {
    let ev = sym_eigenvalues(m);
    let scale = ev.iter().fold(0.0_f64, |s, x| s.max(x.abs())).max(1e-300);
    ev[0] >= -rel_tol * scale
}

/// Dense third-order tensor of size `d×d×d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    d: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.d + j) * self.d + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let d = self.d;
        self.data[(i * d + j) * d + k] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Contraction over the last index: `T(h)_{ij} = Σ_k T_{ijk} h_k`.
    pub fn contract1(&self, h: &[f64]) -> Mat {
        let d = self.d;
        Mat::from_fn(d, d, |i, j| (0..d).map(|k| self.get(i, j, k) * h[k]).sum())
    }

    /// Double contraction: `T(h,h)_i = Σ_{jk} T_{ijk} h_j h_k`.
    pub fn contract2(&self, h: &[f64]) -> Vector {
        let d = self.d;
        Vector::from_fn(d, |i, _| {
            let mut s = 0.0;
            for j in 0..d {
                for k in 0..d {
                    s += self.get(i, j, k) * h[j] * h[k];
                }
            }
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_of_inverse_product() {
        let h = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let a = Mat::identity(2, 2);
        assert!((trace_inv_prod(&h, &a).unwrap() - 0.75).abs() < 1e-15);
        let bad = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(trace_inv_prod(&bad, &a), Err(Error::DegenerateHessian));
    }

    #[test]
    fn quad_form_matches_matrix_product() {
        let m = Mat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let v = [0.5, -1.0];
        let direct =
            (DVector::from_row_slice(&v).transpose() * &m * DVector::from_row_slice(&v))[(0, 0)];
        assert!((quad_form(&m, &v) - direct).abs() < 1e-15);
    }

    #[test]
    fn tensor_contractions() {
        let mut t = Tensor3::zeros(2);
        t.set(0, 0, 0, 1.0);
        t.set(1, 0, 1, 2.0);
        let h = [3.0, 5.0];
        let c1 = t.contract1(&h);
        assert_eq!(c1[(0, 0)], 3.0);
        assert_eq!(c1[(1, 0)], 10.0);
        let c2 = t.contract2(&h);
        assert_eq!(c2[0], 9.0);
        assert_eq!(c2[1], 30.0);
    }
}

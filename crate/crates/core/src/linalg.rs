//! Complex matrices stored as a real part plus an optional imaginary part.
//!
//! Almost everything the engine multiplies is real (permutations, rotations,
//! real generators), so keeping the imaginary part optional lets those
//! products run through the real gemm kernel.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    re: DMatrix<f64>,
    im: Option<DMatrix<f64>>,
}

const SVD_LIMIT: usize = 40;

impl CMat {
    pub fn real(re: DMatrix<f64>) -> Self {
        CMat { re, im: None }
    }

    pub fn from_parts(re: DMatrix<f64>, im: Option<DMatrix<f64>>) -> Self {
        let im = im.filter(|m| m.iter().any(|v| *v != 0.0));
        CMat { re, im }
    }

    pub fn zeros(r: usize, c: usize) -> Self {
        Self::real(DMatrix::zeros(r, c))
    }

    pub fn identity(n: usize) -> Self {
        Self::real(DMatrix::identity(n, n))
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        Self::identity(n).scale(c)
    }

    pub fn from_complex(m: &DMatrix<C64>) -> Self {
        let re = m.map(|z| z.re);
        let im = m.map(|z| z.im);
        Self::from_parts(re, Some(im))
    }

    pub fn from_fn(r: usize, c: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let m = DMatrix::from_fn(r, c, f);
        Self::from_complex(&m)
    }

    /// Permutation matrix P with P e_i = e_{perm[i]}.
    pub fn permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            m[(j, i)] = 1.0;
        }
        Self::real(m)
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        match &self.im {
            None => self.re.map(|v| C64::new(v, 0.0)),
            Some(im) => self.re.zip_map(im, C64::new),
        }
    }

    pub fn re(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn im(&self) -> Option<&DMatrix<f64>> {
        self.im.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        C64::new(self.re[(i, j)], self.im.as_ref().map_or(0.0, |m| m[(i, j)]))
    }

    fn im_or_zero(&self) -> DMatrix<f64> {
        self.im.clone().unwrap_or_else(|| DMatrix::zeros(self.nrows(), self.ncols()))
    }

    pub fn scale(&self, c: C64) -> Self {
        if c.im == 0.0 {
            return CMat { re: &self.re * c.re, im: self.im.as_ref().map(|m| m * c.re) };
        }
        let re = match &self.im {
            None => &self.re * c.re,
            Some(im) => &self.re * c.re - im * c.im,
        };
        let im = match &self.im {
            None => &self.re * c.im,
            Some(im) => &self.re * c.im + im * c.re,
        };
        Self::from_parts(re, Some(im))
    }

    pub fn adjoint(&self) -> Self {
        CMat { re: self.re.transpose(), im: self.im.as_ref().map(|m| -m.transpose()) }
    }

    /// u * self * u^*
    pub fn conj_by(&self, u: &CMat) -> Self {
        &(u * self) * &u.adjoint()
    }

    pub fn kron(&self, other: &CMat) -> Self {
        let re = match (&self.im, &other.im) {
            (None, None) => return Self::real(self.re.kronecker(&other.re)),
            (Some(a), Some(b)) => self.re.kronecker(&other.re) - a.kronecker(b),
            _ => self.re.kronecker(&other.re),
        };
        let im = match (&self.im, &other.im) {
            (Some(a), None) => a.kronecker(&other.re),
            (None, Some(b)) => self.re.kronecker(b),
            (Some(a), Some(b)) => a.kronecker(&other.re) + self.re.kronecker(b),
            (None, None) => unreachable!(),
        };
        Self::from_parts(re, Some(im))
    }

    pub fn block_diag(blocks: &[CMat]) -> Self {
        let n: usize = blocks.iter().map(|b| b.nrows()).sum();
        let complex = blocks.iter().any(|b| !b.is_real());
        let mut re = DMatrix::zeros(n, n);
        let mut im = if complex { Some(DMatrix::zeros(n, n)) } else { None };
        let mut off = 0;
        for b in blocks {
            let k = b.nrows();
            re.view_mut((off, off), (k, k)).copy_from(&b.re);
            if let (Some(dst), Some(src)) = (im.as_mut(), b.im.as_ref()) {
                dst.view_mut((off, off), (k, k)).copy_from(src);
            }
            off += k;
        }
        Self::from_parts(re, im)
    }

    pub fn block(&self, r: usize, c: usize, nr: usize, nc: usize) -> Self {
        CMat {
            re: self.re.view((r, c), (nr, nc)).into_owned(),
            im: self.im.as_ref().map(|m| m.view((r, c), (nr, nc)).into_owned()),
        }
    }

    /// Rows and columns reindexed: out[i][j] = self[idx[i]][idx[j]].
    pub fn select(&self, idx: &[usize]) -> Self {
        let n = idx.len();
        let re = DMatrix::from_fn(n, n, |i, j| self.re[(idx[i], idx[j])]);
        let im = self.im.as_ref().map(|m| DMatrix::from_fn(n, n, |i, j| m[(idx[i], idx[j])]));
        Self::from_parts(re, im)
    }

    /// self * P for the permutation matrix P e_i = e_{perm[i]}.
    pub fn mul_perm(&self, perm: &[usize]) -> Self {
        let n = self.nrows();
        let re = DMatrix::from_fn(n, perm.len(), |i, j| self.re[(i, perm[j])]);
        let im = self.im.as_ref().map(|m| DMatrix::from_fn(n, perm.len(), |i, j| m[(i, perm[j])]));
        CMat { re, im }
    }

    /// P self P^T for P e_i = e_{perm[i]}.
    pub fn conj_perm(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (i, &j) in perm.iter().enumerate() {
            inv[j] = i;
        }
        self.select(&inv)
    }

    pub fn trace(&self) -> C64 {
        C64::new(self.re.trace(), self.im.as_ref().map_or(0.0, |m| m.trace()))
    }

    pub fn frobenius(&self) -> f64 {
        let r = self.re.norm_squared();
        let i = self.im.as_ref().map_or(0.0, |m| m.norm_squared());
        (r + i).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                best = best.max(self.get(i, j).norm());
            }
        }
        best
    }

    /// Operator 2-norm. Small matrices go through an SVD, larger ones
    /// through power iteration on A^*A.
    pub fn spectral_norm(&self) -> f64 {
        let n = self.nrows().max(self.ncols());
        if n == 0 {
            return 0.0;
        }
        if n <= SVD_LIMIT {
            let s = match &self.im {
                None => self.re.clone().svd(false, false).singular_values,
                Some(_) => self.to_complex().svd(false, false).singular_values,
            };
            return s.iter().cloned().fold(0.0, f64::max);
        }
        self.power_norm(1e-13, 2000)
    }

    fn power_norm(&self, tol: f64, max_iter: usize) -> f64 {
        let c = self.ncols();
        let mut vr = DVector::from_fn(c, |i, _| 1.0 + 0.37 * ((i as f64) * 1.618).sin());
        let mut vi = DVector::from_fn(c, |i, _| 0.21 * ((i as f64) * 0.577).cos());
        if self.is_real() {
            vi.fill(0.0);
        }
        let mut est = 0.0;
        for _ in 0..max_iter {
            let nv = (vr.norm_squared() + vi.norm_squared()).sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            vr /= nv;
            vi /= nv;
            // w = A v
            let (wr, wi) = match &self.im {
                None => (&self.re * &vr, &self.re * &vi),
                Some(im) => (&self.re * &vr - im * &vi, &self.re * &vi + im * &vr),
            };
            let new = (wr.norm_squared() + wi.norm_squared()).sqrt();
            // v = A^* w
            let (nr, ni) = match &self.im {
                None => (self.re.tr_mul(&wr), self.re.tr_mul(&wi)),
                Some(im) => (self.re.tr_mul(&wr) + im.tr_mul(&wi), self.re.tr_mul(&wi) - im.tr_mul(&wr)),
            };
            vr = nr;
            vi = ni;
            let done = (new - est).abs() <= tol * new.max(1e-300);
            est = new;
            if done || new == 0.0 {
                break;
            }
        }
        est
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        let re = match (&self.im, &rhs.im) {
            (Some(a), Some(b)) => &self.re * &rhs.re - a * b,
            _ => &self.re * &rhs.re,
        };
        let im = match (&self.im, &rhs.im) {
            (None, None) => None,
            (Some(a), None) => Some(a * &rhs.re),
            (None, Some(b)) => Some(&self.re * b),
            (Some(a), Some(b)) => Some(a * &rhs.re + &self.re * b),
        };
        CMat::from_parts(re, im)
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        let im = match (&self.im, &rhs.im) {
            (None, None) => None,
            _ => Some(self.im_or_zero() + rhs.im_or_zero()),
        };
        CMat::from_parts(&self.re + &rhs.re, im)
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        let im = match (&self.im, &rhs.im) {
            (None, None) => None,
            _ => Some(self.im_or_zero() - rhs.im_or_zero()),
        };
        CMat::from_parts(&self.re - &rhs.re, im)
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        CMat { re: -&self.re, im: self.im.as_ref().map(|m| -m) }
    }
}

/// Hermitian exponential exp(i h) through an eigendecomposition.
pub fn expi_hermitian(h: &CMat) -> CMat {
    let hc = h.to_complex();
    let herm = (&hc + hc.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(0.0, l).exp()));
    CMat::from_complex(&(v * d * v.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn complex_product_matches_nalgebra() {
        let a = CMat::from_fn(3, 3, |i, j| c(i as f64 - j as f64, (i * j) as f64 * 0.5));
        let b = CMat::from_fn(3, 3, |i, j| c((i + 2 * j) as f64, -(i as f64)));
        let want = a.to_complex() * b.to_complex();
        let got = (&a * &b).to_complex();
        assert!((want - got).norm() < 1e-12);
    }

    #[test]
    fn norm_paths_agree() {
        let n = 60;
        let a = CMat::from_fn(n, n, |i, j| c(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + j) % 5) as f64 * 0.3));
        let oracle = a.to_complex().svd(false, false).singular_values.max();
        assert!((a.spectral_norm() - oracle).abs() <= 1e-8 * oracle);
        let r = CMat::real(DMatrix::from_fn(n, n, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0));
        let oracle = r.re().clone().svd(false, false).singular_values.max();
        assert!((r.spectral_norm() - oracle).abs() <= 1e-8 * oracle);
    }

    #[test]
    fn permutation_convention() {
        let p = CMat::permutation(&[2, 0, 1]);
        let e0 = CMat::real(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]));
        let img = &p * &e0;
        assert_eq!(img.re()[(2, 0)], 1.0);
    }

    #[test]
    fn expi_is_unitary() {
        let h = CMat::from_fn(4, 4, |i, j| if i == j { c(i as f64, 0.0) } else { c(0.3, 0.1 * (i as f64 - j as f64)) });
        let u = expi_hermitian(&h);
        let err = (&(&u * &u.adjoint()) - &CMat::identity(4)).spectral_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn kron_and_blocks() {
        let a = CMat::identity(2);
        let b = CMat::scalar(3, c(0.0, 1.0));
        let k = a.kron(&b);
        assert_eq!(k.nrows(), 6);
        assert_eq!(k.get(4, 4), c(0.0, 1.0));
        let bd = CMat::block_diag(&[a, b]);
        assert_eq!(bd.get(2, 2), c(0.0, 1.0));
        assert_eq!(bd.get(0, 2), c(0.0, 0.0));
    }
}

#[cfg(test)]
mod perm_tests {
    use super::*;

    #[test]
    fn perm_fast_paths_match_dense() {
        let a = CMat::from_fn(4, 4, |i, j| C64::new((i * 4 + j) as f64, (i as f64) - (j as f64)));
        let perm = [2, 0, 3, 1];
        let p = CMat::permutation(&perm);
        assert_eq!(a.mul_perm(&perm), &a * &p);
        assert!((&a.conj_perm(&perm) - &a.conj_by(&p)).max_abs() == 0.0);
    }
}

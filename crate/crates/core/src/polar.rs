//! Unitary polar factors of approximately unitary matrix functions.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::expr::Expr;
use crate::linalg::{CMat, C64};
use crate::rational::Q;

/// Scaled Newton iteration X <- (g X + (g X)^{-*}) / 2.
pub fn polar_unitary(m: &CMat) -> Option<CMat> {
    let n = m.nrows();
    let mut x: DMatrix<C64> = m.to_complex();
    for _ in 0..100 {
        let inv = x.clone().try_inverse()?;
        let g = (inv.norm() / x.norm()).sqrt();
        let next = (&x * C64::new(g, 0.0) + inv.adjoint() * C64::new(1.0 / g, 0.0)) * C64::new(0.5, 0.0);
        let delta = (&next - &x).norm();
        x = next;
        if delta <= 1e-15 * (n as f64).sqrt() {
            break;
        }
    }
    // one unscaled step to settle the last rounding
    let inv = x.clone().try_inverse()?;
    x = (&x + inv.adjoint()) * C64::new(0.5, 0.0);
    Some(CMat::from_complex(&x))
}

/// x -> polar factor of b(x). `sigma_min` is a certified lower bound on the
/// smallest singular value of b over [0,1].
#[derive(Debug)]
pub struct PolarFactor {
    source: Arc<Expr>,
    sigma_min: f64,
}

impl PolarFactor {
    pub fn new(source: Arc<Expr>, sigma_min: f64) -> Self {
        assert!(sigma_min > 0.0);
        PolarFactor { source, sigma_min }
    }

    pub fn source(&self) -> &Arc<Expr> {
        &self.source
    }

    pub fn eval(&self, x: &Q) -> CMat {
        let b = self.source.eval(x);
        polar_unitary(&b).expect("polar factor of a singular matrix")
    }

    pub fn eval_f64(&self, x: f64) -> CMat {
        polar_unitary(&self.source.eval_f64(x)).expect("polar factor of a singular matrix")
    }

    /// Uses ||U(A) - U(B)|| <= 2 ||A - B|| / (s_min(A) + s_min(B)).
    pub fn lipschitz(&self) -> f64 {
        self.source.lipschitz() / self.sigma_min
    }

    pub fn breakpoints(&self) -> Vec<Q> {
        self.source.breakpoints()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svd_polar(m: &CMat) -> CMat {
        let svd = m.to_complex().svd(true, true);
        CMat::from_complex(&(svd.u.unwrap() * svd.v_t.unwrap()))
    }

    #[test]
    fn newton_matches_svd() {
        let m = CMat::from_fn(5, 5, |i, j| {
            let d = if i == j { 2.0 } else { 0.0 };
            C64::new(d + 0.1 * ((i * 3 + j) % 4) as f64, 0.05 * (i as f64 - j as f64))
        });
        let a = polar_unitary(&m).unwrap();
        let b = svd_polar(&m);
        assert!((&a - &b).max_abs() < 1e-12);
    }

    #[test]
    fn scalar_multiple_of_identity() {
        let m = CMat::scalar(3, C64::new(1.01, 0.0));
        let u = polar_unitary(&m).unwrap();
        assert!((&u - &CMat::identity(3)).max_abs() < 1e-15);
    }
}

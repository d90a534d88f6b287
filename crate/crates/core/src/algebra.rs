//! Dimension-drop algebras Z_{p,q} and their elements.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{CMat, C64};
use crate::matfn::{sup_norm, Grid};
use crate::numtheory::PrimePair;
use crate::rational::{one, zero};

pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DDAlgebra {
    pair: PrimePair,
}

impl DDAlgebra {
    pub fn new(pair: PrimePair) -> Self {
        DDAlgebra { pair }
    }

    pub fn pair(&self) -> PrimePair {
        self.pair
    }

    pub fn p(&self) -> usize {
        self.pair.p() as usize
    }

    pub fn q(&self) -> usize {
        self.pair.q() as usize
    }

    pub fn dim(&self) -> usize {
        self.pair.dim()
    }

    pub fn unit(&self) -> DDElement {
        DDElement {
            alg: *self,
            body: Expr::unit(self.dim()),
            left: CMat::identity(self.p()),
            right: CMat::identity(self.q()),
        }
    }
}

/// Partial trace projections for M_p (x) M_q: the nearest a (x) 1_q and
/// 1_p (x) b in Frobenius norm.
pub fn left_factor(m: &CMat, p: usize, q: usize) -> CMat {
    let c = m.to_complex();
    let a = DMatrix::from_fn(p, p, |i, j| (0..q).map(|k| c[(i * q + k, j * q + k)]).sum::<C64>() / q as f64);
    CMat::from_complex(&a)
}

pub fn right_factor(m: &CMat, p: usize, q: usize) -> CMat {
    let c = m.to_complex();
    let b = DMatrix::from_fn(q, q, |i, j| (0..p).map(|k| c[(k * q + i, k * q + j)]).sum::<C64>() / p as f64);
    CMat::from_complex(&b)
}

/// Frobenius distances of m from M_p (x) 1_q and from 1_p (x) M_q.
pub fn endpoint_distances(m: &CMat, p: usize, q: usize) -> (f64, f64) {
    let a = left_factor(m, p, q);
    let b = right_factor(m, p, q);
    let d0 = (m - &a.kron(&CMat::identity(q))).frobenius();
    let d1 = (m - &CMat::identity(p).kron(&b)).frobenius();
    (d0, d1)
}

/// Residual of g against the boundary conditions of alg.
pub fn check_membership(g: &Expr, alg: &DDAlgebra) -> Result<(bool, f64)> {
    if g.dim() != alg.dim() {
        return Err(Error::DimMismatch { expected: alg.dim(), got: g.dim() });
    }
    let (d0, _) = endpoint_distances(&g.eval(&zero()), alg.p(), alg.q());
    let (_, d1) = endpoint_distances(&g.eval(&one()), alg.p(), alg.q());
    let r = d0.max(d1);
    Ok((r <= MEMBERSHIP_TOL, r))
}

#[derive(Debug, Clone)]
pub struct DDElement {
    alg: DDAlgebra,
    body: Arc<Expr>,
    left: CMat,
    right: CMat,
}

impl DDElement {
    /// Element with stored endpoint blocks; the body must match them.
    pub fn new(alg: DDAlgebra, body: Arc<Expr>, left: CMat, right: CMat) -> Result<Self> {
        if body.dim() != alg.dim() {
            return Err(Error::DimMismatch { expected: alg.dim(), got: body.dim() });
        }
        if left.nrows() != alg.p() || right.nrows() != alg.q() {
            return Err(Error::DimMismatch { expected: alg.p(), got: left.nrows() });
        }
        let e = DDElement { alg, body, left, right };
        let r = e.endpoint_residual();
        if r > MEMBERSHIP_TOL {
            return Err(Error::BoundaryViolation(r));
        }
        Ok(e)
    }

    /// Element whose endpoint blocks are read off the body.
    pub fn from_body(alg: DDAlgebra, body: Arc<Expr>) -> Result<Self> {
        if body.dim() != alg.dim() {
            return Err(Error::DimMismatch { expected: alg.dim(), got: body.dim() });
        }
        let left = left_factor(&body.eval(&zero()), alg.p(), alg.q());
        let right = right_factor(&body.eval(&one()), alg.p(), alg.q());
        Self::new(alg, body, left, right)
    }

    pub fn algebra(&self) -> &DDAlgebra {
        &self.alg
    }

    pub fn body(&self) -> &Arc<Expr> {
        &self.body
    }

    pub fn left_block(&self) -> &CMat {
        &self.left
    }

    pub fn right_block(&self) -> &CMat {
        &self.right
    }

    /// max of ||body(0) - a (x) 1|| and ||body(1) - 1 (x) b|| (Frobenius).
    pub fn endpoint_residual(&self) -> f64 {
        let (p, q) = (self.alg.p(), self.alg.q());
        let d0 = (&self.body.eval(&zero()) - &self.left.kron(&CMat::identity(q))).frobenius();
        let d1 = (&self.body.eval(&one()) - &CMat::identity(p).kron(&self.right)).frobenius();
        d0.max(d1)
    }

    fn same(&self, other: &DDElement) -> Result<()> {
        if self.alg != other.alg {
            return Err(Error::ParentMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &DDElement) -> Result<DDElement> {
        self.same(other)?;
        Ok(DDElement {
            alg: self.alg,
            body: Expr::sum(vec![self.body.clone(), other.body.clone()]),
            left: &self.left + &other.left,
            right: &self.right + &other.right,
        })
    }

    pub fn sub(&self, other: &DDElement) -> Result<DDElement> {
        self.same(other)?;
        Ok(DDElement {
            alg: self.alg,
            body: Expr::sub(&self.body, &other.body),
            left: &self.left - &other.left,
            right: &self.right - &other.right,
        })
    }

    pub fn mul(&self, other: &DDElement) -> Result<DDElement> {
        self.same(other)?;
        Ok(DDElement {
            alg: self.alg,
            body: Expr::product(&self.body, &other.body),
            left: &self.left * &other.left,
            right: &self.right * &other.right,
        })
    }

    pub fn adjoint(&self) -> DDElement {
        DDElement {
            alg: self.alg,
            body: Expr::adjoint(&self.body),
            left: self.left.adjoint(),
            right: self.right.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> DDElement {
        DDElement {
            alg: self.alg,
            body: Expr::scale(c, &self.body),
            left: self.left.scale(c),
            right: self.right.scale(c),
        }
    }

    pub fn sup_norm(&self, grid: &Grid) -> (f64, f64) {
        sup_norm(&self.body, grid)
    }
}

#[derive(Debug, Clone)]
pub struct NamedElement {
    pub name: String,
    pub element: DDElement,
}

pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMat {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    CMat::real(m)
}

fn diag_ramp(n: usize) -> CMat {
    CMat::real(DMatrix::from_fn(n, n, |i, j| if i == j { (i + 1) as f64 / n as f64 } else { 0.0 }))
}

/// The canonical finite probe set of Z_{p,q}.
pub fn generator_corpus(alg: &DDAlgebra) -> Vec<NamedElement> {
    let (p, q, n) = (alg.p(), alg.q(), alg.dim());
    let mut out = vec![NamedElement { name: "unit".into(), element: alg.unit() }];
    let t = Expr::poly(vec![(vec![0.0, 1.0], CMat::identity(n))]);
    out.push(NamedElement {
        name: "t".into(),
        element: DDElement { alg: *alg, body: t, left: CMat::zeros(p, p), right: CMat::identity(q) },
    });
    let mut idx = vec![(0, 0), (0, n - 1), (n - 1, 0), (n - 1, n - 1)];
    idx.dedup();
    for (i, j) in idx {
        let body = Expr::poly(vec![(vec![0.0, 1.0, -1.0], matrix_unit(n, i, j))]);
        out.push(NamedElement {
            name: format!("bump_{i}_{j}"),
            element: DDElement { alg: *alg, body, left: CMat::zeros(p, p), right: CMat::zeros(q, q) },
        });
    }
    let a = diag_ramp(p);
    let b = diag_ramp(q);
    let a1 = a.kron(&CMat::identity(q));
    let b1 = CMat::identity(p).kron(&b);
    // (1-x)(a (x) 1) + x(1 (x) b), exact at both ends
    let body = Expr::poly(vec![(vec![1.0, -1.0], a1), (vec![0.0, 1.0], b1)]);
    out.push(NamedElement {
        name: "endpoint".into(),
        element: DDElement { alg: *alg, body, left: a, right: b },
    });
    out
}

pub fn corpus_element(alg: &DDAlgebra, name: &str) -> Option<DDElement> {
    generator_corpus(alg).into_iter().find(|e| e.name == name).map(|e| e.element)
}

#[cfg(test)]
mod tests {
    use super::*;
    fn z23() -> DDAlgebra {
        DDAlgebra::new(PrimePair::new(2, 3).unwrap())
    }

    #[test]
    fn unit_is_member() {
        let a = z23();
        assert_eq!(check_membership(a.unit().body(), &a).unwrap(), (true, 0.0));
    }

    #[test]
    fn diagonal_ramp_is_not_member() {
        let a = z23();
        let d = CMat::real(DMatrix::from_fn(6, 6, |i, j| if i == j { (i + 1) as f64 } else { 0.0 }));
        let (ok, r) = check_membership(&Expr::constant(d.clone()), &a).unwrap();
        assert!(!ok);
        // by hand: diag(1..6) projects to diag(2,5) (x) 1_3, residual sqrt(4) = 2
        let (d0, _) = endpoint_distances(&d, 2, 3);
        assert!((d0 - 2.0).abs() < 1e-12);
        assert!(r >= d0);
    }

    #[test]
    fn bump_is_member() {
        let a = z23();
        let body = Expr::poly(vec![(vec![0.0, 1.0, -1.0], matrix_unit(6, 0, 1))]);
        let (ok, r) = check_membership(&body, &a).unwrap();
        assert!(ok && r == 0.0);
    }

    #[test]
    fn dim_mismatch() {
        assert!(matches!(check_membership(&Expr::unit(4), &z23()), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn corpus_shape_and_norms() {
        let a = z23();
        let c = generator_corpus(&a);
        assert_eq!(c.len(), 7);
        let g = Grid::uniform(64);
        for e in &c {
            assert_eq!(e.element.body().dim(), 6);
            let (ok, r) = check_membership(e.element.body(), &a).unwrap();
            assert!(ok && r == 0.0, "{}", e.name);
            assert_eq!(e.element.endpoint_residual(), 0.0);
        }
        let norm = |name: &str| corpus_element(&a, name).unwrap().sup_norm(&g).0;
        assert_eq!(norm("unit"), 1.0);
        assert_eq!(norm("t"), 1.0);
        assert!((norm("bump_0_0") - 0.25).abs() < 1e-15);
    }

    #[test]
    fn arithmetic_laws() {
        let a = z23();
        let c = generator_corpus(&a);
        let g = Grid::uniform(64);
        let unit = a.unit();
        for e in &c {
            let e = &e.element;
            let d = e.mul(&unit).unwrap().sub(e).unwrap();
            assert_eq!(d.sup_norm(&g).0, 0.0);
            let back = e.adjoint().adjoint();
            assert_eq!(back.sub(e).unwrap().sup_norm(&g).0, 0.0);
            for f in &c {
                let f = &f.element;
                let m = e.mul(f).unwrap();
                let (ok, r) = check_membership(m.body(), &a).unwrap();
                assert!(ok, "{r}");
                assert!(m.sup_norm(&g).1 <= e.sup_norm(&g).1 * f.sup_norm(&g).1 + 1e-12);
            }
        }
    }

    #[test]
    fn c_star_identity_sampled() {
        let a = z23();
        let g = Grid::uniform(64);
        for e in generator_corpus(&a) {
            let e = e.element;
            let (lo, hi) = e.sup_norm(&g);
            let (lo2, hi2) = e.adjoint().mul(&e).unwrap().sup_norm(&g);
            let width = (hi * hi - lo * lo) + (hi2 - lo2);
            assert!((lo2 - lo * lo).abs() <= width + 1e-12);
        }
    }

    #[test]
    fn parent_mismatch() {
        let b = DDAlgebra::new(PrimePair::new(3, 2).unwrap());
        assert_eq!(z23().unit().add(&b.unit()).unwrap_err(), Error::ParentMismatch);
    }
}

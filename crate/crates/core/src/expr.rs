//! Symbolic matrix-valued functions on [0,1].
//!
//! Values are evaluated exactly in the path arguments (rational x) and in
//! floating point for the matrix entries. Every node carries a certified
//! Lipschitz constant and a sup-norm bound, propagated by the usual rules.

use std::sync::Arc;

use num_traits::Zero;

use crate::linalg::{CMat, C64};
use crate::pl::PLPath;
use crate::rational::{to_f64, Q};
use crate::unitary::UnitaryPath;

#[derive(Debug, Clone)]
pub enum Kind {
    Scalar(C64),
    /// sum_k c_k(x) M_k with polynomial coefficients (ascending powers)
    Poly(Vec<(Vec<f64>, CMat)>),
    Pullback { inner: Arc<Expr>, path: PLPath },
    BlockDiag(Vec<Arc<Expr>>),
    /// u(x) inner(x) u(x)^*
    Conj { u: Arc<UnitaryPath>, inner: Arc<Expr> },
    Sum(Vec<Arc<Expr>>),
    Product(Arc<Expr>, Arc<Expr>),
    Adjoint(Arc<Expr>),
    Scale(C64, Arc<Expr>),
    Kron(Arc<Expr>, Arc<Expr>),
    /// a unitary path viewed as a matrix function
    Unitary(Arc<UnitaryPath>),
}

#[derive(Debug, Clone)]
pub struct Expr {
    kind: Kind,
    dim: usize,
    lip: f64,
    tlip: f64,
    bound: f64,
}

pub type MatrixFunction = Expr;

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(j, a)| j as f64 * a).collect()
}

/// sup over [0,1] of |c(x)|; exact up to degree 2.
fn poly_sup(c: &[f64]) -> f64 {
    match c.len() {
        0 => 0.0,
        1 | 2 => poly_eval(c, 0.0).abs().max(poly_eval(c, 1.0).abs()),
        3 => {
            let mut m = poly_eval(c, 0.0).abs().max(poly_eval(c, 1.0).abs());
            if c[2] != 0.0 {
                let v = -c[1] / (2.0 * c[2]);
                if (0.0..=1.0).contains(&v) {
                    m = m.max(poly_eval(c, v).abs());
                }
            }
            m
        }
        _ => c.iter().map(|a| a.abs()).sum(),
    }
}

fn poly_lip(c: &[f64]) -> f64 {
    poly_sup(&poly_deriv(c))
}

// Scalars are compatible with every block shape and every conjugator.
pub(crate) fn same_blocks(xs: &[Arc<Expr>]) -> Option<Vec<usize>> {
    let first = xs.iter().find_map(|e| match &e.kind {
        Kind::BlockDiag(b) => Some(b.iter().map(|e| e.dim).collect::<Vec<_>>()),
        _ => None,
    })?;
    for e in xs {
        match &e.kind {
            Kind::BlockDiag(b) if b.iter().map(|e| e.dim).eq(first.iter().cloned()) => {}
            Kind::Scalar(_) => {}
            _ => return None,
        }
    }
    Some(first)
}

pub(crate) fn blocks(e: &Expr, shape: &[usize]) -> Vec<Arc<Expr>> {
    match &e.kind {
        Kind::BlockDiag(b) => b.clone(),
        Kind::Scalar(c) => shape.iter().map(|&d| Expr::scalar(d, *c)).collect(),
        _ => unreachable!(),
    }
}

pub(crate) fn common_conj(xs: &[Arc<Expr>]) -> Option<Arc<UnitaryPath>> {
    let u = xs.iter().find_map(|e| match &e.kind {
        Kind::Conj { u, .. } => Some(u.clone()),
        _ => None,
    })?;
    for e in xs {
        match &e.kind {
            Kind::Conj { u: v, .. } if Arc::ptr_eq(&u, v) => {}
            Kind::Scalar(_) => {}
            _ => return None,
        }
    }
    Some(u)
}

/// Structural equality: identical nodes, or nodes built by the same rule
/// from structurally equal parts.
pub fn same(a: &Arc<Expr>, b: &Arc<Expr>) -> bool {
    if Arc::ptr_eq(a, b) {
        return true;
    }
    if a.dim != b.dim {
        return false;
    }
    match (&a.kind, &b.kind) {
        (Kind::Scalar(c), Kind::Scalar(d)) => c == d,
        (Kind::Kron(a1, a2), Kind::Kron(b1, b2)) | (Kind::Product(a1, a2), Kind::Product(b1, b2)) => {
            same(a1, b1) && same(a2, b2)
        }
        (Kind::Pullback { inner: i, path: p }, Kind::Pullback { inner: j, path: r }) => p == r && same(i, j),
        (Kind::Adjoint(x), Kind::Adjoint(y)) => same(x, y),
        (Kind::Scale(c, x), Kind::Scale(d, y)) => c == d && same(x, y),
        (Kind::Conj { u, inner: i }, Kind::Conj { u: v, inner: j }) => Arc::ptr_eq(u, v) && same(i, j),
        (Kind::BlockDiag(xs), Kind::BlockDiag(ys)) => xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| same(x, y)),
        (Kind::Unitary(u), Kind::Unitary(v)) => Arc::ptr_eq(u, v),
        _ => false,
    }
}

fn split_scale(e: &Arc<Expr>) -> (C64, &Arc<Expr>) {
    match &e.kind {
        Kind::Scale(c, x) => (*c, x),
        _ => (C64::new(1.0, 0.0), e),
    }
}

/// Collects structurally equal summands; None when nothing merges.
fn merge_terms(xs: &[Arc<Expr>]) -> Option<Arc<Expr>> {
    let mut acc: Vec<(C64, Arc<Expr>)> = Vec::with_capacity(xs.len());
    let mut merged = false;
    for e in xs {
        let (c, base) = split_scale(e);
        if let Some(slot) = acc.iter_mut().find(|(_, b)| same(b, base)) {
            slot.0 += c;
            merged = true;
        } else {
            acc.push((c, base.clone()));
        }
    }
    if !merged {
        return None;
    }
    let dim = xs[0].dim;
    let kept: Vec<Arc<Expr>> = acc.into_iter().filter(|(c, _)| !c.is_zero()).map(|(c, b)| Expr::scale(c, &b)).collect();
    Some(if kept.is_empty() { Expr::scalar(dim, C64::zero()) } else { Expr::sum(kept) })
}

pub(crate) fn conj_inner(e: &Arc<Expr>) -> &Arc<Expr> {
    match &e.kind {
        Kind::Conj { inner, .. } => inner,
        Kind::Scalar(_) => e,
        _ => unreachable!(),
    }
}

impl Expr {
    fn wrap(kind: Kind, dim: usize, lip: f64, tlip: f64, bound: f64) -> Arc<Expr> {
        Arc::new(Expr { kind, dim, lip, tlip, bound })
    }

    pub fn scalar(dim: usize, c: C64) -> Arc<Expr> {
        Self::wrap(Kind::Scalar(c), dim, 0.0, 0.0, c.norm())
    }

    pub fn unit(dim: usize) -> Arc<Expr> {
        Self::scalar(dim, C64::new(1.0, 0.0))
    }

    pub fn constant(m: CMat) -> Arc<Expr> {
        Self::poly(vec![(vec![1.0], m)])
    }

    pub fn poly(terms: Vec<(Vec<f64>, CMat)>) -> Arc<Expr> {
        assert!(!terms.is_empty());
        let dim = terms[0].1.nrows();
        assert!(terms.iter().all(|(_, m)| m.nrows() == dim && m.is_square()));
        let affine = terms.iter().all(|(c, _)| c.len() <= 2);
        let mut lip = 0.0;
        let mut tlip = 0.0;
        let mut bound = 0.0;
        for (c, m) in &terms {
            let n = m.spectral_norm();
            lip += poly_lip(c) * n;
            tlip += poly_lip(c) * (m.trace() / dim as f64).norm();
            bound += poly_sup(c) * n;
        }
        if affine {
            // constant derivative
            let mut d = CMat::zeros(dim, dim);
            for (c, m) in &terms {
                if c.len() == 2 {
                    d = &d + &m.scale(C64::new(c[1], 0.0));
                }
            }
            lip = d.spectral_norm();
            tlip = (d.trace() / dim as f64).norm();
        }
        let mut e = Expr { kind: Kind::Poly(terms), dim, lip, tlip, bound };
        if affine {
            // an affine function attains its norm at an endpoint
            let b = e.eval_poly(0.0).spectral_norm().max(e.eval_poly(1.0).spectral_norm());
            e.bound = b.min(e.bound);
        }
        Arc::new(e)
    }

    pub fn pullback(inner: &Arc<Expr>, path: &PLPath) -> Arc<Expr> {
        let slope = to_f64(&path.lipschitz());
        match &inner.kind {
            Kind::Scalar(_) => inner.clone(),
            Kind::BlockDiag(bs) => Self::block_diag(bs.iter().map(|b| Self::pullback(b, path)).collect()),
            // a constant permutation is unchanged by reparametrization
            Kind::Conj { u, inner: i } if u.as_permutation().is_some() => Self::conj(u, &Self::pullback(i, path)),
            Kind::Conj { u, inner: i } => {
                let u2 = Arc::new(UnitaryPath::pulled(u.clone(), vec![path.clone()]));
                Self::conj(&u2, &Self::pullback(i, path))
            }
            Kind::Kron(a, b) => Self::kron(&Self::pullback(a, path), &Self::pullback(b, path)),
            Kind::Poly(terms) if terms.iter().all(|(c, _)| c.len() <= 1) => inner.clone(),
            Kind::Pullback { inner: i, path: p } => Self::pullback(i, &PLPath::compose(p, path)),
            _ => {
                if *path == PLPath::identity() {
                    return inner.clone();
                }
                Self::wrap(
                    Kind::Pullback { inner: inner.clone(), path: path.clone() },
                    inner.dim,
                    inner.lip * slope,
                    inner.tlip * slope,
                    inner.bound,
                )
            }
        }
    }

    pub fn block_diag(bs: Vec<Arc<Expr>>) -> Arc<Expr> {
        assert!(!bs.is_empty());
        let dim: usize = bs.iter().map(|b| b.dim).sum();
        if let Kind::Scalar(c) = bs[0].kind {
            if bs.iter().all(|b| matches!(b.kind, Kind::Scalar(d) if d == c)) {
                return Self::scalar(dim, c);
            }
        }
        if bs.len() == 1 {
            return bs[0].clone();
        }
        let lip = bs.iter().map(|b| b.lip).fold(0.0, f64::max);
        let bound = bs.iter().map(|b| b.bound).fold(0.0, f64::max);
        let tlip = bs.iter().map(|b| b.tlip * b.dim as f64).sum::<f64>() / dim as f64;
        Self::wrap(Kind::BlockDiag(bs), dim, lip, tlip, bound)
    }

    pub fn conj(u: &Arc<UnitaryPath>, inner: &Arc<Expr>) -> Arc<Expr> {
        assert_eq!(u.dim(), inner.dim);
        if matches!(inner.kind, Kind::Scalar(_)) || u.is_identity() {
            return inner.clone();
        }
        if let Kind::Conj { u: v, inner: i } = &inner.kind {
            return Self::conj(&Arc::new(u.then(v)), i);
        }
        let lip = inner.lip + 2.0 * u.lipschitz() * inner.bound;
        Self::wrap(Kind::Conj { u: u.clone(), inner: inner.clone() }, inner.dim, lip, inner.tlip, inner.bound)
    }

    pub fn sum(xs: Vec<Arc<Expr>>) -> Arc<Expr> {
        assert!(!xs.is_empty());
        let dim = xs[0].dim;
        assert!(xs.iter().all(|e| e.dim == dim));
        if xs.len() == 1 {
            return xs[0].clone();
        }
        if xs.iter().all(|e| matches!(e.kind, Kind::Scalar(_))) {
            let c = xs.iter().map(|e| if let Kind::Scalar(c) = e.kind { c } else { C64::zero() }).sum();
            return Self::scalar(dim, c);
        }
        if let Some(merged) = merge_terms(&xs) {
            return merged;
        }
        if let Some(shape) = same_blocks(&xs) {
            let split: Vec<Vec<Arc<Expr>>> = xs.iter().map(|e| blocks(e, &shape)).collect();
            let out = (0..shape.len()).map(|k| Self::sum(split.iter().map(|b| b[k].clone()).collect()));
            return Self::block_diag(out.collect());
        }
        if let Some(u) = common_conj(&xs) {
            return Self::conj(&u, &Self::sum(xs.iter().map(|e| conj_inner(e).clone()).collect()));
        }
        let lip = xs.iter().map(|e| e.lip).sum();
        let tlip = xs.iter().map(|e| e.tlip).sum();
        let bound = xs.iter().map(|e| e.bound).sum();
        Self::wrap(Kind::Sum(xs), dim, lip, tlip, bound)
    }

    pub fn sub(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
        Self::sum(vec![a.clone(), Self::scale(C64::new(-1.0, 0.0), b)])
    }

    pub fn scale(c: C64, a: &Arc<Expr>) -> Arc<Expr> {
        if c == C64::new(1.0, 0.0) {
            return a.clone();
        }
        match &a.kind {
            Kind::Scalar(d) => Self::scalar(a.dim, c * d),
            Kind::BlockDiag(bs) => Self::block_diag(bs.iter().map(|b| Self::scale(c, b)).collect()),
            Kind::Conj { u, inner } => Self::conj(u, &Self::scale(c, inner)),
            Kind::Scale(d, i) => Self::scale(c * d, i),
            _ => {
                let n = c.norm();
                Self::wrap(Kind::Scale(c, a.clone()), a.dim, n * a.lip, n * a.tlip, n * a.bound)
            }
        }
    }

    pub fn product(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
        assert_eq!(a.dim, b.dim);
        if let Kind::Scalar(c) = a.kind {
            return Self::scale(c, b);
        }
        if let Kind::Scalar(c) = b.kind {
            return Self::scale(c, a);
        }
        if let (Kind::Kron(a1, a2), Kind::Kron(b1, b2)) = (&a.kind, &b.kind) {
            if a1.dim == b1.dim {
                return Self::kron(&Self::product(a1, b1), &Self::product(a2, b2));
            }
        }
        let pair = [a.clone(), b.clone()];
        if let Some(shape) = same_blocks(&pair) {
            let (ba, bb) = (blocks(a, &shape), blocks(b, &shape));
            let out = (0..shape.len()).map(|k| Self::product(&ba[k], &bb[k]));
            return Self::block_diag(out.collect());
        }
        if let Some(u) = common_conj(&pair) {
            return Self::conj(&u, &Self::product(conj_inner(a), conj_inner(b)));
        }
        let lip = a.lip * b.bound + b.lip * a.bound;
        Self::wrap(Kind::Product(a.clone(), b.clone()), a.dim, lip, lip, a.bound * b.bound)
    }

    pub fn adjoint(a: &Arc<Expr>) -> Arc<Expr> {
        match &a.kind {
            Kind::Scalar(c) => Self::scalar(a.dim, c.conj()),
            Kind::BlockDiag(bs) => Self::block_diag(bs.iter().map(Self::adjoint).collect()),
            Kind::Conj { u, inner } => Self::conj(u, &Self::adjoint(inner)),
            Kind::Adjoint(i) => i.clone(),
            Kind::Kron(x, y) => Self::kron(&Self::adjoint(x), &Self::adjoint(y)),
            _ => Self::wrap(Kind::Adjoint(a.clone()), a.dim, a.lip, a.tlip, a.bound),
        }
    }

    pub fn kron(a: &Arc<Expr>, b: &Arc<Expr>) -> Arc<Expr> {
        let dim = a.dim * b.dim;
        if let (Kind::Scalar(c), Kind::Scalar(d)) = (&a.kind, &b.kind) {
            return Self::scalar(dim, c * d);
        }
        if a.is_zero_function() || b.is_zero_function() {
            return Self::scalar(dim, C64::zero());
        }
        let lip = a.lip * b.bound + b.lip * a.bound;
        Self::wrap(Kind::Kron(a.clone(), b.clone()), dim, lip, lip, a.bound * b.bound)
    }

    pub fn unitary(u: &Arc<UnitaryPath>) -> Arc<Expr> {
        if u.is_identity() {
            return Self::unit(u.dim());
        }
        Self::wrap(Kind::Unitary(u.clone()), u.dim(), u.lipschitz(), u.lipschitz(), 1.0)
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Certified operator-norm Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    /// Lipschitz constant of x -> tr(f(x)), normalized trace.
    pub fn trace_lipschitz(&self) -> f64 {
        self.tlip.min(self.lip)
    }

    /// Upper bound on the sup norm.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn as_scalar(&self) -> Option<C64> {
        match self.kind {
            Kind::Scalar(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, x: &Q) -> CMat {
        match &self.kind {
            Kind::Scalar(c) => CMat::scalar(self.dim, *c),
            Kind::Poly(_) => self.eval_poly(to_f64(x)),
            Kind::Pullback { inner, path } => inner.eval(&path.eval(x)),
            Kind::BlockDiag(bs) => CMat::block_diag(&bs.iter().map(|b| b.eval(x)).collect::<Vec<_>>()),
            Kind::Conj { u, inner } => match u.as_permutation() {
                Some(p) => inner.eval(x).conj_perm(&p),
                None => inner.eval(x).conj_by(&u.eval(x)),
            },
            Kind::Sum(xs) => {
                let mut acc = xs[0].eval(x);
                for e in &xs[1..] {
                    acc = &acc + &e.eval(x);
                }
                acc
            }
            Kind::Product(a, b) => &a.eval(x) * &b.eval(x),
            Kind::Adjoint(a) => a.eval(x).adjoint(),
            Kind::Scale(c, a) => a.eval(x).scale(*c),
            Kind::Kron(a, b) => a.eval(x).kron(&b.eval(x)),
            Kind::Unitary(u) => u.eval(x),
        }
    }

    /// Floating-point evaluation; path arguments are rounded, so this is
    /// for sampling norms, not for exact endpoint checks.
    pub fn eval_f64(&self, x: f64) -> CMat {
        match &self.kind {
            Kind::Scalar(c) => CMat::scalar(self.dim, *c),
            Kind::Poly(_) => self.eval_poly(x),
            Kind::Pullback { inner, path } => inner.eval_f64(path.eval_f64(x)),
            Kind::BlockDiag(bs) => CMat::block_diag(&bs.iter().map(|b| b.eval_f64(x)).collect::<Vec<_>>()),
            Kind::Conj { u, inner } => match u.as_permutation() {
                Some(p) => inner.eval_f64(x).conj_perm(&p),
                None => inner.eval_f64(x).conj_by(&u.eval_f64(x)),
            },
            Kind::Sum(xs) => {
                let mut acc = xs[0].eval_f64(x);
                for e in &xs[1..] {
                    acc = &acc + &e.eval_f64(x);
                }
                acc
            }
            Kind::Product(a, b) => &a.eval_f64(x) * &b.eval_f64(x),
            Kind::Adjoint(a) => a.eval_f64(x).adjoint(),
            Kind::Scale(c, a) => a.eval_f64(x).scale(*c),
            Kind::Kron(a, b) => a.eval_f64(x).kron(&b.eval_f64(x)),
            Kind::Unitary(u) => u.eval_f64(x),
        }
    }

    /// Spectral norm at a floating-point argument, blockwise where possible.
    pub fn norm_at_f64(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Scalar(c) => c.norm(),
            Kind::Pullback { inner, path } => inner.norm_at_f64(path.eval_f64(x)),
            Kind::BlockDiag(bs) => bs.iter().map(|b| b.norm_at_f64(x)).fold(0.0, f64::max),
            Kind::Conj { inner, .. } => inner.norm_at_f64(x),
            Kind::Adjoint(a) => a.norm_at_f64(x),
            Kind::Scale(c, a) => c.norm() * a.norm_at_f64(x),
            Kind::Kron(a, b) => a.norm_at_f64(x) * b.norm_at_f64(x),
            Kind::Unitary(_) => 1.0,
            _ => self.eval_f64(x).spectral_norm(),
        }
    }

    fn eval_poly(&self, x: f64) -> CMat {
        match &self.kind {
            Kind::Poly(terms) => {
                let mut acc = CMat::zeros(self.dim, self.dim);
                for (c, m) in terms {
                    let v = poly_eval(c, x);
                    if v != 0.0 {
                        acc = &acc + &m.scale(C64::new(v, 0.0));
                    }
                }
                acc
            }
            _ => unreachable!(),
        }
    }

    /// Spectral norm of f(x), using unitary invariance and block structure.
    pub fn norm_at(&self, x: &Q) -> f64 {
        match &self.kind {
            Kind::Scalar(c) => c.norm(),
            Kind::Pullback { inner, path } => inner.norm_at(&path.eval(x)),
            Kind::BlockDiag(bs) => bs.iter().map(|b| b.norm_at(x)).fold(0.0, f64::max),
            Kind::Conj { inner, .. } => inner.norm_at(x),
            Kind::Adjoint(a) => a.norm_at(x),
            Kind::Scale(c, a) => c.norm() * a.norm_at(x),
            Kind::Kron(a, b) => a.norm_at(x) * b.norm_at(x),
            Kind::Unitary(_) => 1.0,
            _ => self.eval(x).spectral_norm(),
        }
    }

    /// Normalized trace tr(f(x)).
    pub fn trace_at(&self, x: &Q) -> C64 {
        match &self.kind {
            Kind::Scalar(c) => *c,
            Kind::Poly(terms) => {
                let xf = to_f64(x);
                terms.iter().map(|(c, m)| m.trace() * poly_eval(c, xf)).sum::<C64>() / self.dim as f64
            }
            Kind::Pullback { inner, path } => inner.trace_at(&path.eval(x)),
            Kind::BlockDiag(bs) => {
                bs.iter().map(|b| b.trace_at(x) * b.dim as f64).sum::<C64>() / self.dim as f64
            }
            Kind::Conj { inner, .. } => inner.trace_at(x),
            Kind::Sum(xs) => xs.iter().map(|e| e.trace_at(x)).sum(),
            Kind::Adjoint(a) => a.trace_at(x).conj(),
            Kind::Scale(c, a) => c * a.trace_at(x),
            Kind::Kron(a, b) => a.trace_at(x) * b.trace_at(x),
            Kind::Product(..) | Kind::Unitary(_) => self.eval(x).trace() / self.dim as f64,
        }
    }

    /// Structurally known to have a real trace at every point.
    pub fn trace_is_real(&self) -> bool {
        match &self.kind {
            Kind::Scalar(c) => c.im == 0.0,
            Kind::Poly(terms) => terms.iter().all(|(_, m)| m.trace().im == 0.0),
            Kind::Pullback { inner: a, .. } | Kind::Conj { inner: a, .. } | Kind::Adjoint(a) => a.trace_is_real(),
            Kind::BlockDiag(xs) | Kind::Sum(xs) => xs.iter().all(|e| e.trace_is_real()),
            Kind::Scale(c, a) => c.im == 0.0 && a.trace_is_real(),
            Kind::Kron(a, b) => a.trace_is_real() && b.trace_is_real(),
            Kind::Product(..) | Kind::Unitary(_) => false,
        }
    }

    /// Points where the function may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<Q> {
        let mut out = Vec::new();
        self.collect_breaks(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_breaks(&self, out: &mut Vec<Q>) {
        match &self.kind {
            Kind::Scalar(_) | Kind::Poly(_) => {}
            Kind::Pullback { inner, path } => {
                out.extend(path.xs().iter().cloned());
                let inner_b = inner.breakpoints();
                out.extend(path.preimages(&inner_b));
            }
            Kind::BlockDiag(xs) | Kind::Sum(xs) => xs.iter().for_each(|e| e.collect_breaks(out)),
            Kind::Conj { u, inner } => {
                out.extend(u.breakpoints());
                inner.collect_breaks(out);
            }
            Kind::Product(a, b) | Kind::Kron(a, b) => {
                a.collect_breaks(out);
                b.collect_breaks(out);
            }
            Kind::Adjoint(a) | Kind::Scale(_, a) => a.collect_breaks(out),
            Kind::Unitary(u) => out.extend(u.breakpoints()),
        }
    }

    pub fn is_zero_function(&self) -> bool {
        matches!(self.kind, Kind::Scalar(c) if c.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{one, q, zero};
    use nalgebra::DMatrix;

    fn t(dim: usize) -> Arc<Expr> {
        Expr::poly(vec![(vec![0.0, 1.0], CMat::identity(dim))])
    }

    #[test]
    fn poly_constants() {
        let bump = Expr::poly(vec![(vec![0.0, 1.0, -1.0], CMat::identity(2))]);
        assert_eq!(bump.lipschitz(), 1.0);
        assert_eq!(bump.bound(), 0.25);
        assert_eq!(t(3).bound(), 1.0);
        assert_eq!(t(3).lipschitz(), 1.0);
    }

    #[test]
    fn pullback_composes_paths() {
        let half = PLPath::affine(zero(), q(1, 2)).unwrap();
        let e = Expr::pullback(&Expr::pullback(&t(2), &half), &half);
        match e.kind() {
            Kind::Pullback { path, .. } => assert_eq!(*path, PLPath::affine(zero(), q(1, 4)).unwrap()),
            _ => panic!(),
        }
        assert!((e.eval(&one()).get(0, 0).re - 0.25).abs() < 1e-15);
        assert_eq!(e.lipschitz(), 0.25);
    }

    #[test]
    fn blockwise_simplification() {
        let a = Expr::block_diag(vec![t(2), Expr::unit(2)]);
        let b = Expr::block_diag(vec![Expr::unit(2), t(2)]);
        let p = Expr::product(&a, &b);
        assert!(matches!(p.kind(), Kind::BlockDiag(_)));
        let s = Expr::sub(&p, &p);
        let x = q(1, 3);
        assert_eq!(s.norm_at(&x), 0.0);
    }

    #[test]
    fn unit_survives_conjugation() {
        let u = Arc::new(UnitaryPath::permutation(vec![1, 0]));
        assert!(Expr::conj(&u, &Expr::unit(2)).as_scalar().is_some());
    }

    #[test]
    fn trace_fast_path_matches_eval() {
        let m = CMat::real(DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64));
        let e = Expr::poly(vec![(vec![1.0, 2.0], m)]);
        let u = Arc::new(UnitaryPath::permutation(vec![2, 0, 1]));
        let c = Expr::conj(&u, &e);
        let x = q(2, 7);
        let direct = c.eval(&x).trace() / 3.0;
        assert!((c.trace_at(&x) - direct).norm() < 1e-12);
    }
}

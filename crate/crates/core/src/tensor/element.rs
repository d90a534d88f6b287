//! Elements of Z_{p,q} (x) Z_{p,q} as finite sums of elementary tensors,
//! g(x, y) = sum_r c_r f_r(x) (x) g_r(y).

use std::sync::Arc;

use num_complex::Complex64 as C64;
use num_traits::Zero;

use crate::algebra::endpoint_distances;
use crate::expr::{blocks, common_conj, conj_inner, same, same_blocks, Expr};
use crate::linalg::CMat;
use crate::matfn::{par_map, sup_norm_auto, Grid};
use crate::numtheory::PrimePair;
use crate::rational::{one, to_f64, zero, Q};
use crate::trace::{trace_bracket, Measure};

#[derive(Debug, Clone)]
pub struct Term {
    pub coef: C64,
    pub left: Arc<Expr>,
    pub right: Arc<Expr>,
}

#[derive(Debug, Clone)]
pub struct TensorElement {
    pair: PrimePair,
    terms: Vec<Term>,
}

/// Bracket of a supremum over the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareNorm {
    pub lower: f64,
    pub upper: f64,
}

/// Pieces above this size are bounded through Frobenius norms.
const DENSE_LIMIT: usize = 256;

impl TensorElement {
    pub fn new(pair: PrimePair, terms: Vec<Term>) -> Self {
        let d = pair.dim();
        assert!(terms.iter().all(|t| t.left.dim() == d && t.right.dim() == d), "factor dimension mismatch");
        TensorElement { pair, terms }.simplified()
    }

    pub fn elementary(pair: PrimePair, a: &Arc<Expr>, b: &Arc<Expr>) -> Self {
        Self::new(pair, vec![Term { coef: C64::new(1.0, 0.0), left: a.clone(), right: b.clone() }])
    }

    pub fn unit(pair: PrimePair) -> Self {
        let u = Expr::unit(pair.dim());
        Self::elementary(pair, &u, &u)
    }

    pub fn zero(pair: PrimePair) -> Self {
        TensorElement { pair, terms: Vec::new() }
    }

    /// Sum of E_ij (x) E_ji: exchanges the tensor factors at matrix level.
    pub fn flip(pair: PrimePair) -> Self {
        let d = pair.dim();
        let mut terms = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                terms.push(Term {
                    coef: C64::new(1.0, 0.0),
                    left: Expr::constant(crate::algebra::matrix_unit(d, i, j)),
                    right: Expr::constant(crate::algebra::matrix_unit(d, j, i)),
                });
            }
        }
        TensorElement { pair, terms }
    }

    /// A constant matrix on the square written in matrix units.
    pub fn constant(pair: PrimePair, m: &CMat) -> Self {
        let d = pair.dim();
        assert_eq!(m.nrows(), d * d);
        let mut terms = Vec::new();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let v = m.get(a * d + c, b * d + e);
                        if v.norm() > 0.0 {
                            terms.push(Term {
                                coef: v,
                                left: Expr::constant(crate::algebra::matrix_unit(d, a, b)),
                                right: Expr::constant(crate::algebra::matrix_unit(d, c, e)),
                            });
                        }
                    }
                }
            }
        }
        TensorElement { pair, terms }
    }

    pub fn pair(&self) -> PrimePair {
        self.pair
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Factor dimension pq.
    pub fn factor_dim(&self) -> usize {
        self.pair.dim()
    }

    fn simplified(mut self) -> Self {
        // identical pairs
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            if t.coef.is_zero() || t.left.is_zero_function() || t.right.is_zero_function() {
                continue;
            }
            if let Some(m) = merged.iter_mut().find(|m| same(&m.left, &t.left) && same(&m.right, &t.right)) {
                m.coef += t.coef;
            } else {
                merged.push(t);
            }
        }
        merged.retain(|t| !t.coef.is_zero());
        // common right factors: a (x) r + b (x) r = (a + b) (x) r
        let mut grouped: Vec<Term> = Vec::with_capacity(merged.len());
        let mut used = vec![false; merged.len()];
        for i in 0..merged.len() {
            if used[i] {
                continue;
            }
            let mut lefts = vec![Expr::scale(merged[i].coef, &merged[i].left)];
            for j in i + 1..merged.len() {
                if !used[j] && same(&merged[i].right, &merged[j].right) {
                    used[j] = true;
                    lefts.push(Expr::scale(merged[j].coef, &merged[j].left));
                }
            }
            let left = if lefts.len() == 1 { merged[i].left.clone() } else { Expr::sum(lefts) };
            let t = if left.is_zero_function() {
                None
            } else if Arc::ptr_eq(&left, &merged[i].left) {
                Some(merged[i].clone())
            } else {
                Some(Term { coef: C64::new(1.0, 0.0), left, right: merged[i].right.clone() })
            };
            grouped.extend(t);
        }
        self.terms = grouped;
        self
    }

    pub fn add(&self, other: &TensorElement) -> TensorElement {
        assert_eq!(self.pair, other.pair);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        TensorElement { pair: self.pair, terms }.simplified()
    }

    pub fn scale(&self, c: C64) -> TensorElement {
        let terms = self.terms.iter().map(|t| Term { coef: t.coef * c, ..t.clone() }).collect();
        TensorElement { pair: self.pair, terms }.simplified()
    }

    pub fn sub(&self, other: &TensorElement) -> TensorElement {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &TensorElement) -> TensorElement {
        assert_eq!(self.pair, other.pair);
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term {
                    coef: a.coef * b.coef,
                    left: Expr::product(&a.left, &b.left),
                    right: Expr::product(&a.right, &b.right),
                });
            }
        }
        TensorElement { pair: self.pair, terms }.simplified()
    }

    pub fn adjoint(&self) -> TensorElement {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { coef: t.coef.conj(), left: Expr::adjoint(&t.left), right: Expr::adjoint(&t.right) })
            .collect();
        TensorElement { pair: self.pair, terms }
    }

    /// u g u^*
    pub fn conjugate_by(&self, u: &TensorElement) -> TensorElement {
        u.mul(self).mul(&u.adjoint())
    }

    /// Maps every factor, keeping coefficients; `fl` and `fr` must be linear.
    pub fn map_factors(&self, pair: PrimePair, fl: impl Fn(&Arc<Expr>) -> Arc<Expr>, fr: impl Fn(&Arc<Expr>) -> Arc<Expr>) -> TensorElement {
        let terms = self.terms.iter().map(|t| Term { coef: t.coef, left: fl(&t.left), right: fr(&t.right) }).collect();
        TensorElement::new(pair, terms)
    }

    pub fn eval(&self, x: &Q, y: &Q) -> CMat {
        let d = self.factor_dim();
        let mut acc = CMat::zeros(d * d, d * d);
        for t in &self.terms {
            acc = &acc + &t.left.eval(x).kron(&t.right.eval(y)).scale(t.coef);
        }
        acc
    }

    /// Pointwise Frobenius norm from factor traces, without forming the
    /// (pq)^2-dimensional matrix.
    pub fn frobenius_at(&self, x: f64, y: f64) -> f64 {
        frobenius(&evaluate_terms(&to_triples(&self.terms), x, y))
    }

    /// Normalized trace under tau (x) tau, as a real interval.
    pub fn trace_bracket(&self, tau: &Measure, resolution: usize) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for t in &self.terms {
            let a = trace_bracket(tau, &t.left, resolution);
            let b = trace_bracket(tau, &t.right, resolution);
            // real part of c * A * B over the boxes
            let mut vals = Vec::with_capacity(16);
            for ar in [a.lower, a.upper] {
                for ai in [a.imag_lower, a.imag_upper] {
                    for br in [b.lower, b.upper] {
                        for bi in [b.imag_lower, b.imag_upper] {
                            vals.push((t.coef * C64::new(ar, ai) * C64::new(br, bi)).re);
                        }
                    }
                }
            }
            lo += vals.iter().cloned().fold(f64::INFINITY, f64::min);
            hi += vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    /// Distance of the edge values from the boundary subalgebras, bounded
    /// factorwise: at x = 0 the first factor must lie in M_p (x) 1_q, at
    /// x = 1 in 1_p (x) M_q, and likewise for y.
    pub fn edge_residual(&self) -> f64 {
        let (p, q) = (self.pair.p() as usize, self.pair.q() as usize);
        let mut r = [0.0f64; 4];
        for t in &self.terms {
            let c = t.coef.norm();
            let (l0, _) = endpoint_distances(&t.left.eval(&zero()), p, q);
            let (_, l1) = endpoint_distances(&t.left.eval(&one()), p, q);
            let (r0, _) = endpoint_distances(&t.right.eval(&zero()), p, q);
            let (_, r1) = endpoint_distances(&t.right.eval(&one()), p, q);
            r[0] += c * l0 * t.right.bound();
            r[1] += c * l1 * t.right.bound();
            r[2] += c * r0 * t.left.bound();
            r[3] += c * r1 * t.left.bound();
        }
        r.into_iter().fold(0.0, f64::max)
    }

    /// Certified bracket of sup over [0,1]^2 of the operator norm.
    pub fn norm_bracket(&self, resolution: usize) -> SquareNorm {
        if self.terms.is_empty() {
            return SquareNorm { lower: 0.0, upper: 0.0 };
        }
        let pieces = reduce(to_triples(&self.terms));
        let mut out = SquareNorm { lower: 0.0, upper: 0.0 };
        for p in pieces {
            let b = piece_bracket(&p, resolution);
            out.lower = out.lower.max(b.lower);
            out.upper = out.upper.max(b.upper);
        }
        out
    }
}

type Triple = (C64, Arc<Expr>, Arc<Expr>);

fn to_triples(ts: &[Term]) -> Vec<Triple> {
    ts.iter().map(|t| (t.coef, t.left.clone(), t.right.clone())).collect()
}

/// Splits a sum into norm-equivalent pieces: a unitary conjugation common
/// to one side is dropped, and a common block shape on one side splits the
/// sum blockwise (the norm is then the largest block norm).
fn reduce(ts: Vec<Triple>) -> Vec<Vec<Triple>> {
    let ts: Vec<Triple> = ts.into_iter().filter(|(c, l, r)| !c.is_zero() && !l.is_zero_function() && !r.is_zero_function()).collect();
    if ts.is_empty() {
        return Vec::new();
    }
    let lefts: Vec<Arc<Expr>> = ts.iter().map(|t| t.1.clone()).collect();
    let rights: Vec<Arc<Expr>> = ts.iter().map(|t| t.2.clone()).collect();
    let all_scalar = |xs: &[Arc<Expr>]| xs.iter().all(|e| e.as_scalar().is_some());
    if !all_scalar(&lefts) {
        if common_conj(&lefts).is_some() {
            return reduce(ts.iter().map(|(c, l, r)| (*c, conj_inner(l).clone(), r.clone())).collect());
        }
        if let Some(shape) = same_blocks(&lefts) {
            let split: Vec<Vec<Arc<Expr>>> = ts.iter().map(|t| blocks(&t.1, &shape)).collect();
            return (0..shape.len())
                .flat_map(|k| reduce(ts.iter().zip(&split).map(|((c, _, r), b)| (*c, b[k].clone(), r.clone())).collect()))
                .collect();
        }
    }
    if !all_scalar(&rights) {
        if common_conj(&rights).is_some() {
            return reduce(ts.iter().map(|(c, l, r)| (*c, l.clone(), conj_inner(r).clone())).collect());
        }
        if let Some(shape) = same_blocks(&rights) {
            let split: Vec<Vec<Arc<Expr>>> = ts.iter().map(|t| blocks(&t.2, &shape)).collect();
            return (0..shape.len())
                .flat_map(|k| reduce(ts.iter().zip(&split).map(|((c, l, _), b)| (*c, l.clone(), b[k].clone())).collect()))
                .collect();
        }
    }
    // merge again: stripping can expose equal terms
    let pair_terms: Vec<Term> = ts.into_iter().map(|(coef, left, right)| Term { coef, left, right }).collect();
    let merged = merge_equal(pair_terms);
    if merged.is_empty() {
        return Vec::new();
    }
    vec![to_triples(&merged)]
}

fn merge_equal(ts: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(ts.len());
    for t in ts {
        if let Some(m) = out.iter_mut().find(|m| same(&m.left, &t.left) && same(&m.right, &t.right)) {
            m.coef += t.coef;
        } else {
            out.push(t);
        }
    }
    out.retain(|t| !t.coef.is_zero());
    out
}

fn evaluate_terms(ts: &[Triple], x: f64, y: f64) -> Vec<(C64, CMat, CMat)> {
    ts.iter().map(|(c, l, r)| (*c, l.eval_f64(x), r.eval_f64(y))).collect()
}

fn frobenius(vals: &[(C64, CMat, CMat)]) -> f64 {
    // ||sum c_r A_r (x) B_r||_F^2 = sum_{r,s} conj(c_r) c_s tr(A_r^* A_s) tr(B_r^* B_s)
    let mut acc = C64::zero();
    for (cr, ar, br) in vals {
        let (ara, bra) = (ar.adjoint(), br.adjoint());
        for (cs, as_, bs) in vals {
            acc += cr.conj() * cs * (&ara * as_).trace() * (&bra * bs).trace();
        }
    }
    acc.re.max(0.0).sqrt()
}

fn pointwise(vals: &[(C64, CMat, CMat)]) -> (f64, f64) {
    let n = vals[0].1.nrows() * vals[0].2.nrows();
    if n <= DENSE_LIMIT {
        let mut acc = CMat::zeros(n, n);
        for (c, a, b) in vals {
            acc = &acc + &a.kron(b).scale(*c);
        }
        let s = acc.spectral_norm();
        (s, s)
    } else {
        let f = frobenius(vals);
        (f / (n as f64).sqrt(), f)
    }
}

fn axis_grid(fs: &[Arc<Expr>], lip: f64, resolution: usize) -> (Vec<f64>, f64) {
    if lip == 0.0 {
        return (vec![0.0], 0.0);
    }
    let refs: Vec<&Expr> = fs.iter().map(|e| e.as_ref()).collect();
    let g = Grid::for_exprs(resolution, &refs);
    (g.nodes().iter().map(to_f64).collect(), g.max_gap())
}

/// ||A ⊗ 1|| = ||A||, so a side of scalars leaves a one-variable problem.
fn one_sided(ts: &[Triple], resolution: usize) -> Option<SquareNorm> {
    let fold = |pick: &dyn Fn(&Triple) -> (&Arc<Expr>, &Arc<Expr>)| -> Option<Arc<Expr>> {
        let mut parts = Vec::with_capacity(ts.len());
        for t in ts {
            let (keep, other) = pick(t);
            parts.push(Expr::scale(t.0 * other.as_scalar()?, keep));
        }
        Some(Expr::sum(parts))
    };
    let f = fold(&|t| (&t.1, &t.2)).or_else(|| fold(&|t| (&t.2, &t.1)))?;
    if f.is_zero_function() {
        return Some(SquareNorm { lower: 0.0, upper: 0.0 });
    }
    let (lower, upper) = sup_norm_auto(&f, resolution);
    Some(SquareNorm { lower, upper })
}

fn piece_bracket(ts: &[Triple], resolution: usize) -> SquareNorm {
    if let Some(b) = one_sided(ts, resolution) {
        return b;
    }
    let lx: f64 = ts.iter().map(|(c, l, r)| c.norm() * l.lipschitz() * r.bound()).sum();
    let ly: f64 = ts.iter().map(|(c, l, r)| c.norm() * l.bound() * r.lipschitz()).sum();
    let lefts: Vec<Arc<Expr>> = ts.iter().map(|t| t.1.clone()).collect();
    let rights: Vec<Arc<Expr>> = ts.iter().map(|t| t.2.clone()).collect();
    let (xs, hx) = axis_grid(&lefts, lx, resolution);
    let (ys, hy) = axis_grid(&rights, ly, resolution);
    let xq: Vec<Q> = xs.iter().map(|&x| crate::rational::floor_to(x, 1 << 30)).collect();
    let rows = par_map(&xq, |xr| {
        let x = to_f64(xr);
        let lvals: Vec<CMat> = lefts.iter().map(|l| l.eval_f64(x)).collect();
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for &y in &ys {
            let vals: Vec<(C64, CMat, CMat)> =
                ts.iter().zip(&lvals).map(|((c, _, r), a)| (*c, a.clone(), r.eval_f64(y))).collect();
            let (a, b) = pointwise(&vals);
            lo = lo.max(a);
            hi = hi.max(b);
        }
        (lo, hi)
    });
    let lower = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let top = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    SquareNorm { lower, upper: top + lx * hx / 2.0 + ly * hy / 2.0 }
}

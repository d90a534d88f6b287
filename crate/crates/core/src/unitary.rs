//! Unitary paths x -> u(x) on [0,1], stored as finite products of factors.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::CMat;
use crate::pl::PLPath;
use crate::rational::{to_f64, Q};

/// One rotation plane: exp(x H) acts on span{a, b} by angle x*theta.
#[derive(Debug, Clone)]
struct Plane {
    idx: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    theta: f64,
}

/// Geodesic from permutation `from` (x = 0) to permutation `to` (x = 1):
/// u(x) = P_from exp(x H) with H real antisymmetric and exp(H) = P_from^T P_to.
#[derive(Debug, Clone)]
pub struct Rotation {
    from: Vec<usize>,
    to: Vec<usize>,
    planes: Vec<Plane>,
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &j in perm {
        if j >= perm.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

/// Cycles of the permutation i -> perm[i].
fn cycles(perm: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; perm.len()];
    let mut out = Vec::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut cyc = vec![start];
        seen[start] = true;
        let mut i = perm[start];
        while i != start {
            seen[i] = true;
            cyc.push(i);
            i = perm[i];
        }
        out.push(cyc);
    }
    out
}

pub fn is_even(perm: &[usize]) -> bool {
    cycles(perm).iter().filter(|c| c.len() % 2 == 0).count() % 2 == 0
}

impl Rotation {
    pub fn new(from: Vec<usize>, to: Vec<usize>) -> Result<Self> {
        if from.len() != to.len() || !is_permutation(&from) || !is_permutation(&to) {
            return Err(Error::InvalidPath("rotation endpoints must be permutations".into()));
        }
        // M = P_from^T P_to sends e_i to e_{from^{-1}(to(i))}
        let inv = invert(&from);
        let m: Vec<usize> = to.iter().map(|&j| inv[j]).collect();
        if !is_even(&m) {
            return Err(Error::InvalidPath("odd relative permutation has no real logarithm".into()));
        }
        let mut planes = Vec::new();
        let mut halves: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for cyc in cycles(&m) {
            let l = cyc.len();
            if l == 1 {
                continue;
            }
            let lf = l as f64;
            for j in 1..l.div_ceil(2) {
                let w = 2.0 * PI * j as f64 / lf;
                let s = (2.0 / lf).sqrt();
                let a = (0..l).map(|k| s * (w * k as f64).cos()).collect();
                let b = (0..l).map(|k| s * (w * k as f64).sin()).collect();
                planes.push(Plane { idx: cyc.clone(), a, b, theta: w });
            }
            if l % 2 == 0 {
                let s = 1.0 / lf.sqrt();
                let d = (0..l).map(|k| if k % 2 == 0 { s } else { -s }).collect();
                halves.push((cyc.clone(), d));
            }
        }
        for pair in halves.chunks(2) {
            let (ci, di) = &pair[0];
            let (cj, dj) = &pair[1];
            let mut idx = ci.clone();
            idx.extend(cj);
            let mut a = di.clone();
            a.extend(std::iter::repeat_n(0.0, cj.len()));
            let mut b = vec![0.0; ci.len()];
            b.extend(dj);
            planes.push(Plane { idx, a, b, theta: PI });
        }
        Ok(Rotation { from, to, planes })
    }

    pub fn from_perm(&self) -> &[usize] {
        &self.from
    }

    pub fn to_perm(&self) -> &[usize] {
        &self.to
    }

    pub fn max_angle(&self) -> f64 {
        self.planes.iter().map(|p| p.theta).fold(0.0, f64::max)
    }

    fn relative(&self, t: f64) -> DMatrix<f64> {
        let n = self.from.len();
        let mut r = DMatrix::identity(n, n);
        for pl in &self.planes {
            let (c, s) = ((t * pl.theta).cos() - 1.0, (t * pl.theta).sin());
            for (u, &iu) in pl.idx.iter().enumerate() {
                for (v, &iv) in pl.idx.iter().enumerate() {
                    let (au, bu, av, bv) = (pl.a[u], pl.b[u], pl.a[v], pl.b[v]);
                    r[(iu, iv)] += c * (au * av + bu * bv) + s * (bu * av - au * bv);
                }
            }
        }
        r
    }

    pub fn eval(&self, x: &Q) -> CMat {
        if x.is_zero() {
            return CMat::permutation(&self.from);
        }
        if x.is_one() {
            return CMat::permutation(&self.to);
        }
        &CMat::permutation(&self.from) * &CMat::real(self.relative(to_f64(x)))
    }

    pub fn eval_f64(&self, t: f64) -> CMat {
        if t <= 0.0 {
            return CMat::permutation(&self.from);
        }
        if t >= 1.0 {
            return CMat::permutation(&self.to);
        }
        &CMat::permutation(&self.from) * &CMat::real(self.relative(t))
    }
}

#[derive(Debug, Clone)]
pub enum Factor {
    Perm(Vec<usize>),
    Rotation(Rotation),
    Dense(CMat),
    /// x -> blockdiag_b inner(paths[b](x))
    Pulled { inner: Arc<UnitaryPath>, paths: Vec<PLPath> },
    Adjoint(Arc<UnitaryPath>),
    /// x -> exp(i h(x)) for self-adjoint h
    ExpI(Arc<Expr>),
    /// polar factor of an approximately unitary element
    Polar(Arc<crate::polar::PolarFactor>),
}

#[derive(Debug, Clone)]
pub struct UnitaryPath {
    dim: usize,
    factors: Vec<Factor>,
}

impl UnitaryPath {
    pub fn identity(dim: usize) -> Self {
        UnitaryPath { dim, factors: Vec::new() }
    }

    pub fn from_factor(dim: usize, f: Factor) -> Self {
        UnitaryPath { dim, factors: vec![f] }
    }

    pub fn permutation(perm: Vec<usize>) -> Self {
        let dim = perm.len();
        if perm.iter().enumerate().all(|(i, &j)| i == j) {
            return Self::identity(dim);
        }
        Self::from_factor(dim, Factor::Perm(perm))
    }

    pub fn rotation(r: Rotation) -> Self {
        let dim = r.from.len();
        Self::from_factor(dim, Factor::Rotation(r))
    }

    pub fn constant(m: CMat) -> Self {
        Self::from_factor(m.nrows(), Factor::Dense(m))
    }

    pub fn pulled(inner: Arc<UnitaryPath>, paths: Vec<PLPath>) -> Self {
        if inner.is_identity() {
            return Self::identity(inner.dim * paths.len());
        }
        let dim = inner.dim * paths.len();
        Self::from_factor(dim, Factor::Pulled { inner, paths })
    }

    pub fn adjoint(&self) -> Self {
        if self.is_identity() {
            return self.clone();
        }
        Self::from_factor(self.dim, Factor::Adjoint(Arc::new(self.clone())))
    }

    /// Pointwise product self(x) * other(x).
    pub fn then(&self, other: &UnitaryPath) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        UnitaryPath { dim: self.dim, factors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn eval(&self, x: &Q) -> CMat {
        let mut acc: Option<CMat> = None;
        for f in &self.factors {
            acc = Some(match (acc, f) {
                (Some(a), Factor::Perm(p)) => a.mul_perm(p),
                (None, f) => f.eval(x),
                (Some(a), f) => &a * &f.eval(x),
            });
        }
        acc.unwrap_or_else(|| CMat::identity(self.dim))
    }

    pub fn eval_f64(&self, x: f64) -> CMat {
        let mut acc: Option<CMat> = None;
        for f in &self.factors {
            acc = Some(match (acc, f) {
                (Some(a), Factor::Perm(p)) => a.mul_perm(p),
                (None, f) => f.eval_f64(x),
                (Some(a), f) => &a * &f.eval_f64(x),
            });
        }
        acc.unwrap_or_else(|| CMat::identity(self.dim))
    }

    /// The constant permutation this path equals, if it is a product of
    /// permutation factors.
    pub fn as_permutation(&self) -> Option<Vec<usize>> {
        let mut acc: Vec<usize> = (0..self.dim).collect();
        for f in &self.factors {
            match f {
                // (P_acc P_f) e_i = P_acc e_{f[i]}
                Factor::Perm(p) => acc = p.iter().map(|&j| acc[j]).collect(),
                _ => return None,
            }
        }
        Some(acc)
    }

    /// Upper bound on the operator-norm Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.factors.iter().map(Factor::lipschitz).sum()
    }

    pub fn breakpoints(&self) -> Vec<Q> {
        let mut out = Vec::new();
        for f in &self.factors {
            match f {
                Factor::Pulled { paths, .. } => {
                    for p in paths {
                        out.extend(p.xs().iter().cloned());
                    }
                }
                Factor::Adjoint(u) => out.extend(u.breakpoints()),
                Factor::ExpI(h) => out.extend(h.breakpoints()),
                Factor::Polar(pf) => out.extend(pf.breakpoints()),
                _ => {}
            }
        }
        out
    }

    /// True when every factor is real.
    pub fn is_real(&self) -> bool {
        self.factors.iter().all(|f| match f {
            Factor::Perm(_) | Factor::Rotation(_) => true,
            Factor::Dense(m) => m.is_real(),
            Factor::Pulled { inner, .. } | Factor::Adjoint(inner) => inner.is_real(),
            Factor::ExpI(_) | Factor::Polar(_) => false,
        })
    }
}

impl Factor {
    fn eval(&self, x: &Q) -> CMat {
        match self {
            Factor::Perm(p) => CMat::permutation(p),
            Factor::Rotation(r) => r.eval(x),
            Factor::Dense(m) => m.clone(),
            Factor::Pulled { inner, paths } => {
                let blocks: Vec<CMat> = paths.iter().map(|p| inner.eval(&p.eval(x))).collect();
                CMat::block_diag(&blocks)
            }
            Factor::Adjoint(u) => u.eval(x).adjoint(),
            Factor::ExpI(h) => crate::linalg::expi_hermitian(&h.eval(x)),
            Factor::Polar(pf) => pf.eval(x),
        }
    }

    fn eval_f64(&self, x: f64) -> CMat {
        match self {
            Factor::Perm(p) => CMat::permutation(p),
            Factor::Rotation(r) => r.eval_f64(x),
            Factor::Dense(m) => m.clone(),
            Factor::Pulled { inner, paths } => {
                let blocks: Vec<CMat> = paths.iter().map(|p| inner.eval_f64(p.eval_f64(x))).collect();
                CMat::block_diag(&blocks)
            }
            Factor::Adjoint(u) => u.eval_f64(x).adjoint(),
            Factor::ExpI(h) => crate::linalg::expi_hermitian(&h.eval_f64(x)),
            Factor::Polar(pf) => pf.eval_f64(x),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            Factor::Perm(_) | Factor::Dense(_) => 0.0,
            Factor::Rotation(r) => r.max_angle(),
            Factor::Pulled { inner, paths } => {
                let slope = paths.iter().map(|p| to_f64(&p.lipschitz())).fold(0.0, f64::max);
                inner.lipschitz() * slope
            }
            Factor::Adjoint(u) => u.lipschitz(),
            Factor::ExpI(h) => h.lipschitz(),
            Factor::Polar(pf) => pf.lipschitz(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FactorRepr {
    Perm { perm: Vec<usize> },
    Rotation { from: Vec<usize>, to: Vec<usize> },
    Dense { re: Vec<Vec<f64>>, im: Option<Vec<Vec<f64>>> },
    Pulled { inner: UnitaryRepr, paths: Vec<PLPath> },
    Adjoint { inner: UnitaryRepr },
}

#[derive(Serialize, Deserialize)]
pub struct UnitaryRepr {
    dim: usize,
    segments: Vec<FactorRepr>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = r.len();
    if r.iter().any(|row| row.len() != n) {
        return Err(Error::Json("dense unitary must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

impl UnitaryPath {
    pub fn to_repr(&self) -> Result<UnitaryRepr> {
        let mut segments = Vec::new();
        for f in &self.factors {
            segments.push(match f {
                Factor::Perm(p) => FactorRepr::Perm { perm: p.clone() },
                Factor::Rotation(r) => FactorRepr::Rotation { from: r.from.clone(), to: r.to.clone() },
                Factor::Dense(m) => FactorRepr::Dense { re: rows(m.re()), im: m.im().map(rows) },
                Factor::Pulled { inner, paths } => {
                    FactorRepr::Pulled { inner: inner.to_repr()?, paths: paths.clone() }
                }
                Factor::Adjoint(u) => FactorRepr::Adjoint { inner: u.to_repr()? },
                Factor::ExpI(_) => return Err(Error::NotSerializable("exp(ih) factor".into())),
                Factor::Polar(_) => return Err(Error::NotSerializable("polar factor".into())),
            });
        }
        Ok(UnitaryRepr { dim: self.dim, segments })
    }

    pub fn from_repr(r: &UnitaryRepr) -> Result<Self> {
        let mut factors = Vec::new();
        for s in &r.segments {
            let f = match s {
                FactorRepr::Perm { perm } => {
                    if !is_permutation(perm) {
                        return Err(Error::Json("perm segment is not a permutation".into()));
                    }
                    Factor::Perm(perm.clone())
                }
                FactorRepr::Rotation { from, to } => Factor::Rotation(Rotation::new(from.clone(), to.clone())?),
                FactorRepr::Dense { re, im } => {
                    let im = match im {
                        Some(m) => Some(from_rows(m)?),
                        None => None,
                    };
                    Factor::Dense(CMat::from_parts(from_rows(re)?, im))
                }
                FactorRepr::Pulled { inner, paths } => {
                    let inner = Arc::new(UnitaryPath::from_repr(inner)?);
                    if inner.dim * paths.len() != r.dim {
                        return Err(Error::Json("pulled segment has wrong size".into()));
                    }
                    Factor::Pulled { inner, paths: paths.clone() }
                }
                FactorRepr::Adjoint { inner } => Factor::Adjoint(Arc::new(UnitaryPath::from_repr(inner)?)),
            };
            let d = match &f {
                Factor::Perm(p) => p.len(),
                Factor::Rotation(rot) => rot.from.len(),
                Factor::Dense(m) => m.nrows(),
                Factor::Adjoint(u) => u.dim,
                _ => r.dim,
            };
            if d != r.dim {
                return Err(Error::Json(format!("segment of size {d} in unitary of size {}", r.dim)));
            }
            factors.push(f);
        }
        Ok(UnitaryPath { dim: r.dim, factors })
    }
}

impl Serialize for UnitaryPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_repr().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitaryPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = UnitaryRepr::deserialize(d)?;
        UnitaryPath::from_repr(&r).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn unitarity(u: &CMat) -> f64 {
        (&(u * &u.adjoint()) - &CMat::identity(u.nrows())).spectral_norm()
    }

    #[test]
    fn rotation_hits_both_endpoints() {
        let from = vec![0, 1, 2, 3, 4, 5, 6];
        // a 3-cycle and two 2-cycles: even
        let to = vec![1, 2, 0, 4, 3, 6, 5];
        let r = Rotation::new(from.clone(), to.clone()).unwrap();
        let rel_end = &CMat::permutation(&from) * &CMat::real(r.relative(1.0));
        let exact = CMat::permutation(&to);
        assert!((&rel_end - &exact).max_abs() < 1e-12);
        for k in 0..=10 {
            assert!(unitarity(&r.eval(&q(k, 10))) < 1e-12);
        }
        assert!(r.max_angle() <= PI + 1e-15);
    }

    #[test]
    fn odd_relative_permutation_rejected() {
        assert!(Rotation::new(vec![0, 1], vec![1, 0]).is_err());
    }

    #[test]
    fn long_cycle_log() {
        let n = 9;
        let from: Vec<usize> = (0..n).collect();
        let to: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        let r = Rotation::new(from, to.clone()).unwrap();
        let end = CMat::real(r.relative(1.0));
        assert!((&end - &CMat::permutation(&to)).max_abs() < 1e-12);
    }

    #[test]
    fn lipschitz_bound_holds_on_rotation() {
        let r = Rotation::new(vec![0, 1, 2, 3], vec![1, 0, 3, 2]).unwrap();
        let u = UnitaryPath::rotation(r);
        let l = u.lipschitz();
        for k in 0..20 {
            let a = u.eval(&q(k, 20));
            let b = u.eval(&q(k + 1, 20));
            assert!((&a - &b).spectral_norm() <= l / 20.0 + 1e-12);
        }
    }

    #[test]
    fn json_roundtrip() {
        let r = Rotation::new(vec![0, 1, 2], vec![1, 2, 0]).unwrap();
        let u = UnitaryPath::rotation(r).then(&UnitaryPath::permutation(vec![2, 0, 1]));
        let s = serde_json::to_string(&u).unwrap();
        let v: UnitaryPath = serde_json::from_str(&s).unwrap();
        for k in 0..=4 {
            let x = q(k, 4);
            assert!((&u.eval(&x) - &v.eval(&x)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn pulled_blocks() {
        let inner = Arc::new(UnitaryPath::rotation(Rotation::new(vec![0, 1, 2], vec![1, 2, 0]).unwrap()));
        let paths = vec![PLPath::identity(), PLPath::affine(Q::zero(), q(1, 2)).unwrap()];
        let u = UnitaryPath::pulled(inner.clone(), paths);
        let m = u.eval(&Q::one());
        let b0 = m.block(0, 0, 3, 3);
        let b1 = m.block(3, 3, 3, 3);
        assert!((&b0 - &inner.eval(&Q::one())).max_abs() < 1e-15);
        assert!((&b1 - &inner.eval(&q(1, 2))).max_abs() < 1e-15);
    }
}

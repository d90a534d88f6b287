//! Piecewise-linear maps [0,1] -> [0,1] with rational breakpoints.

use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{one, qvec, to_f64, zero, Q};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawPath", into = "RawPath")]
pub struct PLPath {
    xs: Vec<Q>,
    ys: Vec<Q>,
    xf: Vec<f64>,
    yf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPath {
    #[serde(with = "qvec")]
    x: Vec<Q>,
    #[serde(with = "qvec")]
    y: Vec<Q>,
}

impl TryFrom<RawPath> for PLPath {
    type Error = Error;
    fn try_from(r: RawPath) -> Result<Self> {
        PLPath::new(r.x, r.y)
    }
}

impl From<PLPath> for RawPath {
    fn from(p: PLPath) -> Self {
        RawPath { x: p.xs, y: p.ys }
    }
}

impl PartialEq for PLPath {
    fn eq(&self, other: &Self) -> bool {
        let a = self.canonical();
        let b = other.canonical();
        a.xs == b.xs && a.ys == b.ys
    }
}

impl PLPath {
    pub fn new(xs: Vec<Q>, ys: Vec<Q>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidPath("need at least two matching breakpoints".into()));
        }
        if !xs[0].is_zero() || !xs[xs.len() - 1].is_one() {
            return Err(Error::InvalidPath("domain must be [0,1]".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPath("breakpoints not strictly increasing".into()));
        }
        if ys.iter().any(|y| y.is_negative() || *y > one()) {
            return Err(Error::InvalidPath("values outside [0,1]".into()));
        }
        Ok(Self::raw(xs, ys))
    }

    fn raw(xs: Vec<Q>, ys: Vec<Q>) -> Self {
        let xf = xs.iter().map(to_f64).collect();
        let yf = ys.iter().map(to_f64).collect();
        PLPath { xs, ys, xf, yf }
    }

    pub fn identity() -> Self {
        Self::raw(vec![zero(), one()], vec![zero(), one()])
    }

    pub fn constant(c: Q) -> Result<Self> {
        Self::new(vec![zero(), one()], vec![c.clone(), c])
    }

    /// x -> s + (e - s) x
    pub fn affine(s: Q, e: Q) -> Result<Self> {
        Self::new(vec![zero(), one()], vec![s, e])
    }

    pub fn xs(&self) -> &[Q] {
        &self.xs
    }

    pub fn ys(&self) -> &[Q] {
        &self.ys
    }

    pub fn xs_f64(&self) -> &[f64] {
        &self.xf
    }

    pub fn start(&self) -> &Q {
        &self.ys[0]
    }

    pub fn end(&self) -> &Q {
        &self.ys[self.ys.len() - 1]
    }

    fn segment(&self, x: &Q) -> usize {
        // index k with xs[k] <= x <= xs[k+1]
        match self.xs.binary_search(x) {
            Ok(k) => k.min(self.xs.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: &Q) -> Q {
        let k = self.segment(x);
        let (x0, x1) = (&self.xs[k], &self.xs[k + 1]);
        let (y0, y1) = (&self.ys[k], &self.ys[k + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let n = self.xf.len();
        let k = match self.xf.binary_search_by(|v| v.partial_cmp(&x).unwrap_or(Ordering::Less)) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.saturating_sub(1).min(n - 2),
        };
        let t = (x - self.xf[k]) / (self.xf[k + 1] - self.xf[k]);
        self.yf[k] + (self.yf[k + 1] - self.yf[k]) * t
    }

    /// Largest absolute slope.
    pub fn lipschitz(&self) -> Q {
        let mut best = zero();
        for k in 0..self.xs.len() - 1 {
            let s = ((&self.ys[k + 1] - &self.ys[k]) / (&self.xs[k + 1] - &self.xs[k])).abs();
            if s > best {
                best = s;
            }
        }
        best
    }

    pub fn image_diameter(&self) -> Q {
        let mx = self.ys.iter().max().unwrap();
        let mn = self.ys.iter().min().unwrap();
        mx - mn
    }

    pub fn is_monotone(&self) -> bool {
        self.ys.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.ys.windows(2).all(|w| w[0] < w[1])
    }

    /// Drops interior breakpoints where the path is collinear.
    pub fn canonical(&self) -> PLPath {
        let mut xs = vec![self.xs[0].clone()];
        let mut ys = vec![self.ys[0].clone()];
        for k in 1..self.xs.len() - 1 {
            let (xa, ya) = (xs.last().unwrap(), ys.last().unwrap());
            let s1 = (&self.ys[k] - ya) / (&self.xs[k] - xa);
            let s2 = (&self.ys[k + 1] - &self.ys[k]) / (&self.xs[k + 1] - &self.xs[k]);
            if s1 != s2 {
                xs.push(self.xs[k].clone());
                ys.push(self.ys[k].clone());
            }
        }
        xs.push(self.xs[self.xs.len() - 1].clone());
        ys.push(self.ys[self.ys.len() - 1].clone());
        Self::raw(xs, ys)
    }

    /// Inverse of a strictly increasing path from 0 onto 1.
    pub fn inverse(&self) -> Result<PLPath> {
        if !self.is_strictly_increasing() || !self.start().is_zero() || !self.end().is_one() {
            return Err(Error::InvalidPath("inverse needs a strictly increasing bijection".into()));
        }
        Ok(Self::raw(self.ys.clone(), self.xs.clone()))
    }

    /// Samples the path at the given sorted points (which must include 0 and 1).
    pub fn from_samples(xs: Vec<Q>, f: impl Fn(&Q) -> Q) -> Result<PLPath> {
        let ys = xs.iter().map(&f).collect();
        Ok(PLPath::new(xs, ys)?.canonical())
    }

    /// Monotone-preimage points of `targets` under this path, segment by segment.
    pub fn preimages(&self, targets: &[Q]) -> Vec<Q> {
        let mut out = Vec::new();
        for k in 0..self.xs.len() - 1 {
            let (y0, y1) = (&self.ys[k], &self.ys[k + 1]);
            if y0 == y1 {
                continue;
            }
            let (lo, hi) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
            for b in targets {
                if b > lo && b < hi {
                    let x = &self.xs[k] + (b - y0) * (&self.xs[k + 1] - &self.xs[k]) / (y1 - y0);
                    out.push(x);
                }
            }
        }
        out
    }

    /// The path x -> outer(inner(x)).
    pub fn compose(outer: &PLPath, inner: &PLPath) -> PLPath {
        let mut xs: Vec<Q> = inner.xs.clone();
        xs.extend(inner.preimages(&outer.xs));
        xs.sort();
        xs.dedup();
        let ys = xs.iter().map(|x| outer.eval(&inner.eval(x))).collect();
        Self::raw(xs, ys).canonical()
    }

    /// Exact sup |a(x) - b(x)|.
    pub fn sup_distance(a: &PLPath, b: &PLPath) -> (Q, Q) {
        let xs = merged_breakpoints(&[a, b]);
        let mut best = (zero(), zero());
        for x in xs {
            let d = (a.eval(&x) - b.eval(&x)).abs();
            if d > best.0 {
                best = (d, x);
            }
        }
        best
    }
}

pub fn merged_breakpoints(paths: &[&PLPath]) -> Vec<Q> {
    let mut xs: Vec<Q> = paths.iter().flat_map(|p| p.xs.iter().cloned()).collect();
    xs.sort();
    xs.dedup();
    xs
}

pub fn compose_paths(outer: &PLPath, inner: &PLPath) -> PLPath {
    PLPath::compose(outer, inner)
}

pub fn image_diameter(path: &PLPath) -> Q {
    path.image_diameter()
}

/// Exact check that family[i] <= family[i+1] everywhere.
pub fn pointwise_ordered(family: &[PLPath]) -> bool {
    family.windows(2).all(|w| {
        merged_breakpoints(&[&w[0], &w[1]])
            .iter()
            .all(|x| w[0].eval(x) <= w[1].eval(x))
    })
}

/// Permutation sorting a pointwise-orderable family: `order[i]` is the
/// original index placed at position i.
pub fn sorting_permutation(family: &[PLPath]) -> Vec<usize> {
    let refs: Vec<&PLPath> = family.iter().collect();
    let xs = merged_breakpoints(&refs);
    let keys: Vec<Vec<Q>> = family.iter().map(|p| xs.iter().map(|x| p.eval(x)).collect()).collect();
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&i, &j| keys[i].cmp(&keys[j]).then(i.cmp(&j)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn p(xs: &[(i64, i64)], ys: &[(i64, i64)]) -> PLPath {
        PLPath::new(
            xs.iter().map(|&(n, d)| q(n, d)).collect(),
            ys.iter().map(|&(n, d)| q(n, d)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn compose_examples() {
        let half = PLPath::affine(zero(), q(1, 2)).unwrap();
        assert_eq!(PLPath::compose(&PLPath::identity(), &half), half);
        assert_eq!(PLPath::compose(&half, &half), PLPath::affine(zero(), q(1, 4)).unwrap());
    }

    #[test]
    fn compose_picks_up_preimages() {
        let outer = p(&[(0, 1), (1, 2), (1, 1)], &[(0, 1), (0, 1), (1, 1)]);
        let inner = PLPath::identity();
        let c = PLPath::compose(&outer, &inner);
        assert_eq!(c, outer);
        let c2 = PLPath::compose(&outer, &PLPath::affine(q(1, 4), q(3, 4)).unwrap());
        assert_eq!(c2.xs(), &[q(0, 1), q(1, 2), q(1, 1)]);
        assert_eq!(c2.ys(), &[q(0, 1), q(0, 1), q(1, 2)]);
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(PLPath::identity().image_diameter(), one());
        assert_eq!(PLPath::constant(q(1, 2)).unwrap().image_diameter(), zero());
        let xi = p(&[(0, 1), (1, 2), (1, 1)], &[(1, 4), (3, 8), (1, 3)]);
        assert_eq!(xi.image_diameter(), q(1, 8));
    }

    #[test]
    fn ordering_examples() {
        let a = PLPath::affine(zero(), q(1, 2)).unwrap();
        let b = PLPath::affine(q(1, 2), one()).unwrap();
        assert!(pointwise_ordered(&[a.clone(), b.clone()]));
        assert!(!pointwise_ordered(&[b, a]));
        let x = PLPath::identity();
        let y = PLPath::affine(one(), zero()).unwrap();
        assert!(!pointwise_ordered(&[x, y]));
    }

    #[test]
    fn inverse_roundtrip() {
        let f = p(&[(0, 1), (1, 3), (1, 1)], &[(0, 1), (1, 2), (1, 1)]);
        let g = f.inverse().unwrap();
        assert_eq!(PLPath::compose(&f, &g), PLPath::identity());
        assert_eq!(PLPath::compose(&g, &f), PLPath::identity());
        assert!(PLPath::affine(zero(), q(1, 2)).unwrap().inverse().is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PLPath::new(vec![zero(), q(1, 2)], vec![zero(), zero()]).is_err());
        assert!(PLPath::new(vec![zero(), one()], vec![zero(), q(3, 2)]).is_err());
        assert!(PLPath::new(vec![zero(), zero(), one()], vec![zero(), zero(), zero()]).is_err());
    }

    #[test]
    fn json_shape() {
        let f = PLPath::affine(q(1, 4), one()).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"x":["0","1"],"y":["1/4","1"]}"#);
        let g: PLPath = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn sup_distance_exact() {
        let a = PLPath::identity();
        let b = PLPath::affine(q(1, 10), one()).unwrap();
        assert_eq!(PLPath::sup_distance(&a, &b).0, q(1, 10));
    }
}

//! Traces on Z_{p,q} as probability measures on [0,1] with PL distribution
//! functions, and their exact pushforward calculus.

use std::ops::Deref;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::C64;
use crate::matfn::{par_map, Grid};
use crate::morphism::DiagMorphism;
use crate::pl::{merged_breakpoints, PLPath};
use crate::rational::{one, q, to_f64, zero, Q};

/// Probability measure with continuous nondecreasing PL CDF. May have
/// flat stretches (zero mass) but never atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct Measure {
    cdf: PLPath,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    cdf: PLPath,
}

impl TryFrom<RawMeasure> for Measure {
    type Error = Error;
    fn try_from(r: RawMeasure) -> Result<Self> {
        Measure::new(r.cdf)
    }
}

impl From<Measure> for RawMeasure {
    fn from(m: Measure) -> Self {
        RawMeasure { cdf: m.cdf }
    }
}

/// A faithful measure: the CDF is strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Measure", into = "Measure")]
pub struct DiffuseMeasure(Measure);

impl TryFrom<Measure> for DiffuseMeasure {
    type Error = Error;
    fn try_from(m: Measure) -> Result<Self> {
        DiffuseMeasure::from_measure(m)
    }
}

impl From<DiffuseMeasure> for Measure {
    fn from(d: DiffuseMeasure) -> Self {
        d.0
    }
}

impl Deref for DiffuseMeasure {
    type Target = Measure;
    fn deref(&self) -> &Measure {
        &self.0
    }
}

impl Measure {
    pub fn new(cdf: PLPath) -> Result<Self> {
        if !cdf.start().is_zero() || !cdf.end().is_one() {
            return Err(Error::InvalidMeasure("cdf must run from 0 to 1".into()));
        }
        if !cdf.is_monotone() {
            return Err(Error::InvalidMeasure("cdf must be nondecreasing".into()));
        }
        Ok(Measure { cdf: cdf.canonical() })
    }

    pub fn lebesgue() -> Self {
        Measure { cdf: PLPath::identity() }
    }

    pub fn cdf(&self) -> &PLPath {
        &self.cdf
    }

    pub fn mass(&self, a: &Q, b: &Q) -> Q {
        self.cdf.eval(b) - self.cdf.eval(a)
    }

    pub fn is_faithful(&self) -> bool {
        self.cdf.is_strictly_increasing()
    }
}

impl DiffuseMeasure {
    pub fn new(cdf: PLPath) -> Result<Self> {
        Self::from_measure(Measure::new(cdf)?)
    }

    pub fn from_measure(m: Measure) -> Result<Self> {
        if !m.is_faithful() {
            return Err(Error::InvalidMeasure("cdf has a flat segment".into()));
        }
        Ok(DiffuseMeasure(m))
    }

    pub fn lebesgue() -> Self {
        DiffuseMeasure(Measure::lebesgue())
    }

    pub fn measure(&self) -> &Measure {
        &self.0
    }
}

/// sup{x : xi(x) <= s} for nondecreasing xi and xi(0) <= s < xi(1).
fn last_preimage(xi: &PLPath, s: &Q) -> Q {
    let (xs, ys) = (xi.xs(), xi.ys());
    let k = ys.iter().rposition(|y| y <= s).unwrap_or(0);
    if k + 1 == xs.len() {
        return one();
    }
    &xs[k] + (s - &ys[k]) * (&xs[k + 1] - &xs[k]) / (&ys[k + 1] - &ys[k])
}

/// Exact CDF of xi_* tau: s -> tau(xi^{-1}[0, s]).
pub fn pushforward(xi: &PLPath, tau: &Measure) -> Result<Measure> {
    if !xi.is_monotone() {
        return Err(Error::NonMonotonePath);
    }
    let (xs, ys) = (xi.xs(), xi.ys());
    for k in 0..xs.len() - 1 {
        if ys[k] == ys[k + 1] && tau.mass(&xs[k], &xs[k + 1]) > zero() {
            return Err(Error::AtomicPushforward);
        }
    }
    let mut nodes: Vec<Q> = vec![zero(), one()];
    for x in merged_breakpoints(&[xi, tau.cdf()]) {
        nodes.push(xi.eval(&x));
    }
    nodes.sort();
    nodes.dedup();
    let (lo, hi) = (xi.start().clone(), xi.end().clone());
    let ys_out: Vec<Q> = nodes
        .iter()
        .map(|s| {
            if *s < lo {
                zero()
            } else if *s >= hi {
                one()
            } else {
                tau.cdf().eval(&last_preimage(xi, s))
            }
        })
        .collect();
    Measure::new(PLPath::new(nodes, ys_out)?)
}

/// Convex combination with rational weights summing to 1.
pub fn mixture(parts: &[(Q, Measure)]) -> Result<Measure> {
    let total: Q = parts.iter().map(|(w, _)| w.clone()).sum();
    if parts.is_empty() || !total.is_one() || parts.iter().any(|(w, _)| *w < zero()) {
        return Err(Error::InvalidMeasure("mixture weights must be nonnegative and sum to 1".into()));
    }
    let cdfs: Vec<&PLPath> = parts.iter().map(|(_, m)| m.cdf()).collect();
    let xs = merged_breakpoints(&cdfs);
    let ys = xs.iter().map(|x| parts.iter().map(|(w, m)| w * m.cdf().eval(x)).sum()).collect();
    Measure::new(PLPath::new(xs, ys)?)
}

/// (1/l) sum_i (xi_i)_* tau: the measure making `m` trace-preserving.
pub fn induced_measure(m: &DiagMorphism, tau_target: &Measure) -> Result<Measure> {
    let w = q(1, m.multiplicity() as i64);
    let parts = m
        .paths()
        .iter()
        .map(|p| Ok((w.clone(), pushforward(p, tau_target)?)))
        .collect::<Result<Vec<_>>>()?;
    mixture(&parts)
}

/// True when tau_source equals the measure induced through `m` exactly.
pub fn is_trace_preserving(m: &DiagMorphism, tau_source: &Measure, tau_target: &Measure) -> Result<bool> {
    Ok(induced_measure(m, tau_target)? == *tau_source)
}

/// xi = F_to^{-1} o F_from, so that xi_* from = to.
pub fn transport_path(from: &DiffuseMeasure, to: &DiffuseMeasure) -> Result<PLPath> {
    Ok(PLPath::compose(&to.cdf().inverse()?, from.cdf()))
}

/// Certified enclosure of tau(f) = integral of tr f(x) d tau(x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceBracket {
    pub lower: f64,
    pub upper: f64,
    pub imag_lower: f64,
    pub imag_upper: f64,
}

impl TraceBracket {
    fn exact(c: C64) -> Self {
        TraceBracket { lower: c.re, upper: c.re, imag_lower: c.im, imag_upper: c.im }
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower).max(self.imag_upper - self.imag_lower)
    }

    pub fn midpoint(&self) -> C64 {
        C64::new((self.lower + self.upper) / 2.0, (self.imag_lower + self.imag_upper) / 2.0)
    }

    pub fn contains(&self, c: C64) -> bool {
        self.lower <= c.re && c.re <= self.upper && self.imag_lower <= c.im && c.im <= self.imag_upper
    }

    /// Largest gap between the two enclosures, 0 when they overlap.
    pub fn separation(&self, other: &TraceBracket) -> f64 {
        let re = (self.lower - other.upper).max(other.lower - self.upper).max(0.0);
        let im = (self.imag_lower - other.imag_upper).max(other.imag_lower - self.imag_upper).max(0.0);
        re.max(im)
    }
}

/// Mean over [0,h] of the lower and upper cone envelopes through g(0)=ga,
/// g(h)=gb for an L-Lipschitz g.
fn envelope_means(ga: f64, gb: f64, lip: f64, h: f64) -> (f64, f64) {
    if lip <= 0.0 || h <= 0.0 {
        let m = (ga + gb) / 2.0;
        return (m, m);
    }
    let t_lo = ((ga - gb + lip * h) / (2.0 * lip)).clamp(0.0, h);
    let lo = ga * t_lo - lip * t_lo * t_lo / 2.0 + gb * (h - t_lo) - lip * (h - t_lo).powi(2) / 2.0;
    let t_hi = ((gb - ga + lip * h) / (2.0 * lip)).clamp(0.0, h);
    let hi = ga * t_hi + lip * t_hi * t_hi / 2.0 + gb * (h - t_hi) + lip * (h - t_hi).powi(2) / 2.0;
    (lo / h, hi / h)
}

/// Bracket for tau(f); the density is constant on each CDF segment, so each
/// grid cell contributes (its mass) * (mean of tr f over it).
pub fn trace_bracket(tau: &Measure, f: &Expr, resolution: usize) -> TraceBracket {
    if let Some(c) = f.as_scalar() {
        return TraceBracket::exact(c);
    }
    let grid = Grid::uniform(resolution).with_points(tau.cdf().xs().iter().cloned()).with_points(f.breakpoints());
    let nodes = grid.nodes();
    let vals: Vec<C64> = par_map(nodes, |x| f.trace_at(x));
    let lip = f.trace_lipschitz();
    let ilip = if f.trace_is_real() { 0.0 } else { lip };
    let mut b = TraceBracket { lower: 0.0, upper: 0.0, imag_lower: 0.0, imag_upper: 0.0 };
    let mut scale = 0.0;
    for k in 0..nodes.len() - 1 {
        let mass = to_f64(&tau.mass(&nodes[k], &nodes[k + 1]));
        if mass == 0.0 {
            continue;
        }
        let h = to_f64(&(&nodes[k + 1] - &nodes[k]));
        let (rl, rh) = envelope_means(vals[k].re, vals[k + 1].re, lip, h);
        let (il, ih) = envelope_means(vals[k].im, vals[k + 1].im, ilip, h);
        b.lower += mass * rl;
        b.upper += mass * rh;
        b.imag_lower += mass * il;
        b.imag_upper += mass * ih;
        scale += mass * (vals[k].norm() + vals[k + 1].norm() + lip * h);
    }
    // outward allowance for floating-point rounding in the sums
    let slack = 1e-13 * (1.0 + scale);
    b.lower -= slack;
    b.upper += slack;
    b.imag_lower -= slack;
    b.imag_upper += slack;
    b
}

/// Real-part bracket of tau(f) at the given resolution.
pub fn trace(tau: &Measure, f: &Expr, resolution: usize) -> (f64, f64) {
    let b = trace_bracket(tau, f, resolution);
    (b.lower, b.upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{corpus_element, generator_corpus, DDAlgebra};
    use crate::morphism::build_embedding;
    use crate::numtheory::PrimePair;

    fn z(p: u64, q_: u64) -> DDAlgebra {
        DDAlgebra::new(PrimePair::new(p, q_).unwrap())
    }

    fn pl(pts: &[(i64, i64, i64, i64)]) -> PLPath {
        PLPath::new(pts.iter().map(|t| q(t.0, t.1)).collect(), pts.iter().map(|t| q(t.2, t.3)).collect()).unwrap()
    }

    #[test]
    fn unit_integrates_to_one() {
        let a = z(2, 3);
        let mu = DiffuseMeasure::new(pl(&[(0, 1, 0, 1), (1, 3, 2, 3), (1, 1, 1, 1)])).unwrap();
        assert_eq!(trace(&mu, a.unit().body(), 64), (1.0, 1.0));
    }

    #[test]
    fn lebesgue_of_t() {
        let a = z(2, 3);
        let b = trace_bracket(&Measure::lebesgue(), corpus_element(&a, "t").unwrap().body(), 64);
        assert!(b.contains(C64::new(0.5, 0.0)) && b.width() <= 1e-3, "{b:?}");
    }

    #[test]
    fn bump_is_one_thirty_sixth() {
        let a = z(2, 3);
        let (lo, hi) = trace(&Measure::lebesgue(), corpus_element(&a, "bump_0_0").unwrap().body(), 256);
        assert!(lo <= 1.0 / 36.0 && 1.0 / 36.0 <= hi, "{lo} {hi}");
        assert!(hi - lo < 1e-2);
    }

    #[test]
    fn pushforward_by_half() {
        let g = pushforward(&PLPath::affine(zero(), q(1, 2)).unwrap(), &Measure::lebesgue()).unwrap();
        for k in 0..=20 {
            let s = q(k, 20);
            let expect = if s <= q(1, 2) { &s * q(2, 1) } else { one() };
            assert_eq!(g.cdf().eval(&s), expect);
        }
        assert!(g.cdf().end().is_one());
    }

    #[test]
    fn pushforward_rejects_atoms_and_nonmonotone() {
        let leb = Measure::lebesgue();
        assert!(matches!(pushforward(&PLPath::constant(q(1, 3)).unwrap(), &leb), Err(Error::AtomicPushforward)));
        let vee = pl(&[(0, 1, 1, 1), (1, 2, 0, 1), (1, 1, 1, 1)]);
        assert!(matches!(pushforward(&vee, &leb), Err(Error::NonMonotonePath)));
        assert_eq!(pushforward(&PLPath::identity(), &leb).unwrap(), leb);
    }

    #[test]
    fn flat_piece_without_mass_is_fine() {
        // tau lives on [0,1/2]; xi is flat on [1/2,1]
        let tau = Measure::new(pl(&[(0, 1, 0, 1), (1, 2, 1, 1), (1, 1, 1, 1)])).unwrap();
        let xi = pl(&[(0, 1, 0, 1), (1, 2, 1, 1), (1, 1, 1, 1)]);
        assert_eq!(pushforward(&xi, &tau).unwrap(), Measure::lebesgue());
    }

    #[test]
    fn staircase_induces_lebesgue() {
        let paths: Vec<PLPath> = (0..4).map(|k| PLPath::affine(q(k, 4), q(k + 1, 4)).unwrap()).collect();
        let parts: Vec<(Q, Measure)> =
            paths.iter().map(|p| (q(1, 4), pushforward(p, &Measure::lebesgue()).unwrap())).collect();
        assert_eq!(mixture(&parts).unwrap(), Measure::lebesgue());
    }

    #[test]
    fn induced_duality_on_corpus() {
        let (a, b) = (z(2, 3), z(16, 15));
        let m = build_embedding(&a, &b, &q(1, 2)).unwrap();
        let nu = DiffuseMeasure::new(pl(&[(0, 1, 0, 1), (1, 4, 1, 2), (1, 1, 1, 1)])).unwrap();
        let ind = induced_measure(&m, &nu).unwrap();
        assert!(ind.is_faithful());
        for e in generator_corpus(&a) {
            let lhs = trace_bracket(&ind, e.element.body(), 64);
            let rhs = trace_bracket(&nu, &m.apply_expr(e.element.body()), 64);
            assert_eq!(lhs.separation(&rhs), 0.0, "{}", e.name);
        }
        assert!(is_trace_preserving(&crate::morphism::DiagMorphism::identity(a), &nu, &nu).unwrap());
    }

    #[test]
    fn transport_moves_measures() {
        let a = DiffuseMeasure::new(pl(&[(0, 1, 0, 1), (1, 3, 1, 2), (1, 1, 1, 1)])).unwrap();
        let b = DiffuseMeasure::new(pl(&[(0, 1, 0, 1), (3, 4, 1, 4), (1, 1, 1, 1)])).unwrap();
        let xi = transport_path(&b, &a).unwrap();
        assert_eq!(pushforward(&xi, &b).unwrap(), *a.measure());
    }

    #[test]
    fn json_shape() {
        let m = DiffuseMeasure::new(pl(&[(0, 1, 0, 1), (1, 4, 1, 2), (1, 1, 1, 1)])).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v, serde_json::json!({"cdf": {"x": ["0", "1/4", "1"], "y": ["0", "1/2", "1"]}}));
        let back: DiffuseMeasure = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        let flat = serde_json::json!({"cdf": {"x": ["0", "1/2", "1"], "y": ["0", "1", "1"]}});
        assert!(serde_json::from_value::<DiffuseMeasure>(flat.clone()).is_err());
        assert!(serde_json::from_value::<Measure>(flat).is_ok());
    }
}

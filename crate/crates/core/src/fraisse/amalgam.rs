//! The amalgamation responder: given gamma: A_n -> B, find eta: B -> A_m
//! with eta o gamma close to phi_n^m on a finite probe set.

use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::algebra::{DDAlgebra, MEMBERSHIP_TOL};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fraisse::sequence::Sequence;
use crate::linalg::CMat;
use crate::matfn::{sup_norm, Grid};
use crate::fraisse::boundary::endpoint_correction;
use crate::morphism::{boundary_unitary, canonical_path_family, DiagMorphism};
use crate::pl::{pointwise_ordered, sorting_permutation, PLPath};
use crate::rational::{floor_to, one, q, qstr, to_f64, zero, Q};
use crate::trace::{induced_measure, mixture, pushforward, DiffuseMeasure, Measure};
use crate::unitary::UnitaryPath;

/// delta = eps / (largest Lipschitz constant), rounded down, capped at 1.
pub fn modulus_delta(fs: &[&Expr], eps: f64) -> Q {
    let lmax = fs.iter().map(|f| f.lipschitz()).fold(0.0, f64::max);
    if lmax <= 0.0 {
        return one();
    }
    let raw = eps / lmax;
    if raw >= 1.0 {
        return one();
    }
    for den in [1_000_000i64, 1_000_000_000, 1_000_000_000_000] {
        let d = floor_to(raw, den);
        if d > zero() {
            return d;
        }
    }
    q(1, 1_000_000_000_000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMatching {
    pub ok: bool,
    #[serde(with = "qstr")]
    pub delta: Q,
    #[serde(with = "qstr")]
    pub max_distance: Q,
    /// index (0-based) of the worst pair
    pub index: usize,
    /// where the worst distance is attained
    #[serde(with = "qstr")]
    pub point: Q,
    /// min of the higher path and max of the lower path at `index`; the
    /// counting argument forces c <= d for trace-preserving families
    #[serde(with = "qstr")]
    pub c: Q,
    #[serde(with = "qstr")]
    pub d: Q,
    pub both_ordered: bool,
    pub both_trace_preserving: bool,
}

fn family_induces(paths: &[PLPath], tau_src: &Measure, tau_tgt: &Measure) -> bool {
    let w = q(1, paths.len() as i64);
    let parts: Option<Vec<(Q, Measure)>> =
        paths.iter().map(|p| pushforward(p, tau_tgt).ok().map(|m| (w.clone(), m))).collect();
    parts.and_then(|p| mixture(&p).ok()).is_some_and(|m| m == *tau_src)
}

/// Exact check that max_i ||xi_i - zeta_i||_inf < delta.
pub fn verify_path_matching(
    l1: &[PLPath],
    l2: &[PLPath],
    delta: &Q,
    tau_src: &Measure,
    tau_tgt: &Measure,
) -> Result<PathMatching> {
    if l1.len() != l2.len() {
        return Err(Error::SizeMismatch(l1.len(), l2.len()));
    }
    let mut worst = (zero(), 0usize, zero());
    for (i, (a, b)) in l1.iter().zip(l2).enumerate() {
        let (d, x) = PLPath::sup_distance(a, b);
        if i == 0 || d > worst.0 {
            worst = (d, i, x);
        }
    }
    let (dist, j, x) = worst;
    let (c, d) = if l1.is_empty() {
        (zero(), zero())
    } else {
        let (a, b) = (&l1[j], &l2[j]);
        let (hi, lo) = if a.eval(&x) >= b.eval(&x) { (a, b) } else { (b, a) };
        let min_hi = hi.ys().iter().min().unwrap().clone();
        let max_lo = lo.ys().iter().max().unwrap().clone();
        (min_hi, max_lo)
    };
    Ok(PathMatching {
        ok: dist < *delta,
        delta: delta.clone(),
        max_distance: dist,
        index: j,
        point: x,
        c,
        d,
        both_ordered: pointwise_ordered(l1) && pointwise_ordered(l2),
        both_trace_preserving: family_induces(l1, tau_src, tau_tgt) && family_induces(l2, tau_src, tau_tgt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// single bijective gamma path zeta: zeta'_i = zeta^{-1} o xi_i
    Inversion,
    /// zeta'_b = T o omega_b o S with omega a canonical family
    Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct Amalgamation {
    pub m: usize,
    pub eta: DiagMorphism,
    pub strategy: Strategy,
    pub delta: Q,
    pub matching: PathMatching,
    pub defects: Vec<Defect>,
    /// gamma mesh <= delta/3
    pub mesh_ok: bool,
    /// 2^{n-m} < delta
    pub depth_ok: bool,
    /// sampled ||W B Q - u_phi C||, the frame identity used for the defects
    pub frame_error: f64,
    /// an endpoint correction C was needed to keep eta in A_m
    pub corrected: bool,
}

impl Amalgamation {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().map(|d| d.upper).fold(0.0, f64::max)
    }
}

/// Bracket of sup ||f||, refining the grid until the bracket is within a
/// factor 4 (or below `floor`), the lower end passes `target`, or the
/// refinement cap is reached.
pub(crate) fn adaptive_sup(f: &Arc<Expr>, resolution: usize, target: f64) -> Defect {
    let floor = 1e-6 * target;
    let mut r = resolution.max(8);
    loop {
        let (lower, upper) = sup_norm(f, &Grid::for_exprs(r, &[f]));
        if upper <= (4.0 * lower).max(floor) || lower >= target || r >= 4096 {
            return Defect { lower, upper };
        }
        r *= 4;
    }
}

fn gamma_prime_paths(
    gamma: &DiagMorphism,
    sigma: &DiffuseMeasure,
    xi: &[PLPath],
    tau_m: &DiffuseMeasure,
    target: DDAlgebra,
    delta: &Q,
) -> Result<(Strategy, Vec<PLPath>)> {
    let z = &gamma.paths()[0];
    if gamma.multiplicity() == 1 && z.start().is_zero() && z.end().is_one() && z.is_strictly_increasing() {
        let zinv = z.inverse()?;
        return Ok((Strategy::Inversion, xi.iter().map(|x| PLPath::compose(&zinv, x)).collect()));
    }
    let src = gamma.target().pair();
    let mut mesh = delta / q(3, 1);
    let omega = loop {
        match canonical_path_family(src, target.pair(), &mesh) {
            Ok(f) => break f,
            Err(Error::InfeasibleMesh(_)) if mesh < one() => {
                mesh = (&mesh * q(2, 1)).min(one());
            }
            Err(e) => return Err(e),
        }
    };
    let w = q(1, omega.len() as i64);
    let parts = omega
        .iter()
        .map(|p| Ok((w.clone(), pushforward(p, &Measure::lebesgue())?)))
        .collect::<Result<Vec<_>>>()?;
    let lambda = mixture(&parts)?;
    let t = PLPath::compose(&sigma.cdf().inverse()?, lambda.cdf());
    let s = tau_m.cdf();
    Ok((Strategy::Transport, omega.iter().map(|o| PLPath::compose(&t, &PLPath::compose(o, s))).collect()))
}

/// Finds m > n and eta: B -> A_m with eta o gamma within 3 eps of phi_n^m on
/// `probes` (elements of stage n).
pub fn amalgamate(
    seq: &mut Sequence,
    n: usize,
    probes: &[Arc<Expr>],
    eps: f64,
    gamma: &DiagMorphism,
    sigma: &DiffuseMeasure,
    cfg: &EngineConfig,
) -> Result<Amalgamation> {
    if n == 0 || n > seq.len() || *gamma.source() != seq.alg(n) {
        return Err(Error::PreconditionViolation(format!("gamma does not start at stage {n}")));
    }
    if induced_measure(gamma, sigma)? != **seq.measure(n) {
        return Err(Error::PreconditionViolation("gamma is not trace-preserving".into()));
    }
    if !pointwise_ordered(gamma.paths()) {
        return Err(Error::PreconditionViolation("gamma paths are not ordered".into()));
    }
    let refs: Vec<&Expr> = probes.iter().map(|p| p.as_ref()).collect();
    let delta = modulus_delta(&refs, eps);
    let mesh_ok = gamma.mesh() <= &delta / q(3, 1);
    if cfg.enforce_mesh && !mesh_ok {
        return Err(Error::PreconditionViolation(format!("gamma mesh {} exceeds delta/3", gamma.mesh())));
    }
    let b = *gamma.target();
    let top = seq.measure(seq.len()).clone();
    let mut m = seq.extend_until_divisible(n, b.dim() as u64, &top)?;
    let depth = |m: usize| to_f64(&delta) * 2f64.powi((m - n) as i32) > 1.0;
    if cfg.enforce_mesh {
        while !depth(m) {
            if seq.len() >= 8 {
                return Err(Error::InfeasibleMesh("no stage deep enough for delta".into()));
            }
            seq.extend_until_divisible(seq.len(), b.dim() as u64, &top)?;
            m = seq.len();
        }
    }
    if induced_measure(gamma, sigma)? != **seq.measure(n) {
        return Err(Error::PreconditionViolation("extension re-anchored the stage traces".into()));
    }
    let phi = seq.composite(n, m)?;
    let tau_m = seq.measure(m).clone();
    let (strategy, gp) = gamma_prime_paths(gamma, sigma, phi.paths(), &tau_m, seq.alg(m), &delta)?;

    // composite family zeta_i o zeta'_b, block b of gamma' holding block i of gamma
    let mut comp = Vec::with_capacity(gp.len() * gamma.multiplicity());
    for zb in &gp {
        for zi in gamma.paths() {
            comp.push(PLPath::compose(zi, zb));
        }
    }
    let order = sorting_permutation(&comp);
    let sorted: Vec<PLPath> = order.iter().map(|&k| comp[k].clone()).collect();
    let matching = verify_path_matching(phi.paths(), &sorted, &delta, seq.measure(n), &tau_m)?;

    // eta o gamma = Ad(W B Qp) diag(f o zeta''), so W = u_phi Qp^* B^*
    let d = seq.alg(n).dim();
    let qp: Vec<usize> = (0..order.len() * d).map(|i| order[i / d] * d + i % d).collect();
    let mut qinv = vec![0; qp.len()];
    for (i, &j) in qp.iter().enumerate() {
        qinv[j] = i;
    }
    let bpath = UnitaryPath::pulled(gamma.conjugator().clone(), gp.clone());
    let back = UnitaryPath::permutation(qinv).then(&bpath.adjoint());
    let tol = MEMBERSHIP_TOL.max(cfg.tolerance);
    let mut eta = DiagMorphism::new(b, seq.alg(m), gp.clone(), Arc::new(phi.conjugator().then(&back)))?;
    let mut correction = None;
    if eta.image_residual() > tol {
        let v = boundary_unitary(&gp, b.pair(), seq.alg(m).pair())?;
        let t_path = v.then(&bpath).then(&UnitaryPath::permutation(qp.clone()));
        let lmax = sorted.iter().map(|z| z.lipschitz()).fold(one(), |a, l| a.max(l));
        let mut h = q(1, 8);
        while &h * q(4, 1) * &lmax > delta && h > q(1, 1 << 20) {
            h = h / q(2, 1);
        }
        if let Some(c) = endpoint_correction(phi.conjugator(), &t_path, &sorted, seq.alg(n).pair(), seq.alg(m).pair(), &h)? {
            let w = phi.conjugator().then(&c).then(&back);
            eta = DiagMorphism::new(b, seq.alg(m), gp, Arc::new(w))?;
            correction = Some(Arc::new(c));
        }
    }
    let r = eta.image_residual();
    if r > tol {
        return Err(Error::BoundaryViolation(r));
    }

    let frame_error = [zero(), q(1, 3), q(1, 2), q(5, 7), one()]
        .iter()
        .map(|x| {
            let lhs = &eta.conjugator().eval(x) * &bpath.eval(x);
            let lhs = lhs.mul_perm(&qp);
            let mut rhs = phi.conjugator().eval(x);
            if let Some(c) = &correction {
                rhs = &rhs * &c.eval(x);
            }
            (&lhs - &rhs).max_abs() * lhs.nrows() as f64
        })
        .fold(0.0, f64::max);
    let exact = correction.is_none() && sorted.as_slice() == phi.paths();
    let defects = probes
        .iter()
        .map(|f| {
            if exact {
                return Defect { lower: 0.0, upper: 2.0 * f.bound() * frame_error };
            }
            let diff = match &correction {
                None => Expr::block_diag(
                    sorted
                        .iter()
                        .zip(phi.paths())
                        .map(|(z, x)| Expr::sub(&Expr::pullback(f, z), &Expr::pullback(f, x)))
                        .collect(),
                ),
                Some(c) => {
                    let pulled = |ps: &[PLPath]| Expr::block_diag(ps.iter().map(|z| Expr::pullback(f, z)).collect());
                    Expr::sub(&Expr::conj(c, &pulled(&sorted)), &pulled(phi.paths()))
                }
            };
            let mut dft = adaptive_sup(&diff, cfg.resolution, 3.0 * eps);
            dft.upper += 2.0 * f.bound() * frame_error;
            dft
        })
        .collect();
    let depth_ok = depth(m);
    Ok(Amalgamation { m, eta, strategy, delta, matching, defects, mesh_ok, depth_ok, frame_error, corrected: correction.is_some() })
}

/// Single-path morphism A -> A along the transport zeta with
/// zeta_* sigma = tau, so that it carries sigma back to tau.
pub fn transport_morphism(alg: DDAlgebra, sigma: &DiffuseMeasure, tau: &DiffuseMeasure) -> Result<DiagMorphism> {
    let z = crate::trace::transport_path(sigma, tau)?;
    let u = crate::morphism::boundary_unitary(std::slice::from_ref(&z), alg.pair(), alg.pair())?;
    DiagMorphism::new(alg, alg, vec![z], Arc::new(u))
}

/// Dense spectral-norm distance of two evaluations; used by checkers that
/// avoid the frame identity.
pub(crate) fn dense_gap(a: &Expr, b: &Expr, x: &Q) -> f64 {
    let d: CMat = &a.eval(x) - &b.eval(x);
    d.spectral_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::generator_corpus;
    use crate::fraisse::sequence::build_jiang_su_sequence;
    use crate::numtheory::PrimePair;
    use num_traits::Signed;

    fn seq() -> Sequence {
        build_jiang_su_sequence(PrimePair::new(2, 3).unwrap(), 2, &DiffuseMeasure::lebesgue()).unwrap()
    }

    fn probes(seq: &Sequence, n: usize) -> Vec<Arc<Expr>> {
        generator_corpus(&seq.alg(n)).iter().map(|e| e.element.body().clone()).collect()
    }

    fn skewed() -> DiffuseMeasure {
        DiffuseMeasure::new(PLPath::new(vec![zero(), q(1, 2), one()], vec![zero(), q(1, 3), one()]).unwrap()).unwrap()
    }

    #[test]
    fn delta_examples() {
        let alg = DDAlgebra::new(PrimePair::new(2, 3).unwrap());
        let unit = alg.unit();
        assert_eq!(modulus_delta(&[unit.body()], 0.2), one());
        let t = Expr::poly(vec![(vec![0.0, 1.0], CMat::identity(6))]);
        assert_eq!(modulus_delta(&[&t], 0.2), q(1, 5));
        assert_eq!(modulus_delta(&[&t], 3.0), one());
    }

    #[test]
    fn matching_identical_and_shifted() {
        let fam = canonical_path_family(PrimePair::new(2, 3).unwrap(), PrimePair::new(16, 15).unwrap(), &q(1, 2)).unwrap();
        let leb = Measure::lebesgue();
        let w = q(1, fam.len() as i64);
        let parts: Vec<(Q, Measure)> = fam.iter().map(|p| (w.clone(), pushforward(p, &leb).unwrap())).collect();
        let tau = mixture(&parts).unwrap();
        let same = verify_path_matching(&fam, &fam, &q(1, 100), &tau, &leb).unwrap();
        assert!(same.ok && same.max_distance == zero() && same.both_trace_preserving);
        let shift = q(3, 10);
        let moved: Vec<PLPath> = fam
            .iter()
            .map(|p| PLPath::new(p.xs().to_vec(), p.ys().iter().map(|y| (y + &shift).min(one())).collect()).unwrap())
            .collect();
        let r = verify_path_matching(&fam, &moved, &q(1, 10), &tau, &leb).unwrap();
        assert!(!r.ok && !r.both_trace_preserving);
        // the witness pair really is that far apart at the reported point
        let gap = (&moved[r.index].eval(&r.point) - &fam[r.index].eval(&r.point)).abs();
        assert_eq!(gap, r.max_distance);
        assert!(r.max_distance >= q(1, 10));
        assert!(verify_path_matching(&fam, &fam[1..], &q(1, 2), &leb, &leb).is_err());
    }

    #[test]
    fn identity_gamma_costs_nothing() {
        let mut s = seq();
        let g = DiagMorphism::identity(s.alg(1));
        let ps = probes(&s, 1);
        let sigma = s.measure(1).clone();
        let am = amalgamate(&mut s, 1, &ps, 0.1, &g, &sigma, &EngineConfig::default()).unwrap();
        assert_eq!(am.m, 2);
        assert_eq!(am.strategy, Strategy::Inversion);
        assert!(am.matching.ok);
        // exact zero; the upper end is only the grid slack
        assert!(am.defects.iter().all(|d| d.lower < 1e-12));
        assert!(am.max_defect() <= 1.0 / 64.0, "{}", am.max_defect());
        assert!(am.eta.soundness(&Grid::uniform(8)).passes(1e-9, 1e-10));
    }

    #[test]
    fn transported_gamma_is_inverted() {
        let mut s = seq();
        let sigma = skewed();
        let g = transport_morphism(s.alg(1), &sigma, s.measure(1)).unwrap();
        let ps = probes(&s, 1);
        let am = amalgamate(&mut s, 1, &ps, 0.1, &g, &sigma, &EngineConfig::default()).unwrap();
        assert_eq!(am.strategy, Strategy::Inversion);
        assert!(am.max_defect() < 0.3, "{}", am.max_defect());
        assert_eq!(induced_measure(&am.eta, s.measure(2)).unwrap(), *sigma.measure());
    }

    #[test]
    fn rejects_gamma_that_moves_the_trace() {
        let mut s = seq();
        let g = DiagMorphism::identity(s.alg(1));
        let ps = probes(&s, 1);
        let r = amalgamate(&mut s, 1, &ps, 0.1, &g, &skewed(), &EngineConfig::default());
        assert!(matches!(r, Err(Error::PreconditionViolation(_))));
    }
}

//! One finite stage of the self-absorption argument: the half-flip
//! unitary u at stage m, the response η' to γ∘ι_1, the map
//! θ = (λ∘ι_2) ⊗ φ_m^k and the corrected embedding η = Ad_ũ∘ι_1∘η'.

use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::algebra::corpus_element;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fraisse::amalgam::amalgamate;
use crate::fraisse::certificate::{
    verify_certificate, CertSequences, Certificate, CertificateKind, DefectRow, MorphRef, ProbeRef, Round, Side,
    VerifyReport,
};
use crate::fraisse::sequence::Sequence;
use crate::linalg::{expi_hermitian, CMat};
use crate::matfn::sup_norm_auto;
use crate::morphism::DiagMorphism;
use crate::numtheory::PrimePair;
use crate::polar::PolarFactor;
use crate::tensor::element::{SquareNorm, TensorElement};
use crate::tensor::morphism::{ad, iota_apply, rho_iota, square_apply, Object, TMorphism};
use crate::unitary::{Factor, UnitaryPath};

#[derive(Debug, Clone)]
pub struct NearestUnitary {
    pub u: Arc<UnitaryPath>,
    /// bracket of sup ||u - b||
    pub lower: f64,
    pub upper: f64,
    /// max of the certified ||b^*b - 1|| and ||bb^* - 1||
    pub defect: f64,
}

/// Pointwise polar factor of an approximately unitary b. Since
/// |s - 1| <= |s^2 - 1| for every singular value s >= 0, the distance is
/// at most the unitarity defect.
pub fn nearest_unitary(b: &Arc<Expr>, eps: f64, resolution: usize) -> Result<NearestUnitary> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::PreconditionViolation(format!("epsilon {eps} must lie in (0,1)")));
    }
    let one = Expr::unit(b.dim());
    let bs = Expr::adjoint(b);
    let d1 = sup_norm_auto(&Expr::sub(&Expr::product(&bs, b), &one), resolution).1;
    let d2 = sup_norm_auto(&Expr::sub(&Expr::product(b, &bs), &one), resolution).1;
    let defect = d1.max(d2);
    if defect >= eps / 5.0 {
        return Err(Error::NotApproximatelyUnitary(defect));
    }
    let polar = PolarFactor::new(b.clone(), (1.0 - defect).sqrt());
    let u = Arc::new(UnitaryPath::from_factor(b.dim(), Factor::Polar(Arc::new(polar))));
    let (lower, sampled) = sup_norm_auto(&Expr::sub(&Expr::unitary(&u), b), resolution);
    Ok(NearestUnitary { u, lower, upper: sampled.min(defect), defect })
}

/// max over a in F of ||u (φ(a) ⊗ 1) u^* - 1 ⊗ φ(a)||.
pub fn half_flip_defect(u: &TensorElement, phi: &DiagMorphism, f: &[Arc<Expr>], resolution: usize) -> SquareNorm {
    let pair = phi.target().pair();
    let mut out = SquareNorm { lower: 0.0, upper: 0.0 };
    for a in f {
        let x = phi.apply_expr(a);
        let g = ad(u, &iota_apply(1, pair, &x)).sub(&iota_apply(2, pair, &x));
        let b = g.norm_bracket(resolution);
        out.lower = out.lower.max(b.lower);
        out.upper = out.upper.max(b.upper);
    }
    out
}

/// The half-flip unitary handed to a step, in a form that serializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HalfFlipParam {
    Identity,
    /// matrix-level exchange of the tensor factors
    Flip,
    Constant { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl HalfFlipParam {
    pub fn constant(m: &CMat) -> Self {
        let n = m.nrows();
        let re = (0..n).map(|i| (0..n).map(|j| m.get(i, j).re).collect()).collect();
        let im = (0..n).map(|i| (0..n).map(|j| m.get(i, j).im).collect()).collect();
        HalfFlipParam::Constant { re, im }
    }

    pub fn element(&self, pair: PrimePair) -> Result<TensorElement> {
        Ok(match self {
            HalfFlipParam::Identity => TensorElement::unit(pair),
            HalfFlipParam::Flip => TensorElement::flip(pair),
            HalfFlipParam::Constant { re, im } => {
                let n = pair.dim() * pair.dim();
                if re.len() != n || im.len() != n || re.iter().chain(im).any(|r| r.len() != n) {
                    return Err(Error::DimMismatch { expected: n, got: re.len() });
                }
                TensorElement::constant(pair, &CMat::from_fn(n, n, |i, j| C64::new(re[i][j], im[i][j])))
            }
        })
    }
}

/// θ(Σ c L ⊗ R) = Σ c λ(1 ⊗ L) ⊗ φ(R); the images λ(1 ⊗ L) are cached by
/// node so repeated factors stay shared.
pub struct Theta<'a> {
    lambda: &'a TMorphism,
    phi: Arc<DiagMorphism>,
    cache: Mutex<Vec<(Arc<Expr>, Arc<Expr>)>>,
}

impl<'a> Theta<'a> {
    pub fn new(lambda: &'a TMorphism, phi: Arc<DiagMorphism>) -> Result<Self> {
        if lambda.source() != Object::Square(phi.source().pair()) || lambda.target() != Object::Dd(phi.target().pair()) {
            return Err(Error::UnsupportedWord(format!(
                "θ needs λ from the square of {} to {}",
                phi.source().pair(),
                phi.target().pair()
            )));
        }
        Ok(Theta { lambda, phi, cache: Mutex::new(Vec::new()) })
    }

    pub fn lambda_right(&self, l: &Arc<Expr>) -> Result<Arc<Expr>> {
        if let Some((_, v)) = self.cache.lock().unwrap().iter().find(|(k, _)| Arc::ptr_eq(k, l)) {
            return Ok(v.clone());
        }
        let v = self.lambda.apply_sq(&iota_apply(2, self.phi.source().pair(), l))?.dd()?;
        self.cache.lock().unwrap().push((l.clone(), v.clone()));
        Ok(v)
    }

    pub fn apply(&self, u: &TensorElement) -> Result<TensorElement> {
        let mut terms = Vec::with_capacity(u.terms().len());
        for t in u.terms() {
            terms.push(crate::tensor::element::Term {
                coef: t.coef,
                left: self.lambda_right(&t.left)?,
                right: self.phi.apply_expr(&t.right),
            });
        }
        Ok(TensorElement::new(self.phi.target().pair(), terms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarDefect {
    pub x_form: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SsaStep {
    pub lambda: TMorphism,
    pub u_tilde: TensorElement,
    pub eta: TMorphism,
    pub eq1: SquareNorm,
    pub eq2: (f64, f64),
    pub eq3: SquareNorm,
    pub star: Vec<StarDefect>,
}

impl SsaStep {
    pub fn max_star(&self) -> f64 {
        self.star.iter().map(|s| s.value).fold(0.0, f64::max)
    }

    pub fn ext_json(&self, u_param: &HalfFlipParam) -> serde_json::Value {
        json!({
            "u_param": u_param,
            "eq1_defect": self.eq1.upper,
            "eq2_defect": self.eq2.1,
            "eq3_defect": self.eq3.upper,
            "star_defects": self.star.iter().map(|s| json!({"x_form": s.x_form, "value": s.value})).collect::<Vec<_>>(),
        })
    }
}

/// Stage data for one step: G ⊂ D_n, u ∈ D_m ⊗ D_m, η': B → D_k.
pub struct SsaInput<'a> {
    pub seq: &'a Sequence,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub gamma: &'a TMorphism,
    pub eta_prime: &'a Arc<DiagMorphism>,
    pub u: &'a TensorElement,
    pub g: &'a [(String, Arc<Expr>)],
    pub eps: f64,
    pub resolution: usize,
}

pub fn ssa_step(inp: &SsaInput) -> Result<SsaStep> {
    let SsaInput { seq, n, m, k, gamma, eta_prime, u, g, eps, resolution } = *inp;
    if !(n <= m && m < k && k <= seq.len()) {
        return Err(Error::PreconditionViolation(format!("stages must satisfy n <= m < k, got {n}, {m}, {k}")));
    }
    let (pm, pk) = (seq.pair(m), seq.pair(k));
    if gamma.source() != Object::Square(pm) {
        return Err(Error::PreconditionViolation(format!("γ must start at the square of {pm}")));
    }
    if gamma.target() != Object::Dd(eta_prime.source().pair()) || *eta_prime.target() != seq.alg(k) {
        return Err(Error::PreconditionViolation("η' does not continue γ into stage k".into()));
    }
    if u.pair() != pm {
        return Err(Error::PreconditionViolation("the half-flip unitary lives at another stage".into()));
    }
    let phi_nm = seq.composite(n, m)?;
    let phi_mk = seq.composite(m, k)?;
    let phi_nk = seq.composite(n, k)?;
    let elems: Vec<Arc<Expr>> = g.iter().map(|(_, a)| a.clone()).collect();

    let eq1 = half_flip_defect(u, &phi_nm, &elems, resolution);
    if eq1.upper >= eps / 2.0 {
        return Err(Error::PreconditionViolation(format!(
            "half-flip inequality fails: {:.3e} is not below ε/2 = {:.3e}",
            eq1.upper,
            eps / 2.0
        )));
    }
    let lambda = gamma.then(&TMorphism::z(eta_prime))?;
    let mut eq2 = (0.0f64, 0.0f64);
    for a in &elems {
        let lhs = lambda.apply_sq(&iota_apply(1, pm, &phi_nm.apply_expr(a)))?.dd()?;
        let (lo, hi) = sup_norm_auto(&Expr::sub(&lhs, &phi_nk.apply_expr(a)), resolution);
        eq2 = (eq2.0.max(lo), eq2.1.max(hi));
    }
    if eq2.1 >= eps / 2.0 {
        return Err(Error::PreconditionViolation(format!(
            "response inequality fails: {:.3e} is not below ε/2 = {:.3e}",
            eq2.1,
            eps / 2.0
        )));
    }

    let theta = Theta::new(&lambda, phi_mk.clone())?;
    let u_tilde = theta.apply(u)?;
    let mut eq3 = SquareNorm { lower: 0.0, upper: 0.0 };
    for a in &elems {
        let y = iota_apply(1, pk, &theta.lambda_right(&phi_nm.apply_expr(a))?);
        let d = ad(&u_tilde, &y).sub(&iota_apply(2, pk, &phi_nk.apply_expr(a)));
        let b = d.norm_bracket(resolution);
        eq3 = SquareNorm { lower: eq3.lower.max(b.lower), upper: eq3.upper.max(b.upper) };
    }

    // ι at stage k: η' lands in D_k
    let eta = TMorphism::z(eta_prime).then(&TMorphism::iota(1, pk)?)?.then(&TMorphism::ad(u_tilde.clone()))?;
    let full = gamma.then(&eta)?;
    let pn = seq.pair(n);
    let mut star = Vec::with_capacity(2 * g.len());
    for (name, a) in g {
        for (which, form) in [(1u8, format!("{name}⊗1")), (2u8, format!("1⊗{name}"))] {
            let x = iota_apply(which, pn, a);
            let lhs = full.apply_sq(&square_apply(&phi_nm, &x))?.sq()?;
            let d = lhs.sub(&square_apply(&phi_nk, &x));
            let b = d.norm_bracket(resolution);
            star.push(StarDefect { x_form: form, value: b.upper, lower: Some(b.lower) });
        }
    }
    Ok(SsaStep { lambda, u_tilde, eta, eq1, eq2, eq3, star })
}

/// Runs one step at desk scale: γ = ρ at stage m, η' the amalgamation
/// response to ρ∘ι_1 for the images of G, and the given half-flip unitary.
/// G is named by generator-corpus entries of stage n.
pub fn run_ssa_step(
    seq: &mut Sequence,
    n: usize,
    m: usize,
    eps: f64,
    param: &HalfFlipParam,
    names: &[String],
    cfg: &EngineConfig,
) -> Result<(SsaStep, Certificate)> {
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(Error::PreconditionViolation("epsilon must be positive".into()));
    }
    if n == 0 || n > m || m > seq.len() {
        return Err(Error::PreconditionViolation(format!("stages n = {n}, m = {m} out of range")));
    }
    let (pn, pm) = (seq.alg(n), seq.pair(m));
    let mut g = Vec::with_capacity(names.len());
    let mut probes = Vec::with_capacity(names.len());
    for name in names {
        let e = corpus_element(&pn, name)
            .ok_or_else(|| Error::PreconditionViolation(format!("no corpus element {name} at stage {n}")))?;
        g.push((name.clone(), e.body().clone()));
        let mut p = ProbeRef::corpus(Side::A, n, name);
        if n < m {
            p = p.then(MorphRef::Step { side: Side::A, from: n, to: m });
        }
        probes.push(p);
    }
    let phi_nm = seq.composite(n, m)?;
    let probe_exprs: Vec<Arc<Expr>> = g.iter().map(|(_, a)| phi_nm.apply_expr(a)).collect();
    let gamma = TMorphism::rho(pm);
    let gi = rho_iota(1, pm)?;
    let sigma = seq.measure(m).clone();
    let am = amalgamate(seq, m, &probe_exprs, eps / 6.0, &gi, &sigma, cfg)?;
    let eta_prime = Arc::new(am.eta.clone());
    let u = param.element(pm)?;
    let step = ssa_step(&SsaInput {
        seq,
        n,
        m,
        k: am.m,
        gamma: &gamma,
        eta_prime: &eta_prime,
        u: &u,
        g: &g,
        eps,
        resolution: cfg.resolution,
    })?;

    let budget = eps / 2.0;
    let mut cert = Certificate::empty(CertificateKind::SsaStep, eps);
    cert.budget = vec![budget];
    cert.budget_total = budget;
    cert.rounds.push(Round {
        round: 1,
        side: Side::A,
        from: m,
        at: 0,
        via: 0,
        to: am.m,
        input: gi,
        response: am.eta.clone(),
        defects: probes
            .iter()
            .zip(&am.defects)
            .map(|(p, d)| DefectRow { probe: p.clone(), lower: d.lower, upper: d.upper })
            .collect(),
        probes,
        defect: am.max_defect(),
        budget,
        delta: am.delta.clone(),
        strategy: am.strategy,
        path_matching: am.matching.clone(),
        mesh_ok: am.mesh_ok,
        depth_ok: am.depth_ok,
    });
    cert.sequences = Some(CertSequences { a: seq.to_json(), b: None });
    let mut ext = step.ext_json(param);
    ext["n"] = json!(n);
    ext["m"] = json!(m);
    ext["k"] = json!(am.m);
    cert.ssa = Some(ext);
    Ok((step, cert))
}

#[derive(Debug, Clone, Deserialize)]
struct SsaExt {
    u_param: HalfFlipParam,
    eq1_defect: f64,
    eq2_defect: f64,
    eq3_defect: f64,
    star_defects: Vec<StarDefect>,
    n: usize,
    m: usize,
}

/// Checks an ssa-step certificate: the amalgamation round as for any
/// certificate, every recorded inequality below ε/2, and the half-flip
/// inequality recomputed by dense evaluation on a grid of the square.
pub fn verify_ssa_certificate(cert: &Certificate, seq: &Sequence, intervals: usize) -> Result<VerifyReport> {
    if cert.kind != CertificateKind::SsaStep {
        return Err(Error::MalformedCertificate("not an ssa-step certificate".into()));
    }
    let raw = cert.ssa.clone().ok_or_else(|| Error::MalformedCertificate("missing ssa extension".into()))?;
    let ext: SsaExt = serde_json::from_value(raw).map_err(|e| Error::MalformedCertificate(e.to_string()))?;
    let mut rep = verify_certificate(cert, seq, None, intervals)?;
    let half = cert.epsilon / 2.0;
    let mut issues = Vec::new();
    for (label, v) in [("half-flip", ext.eq1_defect), ("response", ext.eq2_defect), ("propagated half-flip", ext.eq3_defect)] {
        if !(v < half) {
            issues.push(format!("{label} inequality recorded at {v:.3e}, not below ε/2"));
        }
    }
    for s in &ext.star_defects {
        if !(s.value < half) {
            issues.push(format!("defect for {} recorded at {:.3e}, not below ε/2", s.x_form, s.value));
        }
    }
    let round = cert.rounds.first().ok_or_else(|| Error::MalformedCertificate("no rounds".into()))?;
    if ext.m != round.from || ext.n == 0 || ext.n > ext.m || ext.m > seq.len() {
        return Err(Error::MalformedCertificate("ssa stages disagree with the round".into()));
    }
    let pm = seq.pair(ext.m);
    let u = ext.u_param.element(pm)?;
    let phi = seq.composite(ext.n, ext.m)?;
    let grid = crate::matfn::Grid::uniform(intervals.max(1));
    let mut recomputed = 0.0f64;
    for p in &round.probes {
        let a = crate::fraisse::certificate::Context { a: seq, b: None, rounds: &cert.rounds }.resolve(&ProbeRef {
            base: p.base.clone(),
            chain: Vec::new(),
        })?;
        let x = phi.apply_expr(&a);
        let d = ad(&u, &iota_apply(1, pm, &x)).sub(&iota_apply(2, pm, &x));
        for s in grid.nodes() {
            for t in grid.nodes() {
                recomputed = recomputed.max(d.eval(s, t).spectral_norm());
            }
        }
    }
    if recomputed > ext.eq1_defect + 1e-9 {
        issues.push(format!("half-flip recomputed at {recomputed:.3e} above the recorded {:.3e}", ext.eq1_defect));
    }
    rep.pass &= issues.is_empty();
    rep.structural.extend(issues);
    Ok(rep)
}

/// Random descent over constant unitaries exp(iH) on the square, starting
/// from the identity and the factor exchange. Returns the best candidate
/// only when its half-flip defect is below ε.
pub fn search_half_flip_unitary(
    phi: &DiagMorphism,
    f: &[Arc<Expr>],
    eps: f64,
    budget: usize,
    seed: u64,
    resolution: usize,
) -> Option<(HalfFlipParam, f64)> {
    let pair = phi.target().pair();
    if f.iter().all(|a| phi.apply_expr(a).as_scalar().is_some()) {
        return Some((HalfFlipParam::Identity, 0.0));
    }
    let score = |p: &HalfFlipParam| p.element(pair).map(|u| half_flip_defect(&u, phi, f, resolution).upper);
    let mut best: Option<(HalfFlipParam, f64, Option<CMat>)> = None;
    for p in [HalfFlipParam::Identity, HalfFlipParam::Flip] {
        if let Ok(s) = score(&p) {
            if best.as_ref().is_none_or(|b| s < b.1) {
                best = Some((p, s, None));
            }
        }
    }
    let n = pair.dim() * pair.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = CMat::zeros(n, n);
    let mut step = 0.5;
    for _ in 0..budget {
        if best.as_ref().is_some_and(|b| b.1 < eps) {
            break;
        }
        let v: Vec<C64> = (0..n * n).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let r = CMat::from_fn(n, n, |i, j| v[i * n + j]);
        let dir = (&r + &r.adjoint()).scale(C64::new(step / 2.0, 0.0));
        let cand = &h + &dir;
        let p = HalfFlipParam::constant(&expi_hermitian(&cand));
        match score(&p) {
            Ok(s) if best.as_ref().is_none_or(|b| s < b.1) => {
                h = cand.clone();
                best = Some((p, s, Some(cand)));
            }
            _ => step *= 0.9,
        }
    }
    best.filter(|b| b.1 < eps).map(|b| (b.0, b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{generator_corpus, DDAlgebra};
    use crate::fraisse::sequence::build_jiang_su_sequence;
    use crate::morphism::random_element;
    use crate::rational::q;
    use crate::tensor::morphism::{Gen, Rho};
    use crate::trace::DiffuseMeasure;

    fn desk() -> Sequence {
        build_jiang_su_sequence(PrimePair::new(1, 2).unwrap(), 2, &DiffuseMeasure::lebesgue()).unwrap()
    }

    fn hermitian_exp(alg: &DDAlgebra, seed: u64) -> Arc<Expr> {
        let r = random_element(alg, seed);
        let h = Expr::scale(C64::new(0.5, 0.0), &Expr::sum(vec![r.clone(), Expr::adjoint(&r)]));
        Expr::unitary(&Arc::new(UnitaryPath::from_factor(alg.dim(), Factor::ExpI(h))))
    }

    #[test]
    fn nearest_unitary_examples() {
        let alg = DDAlgebra::new(PrimePair::new(2, 3).unwrap());
        let u0 = hermitian_exp(&alg, 3);
        let r = nearest_unitary(&u0, 0.5, 1024).unwrap();
        assert!(r.lower < 1e-12);
        assert!(r.upper <= r.defect && r.upper < 0.1);

        let b = Expr::scalar(6, C64::new(1.01, 0.0));
        let r = nearest_unitary(&b, 0.5, 64).unwrap();
        assert!((r.lower - 0.01).abs() < 1e-12 && (r.upper - 0.01).abs() < 1e-12);
        assert!((&r.u.eval(&q(1, 2)) - &CMat::identity(6)).max_abs() < 1e-14);

        let far = Expr::scalar(6, C64::new(1.5, 0.0));
        assert!(matches!(nearest_unitary(&far, 0.5, 64), Err(Error::NotApproximatelyUnitary(_))));
        assert!(matches!(nearest_unitary(&b, 1.0, 64), Err(Error::PreconditionViolation(_))));
    }

    #[test]
    fn half_flip_examples() {
        let pair = PrimePair::new(2, 3).unwrap();
        let alg = DDAlgebra::new(pair);
        let id = DiagMorphism::identity(alg);
        let corpus = generator_corpus(&alg);
        let unit = corpus[0].element.body().clone();
        let t = corpus[1].element.body().clone();
        let w = TensorElement::constant(pair, &crate::linalg::expi_hermitian(&CMat::from_fn(36, 36, |i, j| {
            C64::new(((i * 7 + j * 3) % 5) as f64 + if i == j { 1.0 } else { 0.0 }, 0.0)
                + C64::new(((j * 7 + i * 3) % 5) as f64, 0.0)
        })));
        assert_eq!(half_flip_defect(&w, &id, &[unit], 32).upper, 0.0);

        let b = half_flip_defect(&TensorElement::unit(pair), &id, &[t], 64);
        assert_eq!(b.lower, 1.0);
        assert!(b.upper >= 1.0 && b.upper <= 1.0 + 1.0 / 32.0);

        // constant matrices are exchanged exactly by the flip
        let c = Expr::constant(CMat::from_fn(6, 6, |i, j| C64::new((i + 2 * j) as f64, (i as f64) - (j as f64))));
        let flip = TensorElement::flip(pair);
        assert!(half_flip_defect(&flip, &id, &[c.clone()], 8).upper <= 1e-9);
        assert!(half_flip_defect(&TensorElement::unit(pair), &id, &[c], 8).lower > 1.0);
    }

    #[test]
    fn search_examples() {
        let alg = DDAlgebra::new(PrimePair::new(1, 2).unwrap());
        let id = DiagMorphism::identity(alg);
        let corpus = generator_corpus(&alg);
        let unit = corpus[0].element.body().clone();
        let t = corpus[1].element.body().clone();
        assert_eq!(search_half_flip_unitary(&id, &[unit], 0.1, 0, 1, 32), Some((HalfFlipParam::Identity, 0.0)));
        assert_eq!(search_half_flip_unitary(&id, &[t], 1e-6, 3, 1, 16), None);
        let c = Expr::constant(CMat::from_fn(2, 2, |i, j| C64::new((1 + i + 3 * j) as f64, 0.0)));
        let (p, d) = search_half_flip_unitary(&id, &[c], 1e-9, 0, 1, 8).unwrap();
        assert_eq!(p, HalfFlipParam::Flip);
        assert!(d <= 1e-9);
    }

    #[test]
    fn flip_step_on_the_unit_and_its_certificate() {
        let mut seq = desk();
        let cfg = EngineConfig::default();
        let (step, cert) = run_ssa_step(&mut seq, 1, 1, 0.1, &HalfFlipParam::Flip, &["unit".to_string()], &cfg).unwrap();
        assert_eq!(step.star.len(), 2);
        assert!(step.max_star() == 0.0 && step.eq1.upper == 0.0 && step.eq2.1 == 0.0 && step.eq3.upper == 0.0);
        let back = Certificate::from_json(&cert.to_json().unwrap()).unwrap();
        let rep = verify_ssa_certificate(&back, &seq, 8).unwrap();
        assert!(rep.pass, "{rep:?}");

        let mut bad = back.clone();
        bad.ssa.as_mut().unwrap()["star_defects"][1]["value"] = json!(0.2);
        assert!(!verify_ssa_certificate(&bad, &seq, 8).unwrap().pass);
    }

    #[test]
    fn step_rejects_a_failing_half_flip() {
        let mut seq = desk();
        let cfg = EngineConfig::default();
        let err = run_ssa_step(&mut seq, 1, 1, 0.1, &HalfFlipParam::Identity, &["t".to_string()], &cfg).unwrap_err();
        match err {
            Error::PreconditionViolation(s) => assert!(s.contains("half-flip inequality"), "{s}"),
            e => panic!("{e}"),
        }
    }

    fn lambda_for(seq: &mut Sequence) -> (TMorphism, Arc<DiagMorphism>, usize) {
        let pm = seq.pair(1);
        let gi = rho_iota(1, pm).unwrap();
        let probes: Vec<Arc<Expr>> = generator_corpus(&seq.alg(1)).iter().map(|e| e.element.body().clone()).collect();
        let sigma = seq.measure(1).clone();
        let am = amalgamate(seq, 1, &probes, 0.05, &gi, &sigma, &EngineConfig::default()).unwrap();
        let eta = Arc::new(am.eta);
        let lambda = TMorphism::rho(pm).then(&TMorphism::z(&eta)).unwrap();
        (lambda, eta, am.m)
    }

    #[test]
    fn theta_of_any_elementary_unitary_commutes_with_the_first_leg() {
        let mut seq = desk();
        let (lambda, _, k) = lambda_for(&mut seq);
        let (am, pk) = (seq.alg(1), seq.pair(k));
        let theta = Theta::new(&lambda, seq.composite(1, k).unwrap()).unwrap();
        for s in 0..3u64 {
            let (v, w) = (hermitian_exp(&am, 10 + s), hermitian_exp(&am, 20 + s));
            let ut = theta.apply(&TensorElement::elementary(am.pair(), &v, &w)).unwrap();
            for c in generator_corpus(&am) {
                let lc = lambda.apply_sq(&iota_apply(1, am.pair(), c.element.body())).unwrap().dd().unwrap();
                let y = iota_apply(1, pk, &lc);
                let comm = ut.mul(&y).sub(&y.mul(&ut));
                assert!(comm.norm_bracket(32).upper <= 1e-9);
                // dense check of the left factors
                let lv = theta.lambda_right(&v).unwrap();
                for x in [0.0, 0.3, 0.77, 1.0] {
                    let (a, b) = (lv.eval_f64(x), lc.eval_f64(x));
                    assert!((&(&a * &b) - &(&b * &a)).max_abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn theta_does_not_increase_the_half_flip_defect() {
        let mut seq = desk();
        let (lambda, _, k) = lambda_for(&mut seq);
        let am = seq.alg(1);
        let theta = Theta::new(&lambda, seq.composite(1, k).unwrap()).unwrap();
        let t = generator_corpus(&am)[1].element.body().clone();
        let u = TensorElement::unit(am.pair());
        let eq1 = half_flip_defect(&u, &DiagMorphism::identity(am), &[t.clone()], 32);
        let ut = theta.apply(&u).unwrap();
        let pk = seq.pair(k);
        let y = iota_apply(1, pk, &theta.lambda_right(&t).unwrap());
        let eq3 = ad(&ut, &y).sub(&iota_apply(2, pk, &seq.composite(1, k).unwrap().apply_expr(&t))).norm_bracket(32);
        assert!(eq3.lower <= eq1.upper + 1e-9, "{eq3:?} vs {eq1:?}");
        assert!(matches!(lambda.word().last(), Some(Gen::Z(_))));
        let _ = Rho::new(am.pair());
    }
}

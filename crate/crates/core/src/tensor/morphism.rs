//! Words in the generators of the tensor-square category: diagonal
//! embeddings, inner automorphisms of a square, the factor embeddings,
//! squared embeddings and the diagonal restriction.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::algebra::{check_membership, generator_corpus, DDAlgebra, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::morphism::DiagMorphism;
use crate::numtheory::PrimePair;
use crate::tensor::element::TensorElement;
use crate::trace::{trace_bracket, Measure};
use crate::unitary::UnitaryPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Object {
    Dd(PrimePair),
    Square(PrimePair),
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Object::Dd(p) => write!(f, "Z{p}"),
            Object::Square(p) => write!(f, "Z{p}⊗Z{p}"),
        }
    }
}

/// Index shuffle taking (M_p ⊗ M_q) ⊗ (M_p ⊗ M_q) to (M_p ⊗ M_p) ⊗ (M_q ⊗ M_q).
pub fn shuffle_permutation(pair: PrimePair) -> Vec<usize> {
    let (p, q) = (pair.p() as usize, pair.q() as usize);
    let d = p * q;
    let mut s = vec![0; d * d];
    for i1 in 0..d {
        for i2 in 0..d {
            let (m1, n1) = (i1 / q, i1 % q);
            let (m2, n2) = (i2 / q, i2 % q);
            s[i1 * d + i2] = (m1 * p + m2) * q * q + (n1 * q + n2);
        }
    }
    s
}

/// The diagonal restriction g ↦ (t ↦ S g(t,t) S^T) into Z_{p²,q²}.
#[derive(Debug)]
pub struct Rho {
    pair: PrimePair,
    shuffle: Arc<UnitaryPath>,
}

impl Rho {
    pub fn new(pair: PrimePair) -> Self {
        Rho { pair, shuffle: Arc::new(UnitaryPath::permutation(shuffle_permutation(pair))) }
    }

    pub fn pair(&self) -> PrimePair {
        self.pair
    }

    pub fn target(&self) -> PrimePair {
        self.pair.squared()
    }

    pub fn apply(&self, g: &TensorElement) -> Arc<Expr> {
        let d = self.pair.dim();
        if g.is_zero() {
            return Expr::scalar(d * d, C64::new(0.0, 0.0));
        }
        let parts: Vec<Arc<Expr>> =
            g.terms().iter().map(|t| Expr::scale(t.coef, &Expr::kron(&t.left, &t.right))).collect();
        Expr::conj(&self.shuffle, &Expr::sum(parts))
    }
}

/// ρ∘ι_which written as a diagonal morphism with pq identity paths.
pub fn rho_iota(which: u8, pair: PrimePair) -> Result<DiagMorphism> {
    let s = shuffle_permutation(pair);
    let d = pair.dim();
    // 1 ⊗ f holds f in block a at offset c; f ⊗ 1 holds it at c·d + a
    let perm: Vec<usize> = match which {
        1 => (0..d * d).map(|i| s[(i % d) * d + i / d]).collect(),
        2 => s,
        _ => return Err(Error::UnsupportedWord(format!("no factor embedding ι_{which}"))),
    };
    DiagMorphism::new(
        DDAlgebra::new(pair),
        DDAlgebra::new(pair.squared()),
        vec![crate::pl::PLPath::identity(); d],
        Arc::new(UnitaryPath::permutation(perm)),
    )
}

#[derive(Debug, Clone)]
pub enum Gen {
    Z(Arc<DiagMorphism>),
    /// g ↦ w g w^* for a unitary w
    Ad(Arc<TensorElement>),
    Iota(u8, PrimePair),
    Square(Arc<DiagMorphism>),
    Rho(Arc<Rho>),
}

impl Gen {
    fn source(&self) -> Object {
        match self {
            Gen::Z(m) => Object::Dd(m.source().pair()),
            Gen::Ad(w) => Object::Square(w.pair()),
            Gen::Iota(_, p) => Object::Dd(*p),
            Gen::Square(m) => Object::Square(m.source().pair()),
            Gen::Rho(r) => Object::Square(r.pair()),
        }
    }

    fn target(&self) -> Object {
        match self {
            Gen::Z(m) => Object::Dd(m.target().pair()),
            Gen::Ad(w) => Object::Square(w.pair()),
            Gen::Iota(_, p) => Object::Square(*p),
            Gen::Square(m) => Object::Square(m.target().pair()),
            Gen::Rho(r) => Object::Dd(r.target()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Val {
    Dd(Arc<Expr>),
    Sq(TensorElement),
}

impl Val {
    pub fn dd(self) -> Result<Arc<Expr>> {
        match self {
            Val::Dd(e) => Ok(e),
            Val::Sq(_) => Err(Error::UnsupportedWord("expected a diagonal value, got a tensor".into())),
        }
    }

    pub fn sq(self) -> Result<TensorElement> {
        match self {
            Val::Sq(t) => Ok(t),
            Val::Dd(_) => Err(Error::UnsupportedWord("expected a tensor value, got a diagonal one".into())),
        }
    }
}

/// Conjugation by a unitary; multiples of the unit are fixed.
pub fn ad(w: &TensorElement, g: &TensorElement) -> TensorElement {
    if let [t] = g.terms() {
        if t.left.as_scalar().is_some() && t.right.as_scalar().is_some() {
            return g.clone();
        }
    }
    if g.is_zero() {
        return g.clone();
    }
    // w g = g w gives w g w^* = g w w^* = g
    if w.mul(g).sub(&g.mul(w)).is_zero() {
        return g.clone();
    }
    g.conjugate_by(w)
}

pub fn iota_apply(which: u8, pair: PrimePair, f: &Arc<Expr>) -> TensorElement {
    let one = Expr::unit(pair.dim());
    match which {
        1 => TensorElement::elementary(pair, f, &one),
        _ => TensorElement::elementary(pair, &one, f),
    }
}

pub fn square_apply(m: &DiagMorphism, g: &TensorElement) -> TensorElement {
    g.map_factors(m.target().pair(), |l| m.apply_expr(l), |r| m.apply_expr(r))
}

/// A type-checked word, applied left to right.
#[derive(Debug, Clone)]
pub struct TMorphism {
    source: Object,
    target: Object,
    word: Vec<Gen>,
}

impl TMorphism {
    pub fn generator(g: Gen) -> Result<Self> {
        if let Gen::Iota(w, _) = g {
            if w != 1 && w != 2 {
                return Err(Error::UnsupportedWord(format!("no factor embedding ι_{w}")));
            }
        }
        Ok(TMorphism { source: g.source(), target: g.target(), word: vec![g] })
    }

    pub fn identity(obj: Object) -> Self {
        TMorphism { source: obj, target: obj, word: Vec::new() }
    }

    pub fn z(m: &Arc<DiagMorphism>) -> Self {
        Self::generator(Gen::Z(m.clone())).expect("diagonal generator")
    }

    pub fn iota(which: u8, pair: PrimePair) -> Result<Self> {
        Self::generator(Gen::Iota(which, pair))
    }

    pub fn square(m: &Arc<DiagMorphism>) -> Self {
        Self::generator(Gen::Square(m.clone())).expect("square generator")
    }

    pub fn rho(pair: PrimePair) -> Self {
        Self::generator(Gen::Rho(Arc::new(Rho::new(pair)))).expect("rho generator")
    }

    pub fn ad(w: TensorElement) -> Self {
        Self::generator(Gen::Ad(Arc::new(w))).expect("ad generator")
    }

    pub fn source(&self) -> Object {
        self.source
    }

    pub fn target(&self) -> Object {
        self.target
    }

    pub fn word(&self) -> &[Gen] {
        &self.word
    }

    /// next ∘ self
    pub fn then(&self, next: &TMorphism) -> Result<TMorphism> {
        if self.target != next.source {
            return Err(Error::UnsupportedWord(format!("cannot follow {} by a map from {}", self.target, next.source)));
        }
        let mut word = self.word.clone();
        word.extend(next.word.iter().cloned());
        Ok(TMorphism { source: self.source, target: next.target, word })
    }

    pub fn apply(&self, v: Val) -> Result<Val> {
        let mut v = v;
        for g in &self.word {
            v = match g {
                Gen::Z(m) => Val::Dd(m.apply_expr(&v.dd()?)),
                Gen::Ad(w) => Val::Sq(ad(w, &v.sq()?)),
                Gen::Iota(which, pair) => Val::Sq(iota_apply(*which, *pair, &v.dd()?)),
                Gen::Square(m) => Val::Sq(square_apply(m, &v.sq()?)),
                Gen::Rho(r) => Val::Dd(r.apply(&v.sq()?)),
            };
        }
        Ok(v)
    }

    pub fn apply_dd(&self, f: &Arc<Expr>) -> Result<Val> {
        self.apply(Val::Dd(f.clone()))
    }

    pub fn apply_sq(&self, g: &TensorElement) -> Result<Val> {
        self.apply(Val::Sq(g.clone()))
    }

    /// Collapses a word without inner automorphisms into ι_i∘ψ (tensor
    /// target) or ψ (diagonal target), pushing squares through factor
    /// embeddings: (φ⊗φ)∘ι_i = ι_i∘φ.
    fn normal_form(&self) -> Result<(Option<u8>, DiagMorphism)> {
        let Object::Dd(p0) = self.source else {
            return Err(Error::UnsupportedWord("word starts at a tensor square".into()));
        };
        let mut acc = DiagMorphism::identity(DDAlgebra::new(p0));
        let mut side: Option<u8> = None;
        for g in &self.word {
            match (g, side) {
                (Gen::Z(m), None) => acc = m.compose(&acc)?,
                (Gen::Iota(w, _), None) => side = Some(*w),
                (Gen::Square(m), Some(_)) => acc = m.compose(&acc)?,
                (Gen::Rho(r), Some(w)) => {
                    acc = rho_iota(w, r.pair())?.compose(&acc)?;
                    side = None;
                }
                (Gen::Ad(_), _) => return Err(Error::UnsupportedWord("inner automorphisms do not collapse".into())),
                _ => unreachable!("word is type-checked"),
            }
        }
        Ok((side, acc))
    }

    /// The diagonal morphism equal to this word, when it starts and ends at
    /// dimension-drop algebras and has no inner automorphisms.
    pub fn to_diag(&self) -> Result<DiagMorphism> {
        match self.normal_form()? {
            (None, m) => Ok(m),
            (Some(_), _) => Err(Error::UnsupportedWord(format!("word ends at {}", self.target))),
        }
    }
}

/// Checks performed on a reduced embedding.
#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub unit_error: f64,
    pub membership: f64,
    /// largest gap between disjoint trace brackets; 0 when all overlap
    pub trace_gap: f64,
}

impl ReductionReport {
    pub fn passes(&self) -> bool {
        self.unit_error == 0.0 && self.membership <= MEMBERSHIP_TOL && self.trace_gap == 0.0
    }
}

/// Pushes a word from a dimension-drop algebra down to one: ρ∘m when m
/// lands in a tensor square, m itself otherwise. The result is checked to
/// be unital, to land in the target algebra and to carry `tau_src` to
/// `tau_tgt` on the generator corpus.
pub fn dominate_reduce(
    m: &TMorphism,
    tau_src: &Measure,
    tau_tgt: &Measure,
    resolution: usize,
) -> Result<(DiagMorphism, ReductionReport)> {
    let (side, acc) = m.normal_form()?;
    let red = match side {
        None => acc,
        Some(w) => rho_iota(w, acc.target().pair())?.compose(&acc)?,
    };
    let src = *red.source();
    let tgt = *red.target();
    let image = red.apply_expr(&Expr::unit(src.dim()));
    let unit_error = match image.as_scalar() {
        Some(c) => (c - C64::new(1.0, 0.0)).norm(),
        None => (&image.eval(&crate::rational::zero()) - &crate::linalg::CMat::identity(tgt.dim())).spectral_norm(),
    };
    let mut membership = 0.0f64;
    let mut trace_gap = 0.0f64;
    for e in generator_corpus(&src) {
        let f = e.element.body();
        let g = red.apply_expr(f);
        membership = membership.max(check_membership(&g, &tgt)?.1);
        let a = trace_bracket(tau_src, f, resolution);
        let b = trace_bracket(tau_tgt, &g, resolution);
        trace_gap = trace_gap.max(a.separation(&b));
    }
    Ok((red, ReductionReport { unit_error, membership, trace_gap }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraisse::sequence::build_jiang_su_sequence;
    use crate::linalg::CMat;
    use crate::rational::{q, Q};
    use crate::trace::DiffuseMeasure;

    fn p23() -> PrimePair {
        PrimePair::new(2, 3).unwrap()
    }

    fn corpus(pair: PrimePair) -> Vec<Arc<Expr>> {
        generator_corpus(&DDAlgebra::new(pair)).into_iter().map(|e| e.element.body().clone()).collect()
    }

    fn pts() -> Vec<Q> {
        vec![q(0, 1), q(1, 7), q(1, 2), q(5, 6), q(1, 1)]
    }

    #[test]
    fn iota_is_the_factor_embedding() {
        let pair = p23();
        let one = CMat::identity(6);
        let u = iota_apply(1, pair, &Expr::unit(6));
        assert_eq!(u.eval(&q(1, 3), &q(2, 3)).max_abs(), 1.0);
        assert!((&u.eval(&q(1, 3), &q(2, 3)) - &CMat::identity(36)).max_abs() == 0.0);
        for f in corpus(pair) {
            for x in pts() {
                for y in pts() {
                    let a = iota_apply(1, pair, &f).eval(&x, &y);
                    let b = iota_apply(2, pair, &f).eval(&x, &y);
                    assert!((&a - &f.eval(&x).kron(&one)).max_abs() < 1e-14);
                    assert!((&b - &one.kron(&f.eval(&y))).max_abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn iota_trace_matches_product_quadrature() {
        let pair = p23();
        let tau = DiffuseMeasure::lebesgue();
        let k = 40;
        for f in corpus(pair) {
            let g = iota_apply(2, pair, &f);
            let (lo, hi) = g.trace_bracket(tau.measure(), 64);
            // midpoint rule on the square against the one-variable rule
            let mut two = 0.0;
            let mut one = 0.0;
            for i in 0..k {
                let x = q(2 * i + 1, 2 * k);
                one += f.eval(&x).trace().re / 6.0 / k as f64;
                for j in 0..k {
                    let y = q(2 * j + 1, 2 * k);
                    two += g.eval(&x, &y).trace().re / 36.0 / (k * k) as f64;
                }
            }
            assert!((one - two).abs() < 1e-12);
            assert!(lo - 1e-3 <= two && two <= hi + 1e-3, "{lo} {two} {hi}");
            assert!(hi - lo <= 0.1);
        }
    }

    #[test]
    fn square_of_identity_is_identity() {
        let pair = p23();
        let id = DiagMorphism::identity(DDAlgebra::new(pair));
        let c = corpus(pair);
        let g = TensorElement::elementary(pair, &c[1], &c[5]);
        let h = square_apply(&id, &g);
        assert!(h.sub(&g).is_zero() || h.sub(&g).norm_bracket(32).upper < 1e-12);
    }

    #[test]
    fn squares_commute_with_factor_embeddings() {
        let seq = build_jiang_su_sequence(PrimePair::new(1, 2).unwrap(), 2, &DiffuseMeasure::lebesgue()).unwrap();
        let phi = seq.step(1).clone();
        let (src, tgt) = (seq.pair(1), seq.pair(2));
        for f in corpus(src) {
            for w in [1u8, 2] {
                let lhs = square_apply(&phi, &iota_apply(w, src, &f));
                let rhs = iota_apply(w, tgt, &phi.apply_expr(&f));
                assert!(lhs.sub(&rhs).norm_bracket(32).upper <= 1e-10);
                // dense evaluation of both sides
                for x in [q(0, 1), q(1, 3), q(1, 1)] {
                    let d = &lhs.eval(&x, &q(2, 5)) - &rhs.eval(&x, &q(2, 5));
                    assert!(d.max_abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn squares_are_multiplicative_on_elementary_products() {
        let seq = build_jiang_su_sequence(PrimePair::new(1, 2).unwrap(), 2, &DiffuseMeasure::lebesgue()).unwrap();
        let phi = seq.step(1).clone();
        let src = seq.pair(1);
        let c = corpus(src);
        let g = TensorElement::elementary(src, &c[1], &c[2]);
        let h = TensorElement::elementary(src, &c[3], &c[1]);
        let lhs = square_apply(&phi, &g.mul(&h));
        let (fg, fh) = (square_apply(&phi, &g), square_apply(&phi, &h));
        for (x, y) in [(q(1, 4), q(3, 4)), (q(2, 3), q(1, 9))] {
            let rhs = &fg.eval(&x, &y) * &fh.eval(&x, &y);
            assert!((&lhs.eval(&x, &y) - &rhs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn rho_is_unital_and_lands_in_the_squared_algebra() {
        let pair = p23();
        let rho = Rho::new(pair);
        assert_eq!(rho.apply(&TensorElement::unit(pair)).as_scalar(), Some(C64::new(1.0, 0.0)));
        let tgt = DDAlgebra::new(pair.squared());
        let c = corpus(pair);
        for f in &c {
            for g in &c {
                let r = rho.apply(&TensorElement::elementary(pair, f, g));
                let (ok, res) = check_membership(&r, &tgt).unwrap();
                assert!(ok, "residual {res}");
            }
        }
        // the shuffle really is needed: without it f(0) ⊗ g(0) is off the boundary
        let e = c.last().unwrap();
        let raw = Expr::kron(e, e);
        assert!(!check_membership(&raw, &tgt).unwrap().0);
    }

    #[test]
    fn rho_iota_matches_the_word_and_preserves_traces() {
        let pair = p23();
        let rho = Rho::new(pair);
        let tau = DiffuseMeasure::lebesgue();
        for w in [1u8, 2] {
            let m = rho_iota(w, pair).unwrap();
            for f in corpus(pair) {
                let a = m.apply_expr(&f);
                let b = rho.apply(&iota_apply(w, pair, &f));
                for x in pts() {
                    assert!((&a.eval(&x) - &b.eval(&x)).max_abs() < 1e-14);
                }
                let s = trace_bracket(tau.measure(), &f, 64);
                let t = trace_bracket(tau.measure(), &a, 64);
                assert_eq!(s.separation(&t), 0.0);
            }
        }
        assert!(rho_iota(3, pair).is_err());
    }

    #[test]
    fn dominate_reduce_cases() {
        let pair = p23();
        let tau = DiffuseMeasure::lebesgue();
        let (m, rep) = dominate_reduce(&TMorphism::iota(1, pair).unwrap(), tau.measure(), tau.measure(), 64).unwrap();
        assert_eq!(m.target().pair(), PrimePair::new(4, 9).unwrap());
        assert!(rep.passes(), "{rep:?}");

        let seq = build_jiang_su_sequence(PrimePair::new(1, 2).unwrap(), 2, &tau).unwrap();
        let phi = seq.step(1).clone();
        let (m, rep) = dominate_reduce(&TMorphism::z(&phi), seq.measure(1).measure(), seq.measure(2).measure(), 64).unwrap();
        assert_eq!(m.paths(), phi.paths());
        assert!(rep.passes());

        let word = TMorphism::iota(1, seq.pair(1)).unwrap().then(&TMorphism::square(&phi)).unwrap();
        let (m, rep) = dominate_reduce(&word, seq.measure(1).measure(), seq.measure(2).measure(), 64).unwrap();
        assert_eq!(m.target().pair(), seq.pair(2).squared());
        assert!(rep.passes(), "{rep:?}");
        let direct = TMorphism::rho(seq.pair(2));
        let w2 = word.then(&direct).unwrap();
        for f in corpus(seq.pair(1)) {
            let a = m.apply_expr(&f);
            let b = w2.apply_dd(&f).unwrap().dd().unwrap();
            assert!((&a.eval(&q(1, 3)) - &b.eval(&q(1, 3))).max_abs() < 1e-13);
        }

        let sq = TMorphism::square(&phi);
        assert!(matches!(dominate_reduce(&sq, tau.measure(), tau.measure(), 8), Err(Error::UnsupportedWord(_))));
        let adw = TMorphism::iota(1, pair).unwrap().then(&TMorphism::ad(TensorElement::unit(pair))).unwrap();
        assert!(matches!(dominate_reduce(&adw, tau.measure(), tau.measure(), 8), Err(Error::UnsupportedWord(_))));
    }

    #[test]
    fn words_are_type_checked() {
        let pair = p23();
        let iota = TMorphism::iota(1, pair).unwrap();
        assert!(iota.then(&iota).is_err());
        assert!(TMorphism::iota(0, pair).is_err());
        let back = iota.then(&TMorphism::rho(pair)).unwrap();
        assert_eq!(back.target(), Object::Dd(pair.squared()));
        assert!(back.apply_sq(&TensorElement::unit(pair)).is_err());
    }
}

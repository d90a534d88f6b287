//! Diagonalizable unital *-embeddings Z_{p,q} -> Z_{p',q'}:
//! f -> u (diag(f o xi_1, ..., f o xi_l)) u^*.

use std::sync::Arc;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{check_membership, generator_corpus, DDAlgebra, DDElement, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{CMat, C64};
use crate::matfn::{par_map, sampled_max, Grid};
use crate::numtheory::PrimePair;
use crate::pl::{pointwise_ordered, sorting_permutation, PLPath};
use crate::rational::{one, q, zero, Q};
use crate::unitary::{is_even, Rotation, UnitaryPath};

#[derive(Debug, Clone)]
pub struct DiagMorphism {
    source: DDAlgebra,
    target: DDAlgebra,
    paths: Vec<PLPath>,
    conjugator: Arc<UnitaryPath>,
}

/// Path indices grouped by their value at one endpoint, in order of first
/// appearance.
fn endpoint_groups(values: &[Q]) -> Vec<(Q, Vec<usize>)> {
    let mut groups: Vec<(Q, Vec<usize>)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match groups.iter_mut().find(|(w, _)| w == v) {
            Some((_, ix)) => ix.push(i),
            None => groups.push((v.clone(), vec![i])),
        }
    }
    groups
}

/// Index permutation regrouping diag(f(v_1), ..., f(v_l)) at one endpoint
/// into M_{p'} (x) 1_{q'} form (at_zero) or 1_{p'} (x) M_{q'} form.
fn endpoint_permutation(values: &[Q], src: PrimePair, tgt: PrimePair, at_zero: bool) -> Result<Vec<usize>> {
    let (p, q) = (src.p() as usize, src.q() as usize);
    let (pt, qt) = (tgt.p() as usize, tgt.q() as usize);
    let d = p * q;
    // multiplicity modulus: q' at 0, p' at 1
    let m = if at_zero { qt } else { pt };
    let mut perm = vec![0usize; values.len() * d];
    let mut base = 0usize;
    for (v, members) in endpoint_groups(values) {
        let g = members.len();
        let (copies_per_block, block_size, is_zero_v, is_one_v) =
            if v.is_zero() { (q, p, true, false) } else if v.is_one() { (p, q, false, true) } else { (1, d, false, false) };
        if (g * copies_per_block) % m != 0 {
            return Err(Error::IncompatibleEndpoints(format!(
                "group of {g} paths at value {v} does not fit multiplicity {m}"
            )));
        }
        for (b, &k) in members.iter().enumerate() {
            for mu in 0..p {
                for nu in 0..q {
                    let (t, local) = if is_zero_v {
                        (b * q + nu, mu)
                    } else if is_one_v {
                        (b * p + mu, nu)
                    } else {
                        (b, mu * q + nu)
                    };
                    let (mult, c) = (t % m, t / m);
                    let slot = base + c * block_size + local;
                    let target = if at_zero { slot * qt + mult } else { mult * qt + slot };
                    perm[k * d + mu * q + nu] = target;
                }
            }
        }
        base += (g * copies_per_block / m) * block_size;
    }
    Ok(perm)
}

/// Checks the endpoint multiplicity conditions without building anything.
pub fn endpoint_audit(paths: &[PLPath], src: PrimePair, tgt: PrimePair) -> Result<()> {
    let starts: Vec<Q> = paths.iter().map(|p| p.start().clone()).collect();
    let ends: Vec<Q> = paths.iter().map(|p| p.end().clone()).collect();
    endpoint_permutation(&starts, src, tgt, true)?;
    endpoint_permutation(&ends, src, tgt, false)?;
    Ok(())
}

/// Conjugator whose endpoint values are exact permutations making
/// Ad_w o diag(f o xi_i) land in Z_{p',q'}.
pub fn boundary_unitary(paths: &[PLPath], src: PrimePair, tgt: PrimePair) -> Result<UnitaryPath> {
    if paths.len() * src.dim() != tgt.dim() {
        return Err(Error::IncompatibleEndpoints(format!(
            "{} paths from {src} cannot fill {tgt}",
            paths.len()
        )));
    }
    let starts: Vec<Q> = paths.iter().map(|p| p.start().clone()).collect();
    let ends: Vec<Q> = paths.iter().map(|p| p.end().clone()).collect();
    let p0 = endpoint_permutation(&starts, src, tgt, true)?;
    let mut p1 = endpoint_permutation(&ends, src, tgt, false)?;
    let inv0 = invert(&p0);
    let rel: Vec<usize> = p1.iter().map(|&j| inv0[j]).collect();
    if !is_even(&rel) {
        // compose p1 with an odd symmetry of 1_{p'} (x) M_{q'}
        let (pt, qt) = (tgt.p() as usize, tgt.q() as usize);
        let swap: Box<dyn Fn(usize) -> usize> = if qt % 2 == 1 && pt >= 2 {
            Box::new(move |i| {
                let (a, b) = (i / qt, i % qt);
                let a = if a == 0 { 1 } else if a == 1 { 0 } else { a };
                a * qt + b
            })
        } else {
            Box::new(move |i| {
                let (a, b) = (i / qt, i % qt);
                let b = if b == 0 { 1 } else if b == 1 { 0 } else { b };
                a * qt + b
            })
        };
        p1 = p1.iter().map(|&j| swap(j)).collect();
    }
    if p0 == p1 {
        return Ok(UnitaryPath::permutation(p0));
    }
    Ok(UnitaryPath::rotation(Rotation::new(p0, p1)?))
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

/// Smallest r >= 1 with m | c*r and m | (l - r).
fn end_group_size(l: usize, c: usize, m: usize) -> Option<usize> {
    (1..=l).find(|&r| (c * r) % m == 0 && (l - r) % m == 0)
}

/// Difference-constraint solve: edges (i -> j, w) mean x_j - x_i <= w.
/// Returns shortest distances from `src`, or None on a negative cycle.
fn bellman_ford(n: usize, edges: &[(usize, usize, Q)], src: usize) -> Option<Vec<Q>> {
    let mut dist: Vec<Option<Q>> = vec![None; n];
    dist[src] = Some(zero());
    for round in 0..=n {
        let mut changed = false;
        for (i, j, w) in edges {
            if let Some(di) = dist[*i].clone() {
                let cand = di + w;
                if dist[*j].as_ref().is_none_or(|dj| cand < *dj) {
                    dist[*j] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            return dist.into_iter().collect();
        }
        if round == n {
            return None;
        }
    }
    None
}

/// Ordered affine path family of size p'q'/pq with image diameters <= mesh,
/// satisfying the endpoint multiplicity conditions.
pub fn canonical_path_family(src: PrimePair, tgt: PrimePair, mesh: &Q) -> Result<Vec<PLPath>> {
    if tgt.dim() % src.dim() != 0 {
        return Err(Error::InfeasibleMesh(format!("{} does not divide {}", src.dim(), tgt.dim())));
    }
    if *mesh <= zero() {
        return Err(Error::InfeasibleMesh("mesh must be positive".into()));
    }
    let l = tgt.dim() / src.dim();
    let (p, q_, pt, qt) = (src.p() as usize, src.q() as usize, tgt.p() as usize, tgt.q() as usize);
    let r0 = end_group_size(l, q_, qt)
        .ok_or_else(|| Error::InfeasibleMesh(format!("no zero-end group size for {src} -> {tgt}")))?;
    let r1 = end_group_size(l, p, pt)
        .ok_or_else(|| Error::InfeasibleMesh(format!("no one-end group size for {src} -> {tgt}")))?;
    let start_group = |i: usize| if i < r0 { 0 } else { 1 + (i - r0) / qt };
    let n_start = start_group(l - 1) + 1;
    let k1 = (l - r1) / pt;
    let end_group = |i: usize| if i >= l - r1 { k1 } else { i / pt };
    let n_end = k1 + 1;
    // variables: sigma_g = g, eps_h = n_start + h
    let n = n_start + n_end;
    let cells: Vec<(usize, usize)> = {
        let mut c: Vec<(usize, usize)> = (0..l).map(|i| (start_group(i), end_group(i))).collect();
        c.dedup();
        c
    };
    let mut eta = mesh / q(4 * (n as i64 + 1), 1);
    for _ in 0..24 {
        let mut edges: Vec<(usize, usize, Q)> = Vec::new();
        for g in 0..n_start - 1 {
            edges.push((g + 1, g, zero()));
        }
        for h in 0..n_end - 1 {
            edges.push((n_start + h + 1, n_start + h, zero()));
        }
        for &(g, h) in &cells {
            edges.push((g, n_start + h, mesh.clone()));
            edges.push((n_start + h, g, -eta.clone()));
        }
        edges.push((0, n - 1, one()));
        edges.push((n - 1, 0, -one()));
        let fwd = bellman_ford(n, &edges, 0);
        let rev_edges: Vec<(usize, usize, Q)> = edges.iter().map(|(i, j, w)| (*j, *i, w.clone())).collect();
        let bwd = bellman_ford(n, &rev_edges, 0);
        if let (Some(hi), Some(lo)) = (fwd, bwd) {
            // midpoint of the largest and smallest solutions
            let x: Vec<Q> = (0..n).map(|v| (&hi[v] - &lo[v]) / q(2, 1)).collect();
            let paths: Vec<PLPath> = (0..l)
                .map(|i| PLPath::affine(x[start_group(i)].clone(), x[n_start + end_group(i)].clone()))
                .collect::<Result<_>>()?;
            debug_assert!(pointwise_ordered(&paths));
            endpoint_audit(&paths, src, tgt)?;
            return Ok(paths);
        }
        eta /= q(2, 1);
    }
    Err(Error::InfeasibleMesh(format!("mesh {mesh} infeasible for {src} -> {tgt}")))
}

impl DiagMorphism {
    pub fn new(source: DDAlgebra, target: DDAlgebra, paths: Vec<PLPath>, conjugator: Arc<UnitaryPath>) -> Result<Self> {
        if paths.is_empty() || paths.len() * source.dim() != target.dim() {
            return Err(Error::ChainMismatch(format!(
                "{} paths from {} cannot fill {}",
                paths.len(),
                source.pair(),
                target.pair()
            )));
        }
        if conjugator.dim() != target.dim() {
            return Err(Error::DimMismatch { expected: target.dim(), got: conjugator.dim() });
        }
        Ok(DiagMorphism { source, target, paths, conjugator })
    }

    pub fn identity(alg: DDAlgebra) -> Self {
        DiagMorphism {
            source: alg,
            target: alg,
            paths: vec![PLPath::identity()],
            conjugator: Arc::new(UnitaryPath::identity(alg.dim())),
        }
    }

    pub fn source(&self) -> &DDAlgebra {
        &self.source
    }

    pub fn target(&self) -> &DDAlgebra {
        &self.target
    }

    pub fn paths(&self) -> &[PLPath] {
        &self.paths
    }

    pub fn conjugator(&self) -> &Arc<UnitaryPath> {
        &self.conjugator
    }

    pub fn multiplicity(&self) -> usize {
        self.paths.len()
    }

    pub fn mesh(&self) -> Q {
        self.paths.iter().map(|p| p.image_diameter()).max().unwrap_or_else(zero)
    }

    pub fn delta_expr(&self, f: &Arc<Expr>) -> Arc<Expr> {
        Expr::block_diag(self.paths.iter().map(|p| Expr::pullback(f, p)).collect())
    }

    /// diag(f o xi_1, ..., f o xi_l)
    pub fn delta(&self, f: &DDElement) -> Result<Arc<Expr>> {
        if f.algebra() != &self.source {
            return Err(Error::ParentMismatch);
        }
        Ok(self.delta_expr(f.body()))
    }

    pub fn apply_expr(&self, f: &Arc<Expr>) -> Arc<Expr> {
        Expr::conj(&self.conjugator, &self.delta_expr(f))
    }

    pub fn apply(&self, f: &DDElement) -> Result<DDElement> {
        if f.algebra() != &self.source {
            return Err(Error::ParentMismatch);
        }
        let body = self.apply_expr(f.body());
        let (pt, qt) = (self.target.p(), self.target.q());
        let m0 = body.eval(&zero());
        let m1 = body.eval(&one());
        let a = CMat::from_fn(pt, pt, |i, j| m0.get(i * qt, j * qt));
        let b = CMat::from_fn(qt, qt, |i, j| m1.get(i, j));
        DDElement::new(self.target, body, a, b)
    }

    /// self o first
    pub fn compose(&self, first: &DiagMorphism) -> Result<DiagMorphism> {
        if first.target != self.source {
            return Err(Error::ChainMismatch(format!(
                "first lands in {}, second starts at {}",
                first.target.pair(),
                self.source.pair()
            )));
        }
        let mut paths = Vec::with_capacity(self.paths.len() * first.paths.len());
        // block j of self holds block i of first: path xi_i o xi'_j
        for xj in &self.paths {
            for xi in &first.paths {
                paths.push(PLPath::compose(xi, xj));
            }
        }
        let d = first.source.dim();
        let order = sorting_permutation(&paths);
        let sorted: Vec<PLPath> = order.iter().map(|&k| paths[k].clone()).collect();
        // Q e_{(k, l)} = e_{(order[k], l)} moves sorted blocks back in place
        let qperm: Vec<usize> = (0..order.len() * d).map(|i| order[i / d] * d + i % d).collect();
        let pulled = UnitaryPath::pulled(first.conjugator.clone(), self.paths.clone());
        let conj = self.conjugator.then(&pulled).then(&UnitaryPath::permutation(qperm));
        DiagMorphism::new(first.source, self.target, sorted, Arc::new(conj))
    }

    /// Largest sampled ||u(x)^* u(x) - 1|| of the conjugator.
    pub fn unitarity_defect(&self, grid: &Grid) -> f64 {
        let n = self.target.dim();
        par_map(grid.nodes(), |x| {
            let u = self.conjugator.eval(x);
            (&(&u.adjoint() * &u) - &CMat::identity(n)).spectral_norm()
        })
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest endpoint membership residual over the source corpus and one
    /// random element with full endpoint blocks. The residual is linear in
    /// the element, so a random probe detects any failure almost surely.
    pub fn image_residual(&self) -> f64 {
        let mut probes: Vec<Arc<Expr>> =
            generator_corpus(&self.source).into_iter().map(|e| e.element.body().clone()).collect();
        probes.push(random_element(&self.source, 0x5eed));
        probes
            .iter()
            .map(|g| check_membership(&self.apply_expr(g), &self.target).map_or(f64::INFINITY, |r| r.1))
            .fold(0.0, f64::max)
    }

    /// Checks the structural invariants, including image containment.
    pub fn validate(&self) -> Result<()> {
        let r = self.image_residual();
        if r > MEMBERSHIP_TOL {
            return Err(Error::BoundaryViolation(r));
        }
        Ok(())
    }

    pub fn soundness(&self, grid: &Grid) -> SoundnessReport {
        let corpus = generator_corpus(&self.source);
        let c = C64::new(0.5, -0.25);
        let ud = self.unitarity_defect(grid);
        let mut rep = SoundnessReport {
            unitarity: ud,
            unit_exact: self.apply_expr(&Expr::unit(self.source.dim())).as_scalar() == Some(C64::new(1.0, 0.0)),
            ..Default::default()
        };
        let images: Vec<Arc<Expr>> = corpus.iter().map(|e| self.apply_expr(e.element.body())).collect();
        let bounds: Vec<f64> = images.iter().map(|e| e.bound()).collect();
        for (i, f) in corpus.iter().enumerate() {
            let (_, r) = check_membership(&images[i], &self.target).unwrap_or((false, f64::INFINITY));
            rep.membership = rep.membership.max(r);
            let fs = self.apply_expr(&Expr::adjoint(f.element.body()));
            let adj = Expr::sub(&fs, &Expr::adjoint(&images[i]));
            rep.adjoint = rep.adjoint.max(sampled_max(&adj, grid));
            for (j, g) in corpus.iter().enumerate() {
                let fg = self.apply_expr(&Expr::product(f.element.body(), g.element.body()));
                let prod = Expr::sub(&fg, &Expr::product(&images[i], &images[j]));
                let m = sampled_max(&prod, grid) + bounds[i] * bounds[j] * ud;
                rep.multiplicativity = rep.multiplicativity.max(m);
                let lin_in = Expr::sum(vec![f.element.body().clone(), Expr::scale(c, g.element.body())]);
                let lin = Expr::sub(&self.apply_expr(&lin_in), &Expr::sum(vec![images[i].clone(), Expr::scale(c, &images[j])]));
                rep.linearity = rep.linearity.max(sampled_max(&lin, grid));
            }
        }
        rep
    }

    pub fn to_json(&self) -> Result<MorphismJson> {
        Ok(MorphismJson {
            source: self.source.pair(),
            target: self.target.pair(),
            paths: self.paths.clone(),
            conjugator: (*self.conjugator).clone(),
        })
    }

    pub fn from_json(j: MorphismJson) -> Result<Self> {
        DiagMorphism::new(DDAlgebra::new(j.source), DDAlgebra::new(j.target), j.paths, Arc::new(j.conjugator))
    }
}

/// (1-x)(a (x) 1) + x(1 (x) b) + x(1-x)c with Gaussian a, b, c.
pub fn random_element(alg: &DDAlgebra, seed: u64) -> Arc<Expr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, q_, n) = (alg.p(), alg.q(), alg.dim());
    let mut gauss = |k: usize| {
        let v: Vec<C64> = (0..k * k).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        CMat::from_fn(k, k, |i, j| v[i * k + j])
    };
    let a = gauss(p).kron(&CMat::identity(q_));
    let b = CMat::identity(p).kron(&gauss(q_));
    let c = gauss(n);
    Expr::poly(vec![(vec![1.0, -1.0], a), (vec![0.0, 1.0], b), (vec![0.0, 1.0, -1.0], c)])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub linearity: f64,
    pub multiplicativity: f64,
    pub adjoint: f64,
    pub membership: f64,
    pub unitarity: f64,
    pub unit_exact: bool,
}

impl SoundnessReport {
    pub fn passes(&self, algebraic_tol: f64, membership_tol: f64) -> bool {
        self.unit_exact
            && self.linearity <= algebraic_tol
            && self.multiplicativity <= algebraic_tol
            && self.adjoint <= algebraic_tol
            && self.membership <= membership_tol
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorphismJson {
    pub source: PrimePair,
    pub target: PrimePair,
    pub paths: Vec<PLPath>,
    pub conjugator: UnitaryPath,
}

impl Serialize for DiagMorphism {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiagMorphism {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DiagMorphism::from_json(MorphismJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Canonical embedding with the given mesh.
pub fn build_embedding(src: &DDAlgebra, tgt: &DDAlgebra, mesh: &Q) -> Result<DiagMorphism> {
    let paths = canonical_path_family(src.pair(), tgt.pair(), mesh)?;
    let u = boundary_unitary(&paths, src.pair(), tgt.pair())?;
    DiagMorphism::new(*src, *tgt, paths, Arc::new(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::corpus_element;

    fn alg(p: u64, q_: u64) -> DDAlgebra {
        DDAlgebra::new(PrimePair::new(p, q_).unwrap())
    }

    /// u(x) diag(f(xi_i(x))) u(x)^* assembled densely.
    fn dense_apply(m: &DiagMorphism, f: &Expr, x: &Q) -> CMat {
        let blocks: Vec<CMat> = m.paths().iter().map(|p| f.eval(&p.eval(x))).collect();
        CMat::block_diag(&blocks).conj_by(&m.conjugator().eval(x))
    }

    #[test]
    fn family_2_3_to_16_15() {
        let fam = canonical_path_family(PrimePair::new(2, 3).unwrap(), PrimePair::new(16, 15).unwrap(), &q(1, 2)).unwrap();
        assert_eq!(fam.len(), 40);
        assert!(pointwise_ordered(&fam));
        assert!(fam.iter().all(|p| p.image_diameter() <= q(1, 2) && p.is_strictly_increasing()));
        assert_eq!(fam.iter().filter(|p| p.start().is_zero()).count() % 5, 0);
        assert_eq!(fam.iter().filter(|p| p.end().is_one()).count() % 8, 0);
    }

    #[test]
    fn too_fine_mesh_is_infeasible() {
        let r = canonical_path_family(PrimePair::new(1, 1).unwrap(), PrimePair::new(2, 3).unwrap(), &q(1, 100));
        assert!(matches!(r, Err(Error::InfeasibleMesh(_))));
    }

    #[test]
    fn misfit_group_rejected() {
        let paths = vec![PLPath::identity(); 6];
        let r = boundary_unitary(&paths[..2], PrimePair::new(2, 3).unwrap(), PrimePair::new(6, 1).unwrap());
        assert!(matches!(r, Err(Error::IncompatibleEndpoints(_))));
    }

    #[test]
    fn embedding_is_sound() {
        let (a, b) = (alg(2, 3), alg(16, 15));
        let m = build_embedding(&a, &b, &q(1, 2)).unwrap();
        let grid = Grid::uniform(16).with_points(m.paths().iter().flat_map(|p| p.xs().to_vec()));
        let rep = m.soundness(&grid);
        assert!(rep.passes(1e-9, 1e-10), "{rep:?}");
        m.validate().unwrap();
    }

    #[test]
    fn apply_matches_dense_assembly() {
        let (a, b) = (alg(2, 3), alg(4, 9));
        let m = build_embedding(&a, &b, &one()).unwrap();
        for name in ["t", "bump_0_5", "endpoint"] {
            let f = corpus_element(&a, name).unwrap();
            let img = m.apply(&f).unwrap();
            for k in 0..=12 {
                let x = q(k, 12);
                let diff = &img.body().eval(&x) - &dense_apply(&m, f.body(), &x);
                assert!(diff.max_abs() < 1e-12, "{name} at {x}");
            }
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let (a, b, c) = (alg(1, 1), alg(2, 3), alg(4, 9));
        let m1 = build_embedding(&a, &b, &one()).unwrap();
        let m2 = build_embedding(&b, &c, &one()).unwrap();
        let comp = m2.compose(&m1).unwrap();
        assert_eq!(comp.multiplicity(), 36);
        assert!(comp.paths().windows(2).all(|w| w[0].start() <= w[1].start()));
        assert!(comp.mesh() <= one());
        comp.validate().unwrap();
        let f = corpus_element(&a, "t").unwrap();
        let seq = m2.apply(&m1.apply(&f).unwrap()).unwrap();
        let direct = comp.apply(&f).unwrap();
        for k in 0..=20 {
            let x = q(k, 20);
            assert!((&seq.body().eval(&x) - &direct.body().eval(&x)).max_abs() < 1e-12);
        }
        assert!(m1.compose(&m2).is_err());
    }

    #[test]
    fn identity_composes_neutrally() {
        let (a, b) = (alg(2, 3), alg(4, 9));
        let m = build_embedding(&a, &b, &one()).unwrap();
        let c = DiagMorphism::identity(b).compose(&m).unwrap();
        assert_eq!(c.paths(), m.paths());
    }

    #[test]
    fn json_roundtrip() {
        let (a, b) = (alg(2, 3), alg(16, 15));
        let m = build_embedding(&a, &b, &q(1, 2)).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["source"], serde_json::json!([2, 3]));
        assert!(v["paths"][0]["x"][0].is_string());
        assert!(v["conjugator"]["segments"].is_array());
        let back: DiagMorphism = serde_json::from_str(&s).unwrap();
        assert_eq!(back.paths(), m.paths());
        let f = corpus_element(&a, "endpoint").unwrap();
        let x = q(3, 7);
        let d = &m.apply(&f).unwrap().body().eval(&x) - &back.apply(&f).unwrap().body().eval(&x);
        assert!(d.max_abs() < 1e-13);
    }
}

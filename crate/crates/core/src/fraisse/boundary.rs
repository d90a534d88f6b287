//! Endpoint correction for amalgamation responses.
//!
//! The frame identity W = u_phi Q^* B^* matches eta o gamma to phi_n^m but
//! need not normalize the boundary algebras of A_m. Near each endpoint we
//! insert a unitary C(x) from the commutant of diag(f o zeta''(endpoint)) so
//! that W(0) and W(1) become products of a valid conjugator with a unitary in
//! U(p') (x) U(q').

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::numtheory::PrimePair;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::pl::PLPath;
use crate::rational::{one, q, zero, Q};
use crate::unitary::{is_even, Rotation, UnitaryPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Label {
    /// 0: block at 0, 1: block at 1, k >= 2: the (k-2)-th interior value
    kind: usize,
    key: (usize, usize),
    index: usize,
}

/// Permutation represented by `m`, if it is one.
pub(crate) fn perm_of(m: &CMat) -> Option<Vec<usize>> {
    let n = m.ncols();
    let mut out = vec![0; n];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut hit = None;
        for i in 0..n {
            let z = m.get(i, j);
            if (z.re - 1.0).abs() < 1e-9 && z.im.abs() < 1e-9 {
                if hit.is_some() {
                    return None;
                }
                hit = Some(i);
            } else if z.norm() > 1e-9 {
                return None;
            }
        }
        *slot = hit?;
    }
    Some(out)
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &j) in perm.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

type Copies = Vec<(usize, Vec<usize>)>;

struct Side {
    at_one: bool,
    tgt: PrimePair,
    labels: Vec<Label>,
    /// copy size per kind
    sizes: Vec<usize>,
    /// copy keys per kind, numbered in order of appearance
    keys: Vec<BTreeMap<(usize, usize), usize>>,
}

impl Side {
    fn new(values: &[Q], src: PrimePair, tgt: PrimePair, at_one: bool) -> Self {
        let (p, qn) = (src.p() as usize, src.q() as usize);
        let d = p * qn;
        let mut interior: Vec<Q> = values.iter().filter(|v| !v.is_zero() && !v.is_one()).cloned().collect();
        interior.sort();
        interior.dedup();
        let mut sizes = vec![p, qn];
        sizes.extend(std::iter::repeat_n(d, interior.len()));
        let labels: Vec<Label> = (0..values.len() * d)
            .map(|i| {
                let (j, l) = (i / d, i % d);
                let (mu, nu) = (l / qn, l % qn);
                let v = &values[j];
                if v.is_zero() {
                    Label { kind: 0, key: (j, nu), index: mu }
                } else if v.is_one() {
                    Label { kind: 1, key: (j, mu), index: nu }
                } else {
                    let k = interior.binary_search(v).unwrap_or(0);
                    Label { kind: 2 + k, key: (j, 0), index: l }
                }
            })
            .collect();
        let mut keys = vec![BTreeMap::new(); sizes.len()];
        for l in &labels {
            let m: &mut BTreeMap<(usize, usize), usize> = &mut keys[l.kind];
            let next = m.len();
            m.entry(l.key).or_insert(next);
        }
        Side { at_one, tgt, labels, sizes, keys }
    }

    fn rep_dim(&self) -> usize {
        if self.at_one { self.tgt.q() as usize } else { self.tgt.p() as usize }
    }

    fn mult_dim(&self) -> usize {
        if self.at_one { self.tgt.p() as usize } else { self.tgt.q() as usize }
    }

    /// (rep coordinate, multiplicity coordinate) of a target index
    fn split(&self, idx: usize) -> (usize, usize) {
        let qt = self.tgt.q() as usize;
        if self.at_one { (idx % qt, idx / qt) } else { (idx / qt, idx % qt) }
    }

    fn join(&self, rep: usize, mult: usize) -> usize {
        let qt = self.tgt.q() as usize;
        if self.at_one { mult * qt + rep } else { rep * qt + mult }
    }

    /// Copies of the boundary representation induced by the permutation
    /// `t`, as (kind, members by index), ordered by kind then first member.
    fn copies(&self, t: &[usize]) -> Option<Copies> {
        let n = self.rep_dim();
        let mut slot: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        let mut first: BTreeMap<(usize, (usize, usize)), usize> = BTreeMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            let a = self.split(t[i]).0;
            match slot[a] {
                None => slot[a] = Some((l.kind, l.index)),
                Some(s) if s != (l.kind, l.index) => return None,
                _ => {}
            }
            let b = *first.entry((l.kind, l.key)).or_insert(a);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for a in 0..n {
            let r = find(&mut parent, a);
            groups.entry(r).or_default().push(a);
        }
        let mut out = Vec::new();
        for members in groups.values() {
            let (kind, _) = slot[members[0]]?;
            let size = self.sizes[kind];
            if members.len() != size {
                return None;
            }
            let mut by_index = vec![usize::MAX; size];
            for &a in members {
                let (k, idx) = slot[a]?;
                if k != kind || by_index[idx] != usize::MAX {
                    return None;
                }
                by_index[idx] = a;
            }
            out.push((kind, by_index));
        }
        out.sort_by_key(|(k, m)| (*k, m.iter().copied().min()));
        Some(out)
    }

    /// Position of each index when grouped by (kind, index) with copies
    /// contiguous inside a group.
    fn layout(&self) -> Vec<usize> {
        let mut base = vec![0; self.sizes.len()];
        for k in 1..self.sizes.len() {
            base[k] = base[k - 1] + self.sizes[k - 1] * self.keys[k - 1].len();
        }
        self.labels
            .iter()
            .map(|l| base[l.kind] + l.index * self.keys[l.kind].len() + self.keys[l.kind][&l.key])
            .collect()
    }
}

/// Commutant element C with u_phi(e) C = (r (x) s) T for an intertwiner r,
/// returned in the grouped layout as (layout, permuted C) with every copy
/// permutation even.
fn endpoint_element(side: &Side, p: &[usize], t: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
    let ct = side.copies(t)?;
    let cp = side.copies(p)?;
    let nk = side.sizes.len();
    let of_kind = |c: &Copies, k: usize| c.iter().filter(|x| x.0 == k).cloned().collect::<Copies>();
    let layout = side.layout();
    let pinv = invert(p);
    let swappable: Vec<usize> = (0..nk).filter(|&k| of_kind(&ct, k).len() >= 2).collect();
    let mult_swaps: &[bool] = if side.mult_dim() >= 2 { &[false, true] } else { &[false] };
    for mask in 0..(1usize << swappable.len().min(8)) {
        for &ms in mult_swaps {
            let mut r = vec![usize::MAX; side.rep_dim()];
            for k in 0..nk {
                let mut ck = of_kind(&ct, k);
                let pk = of_kind(&cp, k);
                if ck.len() != pk.len() {
                    return None;
                }
                if let Some(bit) = swappable.iter().position(|&s| s == k) {
                    if mask >> bit & 1 == 1 {
                        ck.swap(0, 1);
                    }
                }
                for ((_, mt), (_, mp)) in ck.iter().zip(&pk) {
                    for (a, b) in mt.iter().zip(mp) {
                        r[*a] = *b;
                    }
                }
            }
            let big: Vec<usize> = (0..t.len())
                .map(|idx| {
                    let (a, b) = side.split(idx);
                    let b = if ms && b < 2 { 1 - b } else { b };
                    side.join(r[a], b)
                })
                .collect();
            let c: Vec<usize> = t.iter().map(|&i| pinv[big[i]]).collect();
            if let Some(perm) = lifted(side, &layout, &c) {
                return Some((layout, perm));
            }
        }
    }
    None
}

/// `c` in the grouped layout when it commutes with the boundary algebra
/// and acts on copies by even permutations.
fn lifted(side: &Side, layout: &[usize], c: &[usize]) -> Option<Vec<usize>> {
    let mut sigma: Vec<Vec<usize>> = side.keys.iter().map(|k| vec![usize::MAX; k.len()]).collect();
    for (i, &j) in c.iter().enumerate() {
        let (a, b) = (side.labels[i], side.labels[j]);
        if a.kind != b.kind || a.index != b.index {
            return None;
        }
        let (ka, kb) = (side.keys[a.kind][&a.key], side.keys[b.kind][&b.key]);
        let s = &mut sigma[a.kind];
        if s[ka] != usize::MAX && s[ka] != kb {
            return None;
        }
        s[ka] = kb;
    }
    if !sigma.iter().all(|s| is_even(s)) {
        return None;
    }
    let mut out = vec![0; c.len()];
    for (i, &j) in c.iter().enumerate() {
        out[layout[i]] = layout[j];
    }
    Some(out)
}

/// Ramp 0 -> 1 on [a, b], constant outside.
fn ramp(a: &Q, b: &Q) -> Result<PLPath> {
    PLPath::new(vec![zero(), a.clone(), b.clone(), one()], vec![zero(), zero(), one(), one()])
}

/// Correction path C with W = u_phi C Q^* B^* boundary-compatible, or None
/// when the frame identity already is. `t_path` is V B Q for a valid
/// conjugator V of gamma'. The transition happens on [h, 2h] and
/// [1 - 2h, 1 - h].
pub(crate) fn endpoint_correction(
    u_phi: &UnitaryPath,
    t_path: &UnitaryPath,
    sorted: &[PLPath],
    src: PrimePair,
    tgt: PrimePair,
    h: &Q,
) -> Result<Option<UnitaryPath>> {
    let n = u_phi.dim();
    let mut factors: Vec<UnitaryPath> = Vec::new();
    for (x, at_one) in [(zero(), false), (one(), true)] {
        let bad = || Error::BoundaryViolation(f64::NAN);
        let p = perm_of(&u_phi.eval(&x)).ok_or_else(bad)?;
        let t = perm_of(&t_path.eval(&x)).ok_or_else(bad)?;
        let values: Vec<Q> = sorted.iter().map(|z| if at_one { z.end().clone() } else { z.start().clone() }).collect();
        let side = Side::new(&values, src, tgt, at_one);
        let (layout, c) = endpoint_element(&side, &p, &t).ok_or_else(bad)?;
        if c.iter().enumerate().all(|(i, &j)| i == j) {
            continue;
        }
        let id: Vec<usize> = (0..n).collect();
        let (rot, path) = if at_one {
            (Rotation::new(id, c)?, ramp(&(one() - h * q(2, 1)), &(one() - h))?)
        } else {
            (Rotation::new(c, id)?, ramp(h, &(h * q(2, 1)))?)
        };
        let inner = Arc::new(UnitaryPath::rotation(rot));
        let conj = UnitaryPath::permutation(invert(&layout))
            .then(&UnitaryPath::pulled(inner, vec![path]))
            .then(&UnitaryPath::permutation(layout));
        factors.push(conj);
    }
    Ok(factors.into_iter().reduce(|a, b| a.then(&b)))
}

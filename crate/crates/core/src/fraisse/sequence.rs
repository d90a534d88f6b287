//! Sequences Z_{p_1,q_1} -> Z_{p_2,q_2} -> ... with fine meshes,
//! divisibility m | p_m q_m and a coherent family of traces.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::algebra::DDAlgebra;
use crate::error::{Error, Result};
use crate::morphism::{build_embedding, DiagMorphism};
use crate::numtheory::{default_bound, select_expansion_factors, PrimePair};
use crate::pl::pointwise_ordered;
use crate::rational::{q, qstr, Q};
use crate::trace::{induced_measure, DiffuseMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub pair: PrimePair,
    pub measure: DiffuseMeasure,
}

impl Stage {
    pub fn alg(&self) -> DDAlgebra {
        DDAlgebra::new(self.pair)
    }
}

#[derive(Debug)]
pub struct Sequence {
    stages: Vec<Stage>,
    steps: Vec<Arc<DiagMorphism>>,
    mesh: Q,
    bound: Option<u64>,
    cache: Mutex<HashMap<(usize, usize), Arc<DiagMorphism>>>,
}

impl Clone for Sequence {
    fn clone(&self) -> Self {
        Sequence {
            stages: self.stages.clone(),
            steps: self.steps.clone(),
            mesh: self.mesh.clone(),
            bound: self.bound,
            cache: Mutex::new(self.cache.lock().unwrap().clone()),
        }
    }
}

/// Next stage pair: expansion factors with divisor `next_index`, further
/// multiplied so that `extra` divides the new p q.
fn next_pair(pair: PrimePair, next_index: usize, extra: u64, bound: Option<u64>) -> Result<PrimePair> {
    let missing = extra / extra.gcd(&(pair.dim() as u64));
    let divisor = (next_index as u64).lcm(&missing.max(1));
    let bound = bound.unwrap_or_else(|| default_bound(pair, divisor));
    let (k0, k1) = select_expansion_factors(pair, divisor, bound)?;
    PrimePair::new(pair.p() * k0, pair.q() * k1)
}

/// The stage measures induced from the top: tau_n = nu o phi_n^N.
pub fn coherent_trace_family(seq: &Sequence, top: &DiffuseMeasure) -> Result<Vec<DiffuseMeasure>> {
    let n_top = seq.len();
    (1..=n_top)
        .map(|n| {
            if n == n_top {
                return Ok(top.clone());
            }
            DiffuseMeasure::from_measure(induced_measure(&*seq.composite(n, n_top)?, top)?)
        })
        .collect()
}

/// Builds `stages` stages from `seed`, each step a canonical embedding of
/// mesh 1/2, with traces induced from `top`.
pub fn build_jiang_su_sequence(seed: PrimePair, stages: usize, top: &DiffuseMeasure) -> Result<Sequence> {
    Sequence::build(seed, stages, top, &q(1, 2), None)
}

impl Sequence {
    pub fn build(seed: PrimePair, stages: usize, top: &DiffuseMeasure, mesh: &Q, bound: Option<u64>) -> Result<Sequence> {
        if stages == 0 {
            return Err(Error::PreconditionViolation("a sequence needs at least one stage".into()));
        }
        let mut seq = Sequence {
            stages: vec![Stage { pair: seed, measure: top.clone() }],
            steps: Vec::new(),
            mesh: mesh.clone(),
            bound,
            cache: Mutex::new(HashMap::new()),
        };
        for _ in 1..stages {
            seq.push_stage(1)?;
        }
        seq.set_top_measure(top)?;
        Ok(seq)
    }

    fn push_stage(&mut self, extra: u64) -> Result<()> {
        let last = self.stages.last().unwrap().pair;
        let next = next_pair(last, self.stages.len() + 1, extra, self.bound)?;
        let step = build_embedding(&DDAlgebra::new(last), &DDAlgebra::new(next), &self.mesh)?;
        self.steps.push(Arc::new(step));
        let measure = self.stages.last().unwrap().measure.clone();
        self.stages.push(Stage { pair: next, measure });
        Ok(())
    }

    /// Re-anchors every stage trace at the given top measure.
    pub fn set_top_measure(&mut self, top: &DiffuseMeasure) -> Result<()> {
        let fam = coherent_trace_family(self, top)?;
        for (s, m) in self.stages.iter_mut().zip(fam) {
            s.measure = m;
        }
        Ok(())
    }

    /// Appends stages until some stage past `n` has p q divisible by
    /// `divisor`; the traces are re-anchored at `top`. Returns that stage.
    pub fn extend_until_divisible(&mut self, n: usize, divisor: u64, top: &DiffuseMeasure) -> Result<usize> {
        if let Some(m) = (n + 1..=self.len()).find(|&m| self.pair(m).dim() as u64 % divisor == 0) {
            return Ok(m);
        }
        self.push_stage(divisor)?;
        self.set_top_measure(top)?;
        Ok(self.len())
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn mesh(&self) -> &Q {
        &self.mesh
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.len() {
            return Err(Error::PreconditionViolation(format!("stage {n} outside 1..={}", self.len())));
        }
        Ok(())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn pair(&self, n: usize) -> PrimePair {
        self.stages[n - 1].pair
    }

    pub fn alg(&self, n: usize) -> DDAlgebra {
        self.stages[n - 1].alg()
    }

    pub fn measure(&self, n: usize) -> &DiffuseMeasure {
        &self.stages[n - 1].measure
    }

    /// phi_n^{n+1}
    pub fn step(&self, n: usize) -> &Arc<DiagMorphism> {
        &self.steps[n - 1]
    }

    /// (k0, k1) with (p_{n+1}, q_{n+1}) = (k0 p_n, k1 q_n).
    pub fn factors(&self, n: usize) -> (u64, u64) {
        let (a, b) = (self.pair(n), self.pair(n + 1));
        (b.p() / a.p(), b.q() / a.q())
    }

    /// phi_n^m, cached.
    pub fn composite(&self, n: usize, m: usize) -> Result<Arc<DiagMorphism>> {
        self.check_index(n)?;
        self.check_index(m)?;
        if n > m {
            return Err(Error::ChainMismatch(format!("no morphism from stage {n} back to stage {m}")));
        }
        if n == m {
            return Ok(Arc::new(DiagMorphism::identity(self.alg(n))));
        }
        if m == n + 1 {
            return Ok(self.steps[n - 1].clone());
        }
        if let Some(c) = self.cache.lock().unwrap().get(&(n, m)) {
            return Ok(c.clone());
        }
        let c = Arc::new(self.step(m - 1).compose(&*self.composite(n, m - 1)?)?);
        self.cache.lock().unwrap().insert((n, m), c.clone());
        Ok(c)
    }

    /// Exact audit of every composite and stage.
    pub fn audit(&self) -> Result<SequenceAudit> {
        let mut a = SequenceAudit { mesh_ok: true, ordered: true, divisibility_ok: true, coherent: true, meshes: Vec::new() };
        for m in 1..=self.len() {
            if self.pair(m).dim() % m != 0 {
                a.divisibility_ok = false;
            }
            for n in 1..m {
                let c = self.composite(n, m)?;
                let mesh = c.mesh();
                let bound = q(1, 1i64 << (m - n).min(62));
                if mesh > bound {
                    a.mesh_ok = false;
                }
                if !pointwise_ordered(c.paths()) {
                    a.ordered = false;
                }
                if induced_measure(&c, self.measure(m))? != **self.measure(n) {
                    a.coherent = false;
                }
                a.meshes.push(CompositeMesh { n, m, mesh, bound });
            }
        }
        Ok(a)
    }

    pub fn to_json(&self) -> SequenceJson {
        SequenceJson {
            mesh: self.mesh.clone(),
            stages: self.stages.clone(),
            steps: self.steps.iter().map(|s| (**s).clone()).collect(),
        }
    }

    pub fn from_json(j: SequenceJson) -> Result<Sequence> {
        if j.stages.is_empty() || j.steps.len() + 1 != j.stages.len() {
            return Err(Error::ChainMismatch("need one step between consecutive stages".into()));
        }
        for (k, s) in j.steps.iter().enumerate() {
            if s.source().pair() != j.stages[k].pair || s.target().pair() != j.stages[k + 1].pair {
                return Err(Error::ChainMismatch(format!("step {} does not join its stages", k + 1)));
            }
        }
        Ok(Sequence {
            stages: j.stages,
            steps: j.steps.into_iter().map(Arc::new).collect(),
            mesh: j.mesh,
            bound: None,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceJson {
    #[serde(with = "qstr")]
    pub mesh: Q,
    pub stages: Vec<Stage>,
    pub steps: Vec<DiagMorphism>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeMesh {
    pub n: usize,
    pub m: usize,
    #[serde(with = "qstr")]
    pub mesh: Q,
    #[serde(with = "qstr")]
    pub bound: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceAudit {
    /// every composite phi_n^m has mesh <= 2^{-(m-n)}
    pub mesh_ok: bool,
    /// every composite path family is pointwise ordered
    pub ordered: bool,
    /// m | p_m q_m at every stage
    pub divisibility_ok: bool,
    /// tau_n = tau_m o phi_n^m as CDFs
    pub coherent: bool,
    pub meshes: Vec<CompositeMesh>,
}

impl SequenceAudit {
    pub fn passes(&self) -> bool {
        self.mesh_ok && self.ordered && self.divisibility_ok && self.coherent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> PrimePair {
        PrimePair::new(2, 3).unwrap()
    }

    #[test]
    fn two_stage_build() {
        let seq = build_jiang_su_sequence(seed(), 2, &DiffuseMeasure::lebesgue()).unwrap();
        assert_eq!(seq.pair(2), PrimePair::new(16, 15).unwrap());
        assert_eq!(seq.factors(1), (8, 5));
        let audit = seq.audit().unwrap();
        assert!(audit.passes(), "{audit:?}");
        assert_eq!(audit.meshes[0].mesh, q(1, 2));
    }

    #[test]
    fn composite_of_one_step_is_the_step() {
        let seq = build_jiang_su_sequence(seed(), 2, &DiffuseMeasure::lebesgue()).unwrap();
        assert!(Arc::ptr_eq(&seq.composite(1, 2).unwrap(), seq.step(1)));
        assert!(seq.composite(2, 1).is_err());
        assert!(seq.composite(1, 3).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let seq = build_jiang_su_sequence(seed(), 2, &DiffuseMeasure::lebesgue()).unwrap();
        let s = serde_json::to_string(&seq.to_json()).unwrap();
        let back = Sequence::from_json(serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back.stages(), seq.stages());
        assert_eq!(back.step(1).paths(), seq.step(1).paths());
    }

    #[test]
    fn from_json_rejects_broken_chain() {
        let seq = build_jiang_su_sequence(seed(), 2, &DiffuseMeasure::lebesgue()).unwrap();
        let mut j = seq.to_json();
        j.steps.clear();
        assert!(matches!(Sequence::from_json(j), Err(Error::ChainMismatch(_))));
    }
}

//! Back-and-forth schedulers between two sequences, each round one
//! amalgamation with budget eps 2^{-r}.

use std::sync::Arc;

use crate::algebra::generator_corpus;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fraisse::amalgam::{amalgamate, transport_morphism, Amalgamation};
use crate::fraisse::certificate::{
    CertSequences, Certificate, CertificateKind, Context, DefectRow, MorphRef, ProbeRef, Round, Side, WeakIndices,
};
use crate::fraisse::sequence::Sequence;
use crate::morphism::DiagMorphism;
use crate::trace::DiffuseMeasure;

fn corpus_refs(seq: &Sequence, side: Side, stage: usize) -> Vec<ProbeRef> {
    generator_corpus(&seq.alg(stage)).iter().map(|e| ProbeRef::corpus(side, stage, &e.name)).collect()
}

fn push_unique(v: &mut Vec<ProbeRef>, p: ProbeRef) {
    if !v.contains(&p) {
        v.push(p);
    }
}

/// Seed morphism A_1 -> B_1 along the transport between the bottom traces.
pub fn initial_gamma(a: &Sequence, b: &Sequence) -> Result<DiagMorphism> {
    if a.pair(1) != b.pair(1) {
        return Err(Error::PreconditionViolation(format!(
            "sequences start at different algebras {} and {}",
            a.pair(1),
            b.pair(1)
        )));
    }
    transport_morphism(a.alg(1), b.measure(1), a.measure(1))
}

struct Step {
    side: Side,
    from: usize,
    at: usize,
    input: DiagMorphism,
    probes: Vec<ProbeRef>,
}

fn run_round(
    a: &mut Sequence,
    b: &mut Sequence,
    cert: &Certificate,
    st: &Step,
    eps: f64,
    cfg: &EngineConfig,
) -> Result<Amalgamation> {
    let exprs: Vec<Arc<Expr>> = {
        let ctx = Context { a, b: Some(b), rounds: &cert.rounds };
        st.probes.iter().map(|p| ctx.resolve(p)).collect::<Result<_>>()?
    };
    let (x, y) = match st.side {
        Side::A => (a, &*b),
        Side::B => (b, &*a),
    };
    let sigma: DiffuseMeasure = y.measure(st.at).clone();
    amalgamate(x, st.from, &exprs, eps / 3.0, &st.input, &sigma, cfg)
}

fn schedule(a: &mut Sequence, b: &mut Sequence, rounds: usize, eps: f64, cfg: &EngineConfig, kind: CertificateKind) -> Result<Certificate> {
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(Error::PreconditionViolation("epsilon must be positive".into()));
    }
    let mut cert = Certificate::empty(kind, eps);
    let mut st = Step { side: Side::A, from: 1, at: 1, input: initial_gamma(a, b)?, probes: corpus_refs(a, Side::A, 1) };
    let mut prev: Option<(Vec<ProbeRef>, usize)> = None;
    for r in 1..=rounds {
        let budget = eps * 0.5f64.powi(r as i32);
        // the weak schedule may pick a later stage here; desk-scale runs keep via = at
        let via = st.at;
        let am = run_round(a, b, &cert, &st, budget, cfg)?;
        let defect = am.max_defect();
        if defect > budget {
            return Err(Error::BudgetExceeded { round: r, defect, budget });
        }
        let defects = st
            .probes
            .iter()
            .zip(&am.defects)
            .map(|(p, d)| DefectRow { probe: p.clone(), lower: d.lower, upper: d.upper })
            .collect();
        cert.budget.push(budget);
        cert.budget_total += budget;
        cert.rounds.push(Round {
            round: r,
            side: st.side,
            from: st.from,
            at: st.at,
            via,
            to: am.m,
            input: st.input.clone(),
            response: am.eta.clone(),
            probes: st.probes.clone(),
            defects,
            defect,
            budget,
            delta: am.delta.clone(),
            strategy: am.strategy,
            path_matching: am.matching.clone(),
            mesh_ok: am.mesh_ok,
            depth_ok: am.depth_ok,
        });

        let y = st.side.other();
        let ys: &Sequence = match y {
            Side::A => a,
            Side::B => b,
        };
        let mut next = corpus_refs(ys, y, via);
        for p in &st.probes {
            let mut img = p.then(MorphRef::Input { round: r });
            if via != st.at {
                img = img.then(MorphRef::Step { side: y, from: st.at, to: via });
            }
            push_unique(&mut next, img);
        }
        if let Some((old, old_from)) = &prev {
            for p in old {
                push_unique(&mut next, p.then(MorphRef::Step { side: y, from: *old_from, to: via }));
            }
        }
        prev = Some((std::mem::take(&mut st.probes), st.from));
        st = Step { side: y, from: via, at: am.m, input: am.eta, probes: next };
    }
    if kind == CertificateKind::WeakIntertwining {
        let mut n_prev = 1;
        for (k, r) in cert.rounds.iter().enumerate() {
            if r.side == Side::A {
                cert.weak_indices.push(WeakIndices { n: n_prev, k: r.from, m: r.at, l: r.via });
            } else if k > 0 {
                n_prev = r.at;
            }
        }
    }
    cert.sequences = Some(CertSequences { a: a.to_json(), b: Some(b.to_json()) });
    Ok(cert)
}

/// Strong back-and-forth: round r amalgamates into A (r odd) or B (r even)
/// with defect at most eps 2^{-r}.
pub fn intertwine(a: &mut Sequence, b: &mut Sequence, rounds: usize, eps: f64, cfg: &EngineConfig) -> Result<Certificate> {
    schedule(a, b, rounds, eps, cfg, CertificateKind::Intertwining)
}

/// Weak back-and-forth. Canonical sequences already have the strong
/// amalgamation property, so each k_i is taken equal to n_i and each l_i
/// equal to m_i; the four indices are still recorded per pair.
pub fn weak_intertwine(a: &mut Sequence, b: &mut Sequence, rounds: usize, eps: f64, cfg: &EngineConfig) -> Result<Certificate> {
    schedule(a, b, rounds, eps, cfg, CertificateKind::WeakIntertwining)
}

/// One amalgamation packaged as a certificate over sequence A alone.
pub fn amalgamation_certificate(
    seq: &mut Sequence,
    n: usize,
    gamma: &DiagMorphism,
    sigma: &DiffuseMeasure,
    eps: f64,
    cfg: &EngineConfig,
) -> Result<(Certificate, Amalgamation)> {
    let probes = corpus_refs(seq, Side::A, n);
    let exprs: Vec<Arc<Expr>> = generator_corpus(&seq.alg(n)).iter().map(|e| e.element.body().clone()).collect();
    let am = amalgamate(seq, n, &exprs, eps, gamma, sigma, cfg)?;
    let mut cert = Certificate::empty(CertificateKind::Amalgamation, 3.0 * eps);
    let defect = am.max_defect();
    cert.budget = vec![3.0 * eps];
    cert.budget_total = 3.0 * eps;
    cert.rounds.push(Round {
        round: 1,
        side: Side::A,
        from: n,
        at: 0,
        via: 0,
        to: am.m,
        input: gamma.clone(),
        response: am.eta.clone(),
        defects: probes
            .iter()
            .zip(&am.defects)
            .map(|(p, d)| DefectRow { probe: p.clone(), lower: d.lower, upper: d.upper })
            .collect(),
        probes,
        defect,
        budget: 3.0 * eps,
        delta: am.delta.clone(),
        strategy: am.strategy,
        path_matching: am.matching.clone(),
        mesh_ok: am.mesh_ok,
        depth_ok: am.depth_ok,
    });
    cert.sequences = Some(CertSequences { a: seq.to_json(), b: None });
    Ok((cert, am))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraisse::certificate::verify_certificate;
    use crate::fraisse::sequence::build_jiang_su_sequence;
    use crate::numtheory::PrimePair;
    use crate::pl::PLPath;
    use crate::rational::q;

    fn pair() -> (Sequence, Sequence) {
        let seed = PrimePair::new(2, 3).unwrap();
        let a = build_jiang_su_sequence(seed, 2, &DiffuseMeasure::lebesgue()).unwrap();
        let top = DiffuseMeasure::new(PLPath::new(vec![q(0, 1), q(1, 2), q(1, 1)], vec![q(0, 1), q(9, 20), q(1, 1)]).unwrap()).unwrap();
        let b = build_jiang_su_sequence(seed, 2, &top).unwrap();
        (a, b)
    }

    #[test]
    fn two_rounds_verify_and_tamper_fails() {
        let (mut a, mut b) = pair();
        let cert = intertwine(&mut a, &mut b, 2, 1.0, &EngineConfig::default()).unwrap();
        assert_eq!(cert.rounds.len(), 2);
        for r in &cert.rounds {
            assert!(r.defect <= r.budget, "round {} {} > {}", r.round, r.defect, r.budget);
        }
        let rep = verify_certificate(&cert, &a, Some(&b), 8).unwrap();
        assert!(rep.pass, "{rep:?}");

        let json = cert.to_json().unwrap();
        let back = Certificate::from_json(&json).unwrap();
        assert!(verify_certificate(&back, &a, Some(&b), 8).unwrap().pass);

        let mut bad = back.clone();
        let r = &mut bad.rounds[1];
        let k = (0..r.defects.len()).max_by(|&i, &j| r.defects[i].lower.total_cmp(&r.defects[j].lower)).unwrap();
        r.defects[k].upper *= 0.1;
        r.defect = r.defects.iter().map(|d| d.upper).fold(0.0, f64::max);
        let rep = verify_certificate(&bad, &a, Some(&b), 8).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn weak_records_indices() {
        let (mut a, mut b) = pair();
        let cert = weak_intertwine(&mut a, &mut b, 2, 1.0, &EngineConfig::default()).unwrap();
        assert_eq!(cert.weak_indices, vec![WeakIndices { n: 1, k: 1, m: 1, l: 1 }]);
        assert!(verify_certificate(&cert, &a, Some(&b), 8).unwrap().pass);
    }

    #[test]
    fn mismatched_seeds_rejected() {
        let a = build_jiang_su_sequence(PrimePair::new(2, 3).unwrap(), 1, &DiffuseMeasure::lebesgue()).unwrap();
        let b = build_jiang_su_sequence(PrimePair::new(1, 2).unwrap(), 1, &DiffuseMeasure::lebesgue()).unwrap();
        assert!(matches!(initial_gamma(&a, &b), Err(Error::PreconditionViolation(_))));
    }
}

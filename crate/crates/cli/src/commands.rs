use std::fs;
use std::path::Path;

use ddf_core::config::EngineConfig;
use ddf_core::fraisse::amalgam::transport_morphism;
use ddf_core::fraisse::certificate::{Certificate, CertificateKind, VerifyReport};
use ddf_core::fraisse::intertwine::amalgamation_certificate;
use ddf_core::fraisse::{intertwine as run_intertwine, verify_certificate, weak_intertwine, Sequence};
use ddf_core::morphism::DiagMorphism;
use ddf_core::rational::{format_q, parse_q};
use ddf_core::tensor::{run_ssa_step, verify_ssa_certificate, HalfFlipParam};
use ddf_core::trace::DiffuseMeasure;
use ddf_core::{Error, PrimePair, Q};

use crate::{PairArgs, SeqSource};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn malformed(msg: impl Into<String>) -> Self {
        Failure { code: 4, message: msg.into() }
    }

    fn failed(msg: impl Into<String>) -> Self {
        Failure { code: 2, message: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InfeasibleMesh(_) | Error::SearchExhausted { .. } | Error::IncompatibleEndpoints(_) => 3,
            Error::BudgetExceeded { .. } | Error::BoundaryViolation(_) | Error::NotApproximatelyUnitary(_) => 2,
            Error::PreconditionViolation(s) if s.contains("inequality") => 2,
            _ => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

type Res = std::result::Result<(), Failure>;

fn read(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))
}

fn write(path: Option<&Path>, body: &str) -> Res {
    if let Some(p) = path {
        fs::write(p, body).map_err(|e| Failure::malformed(format!("{}: {e}", p.display())))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>) -> std::result::Result<EngineConfig, Failure> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(p) => Ok(EngineConfig::from_json(&read(p)?)?),
    }
}

fn mesh_or(cfg: &EngineConfig, mesh: Option<&str>) -> std::result::Result<Q, Failure> {
    match mesh {
        None => Ok(cfg.mesh.clone()),
        Some(s) => {
            let m = parse_q(s).ok_or_else(|| Failure::malformed(format!("mesh {s:?} is not a rational")))?;
            let mut c = cfg.clone();
            c.mesh = m.clone();
            c.validate()?;
            Ok(m)
        }
    }
}

fn pair(seed: &[u64]) -> std::result::Result<PrimePair, Failure> {
    Ok(PrimePair::new(seed[0], seed[1])?)
}

fn build_seq(seed: &[u64], stages: usize, mesh: &Q, top: &DiffuseMeasure, cfg: &EngineConfig) -> std::result::Result<Sequence, Failure> {
    Ok(Sequence::build(pair(seed)?, stages, top, mesh, cfg.search_bound)?)
}

fn load_seq(src: &SeqSource, cfg: &EngineConfig, default_seed: [u64; 2]) -> std::result::Result<Sequence, Failure> {
    if let Some(p) = &src.input {
        return Ok(Sequence::from_json(json(p)?)?);
    }
    let seed = src.seed.clone().unwrap_or(default_seed.to_vec());
    let mesh = mesh_or(cfg, src.mesh.as_deref())?;
    build_seq(&seed, src.stages.unwrap_or(2) as usize, &mesh, &DiffuseMeasure::lebesgue(), cfg)
}

fn pass(ok: bool) -> &'static str {
    if ok { "PASS" } else { "FAIL" }
}

pub fn build(seed: &[u64], stages: usize, mesh: Option<&str>, measure: Option<&Path>, out: Option<&Path>, cfg: &EngineConfig) -> Res {
    let mesh = mesh_or(cfg, mesh)?;
    let top = match measure {
        Some(p) => json::<DiffuseMeasure>(p)?,
        None => DiffuseMeasure::lebesgue(),
    };
    let seq = build_seq(seed, stages, &mesh, &top, cfg)?;
    for n in 1..=seq.len() {
        let pr = seq.pair(n);
        print!("stage {n}: ({}, {})", pr.p(), pr.q());
        if n < seq.len() {
            let (a, b) = seq.factors(n);
            print!("  factors ({a}, {b})");
        }
        println!();
    }
    let audit = seq.audit()?;
    for c in &audit.meshes {
        println!("  mesh of phi_{}^{}: {} <= {}", c.n, c.m, format_q(&c.mesh), format_q(&c.bound));
    }
    println!("composite mesh bound: {}", pass(audit.mesh_ok && audit.ordered));
    println!("stage divisibility: {}", pass(audit.divisibility_ok));
    println!("trace coherence: {}", pass(audit.coherent));
    println!("audit: {}", pass(audit.passes()));
    let body = serde_json::to_string_pretty(&seq.to_json()).map_err(|e| Failure::malformed(e.to_string()))?;
    write(out, &body)?;
    if audit.passes() { Ok(()) } else { Err(Failure::failed("sequence audit failed")) }
}

fn emit(cert: &Certificate, out: Option<&Path>) -> Res {
    write(out, &cert.to_json()?)
}

fn print_rounds(cert: &Certificate) {
    for r in &cert.rounds {
        println!(
            "round {} ({:?}): stage {} -> {}, defect {:.3e}, budget {:.3e}",
            r.round, r.side, r.from, r.to, r.defect, r.budget
        );
    }
}

fn within_budget(cert: &Certificate) -> Res {
    match cert.rounds.iter().find(|r| !(r.defect <= r.budget)) {
        Some(r) => Err(Failure::failed(format!("round {} defect {:.3e} exceeds {:.3e}", r.round, r.defect, r.budget))),
        None => Ok(()),
    }
}

pub fn amalgamate(
    src: &SeqSource,
    stage: usize,
    gamma: Option<&Path>,
    measure: Option<&Path>,
    eps: f64,
    out: Option<&Path>,
    cfg: &EngineConfig,
) -> Res {
    if !(eps > 0.0) {
        return Err(Failure::malformed("epsilon must be positive"));
    }
    let mut seq = load_seq(src, cfg, [2, 3])?;
    if stage == 0 || stage > seq.len() {
        return Err(Failure::malformed(format!("stage {stage} outside 1..={}", seq.len())));
    }
    let sigma = match measure {
        Some(p) => json::<DiffuseMeasure>(p)?,
        None => DiffuseMeasure::lebesgue(),
    };
    let gamma = match gamma {
        Some(p) => json::<DiagMorphism>(p)?,
        None => transport_morphism(seq.alg(stage), &sigma, seq.measure(stage))?,
    };
    let (cert, am) = amalgamation_certificate(&mut seq, stage, &gamma, &sigma, eps, cfg)?;
    println!("response lands in stage {} via {:?}", am.m, am.strategy);
    println!("path matching: {}", pass(am.matching.ok));
    print_rounds(&cert);
    emit(&cert, out)?;
    within_budget(&cert)
}

pub fn intertwine(p: &PairArgs, weak: bool, cfg: &EngineConfig) -> Res {
    if !(p.epsilon > 0.0) || p.rounds == 0 {
        return Err(Failure::malformed("need a positive epsilon and at least one round"));
    }
    let mesh = mesh_or(cfg, p.mesh.as_deref())?;
    let side = |file: &Option<std::path::PathBuf>, seed: &Option<Vec<u64>>, default: [u64; 2]| {
        let src = SeqSource { seed: seed.clone().or(Some(default.to_vec())), stages: Some(p.stages), mesh: Some(format_q(&mesh)), input: file.clone() };
        load_seq(&src, cfg, default)
    };
    let mut a = side(&p.a, &p.seed, [2, 3])?;
    let mut b = side(&p.b, &p.seed_b, [2, 3])?;
    let cert = if weak {
        weak_intertwine(&mut a, &mut b, p.rounds, p.epsilon, cfg)?
    } else {
        run_intertwine(&mut a, &mut b, p.rounds, p.epsilon, cfg)?
    };
    print_rounds(&cert);
    println!("total defect {:.3e} of {:.3e}", cert.total_defect(), cert.budget_total);
    emit(&cert, p.out.as_deref())?;
    within_budget(&cert)
}

pub fn ssa_step(
    src: &SeqSource,
    stage: usize,
    eps: f64,
    half_flip: &str,
    generators: &[String],
    out: Option<&Path>,
    cfg: &EngineConfig,
) -> Res {
    let param = match half_flip {
        "flip" => HalfFlipParam::Flip,
        "identity" => HalfFlipParam::Identity,
        other => return Err(Failure::malformed(format!("unknown half-flip unitary {other:?}"))),
    };
    let mut seq = load_seq(src, cfg, [1, 2])?;
    if stage == 0 || stage > seq.len() {
        return Err(Failure::malformed(format!("stage {stage} outside 1..={}", seq.len())));
    }
    let (step, cert) = run_ssa_step(&mut seq, stage, stage, eps, &param, generators, cfg)?;
    println!("half-flip defect {:.3e}", step.eq1.upper);
    println!("response defect {:.3e}", step.eq2.1);
    println!("propagated half-flip defect {:.3e}", step.eq3.upper);
    for s in &step.star {
        println!("  {}: {:.3e}", s.x_form, s.value);
    }
    emit(&cert, out)?;
    if step.max_star() < eps / 2.0 {
        Ok(())
    } else {
        Err(Failure::failed(format!("star defect {:.3e} not below {:.3e}", step.max_star(), eps / 2.0)))
    }
}

fn report(rep: &VerifyReport) {
    for s in &rep.structural {
        println!("structural: {s}");
    }
    for r in &rep.rounds {
        println!(
            "round {}: {} (recorded {:.3e}, recomputed >= {:.3e}, budget {:.3e})",
            r.round,
            pass(r.pass),
            r.recorded,
            r.recomputed_lower,
            r.budget
        );
        for i in &r.issues {
            println!("  {i}");
        }
    }
    println!("verify: {}", pass(rep.pass));
}

pub fn verify(path: &Path, cfg: &EngineConfig) -> Res {
    let cert = Certificate::from_json(&read(path)?)?;
    let seqs = cert.sequences.clone().ok_or_else(|| Failure::malformed("certificate carries no sequences"))?;
    let a = Sequence::from_json(seqs.a)?;
    let b = seqs.b.map(Sequence::from_json).transpose()?;
    let rep = if cert.kind == CertificateKind::SsaStep {
        verify_ssa_certificate(&cert, &a, cfg.resolution)?
    } else {
        verify_certificate(&cert, &a, b.as_ref(), cfg.resolution)?
    };
    report(&rep);
    if rep.pass { Ok(()) } else { Err(Failure::failed("certificate does not verify")) }
}

//! Machine-checkable records of scheduler runs, and their verifier.
//!
//! A round amalgamates into sequence X from stage `from`: the input maps
//! X_from into Y_at, an optional link walks Y from `at` to `via`, and the
//! response maps Y_via back into X_to. The recorded defects bound
//! ||response o link o input (g) - phi_from^to (g)|| over the round's probes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{corpus_element, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fraisse::amalgam::{dense_gap, PathMatching, Strategy};
use crate::fraisse::sequence::{Sequence, SequenceJson};
use crate::matfn::{par_map, Grid};
use crate::morphism::DiagMorphism;
use crate::rational::{qstr, Q};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Intertwining,
    WeakIntertwining,
    Amalgamation,
    SsaStep,
}

impl CertificateKind {
    /// Kinds holding one amalgamation over a single sequence.
    pub fn is_single_round(self) -> bool {
        matches!(self, CertificateKind::Amalgamation | CertificateKind::SsaStep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementRef {
    pub side: Side,
    pub stage: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MorphRef {
    /// the input morphism of a round (1-based)
    Input { round: usize },
    /// the response morphism of a round
    Response { round: usize },
    /// a composite of one of the sequences
    Step { side: Side, from: usize, to: usize },
}

/// A corpus element pushed through a chain of morphisms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProbeRef {
    pub base: ElementRef,
    pub chain: Vec<MorphRef>,
}

impl ProbeRef {
    pub fn corpus(side: Side, stage: usize, name: &str) -> Self {
        ProbeRef { base: ElementRef { side, stage, name: name.into() }, chain: Vec::new() }
    }

    pub fn then(&self, m: MorphRef) -> Self {
        let mut p = self.clone();
        p.chain.push(m);
        p
    }

    pub fn label(&self) -> String {
        let mut s = format!("{:?}{}:{}", self.base.side, self.base.stage, self.base.name);
        for m in &self.chain {
            match m {
                MorphRef::Input { round } => s = format!("in{round}({s})"),
                MorphRef::Response { round } => s = format!("resp{round}({s})"),
                MorphRef::Step { side, from, to } => s = format!("{side:?}{from}^{to}({s})"),
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub probe: ProbeRef,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub side: Side,
    pub from: usize,
    pub at: usize,
    pub via: usize,
    pub to: usize,
    pub input: DiagMorphism,
    pub response: DiagMorphism,
    pub probes: Vec<ProbeRef>,
    pub defects: Vec<DefectRow>,
    pub defect: f64,
    pub budget: f64,
    #[serde(with = "qstr")]
    pub delta: Q,
    pub strategy: Strategy,
    pub path_matching: PathMatching,
    pub mesh_ok: bool,
    pub depth_ok: bool,
}

/// Paper-style four indices of one back-and-forth pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakIndices {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertSequences {
    pub a: SequenceJson,
    pub b: Option<SequenceJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: u32,
    pub kind: CertificateKind,
    pub epsilon: f64,
    pub budget: Vec<f64>,
    pub budget_total: f64,
    pub rounds: Vec<Round>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weak_indices: Vec<WeakIndices>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<CertSequences>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssa: Option<serde_json::Value>,
}

impl Certificate {
    pub fn empty(kind: CertificateKind, epsilon: f64) -> Self {
        Certificate {
            schema: SCHEMA_VERSION,
            kind,
            epsilon,
            budget: Vec::new(),
            budget_total: 0.0,
            rounds: Vec::new(),
            weak_indices: Vec::new(),
            sequences: None,
            ssa: None,
        }
    }

    pub fn total_defect(&self) -> f64 {
        self.rounds.iter().map(|r| r.defect).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Certificate = serde_json::from_str(s).map_err(|e| Error::MalformedCertificate(e.to_string()))?;
        if c.schema != SCHEMA_VERSION {
            return Err(Error::MalformedCertificate(format!("unknown schema {}", c.schema)));
        }
        Ok(c)
    }
}

/// Where probe words are evaluated.
pub struct Context<'a> {
    pub a: &'a Sequence,
    pub b: Option<&'a Sequence>,
    pub rounds: &'a [Round],
}

impl Context<'_> {
    pub fn seq(&self, side: Side) -> Result<&Sequence> {
        match side {
            Side::A => Ok(self.a),
            Side::B => self.b.ok_or_else(|| Error::MalformedCertificate("no second sequence".into())),
        }
    }

    fn round(&self, r: usize) -> Result<&Round> {
        self.rounds
            .get(r.wrapping_sub(1))
            .ok_or_else(|| Error::MalformedCertificate(format!("reference to missing round {r}")))
    }

    pub fn morphism(&self, m: &MorphRef) -> Result<Arc<DiagMorphism>> {
        match m {
            MorphRef::Input { round } => Ok(Arc::new(self.round(*round)?.input.clone())),
            MorphRef::Response { round } => Ok(Arc::new(self.round(*round)?.response.clone())),
            MorphRef::Step { side, from, to } => self.seq(*side)?.composite(*from, *to),
        }
    }

    pub fn resolve(&self, p: &ProbeRef) -> Result<Arc<Expr>> {
        let seq = self.seq(p.base.side)?;
        if p.base.stage == 0 || p.base.stage > seq.len() {
            return Err(Error::MalformedCertificate(format!("probe stage {} out of range", p.base.stage)));
        }
        let e = corpus_element(&seq.alg(p.base.stage), &p.base.name)
            .ok_or_else(|| Error::MalformedCertificate(format!("unknown corpus element {}", p.base.name)))?;
        let mut f = e.body().clone();
        for m in &p.chain {
            let mm = self.morphism(m)?;
            if mm.source().dim() != f.dim() {
                return Err(Error::MalformedCertificate(format!("probe {} does not type-check", p.label())));
            }
            f = mm.apply_expr(&f);
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub pass: bool,
    pub recorded: f64,
    pub recomputed_lower: f64,
    pub budget: f64,
    pub issues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub rounds: Vec<RoundReport>,
    pub structural: Vec<String>,
}

fn structural_issues(cert: &Certificate) -> Vec<String> {
    let mut out = Vec::new();
    let sum: f64 = cert.budget.iter().sum();
    if cert.budget.len() != cert.rounds.len() {
        out.push("budget list does not match the rounds".into());
    }
    if sum > cert.epsilon || (sum - cert.budget_total).abs() > 1e-12 {
        out.push(format!("budget sum {sum} inconsistent with epsilon {}", cert.epsilon));
    }
    for (k, r) in cert.rounds.iter().enumerate() {
        if r.round != k + 1 {
            out.push(format!("round {} out of order", r.round));
        }
        if cert.budget.get(k).is_some_and(|b| (b - r.budget).abs() > 0.0) {
            out.push(format!("round {} budget differs from the budget list", r.round));
        }
        if r.via < r.at || r.to <= r.from {
            out.push(format!("round {} violates at <= via and from < to", r.round));
        }
        if cert.kind.is_single_round() {
            continue;
        }
        if let Some(next) = cert.rounds.get(k + 1) {
            if next.side != r.side.other() || next.from != r.via || next.at != r.to {
                out.push(format!("round {} does not continue round {}", next.round, r.round));
            }
            // images of this round's probes must be probed next round
            for p in &r.probes {
                let mut img = p.then(MorphRef::Input { round: r.round });
                if r.via != r.at {
                    img = img.then(MorphRef::Step { side: r.side.other(), from: r.at, to: r.via });
                }
                if !next.probes.contains(&img) {
                    out.push(format!("round {} misses the image {}", next.round, img.label()));
                }
            }
        }
        if let Some(next2) = cert.rounds.get(k + 2) {
            for p in &r.probes {
                let img = p.then(MorphRef::Step { side: r.side, from: r.from, to: next2.from });
                if !next2.probes.contains(&img) {
                    out.push(format!("round {} misses the image {}", next2.round, img.label()));
                }
            }
        }
    }
    out
}

/// Recomputes every defect by dense evaluation on a uniform grid with
/// `intervals` pieces, independently of the responder's frame shortcut.
pub fn verify_certificate(cert: &Certificate, a: &Sequence, b: Option<&Sequence>, intervals: usize) -> Result<VerifyReport> {
    if cert.schema != SCHEMA_VERSION {
        return Err(Error::MalformedCertificate(format!("unknown schema {}", cert.schema)));
    }
    let ctx = Context { a, b, rounds: &cert.rounds };
    let structural = structural_issues(cert);
    let grid = Grid::uniform(intervals.max(1));
    let mut reports = Vec::new();
    for r in &cert.rounds {
        let mut issues = Vec::new();
        let x = ctx.seq(r.side)?;
        if r.from == 0 || r.to > x.len() || r.from > r.to {
            return Err(Error::MalformedCertificate(format!("round {} stage indices out of range", r.round)));
        }
        if *r.input.source() != x.alg(r.from) || *r.response.target() != x.alg(r.to) {
            issues.push("morphisms do not join the recorded stages".into());
        }
        for (name, m) in [("input", &r.input), ("response", &r.response)] {
            let res = m.image_residual();
            if res > MEMBERSHIP_TOL {
                issues.push(format!("{name} leaves its target algebra (residual {res:.2e})"));
            }
        }
        let link = if r.via != r.at && !cert.kind.is_single_round() {
            Some(ctx.seq(r.side.other())?.composite(r.at, r.via)?)
        } else {
            None
        };
        let phi = x.composite(r.from, r.to)?;
        let mut worst = 0.0f64;
        if r.defects.len() != r.probes.len() {
            issues.push("defect table does not cover the probes".into());
        }
        for row in &r.defects {
            if !r.probes.contains(&row.probe) {
                issues.push(format!("defect row for unlisted probe {}", row.probe.label()));
            }
            let g = ctx.resolve(&row.probe)?;
            if g.dim() != r.input.source().dim() {
                return Err(Error::MalformedCertificate(format!("probe {} lives elsewhere", row.probe.label())));
            }
            let mut lhs = r.input.apply_expr(&g);
            if let Some(l) = &link {
                lhs = l.apply_expr(&lhs);
            }
            if lhs.dim() != r.response.source().dim() {
                return Err(Error::MalformedCertificate(format!("round {} chain does not compose", r.round)));
            }
            let lhs = r.response.apply_expr(&lhs);
            let rhs = phi.apply_expr(&g);
            let lower = par_map(grid.nodes(), |t| dense_gap(&lhs, &rhs, t)).into_iter().fold(0.0, f64::max);
            worst = worst.max(lower);
            if lower > row.upper + 1e-9 {
                issues.push(format!(
                    "probe {}: recomputed {lower:.3e} exceeds recorded bound {:.3e}",
                    row.probe.label(),
                    row.upper
                ));
            }
        }
        let rec = r.defects.iter().map(|d| d.upper).fold(0.0, f64::max);
        if (rec - r.defect).abs() > 0.0 {
            issues.push("round defect differs from its table".into());
        }
        if r.defect > r.budget {
            issues.push(format!("defect {:.3e} exceeds budget {:.3e}", r.defect, r.budget));
        }
        reports.push(RoundReport {
            round: r.round,
            pass: issues.is_empty(),
            recorded: r.defect,
            recomputed_lower: worst,
            budget: r.budget,
            issues,
        });
    }
    let pass = structural.is_empty() && reports.iter().all(|r| r.pass);
    Ok(VerifyReport { pass, rounds: reports, structural })
}

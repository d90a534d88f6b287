//! Jiang-Su style sequences, the amalgamation responder, and the
//! back-and-forth schedulers that emit certificates.

pub mod amalgam;
mod boundary;
pub mod certificate;
pub mod intertwine;
pub mod sequence;

pub use amalgam::{amalgamate, modulus_delta, verify_path_matching, Amalgamation, PathMatching};
pub use certificate::{verify_certificate, Certificate, CertificateKind, Round, VerifyReport};
pub use intertwine::{intertwine, weak_intertwine};
pub use sequence::{build_jiang_su_sequence, coherent_trace_family, Sequence, SequenceAudit, Stage};

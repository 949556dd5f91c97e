//! Independent checker for emitted artifacts.
//!
//! Works from the C text alone: matrices are re-read from their literals,
//! statements from the C expressions, and every triple is re-derived.

mod parser;
mod verify;

pub use parser::{parse_annotated_c, BodyItem, ParseError, ParsedArtifact, ParsedContract, ParsedTriple, Predicate};
pub use verify::{
    check_affine_triple, check_artifact, check_final_containment, check_final_containment_with_interval, check_sproc_triple,
    CheckOptions, Claim, ContainmentCheck, ContainmentReport, LmiReport, Overall, TripleOutcome, TripleReport, Verdict,
    VerificationReport,
};

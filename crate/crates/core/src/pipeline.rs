//! Spec → annotated C, with the generator-side report.

use serde::Serialize;
use thiserror::Error;

use crate::annotation::{annotate, AnnotationError};
use crate::checker::check_final_containment;
use crate::codegen::{emit_c, lower, EmittedC, LowerError};
use crate::linalg::{render_exact, render_f64, LinalgError, PsdStatus, PsdVerdict, RationalMatrix};
use crate::propagation::{propagate, PropagationError, Propagated, Rule};
use crate::spec_model::ControllerSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub propagated: Propagated,
    pub emitted: EmittedC,
    /// Declared contract ellipsoid minus the generated one, decided exactly.
    pub containment: PsdVerdict,
}

pub fn autocode(spec: &ControllerSpec) -> Result<Generated, PipelineError> {
    let program = lower(spec)?;
    let annotated = annotate(spec, program)?;
    let propagated = propagate(&annotated)?;
    let emitted = emit_c(&propagated.annotated);
    let contract = propagated.annotated.contract.as_ref().expect("annotate installs a contract");
    let declared = &propagated.annotated.fact(contract.post).matrix;
    let containment = check_final_containment(&propagated.generated.matrix, declared)?;
    Ok(Generated { propagated, emitted, containment })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordReport {
    pub rule: Rule,
    pub statement: usize,
    pub in_supports: Vec<Vec<String>>,
    pub out_support: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub multipliers: Vec<String>,
    /// Reciprocal multipliers as shortest round-trip floats.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reciprocals: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationReport {
    pub name: String,
    pub records: Vec<RecordReport>,
    pub generated_support: Vec<String>,
    pub generated_matrix: Vec<Vec<String>>,
    pub generated_matrix_f64: Vec<Vec<f64>>,
    pub containment: PsdStatus,
    pub containment_margin: Option<String>,
    /// Matrices whose entries needed `(num/den)` literals.
    pub fraction_literals: Vec<String>,
    pub tool_version: String,
}

fn rows(m: &RationalMatrix) -> Vec<Vec<String>> {
    (0..m.rows()).map(|i| m.row(i).iter().map(render_exact).collect()).collect()
}

impl Generated {
    pub fn report(&self) -> GenerationReport {
        let g = &self.propagated.generated;
        let f = g.matrix.to_f64();
        GenerationReport {
            name: self.propagated.annotated.program.name.clone(),
            records: self
                .propagated
                .records
                .iter()
                .map(|r| RecordReport {
                    rule: r.rule,
                    statement: r.at,
                    in_supports: r.in_supports.clone(),
                    out_support: r.out_support.clone(),
                    multipliers: r.multipliers.iter().map(render_exact).collect(),
                    reciprocals: r.multipliers.iter().map(|l| render_f64(&l.recip())).collect(),
                })
                .collect(),
            generated_support: g.support.clone(),
            generated_matrix: rows(&g.matrix),
            generated_matrix_f64: f.chunks(g.dim().max(1)).map(<[f64]>::to_vec).collect(),
            containment: self.containment.status,
            containment_margin: self.containment.margin.as_ref().map(render_exact),
            fraction_literals: self.emitted.fraction_literals.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

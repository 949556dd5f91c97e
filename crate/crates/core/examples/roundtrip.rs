//! Generate annotated C for a spec, re-parse it and check it independently.
//!
//! cargo run -p ellipsoid-autocode --example roundtrip -- fixtures/running_example_fig.json

use ellipsoid_autocode::checker::{check_artifact, parse_annotated_c, CheckOptions};
use ellipsoid_autocode::pipeline::autocode;
use ellipsoid_autocode::spec_model::load_spec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: roundtrip <spec.json>")?;
    let spec = load_spec(&path)?;
    let generated = autocode(&spec)?;
    println!("generator: final containment {:?}", generated.containment.status);

    let parsed = parse_annotated_c(&generated.emitted.text)?;
    let report = check_artifact(&parsed, CheckOptions::default());
    for t in &report.triples {
        println!("{:<16} {:?}  {}", t.label, t.verdict, t.detail);
    }
    println!("checker: {:?} ({})", report.overall, report.final_containment.detail);
    Ok(())
}

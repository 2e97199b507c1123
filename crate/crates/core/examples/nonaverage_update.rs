//! The non-average update lets each channel settle on a common value that
//! need not be the mean. Compare it with the averaging rule on one graph.

use shamir_consensus::graph::Graph;
use shamir_consensus::protocol::{SecurityDegree, UpdateRule};
use shamir_consensus::simnet::{run_experiment, ExperimentConfig};
use shamir_consensus::Result;

pub fn run_example() -> Result<Vec<(UpdateRule, f64, f64)>> {
    let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 2)])?;
    let p = SecurityDegree::uniform(4, 2)?;
    let x0 = [1.0, 2.0, 30.0, 4.0];
    let mut out = Vec::new();
    for rule in [UpdateRule::Average, UpdateRule::NonAverage] {
        let trace = run_experiment(&g, &p, &x0, &ExperimentConfig {
            rule,
            ..ExperimentConfig::with_seed(3)
        })?;
        let value = trace.consensus_value().unwrap_or(f64::NAN);
        println!(
            "{rule:?}: converged at {:?} to {value:.6}, mean {:.6}",
            trace.converged_at,
            trace.mean_x0()
        );
        out.push((rule, value, trace.mean_x0()));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

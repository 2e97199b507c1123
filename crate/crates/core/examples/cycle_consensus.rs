//! Privacy-preserving average consensus on a five-node ring with mixed
//! security degrees. Channel sums stay fixed while the states converge to
//! the mean.

use shamir_consensus::graph::Graph;
use shamir_consensus::protocol::SecurityDegree;
use shamir_consensus::shamir::KeySequence;
use shamir_consensus::simnet::{run_experiment, ExperimentConfig, KeySource, Trace};
use shamir_consensus::Result;

pub fn run_example() -> Result<Trace> {
    let g = Graph::cycle(5)?;
    let p = SecurityDegree::new(vec![2, 3, 4, 2, 3])?;
    let x0 = [12.0, 87.5, 43.25, 3.0, 61.0];
    let config = ExperimentConfig {
        key: KeySource::Fixed(KeySequence::new(vec![4, 7, 15, 3], 20)?),
        ..ExperimentConfig::with_seed(11)
    };
    let trace = run_experiment(&g, &p, &x0, &config)?;

    let first = &trace.rounds[0];
    let last = trace.last().expect("at least one round");
    for (k, (a, b)) in first.channel_sums.iter().zip(&last.channel_sums).enumerate() {
        println!("channel {}: sum {a:.9} -> {b:.9}", trace.key.elements()[k]);
    }
    println!(
        "converged at round {:?} to {:.9} (mean {:.9})",
        trace.converged_at,
        trace.consensus_value().unwrap_or(f64::NAN),
        trace.mean_x0()
    );
    Ok(trace)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

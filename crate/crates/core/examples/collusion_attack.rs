//! Colluding neighbours pool what they receive from a target. Below the
//! target's security degree they learn nothing; at the degree, with the
//! shares arriving on distinct channels, they recover its initial state.

use shamir_consensus::graph::Graph;
use shamir_consensus::protocol::{default_alpha, SecurityDegree};
use shamir_consensus::shamir::KeySequence;
use shamir_consensus::simnet::{
    run_experiment, seed_for_distinct_channels, AdversarySpec, AdversaryView, ExperimentConfig,
    KeySource,
};
use shamir_consensus::{Error, Result};

pub fn run_example() -> Result<(AdversaryView, AdversaryView, f64)> {
    // Node 0 sits at the centre of a star with three leaves.
    let g = Graph::new(4, [(0, 1), (0, 2), (0, 3)])?;
    let p = SecurityDegree::new(vec![3, 2, 2, 2])?;
    let key = KeySequence::default_key(3)?;
    let x0 = [42.0, 10.0, 20.0, 30.0];

    let weak = AdversarySpec::collusion([1], 0);
    let trace = run_experiment(&g, &p, &x0, &ExperimentConfig {
        key: KeySource::Fixed(key.clone()),
        ..ExperimentConfig::with_seed(5)
    })?;
    let weak_view = weak.run(&trace)?;
    println!(
        "one colluder: first determined round {:?}",
        weak_view.first_determined()
    );

    let edges = [(0, 1), (0, 2), (0, 3)];
    let seed = seed_for_distinct_channels(&g, &p, &x0, &key, default_alpha(&g), &edges, 0, 1000)?
        .ok_or_else(|| Error::InvalidSpec("no seed found".into()))?;
    let trace = run_experiment(&g, &p, &x0, &ExperimentConfig {
        key: KeySource::Fixed(key),
        ..ExperimentConfig::with_seed(seed)
    })?;
    let strong_view = AdversarySpec::collusion([1, 2, 3], 0).run(&trace)?;
    println!(
        "three colluders (seed {seed}): first determined round {:?}",
        strong_view.first_determined()
    );
    Ok((weak_view, strong_view, x0[0]))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

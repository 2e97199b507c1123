//! An eavesdropper taps links around a target. Without the key sequence it
//! cannot tell which channel a buffer belongs to; with the key and enough
//! tapped links it can interpolate.

use shamir_consensus::graph::Graph;
use shamir_consensus::protocol::{default_alpha, SecurityDegree};
use shamir_consensus::shamir::KeySequence;
use shamir_consensus::simnet::{
    run_experiment, seed_for_distinct_channels, AdversarySpec, ExperimentConfig, KeySource,
};
use shamir_consensus::{Error, Result};

pub fn run_example() -> Result<Vec<(bool, usize, Option<usize>)>> {
    let g = Graph::cycle(5)?;
    let p = SecurityDegree::uniform(5, 2)?;
    let key = KeySequence::new(vec![4, 7], 20)?;
    let x0 = [5.0, 15.0, 25.0, 35.0, 45.0];
    let edges = [(0, 1), (0, 4)];
    let seed = seed_for_distinct_channels(&g, &p, &x0, &key, default_alpha(&g), &edges, 0, 1000)?
        .ok_or_else(|| Error::InvalidSpec("no seed found".into()))?;
    let trace = run_experiment(&g, &p, &x0, &ExperimentConfig {
        key: KeySource::Fixed(key),
        ..ExperimentConfig::with_seed(seed)
    })?;

    let mut out = Vec::new();
    for knows_key in [false, true] {
        for tapped in [&edges[..1], &edges[..]] {
            let view = AdversarySpec::eavesdrop(tapped.iter().copied(), 0, knows_key).run(&trace)?;
            println!(
                "knows key {knows_key:<5} tapped {} links: first determined round {:?}",
                tapped.len(),
                view.first_determined()
            );
            out.push((knows_key, tapped.len(), view.first_determined()));
        }
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

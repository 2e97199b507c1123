//! Metropolis weights for a few graphs, their second-largest singular value
//! and the number of consensus rounds a key-distribution block needs.

use shamir_consensus::graph::{metropolis_gap_bound, metropolis_weights, spectral_gap, Graph};
use shamir_consensus::keydist::rounds_needed;
use shamir_consensus::Result;

pub fn run_example() -> Result<Vec<(String, f64)>> {
    let graphs = [
        ("path P2", Graph::new(2, [(0, 1)])?),
        ("cycle C5", Graph::cycle(5)?),
        ("complete K6", Graph::complete(6)?),
        ("cycle C12", Graph::cycle(12)?),
    ];
    let mut out = Vec::new();
    for (name, g) in graphs {
        let w = metropolis_weights(&g)?;
        let gamma = spectral_gap(&w)?;
        let n = g.node_count();
        let rounds = rounds_needed(gamma, 0.1, 20, n)?;
        println!(
            "{name:<12} gamma {gamma:.6}  bound {:.6}  rounds per block {rounds}",
            metropolis_gap_bound(n)
        );
        out.push((name.to_string(), gamma));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

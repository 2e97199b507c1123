//! Agree on a common key sequence by running consensus on random integer
//! vectors, rejecting draws that land too close to each other or to an
//! integer boundary.

use shamir_consensus::graph::Graph;
use shamir_consensus::keydist::{run_key_distribution, KeyDistConfig, KeyDistOutcome};
use shamir_consensus::{stream, Result};

pub fn run_example() -> Result<KeyDistOutcome> {
    let g = Graph::cycle(5)?;
    let cfg = KeyDistConfig::for_graph(&g, 4, 20)?;
    println!("lambda {:.6}, {} rounds per block", cfg.lambda, cfg.block_length()?);

    let mut rng = stream(2024, &[]);
    let outcome = run_key_distribution(&g, &cfg, &mut rng)?;
    for (b, block) in outcome.blocks.iter().enumerate() {
        println!(
            "block {}: deviation {:.3e}, {} elements redrawn{}",
            b + 1,
            block.deviation,
            block.flagged,
            if block.disagreement { ", nodes disagreed" } else { "" }
        );
    }
    println!("key {:?} after {} iterations", outcome.key.elements(), outcome.iterations);
    Ok(outcome)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

//! Synchronous-round simulator for the full protocol: optional key
//! distribution, then handshake, channel-wise update and reconstruction every
//! round, with every exchanged message recorded for the adversary harness.
//!
//! Delivery is lockstep and lossless. Randomness comes from one root seed;
//! each node's handshake stream is derived from `(seed, node, round)` and its
//! polynomial from `(seed, node)`, so node processing order never matters.

mod adversary;
mod trace;

pub use adversary::{
    collude, eavesdrop, AdversaryMode, AdversarySpec, AdversaryView, ChannelLabel, Observation,
    Payload, RoundVerdict, Verdict, VALUE_TOLERANCE,
};
pub use trace::{export_trace, format_sig, write_adversary_csv, RoundTrace, Trace};

use crate::error::{Error, Result};
use crate::graph::{channel_laplacian, Graph};
use crate::keydist::{run_key_distribution, KeyDistConfig, DEFAULT_KAPPA};
use crate::protocol::{
    channel_update, channel_update_nonaverage, default_alpha, draw_handshake, init_node,
    reconstruct_state, resolve_channel, validate_step_size, ChannelAssignment, NodeState,
    SecurityDegree, UpdateRule,
};
use crate::rng;
use crate::shamir::KeySequence;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_ROUND_CAP: usize = 100_000;
/// Consecutive in-tolerance rounds required before a run counts as converged.
pub const CONVERGENCE_STREAK: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MessageKind {
    Handshake { bid: f64, preferred_channel: usize },
    /// The sender's buffer for the edge's resolved channel.
    Buffer { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub from: usize,
    pub to: usize,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutput {
    pub assignment: ChannelAssignment,
    pub messages: Vec<Message>,
}

/// Executes one round in place: handshakes, channel resolution, the
/// double-buffered channel update and reconstruction.
pub fn run_round(
    nodes: &mut [NodeState],
    g: &Graph,
    key: &KeySequence,
    alpha: f64,
    rule: UpdateRule,
    seed: u64,
    round: usize,
) -> RoundOutput {
    let channels = key.len();
    for node in nodes.iter_mut() {
        let mut stream = rng::stream(seed, &[rng::TAG_HANDSHAKE, node.id as u64, round as u64]);
        draw_handshake(node, g.neighbors(node.id), channels, &mut stream);
    }

    let mut messages = Vec::with_capacity(4 * g.edges().len());
    let mut assignment = ChannelAssignment::new();
    for &(a, b) in g.edges() {
        let pa = nodes[a].pending_handshakes[&b];
        let pb = nodes[b].pending_handshakes[&a];
        for (from, to, p) in [(a, b, pa), (b, a, pb)] {
            messages.push(Message {
                kind: MessageKind::Handshake {
                    bid: p.bid,
                    preferred_channel: p.preferred_channel,
                },
                from,
                to,
                round,
            });
        }
        assignment.insert(a, b, resolve_channel(pa, pb, a, b));
    }

    for &(a, b) in g.edges() {
        let c = assignment.get(a, b).expect("every edge was assigned");
        for (from, to) in [(a, b), (b, a)] {
            messages.push(Message {
                kind: MessageKind::Buffer {
                    value: nodes[from].buffers[c],
                },
                from,
                to,
                round,
            });
        }
    }

    let snapshot: Vec<Vec<f64>> = nodes.iter().map(|n| n.buffers.clone()).collect();
    let updated: Vec<Vec<f64>> = nodes
        .iter()
        .map(|node| {
            (0..channels)
                .map(|k| {
                    let incoming: Vec<(usize, f64)> = g
                        .neighbors(node.id)
                        .iter()
                        .filter(|&&j| assignment.get(node.id, j) == Some(k))
                        .map(|&j| (j, snapshot[j][k]))
                        .collect();
                    match rule {
                        UpdateRule::Average => channel_update(node, k, &incoming, alpha),
                        UpdateRule::NonAverage => channel_update_nonaverage(node, k, &incoming),
                    }
                })
                .collect()
        })
        .collect();
    for (node, buffers) in nodes.iter_mut().zip(updated) {
        node.buffers = buffers;
        node.state = reconstruct_state(node, key);
    }

    RoundOutput {
        assignment,
        messages,
    }
}

/// A network of initialized nodes that can be stepped round by round.
#[derive(Clone, Debug)]
pub struct Simulation {
    graph: Graph,
    key: KeySequence,
    degrees: SecurityDegree,
    nodes: Vec<NodeState>,
    alpha: f64,
    rule: UpdateRule,
    seed: u64,
    round: usize,
}

impl Simulation {
    pub fn new(
        graph: Graph,
        degrees: SecurityDegree,
        x0: &[f64],
        key: KeySequence,
        alpha: f64,
        rule: UpdateRule,
        seed: u64,
    ) -> Result<Self> {
        let n = graph.node_count();
        for len in [degrees.len(), x0.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        if rule == UpdateRule::Average {
            validate_step_size(alpha, &graph)?;
        }
        let nodes = (0..n)
            .map(|i| {
                let mut stream = rng::stream(seed, &[rng::TAG_POLY, i as u64]);
                let mut node = init_node(i, x0[i], degrees.get(i), &key, &mut stream)?;
                node.state = reconstruct_state(&node, &key);
                Ok(node)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            graph,
            key,
            degrees,
            nodes,
            alpha,
            rule,
            seed,
            round: 0,
        })
    }

    pub fn step(&mut self) -> RoundOutput {
        let out = run_round(
            &mut self.nodes,
            &self.graph,
            &self.key,
            self.alpha,
            self.rule,
            self.seed,
            self.round,
        );
        self.round += 1;
        out
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn states(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.state).collect()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn key(&self) -> &KeySequence {
        &self.key
    }

    pub fn degrees(&self) -> &SecurityDegree {
        &self.degrees
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    fn snapshot(&self) -> RoundTrace {
        let channels = self.key.len();
        let n = self.nodes.len();
        let buffers: Vec<Vec<f64>> = self.nodes.iter().map(|n| n.buffers.clone()).collect();
        let states = self.states();
        let (channel_sums, lyapunov) = (0..channels)
            .map(|k| {
                let sum: f64 = buffers.iter().map(|b| b[k]).sum();
                let mean = sum / n as f64;
                let phi: f64 = buffers.iter().map(|b| (b[k] - mean).powi(2)).sum();
                (sum, phi)
            })
            .unzip();
        RoundTrace {
            round: self.round,
            states,
            buffers,
            channel_sums,
            lyapunov,
            assignment: None,
            channel_connected: Vec::new(),
            messages: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum KeySource {
    /// The public key `(1, 2, …, p̄)`.
    #[default]
    Default,
    Fixed(KeySequence),
    /// Run key distribution on the graph's Metropolis weights first.
    Distribute { kappa: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Defaults to `0.9 / max_i |N_i|`.
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub round_cap: usize,
    pub seed: u64,
    pub key: KeySource,
    pub rule: UpdateRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            epsilon: DEFAULT_EPSILON,
            round_cap: DEFAULT_ROUND_CAP,
            seed: 0,
            key: KeySource::Default,
            rule: UpdateRule::Average,
        }
    }
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Resolves the key for a run, distributing one first if asked.
pub fn resolve_key(
    g: &Graph,
    bar_p: usize,
    source: &KeySource,
    seed: u64,
) -> Result<(KeySequence, Option<usize>)> {
    match source {
        KeySource::Default => Ok((KeySequence::default_key(bar_p)?, None)),
        KeySource::Fixed(k) => Ok((k.clone(), None)),
        KeySource::Distribute { kappa } => {
            let cfg = KeyDistConfig::for_graph(g, bar_p, *kappa)?;
            let mut stream = rng::stream(seed, &[rng::TAG_KEYDIST]);
            let out = run_key_distribution(g, &cfg, &mut stream)?;
            Ok((out.key, Some(out.iterations)))
        }
    }
}

impl KeySource {
    pub fn distribute() -> Self {
        Self::Distribute {
            kappa: DEFAULT_KAPPA,
        }
    }
}

/// Runs rounds until every reconstructed state stays within `epsilon` of the
/// network mean for [`CONVERGENCE_STREAK`] consecutive rounds (or is already
/// there at round 0) and returns the full trace.
pub fn run_experiment(
    g: &Graph,
    p: &SecurityDegree,
    x0: &[f64],
    config: &ExperimentConfig,
) -> Result<Trace> {
    if !g.is_connected() {
        return Err(Error::NotConnected);
    }
    let alpha = config.alpha.unwrap_or_else(|| default_alpha(g));
    if config.rule == UpdateRule::Average {
        validate_step_size(alpha, g)?;
    }
    let (key, keydist_iterations) = resolve_key(g, p.bar_p(), &config.key, config.seed)?;
    let mut sim = Simulation::new(g.clone(), p.clone(), x0, key, alpha, config.rule, config.seed)?;

    let mut trace = Trace::new(
        g.clone(),
        sim.key().clone(),
        p.clone(),
        x0.to_vec(),
        alpha,
        config.rule,
        config.epsilon,
        config.seed,
    );
    trace.keydist_iterations = keydist_iterations;

    let within = |states: &[f64]| {
        let mean = states.iter().sum::<f64>() / states.len() as f64;
        states.iter().all(|x| (x - mean).abs() < config.epsilon)
    };

    let first = sim.snapshot();
    let settled_at_start = within(&first.states);
    trace.push(first);
    if settled_at_start {
        trace.converged_at = Some(0);
        return Ok(trace);
    }

    let mut streak = 0;
    loop {
        if sim.round() >= config.round_cap {
            return Err(Error::RoundCapExceeded(config.round_cap));
        }
        let out = sim.step();
        let connected = (0..sim.key().len())
            .map(|k| {
                channel_laplacian(g, &out.assignment, k)
                    .map(|l| l.is_connected())
                    .unwrap_or(false)
            })
            .collect();
        trace.attach_transition(out.assignment, connected, out.messages);

        let next = sim.snapshot();
        streak = if within(&next.states) { streak + 1 } else { 0 };
        let round = next.round;
        trace.push(next);
        if streak >= CONVERGENCE_STREAK {
            trace.converged_at = Some(round + 1 - CONVERGENCE_STREAK);
            return Ok(trace);
        }
    }
}

/// First seed at or after `start` whose opening round assigns pairwise
/// distinct channels to `edges`. Used to build at-threshold adversaries.
#[allow(clippy::too_many_arguments)]
pub fn seed_for_distinct_channels(
    g: &Graph,
    p: &SecurityDegree,
    x0: &[f64],
    key: &KeySequence,
    alpha: f64,
    edges: &[(usize, usize)],
    start: u64,
    attempts: u64,
) -> Result<Option<u64>> {
    if edges.len() > key.len() {
        return Ok(None);
    }
    for seed in start..start.saturating_add(attempts) {
        let mut sim = Simulation::new(
            g.clone(),
            p.clone(),
            x0,
            key.clone(),
            alpha,
            UpdateRule::Average,
            seed,
        )?;
        let out = sim.step();
        let mut used = std::collections::BTreeSet::new();
        let distinct = edges.iter().all(|&(a, b)| {
            out.assignment
                .get(a, b)
                .map(|c| used.insert(c))
                .unwrap_or(false)
        });
        if distinct {
            return Ok(Some(seed));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_connected_graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring_key() -> KeySequence {
        KeySequence::new(vec![4, 7, 15, 3], 20).unwrap()
    }

    fn ring_setup() -> (Graph, SecurityDegree, Vec<f64>) {
        (
            Graph::cycle(5).unwrap(),
            SecurityDegree::new(vec![2, 3, 4, 2, 3]).unwrap(),
            vec![12.0, 81.5, 40.25, 3.0, 55.0],
        )
    }

    #[test]
    fn single_node_state_is_constant() {
        let g = Graph::new(1, []).unwrap();
        let p = SecurityDegree::new(vec![3]).unwrap();
        let mut sim = Simulation::new(g, p, &[7.5], ring_key(), 0.9, UpdateRule::Average, 1)
            .unwrap();
        for _ in 0..10 {
            let out = sim.step();
            assert!(out.messages.is_empty());
            assert!((sim.states()[0] - 7.5).abs() < 1e-9);
        }
    }

    #[test]
    fn two_nodes_without_masking_average_to_midpoint() {
        let g = Graph::complete(2).unwrap();
        let p = SecurityDegree::new(vec![1, 1]).unwrap();
        let key = KeySequence::new(vec![1], 20).unwrap();
        let mut sim = Simulation::new(g, p, &[0.0, 10.0], key, 0.45, UpdateRule::Average, 3)
            .unwrap();
        for _ in 0..50 {
            sim.step();
        }
        for x in sim.states() {
            assert!((x - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn round_conserves_channel_sums_and_sends_one_value_per_direction() {
        let (g, p, x0) = ring_setup();
        let mut sim = Simulation::new(g.clone(), p, &x0, ring_key(), 0.45, UpdateRule::Average, 8)
            .unwrap();
        let sums = |s: &Simulation| -> Vec<f64> {
            (0..4).map(|k| s.nodes().iter().map(|n| n.buffers[k]).sum()).collect()
        };
        let before = sums(&sim);
        let out = sim.step();
        let after = sums(&sim);
        for (b, a) in before.iter().zip(&after) {
            assert!((b - a).abs() <= 1e-9 * b.abs().max(1.0));
        }
        let buffers = out
            .messages
            .iter()
            .filter(|m| matches!(m.kind, MessageKind::Buffer { .. }))
            .count();
        assert_eq!(buffers, 2 * g.edges().len());
        assert!(out.assignment.covers(&g));
    }

    #[test]
    fn ring_instance_converges_to_mean() {
        let (g, p, x0) = ring_setup();
        let config = ExperimentConfig {
            key: KeySource::Fixed(ring_key()),
            ..ExperimentConfig::with_seed(5)
        };
        let trace = run_experiment(&g, &p, &x0, &config).unwrap();
        let mean = x0.iter().sum::<f64>() / 5.0;
        assert!(trace.converged_at.is_some());
        for x in &trace.last().unwrap().states {
            assert!((x - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn equal_initial_states_converge_at_round_zero() {
        let (g, p, _) = ring_setup();
        let trace = run_experiment(&g, &p, &[4.0; 5], &ExperimentConfig::with_seed(1)).unwrap();
        assert_eq!(trace.converged_at, Some(0));
        assert_eq!(trace.rounds.len(), 1);
        assert!(trace.last().unwrap().states.iter().all(|x| (x - 4.0).abs() < 1e-9));
    }

    #[test]
    fn random_graph_converges_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let g = random_connected_graph(8, 0.4, &mut rng);
        let p = SecurityDegree::new((0..8).map(|_| rng.gen_range(1..=4)).collect()).unwrap();
        let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..100.0)).collect();
        let trace = run_experiment(&g, &p, &x0, &ExperimentConfig::with_seed(9)).unwrap();
        let mean = x0.iter().sum::<f64>() / 8.0;
        for x in &trace.last().unwrap().states {
            assert!((x - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn experiment_validation() {
        let (_, p, x0) = ring_setup();
        let split = Graph::new(5, [(0, 1), (2, 3), (3, 4)]).unwrap();
        assert!(matches!(
            run_experiment(&split, &p, &x0, &ExperimentConfig::default()),
            Err(Error::NotConnected)
        ));
        let g = Graph::cycle(5).unwrap();
        let config = ExperimentConfig {
            alpha: Some(0.5),
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            run_experiment(&g, &p, &x0, &config),
            Err(Error::StepSizeTooLarge { .. })
        ));
        let config = ExperimentConfig {
            round_cap: 3,
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            run_experiment(&g, &p, &x0, &config),
            Err(Error::RoundCapExceeded(3))
        ));
    }

    #[test]
    fn distributed_key_is_used() {
        let (g, p, x0) = ring_setup();
        let config = ExperimentConfig {
            key: KeySource::distribute(),
            ..ExperimentConfig::with_seed(12)
        };
        let trace = run_experiment(&g, &p, &x0, &config).unwrap();
        assert!(trace.keydist_iterations.unwrap() > 0);
        assert_eq!(trace.key.len(), 4);
        assert_eq!(trace.key.kappa(), 20);
    }

    #[test]
    fn nonaverage_rule_reaches_consensus() {
        let (g, p, x0) = ring_setup();
        let config = ExperimentConfig {
            rule: UpdateRule::NonAverage,
            ..ExperimentConfig::with_seed(2)
        };
        let trace = run_experiment(&g, &p, &x0, &config).unwrap();
        let last = &trace.last().unwrap().states;
        let spread = last.iter().cloned().fold(f64::MIN, f64::max)
            - last.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 2e-6);
    }

    #[test]
    fn distinct_channel_seed_search() {
        let (g, p, x0) = ring_setup();
        let edges = [(2, 1), (2, 3)];
        let seed = seed_for_distinct_channels(&g, &p, &x0, &ring_key(), 0.45, &edges, 0, 100)
            .unwrap()
            .unwrap();
        let mut sim =
            Simulation::new(g, p, &x0, ring_key(), 0.45, UpdateRule::Average, seed).unwrap();
        let out = sim.step();
        assert_ne!(out.assignment.get(2, 1), out.assignment.get(2, 3));
    }
}

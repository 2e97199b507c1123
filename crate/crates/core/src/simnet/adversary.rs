//! Passive adversaries against a recorded trace.
//!
//! Colluding neighbors pool the buffer values the target sent them, together
//! with the channels they resolved on those edges. An eavesdropper sees every
//! handshake and buffer message on its tapped edges; it can resolve channel
//! labels from the handshakes but learns abscissas only if it knows the key.
//!
//! Each round is judged on its own: the target's shares observed that round
//! are fed to [`underdetermination_certificate`] for a polynomial of degree
//! `p_target − 1`. After round 0 a node's buffers are no longer samples of a
//! single polynomial, so a pinned-down constant only counts as a
//! reconstruction when it equals the target's actual state; a pinned value
//! that does not match is reported as `Underdetermined(0)`.

use std::collections::{BTreeSet, HashMap};

use super::{MessageKind, Trace};
use crate::error::{Error, Result};
use crate::protocol::{resolve_channel, HandshakePair};
use crate::shamir::{underdetermination_certificate, Certificate, KeySequence, Share, MAX_KAPPA};

/// Relative tolerance for matching a recovered value against the true state.
pub const VALUE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversaryMode {
    Collusion {
        colluders: BTreeSet<usize>,
        target: usize,
    },
    Eavesdrop {
        /// `(lo, hi)` pairs.
        tapped_edges: BTreeSet<(usize, usize)>,
        target: usize,
        knows_key: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversarySpec {
    pub mode: AdversaryMode,
}

impl AdversarySpec {
    pub fn collusion(colluders: impl IntoIterator<Item = usize>, target: usize) -> Self {
        Self {
            mode: AdversaryMode::Collusion {
                colluders: colluders.into_iter().collect(),
                target,
            },
        }
    }

    pub fn eavesdrop(
        edges: impl IntoIterator<Item = (usize, usize)>,
        target: usize,
        knows_key: bool,
    ) -> Self {
        Self {
            mode: AdversaryMode::Eavesdrop {
                tapped_edges: edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect(),
                target,
                knows_key,
            },
        }
    }

    pub fn target(&self) -> usize {
        match &self.mode {
            AdversaryMode::Collusion { target, .. } | AdversaryMode::Eavesdrop { target, .. } => {
                *target
            }
        }
    }

    /// Dispatches to [`collude`] or [`eavesdrop`] with the trace's key and the
    /// target's own security degree.
    pub fn run(&self, trace: &Trace) -> Result<AdversaryView> {
        match self.mode {
            AdversaryMode::Collusion { target, .. } => {
                if target >= trace.degrees.len() {
                    return Err(Error::InvalidSpec(format!("target {} out of range", target + 1)));
                }
                collude(self, trace, &trace.key, trace.degrees.get(target))
            }
            AdversaryMode::Eavesdrop { .. } => eavesdrop(self, trace),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelLabel {
    /// The key element (Lagrange abscissa).
    Known(i64),
    /// A channel identity without its abscissa.
    Opaque(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Payload {
    Bid(f64),
    Buffer(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub round: usize,
    pub channel: ChannelLabel,
    pub payload: Payload,
    /// `(from, to)` of the carrying message.
    pub edge: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Determined(f64),
    /// Dimension of the consistent solution space; 0 when the observations
    /// pin a value that is not the target's state.
    Underdetermined(usize),
}

impl Verdict {
    pub fn is_determined(&self) -> bool {
        matches!(self, Verdict::Determined(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundVerdict {
    pub round: usize,
    pub verdict: Verdict,
    /// The round is at or after convergence, where the state is public anyway.
    pub after_consensus: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryView {
    pub spec: AdversarySpec,
    pub observations: Vec<Observation>,
    pub verdicts: Vec<RoundVerdict>,
}

impl AdversaryView {
    /// First round with a `Determined` verdict.
    pub fn first_determined(&self) -> Option<usize> {
        self.verdicts
            .iter()
            .find(|v| v.verdict.is_determined())
            .map(|v| v.round)
    }

    pub fn pre_convergence(&self) -> impl Iterator<Item = &RoundVerdict> {
        self.verdicts.iter().filter(|v| !v.after_consensus)
    }
}

fn matches_state(value: f64, state: f64) -> bool {
    (value - state).abs() <= VALUE_TOLERANCE * state.abs().max(1.0)
}

/// Certificate cache keyed by the sorted set of abscissas: whether a set is
/// free depends only on the points.
#[derive(Default)]
struct Judge {
    free: HashMap<Vec<i64>, Option<usize>>,
}

impl Judge {
    fn certify(&mut self, shares: &[Share], degree_bound: usize) -> Certificate {
        let mut points: Vec<i64> = shares.iter().map(|s| s.point).collect();
        points.sort_unstable();
        if let Some(Some(dimension)) = self.free.get(&points) {
            return Certificate::Free {
                dimension: *dimension,
            };
        }
        let cert = underdetermination_certificate(shares, degree_bound);
        let cached = match cert {
            Certificate::Free { dimension } => Some(dimension),
            Certificate::Determined { .. } => None,
        };
        self.free.insert(points, cached);
        cert
    }
}

fn check_node(trace: &Trace, node: usize, what: &str) -> Result<()> {
    if node >= trace.graph.node_count() {
        return Err(Error::InvalidSpec(format!("{what} {} out of range", node + 1)));
    }
    Ok(())
}

/// Pools what the colluders received from the target each round and asks
/// whether that pins down the target's state.
pub fn collude(
    spec: &AdversarySpec,
    trace: &Trace,
    key: &KeySequence,
    p_target: usize,
) -> Result<AdversaryView> {
    let AdversaryMode::Collusion { colluders, target } = &spec.mode else {
        return Err(Error::InvalidSpec("expected a collusion spec".into()));
    };
    let target = *target;
    check_node(trace, target, "target")?;
    if colluders.contains(&target) {
        return Err(Error::InvalidSpec("target cannot collude against itself".into()));
    }
    for &c in colluders {
        check_node(trace, c, "colluder")?;
    }
    if p_target == 0 {
        return Err(Error::InvalidSpec("security degree must be positive".into()));
    }

    let mut judge = Judge::default();
    let mut observations = Vec::new();
    let mut verdicts = Vec::new();
    for record in &trace.rounds {
        let Some(assignment) = &record.assignment else {
            continue;
        };
        let mut shares: Vec<Share> = Vec::new();
        for m in &record.messages {
            let MessageKind::Buffer { value } = m.kind else {
                continue;
            };
            if m.from != target || !colluders.contains(&m.to) {
                continue;
            }
            let channel = assignment
                .get(m.from, m.to)
                .expect("buffer messages travel on assigned edges");
            let point = key.elements()[channel];
            observations.push(Observation {
                round: record.round,
                channel: ChannelLabel::Known(point),
                payload: Payload::Buffer(value),
                edge: (m.from, m.to),
            });
            if shares.iter().all(|s| s.point != point) {
                shares.push(Share::new(point, value));
            }
        }
        let verdict = match judge.certify(&shares, p_target - 1) {
            Certificate::Free { dimension } => Verdict::Underdetermined(dimension),
            Certificate::Determined { constant } => {
                if matches_state(constant, record.states[target]) {
                    Verdict::Determined(constant)
                } else {
                    Verdict::Underdetermined(0)
                }
            }
        };
        verdicts.push(RoundVerdict {
            round: record.round,
            verdict,
            after_consensus: !trace.is_pre_convergence(record.round),
        });
    }
    Ok(AdversaryView {
        spec: spec.clone(),
        observations,
        verdicts,
    })
}

/// Alternative abscissa assignments for the observed labels: the true one
/// and small shifts of it. Without the key the adversary cannot rule out any
/// distinct positive abscissas up to [`MAX_KAPPA`].
fn key_hypotheses(points: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![points.to_vec()];
    for shift in [1, -1, 2, -2, 3, -3] {
        let shifted: Vec<i64> = points.iter().map(|p| p + shift).collect();
        if shifted.iter().all(|&p| (1..=MAX_KAPPA).contains(&p)) {
            out.push(shifted);
        }
    }
    out
}

/// Collects every message on the tapped edges and judges, per round, whether
/// the target's outgoing buffers reveal its state. Without the key, a pinned
/// value only counts if every admissible key hypothesis agrees on it.
pub fn eavesdrop(spec: &AdversarySpec, trace: &Trace) -> Result<AdversaryView> {
    let AdversaryMode::Eavesdrop {
        tapped_edges,
        target,
        knows_key,
    } = &spec.mode
    else {
        return Err(Error::InvalidSpec("expected an eavesdrop spec".into()));
    };
    let (target, knows_key) = (*target, *knows_key);
    check_node(trace, target, "target")?;
    for &(a, b) in tapped_edges {
        if !trace.graph.has_edge(a, b) {
            return Err(Error::InvalidSpec(format!(
                "tapped edge ({}, {}) is not in the graph",
                a + 1,
                b + 1
            )));
        }
    }
    let p_target = trace.degrees.get(target);
    let key = &trace.key;

    let mut judge = Judge::default();
    let mut observations = Vec::new();
    let mut verdicts = Vec::new();
    for record in &trace.rounds {
        if record.assignment.is_none() {
            continue;
        }
        let tapped = |from: usize, to: usize| tapped_edges.contains(&(from.min(to), from.max(to)));
        let mut pairs: HashMap<(usize, usize), HandshakePair> = HashMap::new();
        for m in &record.messages {
            if let MessageKind::Handshake {
                bid,
                preferred_channel,
            } = m.kind
            {
                if tapped(m.from, m.to) {
                    let label = if knows_key {
                        ChannelLabel::Known(key.elements()[preferred_channel])
                    } else {
                        ChannelLabel::Opaque(preferred_channel)
                    };
                    observations.push(Observation {
                        round: record.round,
                        channel: label,
                        payload: Payload::Bid(bid),
                        edge: (m.from, m.to),
                    });
                    pairs.insert(
                        (m.from, m.to),
                        HandshakePair {
                            bid,
                            preferred_channel,
                        },
                    );
                }
            }
        }

        // (channel index, value) of the target's outgoing shares this round.
        let mut seen: Vec<(usize, f64)> = Vec::new();
        for m in &record.messages {
            let MessageKind::Buffer { value } = m.kind else {
                continue;
            };
            if !tapped(m.from, m.to) {
                continue;
            }
            let channel = resolve_channel(pairs[&(m.from, m.to)], pairs[&(m.to, m.from)], m.from, m.to);
            let label = if knows_key {
                ChannelLabel::Known(key.elements()[channel])
            } else {
                ChannelLabel::Opaque(channel)
            };
            observations.push(Observation {
                round: record.round,
                channel: label,
                payload: Payload::Buffer(value),
                edge: (m.from, m.to),
            });
            if m.from == target && seen.iter().all(|&(c, _)| c != channel) {
                seen.push((channel, value));
            }
        }

        let points: Vec<i64> = seen.iter().map(|&(c, _)| key.elements()[c]).collect();
        let shares: Vec<Share> = seen
            .iter()
            .zip(&points)
            .map(|(&(_, v), &p)| Share::new(p, v))
            .collect();
        let state = record.states[target];
        let verdict = match judge.certify(&shares, p_target - 1) {
            Certificate::Free { dimension } => Verdict::Underdetermined(dimension),
            Certificate::Determined { constant } if !matches_state(constant, state) => {
                Verdict::Underdetermined(0)
            }
            Certificate::Determined { constant } if knows_key => Verdict::Determined(constant),
            Certificate::Determined { constant } => {
                let ambiguous = key_hypotheses(&points).iter().any(|hyp| {
                    let alt: Vec<Share> = hyp
                        .iter()
                        .zip(&shares)
                        .map(|(&p, s)| Share::new(p, s.value))
                        .collect();
                    match underdetermination_certificate(&alt, p_target - 1) {
                        Certificate::Determined { constant: other } => {
                            !matches_state(other, constant)
                        }
                        Certificate::Free { .. } => true,
                    }
                });
                if ambiguous {
                    Verdict::Underdetermined(0)
                } else {
                    Verdict::Determined(constant)
                }
            }
        };
        verdicts.push(RoundVerdict {
            round: record.round,
            verdict,
            after_consensus: !trace.is_pre_convergence(record.round),
        });
    }
    Ok(AdversaryView {
        spec: spec.clone(),
        observations,
        verdicts,
    })
}

//! Node-local steps of the privacy-preserving consensus round: buffer
//! initialization from a private polynomial, handshake draws, channel
//! resolution, the channel-wise update and Lagrange reconstruction.
//!
//! Channels are identified by their position in the [`KeySequence`]; the key
//! element at that position is the channel's interpolation abscissa.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::shamir::{eval_poly, KeySequence, SecretPolynomial};

/// Per-node security degrees `p_i` and their maximum `p̄`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecurityDegree {
    degrees: Vec<usize>,
    bar_p: usize,
}

impl SecurityDegree {
    pub fn new(degrees: Vec<usize>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::Config("security degrees are empty".into()));
        }
        if let Some(i) = degrees.iter().position(|&p| p == 0) {
            return Err(Error::Config(format!("node {} has security degree 0", i + 1)));
        }
        let bar_p = *degrees.iter().max().unwrap();
        Ok(Self { degrees, bar_p })
    }

    pub fn uniform(n: usize, p: usize) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn get(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn bar_p(&self) -> usize {
        self.bar_p
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandshakePair {
    /// Uniform in `[-1, 1]`.
    pub bid: f64,
    /// Channel index into the key sequence.
    pub preferred_channel: usize,
}

/// Channel chosen for every edge in one round, keyed by `(lo, hi)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelAssignment {
    channels: BTreeMap<(usize, usize), usize>,
}

impl ChannelAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = ((usize, usize), usize)>) -> Self {
        let mut a = Self::new();
        for ((i, j), c) in pairs {
            a.insert(i, j, c);
        }
        a
    }

    pub fn insert(&mut self, i: usize, j: usize, channel: usize) {
        self.channels.insert((i.min(j), i.max(j)), channel);
    }

    /// Symmetric lookup.
    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        self.channels.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.channels.iter().map(|(&e, &c)| (e, c))
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn covers(&self, g: &Graph) -> bool {
        g.edges().iter().all(|&(a, b)| self.get(a, b).is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub id: usize,
    /// Reconstructed state `x_i(t)`.
    pub state: f64,
    pub poly: SecretPolynomial,
    /// `r_i(k)`, one entry per channel in key order.
    pub buffers: Vec<f64>,
    pub pending_handshakes: BTreeMap<usize, HandshakePair>,
}

impl NodeState {
    pub fn buffer(&self, channel: usize) -> f64 {
        self.buffers[channel]
    }
}

/// Draws the masking polynomial and fills every buffer with its value at the
/// channel's key element.
pub fn init_node<R: Rng + ?Sized>(
    id: usize,
    x0: f64,
    p_i: usize,
    key: &KeySequence,
    rng: &mut R,
) -> Result<NodeState> {
    if p_i == 0 || p_i > key.len() {
        return Err(Error::DegreeExceedsChannels {
            node: id + 1,
            degree: p_i,
            channels: key.len(),
        });
    }
    let poly = SecretPolynomial::random(x0, p_i - 1, rng);
    let buffers = key.elements().iter().map(|&k| eval_poly(&poly, k as f64)).collect();
    Ok(NodeState {
        id,
        state: x0,
        poly,
        buffers,
        pending_handshakes: BTreeMap::new(),
    })
}

/// Replaces the node's pending handshakes with one fresh pair per neighbor.
pub fn draw_handshake<'a, R: Rng + ?Sized>(
    node: &'a mut NodeState,
    neighbors: &[usize],
    channels: usize,
    rng: &mut R,
) -> &'a BTreeMap<usize, HandshakePair> {
    node.pending_handshakes = neighbors
        .iter()
        .map(|&j| {
            let bid = rng.gen_range(-1.0..=1.0);
            let preferred_channel = rng.gen_range(0..channels);
            (
                j,
                HandshakePair {
                    bid,
                    preferred_channel,
                },
            )
        })
        .collect();
    &node.pending_handshakes
}

/// The higher bid's preference wins; on an exact tie the lower-indexed
/// node's preference wins, so the result never depends on argument order.
pub fn resolve_channel(pair_i: HandshakePair, pair_j: HandshakePair, i: usize, j: usize) -> usize {
    if pair_i.bid > pair_j.bid || (pair_i.bid == pair_j.bid && i < j) {
        pair_i.preferred_channel
    } else {
        pair_j.preferred_channel
    }
}

/// `r_i(k) + α Σ_j (r_j(k) − r_i(k))` over the neighbors sharing channel `k`.
pub fn channel_update(node: &NodeState, channel: usize, incoming: &[(usize, f64)], alpha: f64) -> f64 {
    let own = node.buffers[channel];
    own + alpha * incoming.iter().map(|&(_, r)| r - own).sum::<f64>()
}

/// Degree-normalized update `(r_i(k) + Σ_j r_j(k)) / (1 + #incoming)`.
/// Reaches consensus but not necessarily on the initial average.
pub fn channel_update_nonaverage(node: &NodeState, channel: usize, incoming: &[(usize, f64)]) -> f64 {
    let step = 1.0 / (1.0 + incoming.len() as f64);
    step * node.buffers[channel] + step * incoming.iter().map(|&(_, r)| r).sum::<f64>()
}

/// `Σ_k r_i(k) L_k(0)`.
pub fn reconstruct_state(node: &NodeState, key: &KeySequence) -> f64 {
    node.buffers
        .iter()
        .zip(key.weights())
        .map(|(r, w)| r * w)
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpdateRule {
    #[default]
    Average,
    NonAverage,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Self::Average),
            "nonaverage" => Ok(Self::NonAverage),
            other => Err(Error::Config(format!("unknown update rule {other:?}"))),
        }
    }
}

/// `0.9 / max_i |N_i|`, or `0.9` on an edgeless graph.
pub fn default_alpha(g: &Graph) -> f64 {
    0.9 / g.max_degree().max(1) as f64
}

pub fn validate_step_size(alpha: f64, g: &Graph) -> Result<()> {
    let max_degree = g.max_degree();
    if alpha.is_nan() || alpha <= 0.0 || alpha * max_degree as f64 >= 1.0 {
        return Err(Error::StepSizeTooLarge { alpha, max_degree });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring_key() -> KeySequence {
        KeySequence::new(vec![4, 7, 15, 3], 20).unwrap()
    }

    #[test]
    fn security_degree() {
        let p = SecurityDegree::new(vec![2, 3, 4, 2, 3]).unwrap();
        assert_eq!(p.bar_p(), 4);
        assert!(SecurityDegree::new(vec![1, 0]).is_err());
        assert!(SecurityDegree::new(vec![]).is_err());
    }

    #[test]
    fn init_examples() {
        let key = ring_key();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let node = init_node(0, 12.0, 1, &key, &mut rng).unwrap();
        assert!(node.buffers.iter().all(|&r| r == 12.0));

        for (i, &p) in [2, 3, 4, 2, 3].iter().enumerate() {
            let node = init_node(i, 10.0 * i as f64, p, &key, &mut rng).unwrap();
            assert_eq!(node.poly.degree_bound(), p - 1);
            for (k, &r) in key.elements().iter().zip(&node.buffers) {
                assert_eq!(r, eval_poly(&node.poly, *k as f64));
            }
            let x = reconstruct_state(&node, &key);
            assert!((x - 10.0 * i as f64).abs() <= 1e-9 * (10.0 * i as f64).max(1.0));
        }

        assert!(matches!(
            init_node(0, 1.0, 5, &key, &mut rng),
            Err(Error::DegreeExceedsChannels { degree: 5, channels: 4, .. })
        ));
    }

    #[test]
    fn handshake_is_seed_deterministic() {
        let key = ring_key();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut node = init_node(0, 0.0, 2, &key, &mut rng).unwrap();
            draw_handshake(&mut node, &[1, 4], key.len(), &mut rng).clone()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut node = init_node(0, 0.0, 1, &key, &mut rng).unwrap();
        assert!(draw_handshake(&mut node, &[], key.len(), &mut rng).is_empty());
    }

    #[test]
    fn handshake_channel_frequencies_are_uniform() {
        let key = ring_key();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut node = init_node(0, 0.0, 1, &key, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let pairs = draw_handshake(&mut node, &[1], key.len(), &mut rng);
            let pair = pairs[&1];
            assert!((-1.0..=1.0).contains(&pair.bid));
            counts[pair.preferred_channel] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() <= 0.02, "{counts:?}");
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
        // 99.9% quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn resolve_examples() {
        let pair = |bid, preferred_channel| HandshakePair {
            bid,
            preferred_channel,
        };
        // Channels 0 and 2 stand for key elements 4 and 15.
        assert_eq!(resolve_channel(pair(0.7, 0), pair(0.2, 2), 0, 1), 0);
        assert_eq!(resolve_channel(pair(0.2, 0), pair(0.7, 2), 0, 1), 2);
        // Tie between nodes 2 and 5 (1-based): node 2's preference wins.
        assert_eq!(resolve_channel(pair(0.5, 1), pair(0.5, 3), 1, 4), 1);
        assert_eq!(resolve_channel(pair(0.5, 3), pair(0.5, 1), 4, 1), 1);
    }

    #[test]
    fn update_examples() {
        let key = ring_key();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut node = init_node(0, 0.0, 1, &key, &mut rng).unwrap();
        node.buffers = vec![0.0, 3.0, 3.0, 3.0];
        assert_eq!(channel_update(&node, 1, &[], 0.25), 3.0);
        assert_eq!(channel_update(&node, 0, &[(1, 1.0)], 0.25), 0.25);
        assert_eq!(channel_update_nonaverage(&node, 1, &[]), 3.0);
        assert_eq!(channel_update_nonaverage(&node, 0, &[(1, 1.0)]), 0.5);
        assert_eq!(channel_update_nonaverage(&node, 1, &[(1, 3.0), (2, 3.0)]), 3.0);
    }

    #[test]
    fn reconstruct_constant_buffers() {
        let key = ring_key();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut node = init_node(0, 0.0, 3, &key, &mut rng).unwrap();
        node.buffers = vec![-4.25; 4];
        assert!((reconstruct_state(&node, &key) + 4.25).abs() < 1e-12);
    }

    #[test]
    fn step_size_validation() {
        let c5 = Graph::cycle(5).unwrap();
        assert!(validate_step_size(0.45, &c5).is_ok());
        assert!(validate_step_size(0.5, &c5).is_err());
        assert!(validate_step_size(0.0, &c5).is_err());
        assert_eq!(default_alpha(&c5), 0.45);
        assert!(validate_step_size(default_alpha(&Graph::new(1, []).unwrap()), &Graph::new(1, []).unwrap()).is_ok());
    }

    #[test]
    fn update_rule_parses() {
        assert_eq!("average".parse::<UpdateRule>().unwrap(), UpdateRule::Average);
        assert_eq!("nonaverage".parse::<UpdateRule>().unwrap(), UpdateRule::NonAverage);
        assert!("median".parse::<UpdateRule>().is_err());
    }
}

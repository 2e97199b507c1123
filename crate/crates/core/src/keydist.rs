//! Finite-step distribution of a common integer key sequence.
//!
//! Every node starts from a random real vector in `[1, κ]^p̄` and runs blocks
//! of linear consensus with a doubly stochastic weight matrix. The block
//! length guarantees every node ends within `δ` of the network average; each
//! element is then accepted if its fractional part keeps clear of the integer
//! boundaries and its floor differs from the earlier elements, otherwise it is
//! redrawn and another block runs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{metropolis_gap_bound, metropolis_weights, spectral_gap, Graph, WeightMatrix};
use crate::shamir::KeySequence;

pub const DEFAULT_KAPPA: i64 = 20;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_MAX_BLOCKS: usize = 100;

/// Per-node real key vectors `S_i(t)`, node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyVector {
    rows: Vec<Vec<f64>>,
}

impl KeyVector {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Self { rows })
    }

    /// Uniform draws from `[low, high]^dim` for each of `n` nodes.
    pub fn random<R: Rng + ?Sized>(n: usize, dim: usize, low: f64, high: f64, rng: &mut R) -> Self {
        let rows = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(low..=high)).collect())
            .collect();
        Self { rows }
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Network average of component `l`.
    pub fn component_average(&self, l: usize) -> f64 {
        self.rows.iter().map(|r| r[l]).sum::<f64>() / self.rows.len() as f64
    }

    /// `‖S^(ℓ) − α_ℓ 𝟏‖₂` for component `l`.
    pub fn component_deviation(&self, l: usize) -> f64 {
        let avg = self.component_average(l);
        self.rows.iter().map(|r| (r[l] - avg).powi(2)).sum::<f64>().sqrt()
    }

    /// `max_i ‖S_i − avg‖_∞` against the supplied per-component averages.
    pub fn max_deviation_from(&self, averages: &[f64]) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter().zip(averages).map(|(x, a)| (x - a).abs()))
            .fold(0.0, f64::max)
    }

    pub fn averages(&self) -> Vec<f64> {
        (0..self.dim()).map(|l| self.component_average(l)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyDistConfig {
    pub bar_p: usize,
    pub kappa: i64,
    /// Upper bound `N̄` on the number of nodes.
    pub n_bound: usize,
    /// Spectral norm `γ` of `W − (1/N)𝟏𝟏ᵀ`, in `[0, 1)`.
    pub lambda: f64,
    pub delta: f64,
    pub max_blocks: usize,
}

impl KeyDistConfig {
    /// Checks `p̄ ≥ 1`, `κ ≥ 4 p̄`, `γ ∈ [0, 1)` and `δ ∈ (0, 0.5)`.
    pub fn validate(&self) -> Result<()> {
        if self.bar_p == 0 {
            return Err(Error::Config("bar_p must be at least 1".into()));
        }
        if self.kappa < 4 * self.bar_p as i64 {
            return Err(Error::Config(format!(
                "kappa {} must be at least 4 * bar_p = {}",
                self.kappa,
                4 * self.bar_p
            )));
        }
        if self.kappa > crate::shamir::MAX_KAPPA {
            return Err(Error::Config(format!("kappa {} too large", self.kappa)));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta {} outside (0, 0.5)", self.delta)));
        }
        if self.n_bound == 0 {
            return Err(Error::Config("n_bound must be at least 1".into()));
        }
        Ok(())
    }

    /// `γ` measured on the Metropolis weights of `g`, `N̄ = N`.
    pub fn for_graph(g: &Graph, bar_p: usize, kappa: i64) -> Result<Self> {
        let lambda = spectral_gap(&metropolis_weights(g)?)?;
        let cfg = Self {
            bar_p,
            kappa,
            n_bound: g.node_count(),
            lambda,
            delta: DEFAULT_DELTA,
            max_blocks: DEFAULT_MAX_BLOCKS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `γ` replaced by the topology-free bound `1 − 1/(71 N̄²)`.
    pub fn with_bound(bar_p: usize, kappa: i64, n_bound: usize) -> Result<Self> {
        let cfg = Self {
            bar_p,
            kappa,
            n_bound,
            lambda: metropolis_gap_bound(n_bound),
            delta: DEFAULT_DELTA,
            max_blocks: DEFAULT_MAX_BLOCKS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn block_length(&self) -> Result<usize> {
        rounds_needed(self.lambda, self.delta, self.kappa, self.n_bound)
    }
}

/// `⌈log_λ(δ / (κ √n))⌉`, never negative. A zero `λ` (one round reaches the
/// exact average) gives one round unless no round is needed at all.
pub fn rounds_needed(lambda: f64, delta: f64, kappa: i64, n: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidLambda(lambda));
    }
    if delta.is_nan() || delta <= 0.0 || kappa < 1 || n == 0 {
        return Err(Error::Config(format!(
            "rounds_needed needs delta > 0, kappa >= 1, n >= 1 (got {delta}, {kappa}, {n})"
        )));
    }
    let ratio = delta / (kappa as f64 * (n as f64).sqrt());
    if ratio >= 1.0 {
        return Ok(0);
    }
    if lambda == 0.0 {
        return Ok(1);
    }
    Ok((ratio.ln() / lambda.ln()).ceil().max(0.0) as usize)
}

/// `S_i(t+1) = Σ_j w_ij S_j(t)`, componentwise.
pub fn consensus_round(w: &WeightMatrix, keys: &KeyVector) -> Result<KeyVector> {
    let n = keys.node_count();
    if w.size() != n {
        return Err(Error::DimensionMismatch {
            expected: w.size(),
            got: n,
        });
    }
    let dim = keys.dim();
    let rows = (0..n)
        .map(|i| {
            (0..dim)
                .map(|l| (0..n).map(|j| w.get(i, j) * keys.rows[j][l]).sum())
                .collect()
        })
        .collect();
    Ok(KeyVector { rows })
}

/// Thresholds applied to each element after a block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRules {
    /// Fractional parts at or below this are too close to the floor.
    pub low: f64,
    /// Fractional parts at or above this are too close to the ceiling.
    pub high: f64,
    /// Floors closer than this to an earlier element's floor collide.
    pub min_gap: f64,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.9,
            min_gap: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyVerdict {
    Accept(Vec<i64>),
    /// 0-based indices of the flagged elements.
    Resample(Vec<usize>),
}

pub fn validate_node(values: &[f64], rules: &ValidationRules) -> KeyVerdict {
    let floors: Vec<f64> = values.iter().map(|v| v.floor()).collect();
    let flagged: Vec<usize> = (0..values.len())
        .filter(|&l| {
            let frac = values[l] - floors[l];
            let gap = floors[..l]
                .iter()
                .map(|f| (floors[l] - f).abs())
                .fold(f64::INFINITY, f64::min);
            frac <= rules.low || frac >= rules.high || gap < rules.min_gap
        })
        .collect();
    if flagged.is_empty() {
        KeyVerdict::Accept(floors.iter().map(|&f| f as i64).collect())
    } else {
        KeyVerdict::Resample(flagged)
    }
}

pub fn validate_keys(keys: &KeyVector, rules: &ValidationRules) -> Vec<KeyVerdict> {
    keys.rows.iter().map(|r| validate_node(r, rules)).collect()
}

/// True iff every node holds the same integer key.
pub fn agreement_check(keys: &[Vec<i64>]) -> bool {
    keys.windows(2).all(|w| w[0] == w[1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub rounds: usize,
    /// `max_ℓ ‖S^(ℓ) − α_ℓ 𝟏‖_∞` at the end of the block's consensus rounds.
    pub deviation: f64,
    /// Number of (node, element) pairs flagged for resampling.
    pub flagged: usize,
    /// All nodes accepted but their floors disagreed.
    pub disagreement: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyDistOutcome {
    pub key: KeySequence,
    /// Total consensus rounds executed.
    pub iterations: usize,
    pub blocks: Vec<BlockReport>,
    /// Each node's floored key at termination.
    pub node_keys: Vec<Vec<i64>>,
}

/// Draws the initial vectors from `U([1, κ]^p̄)` and runs the block loop.
pub fn run_key_distribution<R: Rng + ?Sized>(
    g: &Graph,
    cfg: &KeyDistConfig,
    rng: &mut R,
) -> Result<KeyDistOutcome> {
    cfg.validate()?;
    let initial = KeyVector::random(g.node_count(), cfg.bar_p, 1.0, cfg.kappa as f64, rng);
    run_key_distribution_from(g, cfg, initial, rng)
}

/// Block loop from explicit initial vectors. After every block each node
/// redraws its flagged elements as uniform integers in `[1, κ]`; unflagged
/// elements keep their real values. The loop ends once every node accepts
/// and all floors agree, and the key is the common floor.
pub fn run_key_distribution_from<R: Rng + ?Sized>(
    g: &Graph,
    cfg: &KeyDistConfig,
    initial: KeyVector,
    rng: &mut R,
) -> Result<KeyDistOutcome> {
    cfg.validate()?;
    if initial.node_count() != g.node_count() || initial.dim() != cfg.bar_p {
        return Err(Error::DimensionMismatch {
            expected: g.node_count() * cfg.bar_p,
            got: initial.node_count() * initial.dim(),
        });
    }
    let w = metropolis_weights(g)?;
    let block_length = cfg.block_length()?;
    let rules = ValidationRules::default();

    let mut keys = initial;
    let mut iterations = 0;
    let mut blocks = Vec::new();
    while blocks.len() < cfg.max_blocks {
        for _ in 0..block_length {
            keys = consensus_round(&w, &keys)?;
        }
        iterations += block_length;
        let deviation = keys.max_deviation_from(&keys.averages());

        let verdicts = validate_keys(&keys, &rules);
        let flagged: usize = verdicts
            .iter()
            .map(|v| match v {
                KeyVerdict::Resample(idx) => idx.len(),
                KeyVerdict::Accept(_) => 0,
            })
            .sum();
        if flagged == 0 {
            let accepted: Vec<Vec<i64>> = verdicts
                .into_iter()
                .map(|v| match v {
                    KeyVerdict::Accept(k) => k,
                    KeyVerdict::Resample(_) => unreachable!(),
                })
                .collect();
            let agreed = agreement_check(&accepted);
            blocks.push(BlockReport {
                rounds: block_length,
                deviation,
                flagged,
                disagreement: !agreed,
            });
            if agreed {
                let key = KeySequence::new(accepted[0].clone(), cfg.kappa)?;
                return Ok(KeyDistOutcome {
                    key,
                    iterations,
                    blocks,
                    node_keys: accepted,
                });
            }
            for row in &mut keys.rows {
                for v in row.iter_mut() {
                    *v = rng.gen_range(1..=cfg.kappa) as f64;
                }
            }
            continue;
        }

        blocks.push(BlockReport {
            rounds: block_length,
            deviation,
            flagged,
            disagreement: false,
        });
        for (row, verdict) in keys.rows.iter_mut().zip(&verdicts) {
            if let KeyVerdict::Resample(idx) = verdict {
                for &l in idx {
                    row[l] = rng.gen_range(1..=cfg.kappa) as f64;
                }
            }
        }
    }
    Err(Error::MaxBlocksExceeded(cfg.max_blocks))
}

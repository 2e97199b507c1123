use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::adversary::{AdversaryMode, AdversaryView, Verdict};
use super::Message;
use crate::error::Result;
use crate::graph::Graph;
use crate::protocol::{ChannelAssignment, SecurityDegree, UpdateRule};
use crate::shamir::KeySequence;

/// Network state at round `round`, plus the exchange that moved it to the
/// next round (absent on the final record).
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub states: Vec<f64>,
    /// `buffers[i][k]` is `r_i(k)` with `k` a channel index.
    pub buffers: Vec<Vec<f64>>,
    pub channel_sums: Vec<f64>,
    /// `Φ_k = ‖ξ_k − 𝟏 ξ̄_k‖²` per channel.
    pub lyapunov: Vec<f64>,
    pub assignment: Option<ChannelAssignment>,
    /// Whether each channel's subgraph in `assignment` spans a connected graph.
    pub channel_connected: Vec<bool>,
    pub messages: Vec<Message>,
}

/// Append-only record of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub graph: Graph,
    pub key: KeySequence,
    pub degrees: SecurityDegree,
    pub x0: Vec<f64>,
    pub alpha: f64,
    pub rule: UpdateRule,
    pub epsilon: f64,
    pub seed: u64,
    pub rounds: Vec<RoundTrace>,
    /// First round of the in-tolerance streak that ended the run.
    pub converged_at: Option<usize>,
    pub keydist_iterations: Option<usize>,
}

impl Trace {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: Graph,
        key: KeySequence,
        degrees: SecurityDegree,
        x0: Vec<f64>,
        alpha: f64,
        rule: UpdateRule,
        epsilon: f64,
        seed: u64,
    ) -> Self {
        Self {
            graph,
            key,
            degrees,
            x0,
            alpha,
            rule,
            epsilon,
            seed,
            rounds: Vec::new(),
            converged_at: None,
            keydist_iterations: None,
        }
    }

    /// Appends the next round; indices must run 0, 1, 2, …
    pub fn push(&mut self, record: RoundTrace) {
        assert_eq!(record.round, self.rounds.len(), "trace rounds must be contiguous");
        self.rounds.push(record);
    }

    pub(crate) fn attach_transition(
        &mut self,
        assignment: ChannelAssignment,
        connected: Vec<bool>,
        messages: Vec<Message>,
    ) {
        let last = self.rounds.last_mut().expect("transition needs a recorded round");
        last.assignment = Some(assignment);
        last.channel_connected = connected;
        last.messages = messages;
    }

    pub fn last(&self) -> Option<&RoundTrace> {
        self.rounds.last()
    }

    pub fn mean_x0(&self) -> f64 {
        self.x0.iter().sum::<f64>() / self.x0.len() as f64
    }

    /// Mean of the final reconstructed states.
    pub fn consensus_value(&self) -> Option<f64> {
        self.last()
            .map(|r| r.states.iter().sum::<f64>() / r.states.len() as f64)
    }

    pub fn is_pre_convergence(&self, round: usize) -> bool {
        self.converged_at.is_none_or(|c| round < c)
    }
}

/// `%.12g`-style rendering: 12 significant digits, trailing zeros dropped.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 12;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes `states.csv`, `channel_sums.csv` and one `buffers_channel_<k>.csv`
/// per key element into `dir`. Node indices are 1-based.
pub fn export_trace(trace: &Trace, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let n = trace.graph.node_count();
    let mut written = Vec::new();

    let mut states = String::from("round,node,x\n");
    for r in &trace.rounds {
        for (i, x) in r.states.iter().enumerate() {
            writeln!(states, "{},{},{}", r.round, i + 1, format_sig(*x)).unwrap();
        }
    }
    written.push(write(dir, "states.csv", &states)?);

    let header: Vec<String> = (1..=n).map(|i| format!("node_{i}")).collect();
    for (k, &element) in trace.key.elements().iter().enumerate() {
        let mut body = format!("round,{}\n", header.join(","));
        for r in &trace.rounds {
            let row: Vec<String> = r.buffers.iter().map(|b| format_sig(b[k])).collect();
            writeln!(body, "{},{}", r.round, row.join(",")).unwrap();
        }
        written.push(write(dir, &format!("buffers_channel_{element}.csv"), &body)?);
    }

    let mut sums = String::from("round,channel,sum,lyapunov\n");
    for r in &trace.rounds {
        for (k, &element) in trace.key.elements().iter().enumerate() {
            writeln!(
                sums,
                "{},{},{},{}",
                r.round,
                element,
                format_sig(r.channel_sums[k]),
                format_sig(r.lyapunov[k])
            )
            .unwrap();
        }
    }
    written.push(write(dir, "channel_sums.csv", &sums)?);
    Ok(written)
}

/// `round,mode,target,verdict,free_dim` for each view, one line per round.
/// Post-convergence rounds whose certificate is not determined are reported
/// as `consensus`: the state is public by then.
pub fn write_adversary_csv(views: &[AdversaryView], path: &Path) -> Result<()> {
    let mut out = String::from("round,mode,target,verdict,free_dim\n");
    for view in views {
        let (mode, target) = match &view.spec.mode {
            AdversaryMode::Collusion { target, .. } => ("collusion", *target),
            AdversaryMode::Eavesdrop { target, .. } => ("eavesdrop", *target),
        };
        for rv in &view.verdicts {
            let (verdict, dim) = match rv.verdict {
                Verdict::Determined(_) => ("determined", 0),
                Verdict::Underdetermined(d) if rv.after_consensus => ("consensus", d),
                Verdict::Underdetermined(d) => ("underdetermined", d),
            };
            writeln!(out, "{},{},{},{},{}", rv.round, mode, target + 1, verdict, dim).unwrap();
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

//! Command-line front end: `keydist`, `consensus`, `attack` and `spectral`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation error, 3 key
//! distribution did not terminate, 4 consensus round cap exceeded.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use crate::config::{KeySetting, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{metropolis_gap_bound, metropolis_weights, parse_graph, spectral_gap, Graph};
use crate::keydist::{rounds_needed, run_key_distribution, KeyDistConfig};
use crate::protocol::{default_alpha, SecurityDegree, UpdateRule};
use crate::rng;
use crate::shamir::KeySequence;
use crate::simnet::{
    export_trace, format_sig, resolve_key, run_experiment, seed_for_distinct_channels, write_adversary_csv,
    AdversaryMode, AdversarySpec, ExperimentConfig, KeySource, Trace, Verdict,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_KEYDIST: i32 = 3;
pub const EXIT_ROUND_CAP: i32 = 4;

/// Per-node security degree when the config lists none.
const DEFAULT_SECURITY_DEGREE: usize = 2;
const DEFAULT_BAR_P: usize = 4;
const CONSTRUCT_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Parser)]
#[command(name = "shamir-consensus", version, about = "Privacy-preserving average consensus simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Distribute a common key sequence and report the block history.
    Keydist,
    /// Run privacy-preserving consensus and write trace CSVs.
    Consensus,
    /// Run consensus, then a collusion or eavesdropping adversary against it.
    Attack,
    /// Report the Metropolis spectral norm, its bound and the block length.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum UpdateArg {
    #[default]
    Average,
    Nonaverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum KeydistArg {
    #[default]
    Default,
    Auto,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Edge-list file: node count, then one 1-based `i j` pair per line.
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t)]
    pub update: UpdateArg,
    #[arg(long, global = true, value_enum, default_value_t)]
    pub keydist: KeydistArg,
    /// Comma-separated 1-based colluding nodes.
    #[arg(long, global = true)]
    pub collude: Option<String>,
    /// Tapped edges, e.g. "(1,2),(2,3)".
    #[arg(long, global = true)]
    pub eavesdrop_edges: Option<String>,
    /// 1-based target node.
    #[arg(long, global = true)]
    pub target: Option<usize>,
    #[arg(long, global = true)]
    pub knows_key: bool,
    /// Search seeds from `--seed` for an opening round that routes the
    /// adversary's edges over distinct channels.
    #[arg(long, global = true)]
    pub construct: bool,
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads for `--batch` runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Number of consecutive seeds to run (consensus only).
    #[arg(long, global = true, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, global = true)]
    pub kappa: Option<i64>,
    #[arg(long, global = true)]
    pub bar_p: Option<usize>,
    /// Upper bound N̄ on the node count.
    #[arg(long, global = true)]
    pub n_bound: Option<usize>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command, writing
/// the report to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(out, "{e}");
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Keydist => cmd_keydist(&cli.opts),
        Command::Consensus => cmd_consensus(&cli.opts),
        Command::Attack => cmd_attack(&cli.opts),
        Command::Spectral => cmd_spectral(&cli.opts),
    };
    match result {
        Ok(report) => {
            let _ = out.write_all(report.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MaxBlocksExceeded(_) => EXIT_KEYDIST,
        Error::RoundCapExceeded(_) => EXIT_ROUND_CAP,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

struct Inputs {
    graph: Graph,
    config: RunConfig,
    seed: u64,
}

fn load(opts: &Options) -> Result<Inputs> {
    let path = opts
        .graph
        .as_ref()
        .ok_or_else(|| Error::Config("--graph is required".into()))?;
    let graph = parse_graph(&fs::read_to_string(path)?)?;
    let config = match &opts.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let seed = opts.seed.unwrap_or(config.seed);
    Ok(Inputs {
        graph,
        config,
        seed,
    })
}

/// Creates `dir`, refusing to reuse a non-empty one unless forced.
fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Error::Config(format!(
            "output directory {} is not empty (pass --force to overwrite)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn kappa(opts: &Options, cfg: &RunConfig) -> i64 {
    opts.kappa.unwrap_or(cfg.kappa)
}

fn cmd_keydist(opts: &Options) -> Result<String> {
    let Inputs {
        graph,
        config,
        seed,
    } = load(opts)?;
    let bar_p = opts
        .bar_p
        .or_else(|| config.security_degrees.as_ref().and_then(|p| p.iter().max().copied()))
        .unwrap_or(DEFAULT_BAR_P);
    let mut kd = KeyDistConfig::for_graph(&graph, bar_p, kappa(opts, &config))?;
    if let Some(n_bound) = opts.n_bound.or(config.n_bound) {
        if n_bound < graph.node_count() {
            return Err(Error::Config(format!(
                "n_bound {n_bound} is below the node count {}",
                graph.node_count()
            )));
        }
        kd.n_bound = n_bound;
    }
    kd.delta = opts.delta.unwrap_or(config.delta);
    kd.validate()?;
    prepare_out(&opts.out, opts.force)?;

    let mut stream = rng::stream(seed, &[rng::TAG_KEYDIST]);
    let outcome = run_key_distribution(&graph, &kd, &mut stream)?;

    let mut csv = String::from("block,rounds,deviation,flagged,disagreement\n");
    let mut report = String::new();
    let key: Vec<String> = outcome.key.elements().iter().map(i64::to_string).collect();
    writeln!(report, "key: {}", key.join(",")).unwrap();
    writeln!(report, "iterations: {}", outcome.iterations).unwrap();
    writeln!(report, "spectral norm: {}", format_sig(kd.lambda)).unwrap();
    for (b, block) in outcome.blocks.iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            b + 1,
            block.rounds,
            format_sig(block.deviation),
            block.flagged,
            block.disagreement
        )
        .unwrap();
        writeln!(
            report,
            "block {}: rounds {} deviation {} flagged {}",
            b + 1,
            block.rounds,
            format_sig(block.deviation),
            block.flagged
        )
        .unwrap();
    }
    fs::write(opts.out.join("keydist.csv"), csv)?;
    Ok(report)
}

/// Degrees, initial states and experiment settings shared by `consensus` and
/// `attack`.
fn experiment_setup(
    opts: &Options,
    inputs: &Inputs,
    seed: u64,
) -> Result<(SecurityDegree, Vec<f64>, ExperimentConfig)> {
    let n = inputs.graph.node_count();
    let cfg = &inputs.config;
    let degrees = cfg
        .security_degrees
        .clone()
        .unwrap_or_else(|| vec![DEFAULT_SECURITY_DEGREE; n]);
    if degrees.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: degrees.len(),
        });
    }
    let p = SecurityDegree::new(degrees)?;
    let x0 = match &cfg.initial_states {
        Some(x) if x.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            })
        }
        Some(x) => x.clone(),
        None => {
            let mut stream = rng::stream(seed, &[rng::TAG_INITIAL]);
            (0..n).map(|_| stream.gen_range(0.0..=100.0)).collect()
        }
    };
    let kappa = kappa(opts, cfg);
    let key = match (opts.keydist, &cfg.default_key) {
        (KeydistArg::Auto, _) | (_, KeySetting::Auto) => KeySource::Distribute { kappa },
        (_, KeySetting::Default) => KeySource::Default,
        (_, KeySetting::Explicit(elements)) => {
            KeySource::Fixed(KeySequence::new(elements.clone(), kappa)?)
        }
    };
    let config = ExperimentConfig {
        alpha: opts.alpha.or(cfg.alpha),
        epsilon: cfg.epsilon,
        round_cap: cfg.round_cap,
        seed,
        key,
        rule: match opts.update {
            UpdateArg::Average => UpdateRule::Average,
            UpdateArg::Nonaverage => UpdateRule::NonAverage,
        },
    };
    Ok((p, x0, config))
}

fn summarize(trace: &Trace) -> String {
    let mut s = String::new();
    let key: Vec<String> = trace.key.elements().iter().map(i64::to_string).collect();
    writeln!(s, "seed: {}", trace.seed).unwrap();
    writeln!(s, "key: {}", key.join(",")).unwrap();
    if let Some(it) = trace.keydist_iterations {
        writeln!(s, "key distribution iterations: {it}").unwrap();
    }
    let consensus = trace.consensus_value().unwrap_or(f64::NAN);
    let mean = trace.mean_x0();
    writeln!(
        s,
        "convergence round: {}",
        trace.converged_at.map_or("none".into(), |r| r.to_string())
    )
    .unwrap();
    writeln!(s, "consensus value: {}", format_sig(consensus)).unwrap();
    writeln!(s, "mean of initial states: {}", format_sig(mean)).unwrap();
    writeln!(s, "difference: {}", format_sig(consensus - mean)).unwrap();
    if trace.rule == UpdateRule::NonAverage {
        writeln!(s, "NON-AVERAGE update: the consensus value need not equal the mean").unwrap();
    }
    s
}

fn cmd_consensus(opts: &Options) -> Result<String> {
    let inputs = load(opts)?;
    if opts.batch == 0 || opts.jobs == 0 {
        return Err(Error::Config("--batch and --jobs must be positive".into()));
    }
    prepare_out(&opts.out, opts.force)?;
    if opts.batch == 1 {
        let (p, x0, config) = experiment_setup(opts, &inputs, inputs.seed)?;
        let trace = run_experiment(&inputs.graph, &p, &x0, &config)?;
        export_trace(&trace, &opts.out)?;
        return Ok(summarize(&trace));
    }

    let seeds: Vec<u64> = (0..opts.batch as u64).map(|i| inputs.seed + i).collect();
    let run_cell = |seed: u64| -> Result<String> {
        let (p, x0, config) = experiment_setup(opts, &inputs, seed)?;
        let trace = run_experiment(&inputs.graph, &p, &x0, &config)?;
        export_trace(&trace, &opts.out.join(format!("seed_{seed}")))?;
        Ok(summarize(&trace))
    };
    let chunk = seeds.len().div_ceil(opts.jobs);
    let results: Vec<Result<String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|cell_seeds| scope.spawn(|| cell_seeds.iter().map(|&s| run_cell(s)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("batch worker panicked"))
            .collect()
    });
    let mut report = String::new();
    for r in results {
        report.push_str(&r?);
    }
    Ok(report)
}

fn parse_node_list(text: &str, n: usize) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            let v: usize = s
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad node {s:?}")))?;
            if v == 0 || v > n {
                return Err(Error::InvalidSpec(format!("node {v} out of range 1..={n}")));
            }
            Ok(v - 1)
        })
        .collect()
}

/// Accepts `(1,2),(2,3)` or `1-2,2-3`.
fn parse_edge_list(text: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    let cleaned: String = text
        .chars()
        .map(|c| if c == '(' || c == ')' || c == '-' { ' ' } else { c })
        .collect();
    let nodes = parse_node_list(
        &cleaned.split([',', ' ']).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(","),
        n,
    )?;
    if nodes.is_empty() || nodes.len() % 2 != 0 {
        return Err(Error::InvalidSpec(format!("bad edge list {text:?}")));
    }
    Ok(nodes.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn adversary_spec(opts: &Options, g: &Graph) -> Result<AdversarySpec> {
    let n = g.node_count();
    let target = opts
        .target
        .ok_or_else(|| Error::InvalidSpec("--target is required".into()))?;
    let target = parse_node_list(&target.to_string(), n)?[0];
    match (&opts.collude, &opts.eavesdrop_edges) {
        (Some(list), None) => Ok(AdversarySpec::collusion(parse_node_list(list, n)?, target)),
        (None, Some(list)) => Ok(AdversarySpec::eavesdrop(
            parse_edge_list(list, n)?,
            target,
            opts.knows_key,
        )),
        _ => Err(Error::InvalidSpec(
            "pass exactly one of --collude or --eavesdrop-edges".into(),
        )),
    }
}

/// Edges over which the adversary receives the target's buffers.
fn exposed_edges(spec: &AdversarySpec, g: &Graph) -> Vec<(usize, usize)> {
    match &spec.mode {
        AdversaryMode::Collusion { colluders, target } => colluders
            .iter()
            .filter(|&&c| g.has_edge(*target, c))
            .map(|&c| (*target, c))
            .collect(),
        AdversaryMode::Eavesdrop {
            tapped_edges,
            target,
            ..
        } => tapped_edges
            .iter()
            .filter(|&&(a, b)| a == *target || b == *target)
            .copied()
            .collect(),
    }
}

fn cmd_attack(opts: &Options) -> Result<String> {
    let inputs = load(opts)?;
    let spec = adversary_spec(opts, &inputs.graph)?;
    if let AdversaryMode::Collusion { colluders, target } = &spec.mode {
        if colluders.contains(target) {
            return Err(Error::InvalidSpec("target cannot collude against itself".into()));
        }
    }
    let mut report = String::new();
    let (p, x0, mut config) = experiment_setup(opts, &inputs, inputs.seed)?;
    if opts.construct {
        // Pin the key and initial states so only the channel draws depend on
        // the searched seed.
        let (key, _) = resolve_key(&inputs.graph, p.bar_p(), &config.key, config.seed)?;
        let alpha = config.alpha.unwrap_or_else(|| default_alpha(&inputs.graph));
        let edges = exposed_edges(&spec, &inputs.graph);
        let seed = seed_for_distinct_channels(
            &inputs.graph,
            &p,
            &x0,
            &key,
            alpha,
            &edges,
            config.seed,
            CONSTRUCT_ATTEMPTS,
        )?
        .ok_or_else(|| {
            Error::InvalidSpec("no seed routes the adversary edges over distinct channels".into())
        })?;
        writeln!(report, "constructed seed: {seed}").unwrap();
        config.seed = seed;
        config.key = KeySource::Fixed(key);
    }
    prepare_out(&opts.out, opts.force)?;
    let trace = run_experiment(&inputs.graph, &p, &x0, &config)?;
    let view = spec.run(&trace)?;
    write_adversary_csv(std::slice::from_ref(&view), &opts.out.join("adversary.csv"))?;

    let pre = view.pre_convergence().count();
    let determined = view.verdicts.iter().filter(|v| v.verdict.is_determined()).count();
    let consensus = view
        .verdicts
        .iter()
        .filter(|v| v.after_consensus && !v.verdict.is_determined())
        .count();
    let under = view.verdicts.len() - determined - consensus;
    writeln!(report, "target: {}", spec.target() + 1).unwrap();
    writeln!(
        report,
        "rounds: {} (pre-convergence {})",
        view.verdicts.len(),
        pre
    )
    .unwrap();
    writeln!(
        report,
        "determined: {determined} underdetermined: {under} consensus: {consensus}"
    )
    .unwrap();
    match view.verdicts.iter().find(|v| v.verdict.is_determined()) {
        Some(v) => {
            let Verdict::Determined(value) = v.verdict else {
                unreachable!()
            };
            writeln!(
                report,
                "first determined round: {} value {}",
                v.round,
                format_sig(value)
            )
            .unwrap();
        }
        None => writeln!(report, "first determined round: none").unwrap(),
    }
    Ok(report)
}

fn cmd_spectral(opts: &Options) -> Result<String> {
    let Inputs { graph, config, .. } = load(opts)?;
    let w = metropolis_weights(&graph)?;
    let gamma = spectral_gap(&w)?;
    let n_bound = opts.n_bound.or(config.n_bound).unwrap_or(graph.node_count());
    let delta = opts.delta.unwrap_or(config.delta);
    let kappa = kappa(opts, &config);
    let rounds = rounds_needed(gamma, delta, kappa, n_bound)?;
    let mut report = String::new();
    writeln!(report, "spectral norm: {}", format_sig(gamma)).unwrap();
    writeln!(report, "bound 1 - 1/(71 N^2) with N = {n_bound}: {}", format_sig(metropolis_gap_bound(n_bound))).unwrap();
    writeln!(report, "rounds needed (delta {}, kappa {kappa}): {rounds}", format_sig(delta)).unwrap();
    Ok(report)
}

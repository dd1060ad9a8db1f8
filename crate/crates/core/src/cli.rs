//! Command-line surface: `learn`, `check`, `score`, `reconstruct` and
//! `generate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bounds::{network_score, GreedyConfig, Network};
use crate::dataset::{self, Dataset, DEFAULT_MAX_STATES};
use crate::error::Error;
use crate::oracle::{dp_optimal, exhaustive_optimal, DEFAULT_DP_CAP, EXHAUSTIVE_CAP};
use crate::order_graph::{learn, reconstruct, LearnConfig};
use crate::storage::WorkDir;
use crate::synth::{self, SynthSpec};
use crate::varset::VarSet;

/// Relative tolerance for score agreement in `check`.
pub const AGREEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "bnsl", version, about = "Exact Bayesian network structure learning (MDL)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn an optimal network from a CSV file.
    Learn(LearnArgs),
    /// Learn, then compare the score against the reference solvers.
    Check(CheckArgs),
    /// Score a network file against a dataset.
    Score(ScoreArgs),
    /// Rebuild the network from the recon files a previous `learn` left.
    Reconstruct(ReconstructArgs),
    /// Write a synthetic dataset sampled from a random network.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CSV file; column order defines variable order.
    #[arg(long)]
    pub input: PathBuf,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Token marking a missing value; records containing it are dropped.
    #[arg(long, default_value = "?")]
    pub missing: String,
    /// The first row is data, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// Columns with more distinct states than this are binarized at the mean.
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    pub max_states: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Working directory for score, layer and recon files.
    #[arg(long, env = "BNSL_WORKDIR", default_value = "bnsl-work")]
    pub workdir: PathBuf,
    /// In-RAM node budget per duplicate-detection table before spilling.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_ram_nodes: u64,
    /// Fixed upper bound instead of the greedy search ("inf" disables pruning).
    #[arg(long, value_parser = parse_upper)]
    pub upper: Option<f64>,
    /// Expand complete parent graphs instead of only sets that survived
    /// pruning in the order graph.
    #[arg(long)]
    pub no_parent_pruning: bool,
    /// Beam width of the greedy upper-bound search.
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// Iteration cap of the greedy upper-bound search.
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Seed for greedy tie-breaking.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expand parent graphs one variable at a time.
    #[arg(long)]
    pub sequential: bool,
}

impl SearchArgs {
    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            max_size: self.max_ram_nodes as usize,
            upper: self.upper,
            parent_pruning: !self.no_parent_pruning,
            greedy: GreedyConfig {
                beam: self.beam,
                max_iters: self.max_iters,
                seed: self.seed,
            },
            parallel: !self.sequential,
            ..LearnConfig::new(&self.workdir)
        }
    }
}

fn parse_upper(s: &str) -> Result<f64, String> {
    match s.trim() {
        "∞" | "+∞" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|e| format!("not a number: {e}"))
            .and_then(|v| {
                if v.is_nan() {
                    Err("upper bound cannot be NaN".into())
                } else {
                    Ok(v)
                }
            }),
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Network output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the network as a Graphviz DOT file.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Per-layer search statistics as CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Dataset preprocessing metadata as JSON.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Largest variable count the dynamic-programming oracle accepts.
    #[arg(long, default_value_t = DEFAULT_DP_CAP)]
    pub dp_cap: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Network file in the `learn` output format.
    #[arg(long)]
    pub network: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Working directory of a finished `learn` run.
    #[arg(long, env = "BNSL_WORKDIR", default_value = "bnsl-work")]
    pub workdir: PathBuf,
    /// Network output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub vars: usize,
    #[arg(long)]
    pub records: usize,
    #[arg(long, default_value_t = 2)]
    pub max_arity: u32,
    #[arg(long, default_value_t = 3)]
    pub max_in_degree: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Names and score of a finished run, kept next to the recon files.
#[derive(Debug, Serialize, Deserialize)]
struct RunInfo {
    names: Vec<String>,
    score: f64,
}

pub fn load_dataset(args: &InputArgs) -> anyhow::Result<(Dataset, dataset::DatasetMeta)> {
    if !args.delimiter.is_ascii() {
        bail!("delimiter must be a single ASCII character");
    }
    let raw = dataset::load_csv(&args.input, args.delimiter as u8, &args.missing, !args.no_header)?;
    Ok(dataset::preprocess(&raw, args.max_states)?)
}

/// `name <- p1 p2 ...` per variable, then `score: <value>`.
pub fn format_network(net: &Network, names: &[String]) -> String {
    let mut out = String::new();
    for (x, p) in net.parents.iter().enumerate() {
        out.push_str(&names[x]);
        out.push_str(" <-");
        for y in p.iter() {
            out.push(' ');
            out.push_str(&names[y]);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "score: {}", net.score);
    out
}

pub fn format_dot(net: &Network, names: &[String]) -> String {
    let mut out = String::from("digraph network {\n");
    for name in names {
        let _ = writeln!(out, "  \"{name}\";");
    }
    for (x, p) in net.parents.iter().enumerate() {
        for y in p.iter() {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", names[y], names[x]);
        }
    }
    out.push_str("}\n");
    out
}

/// Parses the `learn` output format against a list of variable names.
/// Variables without a line get no parents; the score line is optional.
pub fn parse_network(text: &str, names: &[String]) -> crate::Result<(Vec<VarSet>, Option<f64>)> {
    let index = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Parse(format!("unknown variable {name:?}")))
    };
    let mut parents = vec![VarSet::EMPTY; names.len()];
    let mut seen = VarSet::EMPTY;
    let mut score = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("score:") {
            let v = v.trim();
            score = Some(
                v.parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad score {v:?}", i + 1)))?,
            );
            continue;
        }
        let (child, rest) = line
            .split_once("<-")
            .ok_or_else(|| Error::Parse(format!("line {}: expected `X <- parents`", i + 1)))?;
        let x = index(child.trim())?;
        if seen.contains(x) {
            return Err(Error::Parse(format!("line {}: {} listed twice", i + 1, child.trim())));
        }
        seen = seen.with(x);
        for p in rest.split_whitespace() {
            let y = index(p)?;
            if y == x {
                return Err(Error::Parse(format!("line {}: self-loop on {p}", i + 1)));
            }
            parents[x] = parents[x].with(y);
        }
    }
    Ok((parents, score))
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_learn(args: &LearnArgs) -> anyhow::Result<i32> {
    let (data, meta) = load_dataset(&args.input)?;
    if let Some(p) = &args.meta {
        fs::write(p, serde_json::to_string_pretty(&meta)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    let cfg = args.search.learn_config();
    let out = learn(&data, &cfg)?;
    let info = RunInfo {
        names: data.names().to_vec(),
        score: out.score,
    };
    let info_path = cfg.workdir.join("run.json");
    fs::write(&info_path, serde_json::to_string_pretty(&info)?)
        .with_context(|| format!("writing {}", info_path.display()))?;

    write_or_print(args.out.as_deref(), &format_network(&out.network, data.names()))?;
    if let Some(p) = &args.dot {
        fs::write(p, format_dot(&out.network, data.names()))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.stats {
        fs::write(p, out.stats.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    eprintln!(
        "optimal score {} (upper bound {}, {:.2}s)",
        out.score, out.stats.upper, out.stats.wall_seconds
    );
    Ok(0)
}

fn agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= AGREEMENT_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

pub fn cmd_check(args: &CheckArgs) -> anyhow::Result<i32> {
    let (data, _) = load_dataset(&args.input)?;
    let out = learn(&data, &args.search.learn_config())?;
    let rescored = network_score(&out.network.parents, &data)?;
    let dp = dp_optimal(&data, args.dp_cap)?;
    println!("search:     {}", out.score);
    println!("rescored:   {rescored}");
    println!("dp oracle:  {}", dp.score);
    let mut ok = agree(out.score, dp.score) && agree(out.score, rescored);
    if data.num_vars() <= EXHAUSTIVE_CAP {
        let ex = exhaustive_optimal(&data)?;
        println!("exhaustive: {}", ex.score);
        ok &= agree(out.score, ex.score);
    }
    if ok {
        println!("agree");
        Ok(0)
    } else {
        println!("DISAGREE");
        Ok(1)
    }
}

pub fn cmd_score(args: &ScoreArgs) -> anyhow::Result<i32> {
    let (data, _) = load_dataset(&args.input)?;
    let text = fs::read_to_string(&args.network)
        .with_context(|| format!("reading {}", args.network.display()))?;
    let (parents, _) = parse_network(&text, data.names())?;
    println!("{}", network_score(&parents, &data)?);
    Ok(0)
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> anyhow::Result<i32> {
    let info_path = args.workdir.join("run.json");
    let info: RunInfo = serde_json::from_str(
        &fs::read_to_string(&info_path)
            .with_context(|| format!("reading {}", info_path.display()))?,
    )?;
    let mut net = reconstruct(&WorkDir::new(&args.workdir), info.names.len())?;
    net.score = info.score;
    write_or_print(args.out.as_deref(), &format_network(&net, &info.names))?;
    Ok(0)
}

pub fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<i32> {
    let spec = SynthSpec {
        max_arity: args.max_arity,
        max_in_degree: args.max_in_degree,
        ..SynthSpec::new(args.vars, args.records, args.seed)
    };
    let s = synth::sample(&spec)?;
    write_or_print(args.out.as_deref(), &synth::to_csv(&s.data))?;
    Ok(0)
}

pub fn run(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Check(a) => cmd_check(a),
        Command::Score(a) => cmd_score(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

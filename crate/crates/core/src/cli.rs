//! Command-line front end.
//!
//! Parameters come from flags and, optionally, a flat JSON object given with
//! `--config`; flags win. Every output starts with the master seed, the
//! SHA-256 of the resolved configuration and the crate version, as `#`
//! comment lines for CSV or a `meta` object for JSON. Thread count and output
//! paths are not part of the configuration hash.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 check
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{covariance_pair, mzone_escape_frequency, zone_overlap, CovarianceParams};
use crate::dynamics::exact::oracle_check;
use crate::dynamics::{dominance_check, Model};
use crate::env::ConstraintDist;
use crate::error::Error;
use crate::estimate::{
    decay_fit, simon_lieb_check, susceptibility, theta_table, threshold_scan, verify_block_combinatorics,
    DecayFamily, ThetaRow, ThetaTable,
};
use crate::lattice::Vertex;
use crate::osss::{influence_table, osss_from_reports, revealment_for};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Parser, Debug)]
#[command(name = "cdpre", version, about = "Constrained-degree percolation in a random environment")]
struct Cli {
    /// JSON file with parameters for the subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (defaults to standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Connection probabilities θ_n(t) for a list of n.
    Theta(ThetaArgs),
    /// Edgewise violations of the CDPRE <= intermediate <= Bernoulli coupling.
    Dominance(DominanceArgs),
    /// Monte Carlo against exact enumeration on the bundled small graphs.
    OracleCheck(OracleArgs),
    /// Escape frequency of the decreasing-clock zone of the origin.
    Mzone(MzoneArgs),
    /// Covariance of a near and a far connection event.
    Covariance(CovarianceArgs),
    /// Revealments, influences and the OSSS inequality for T_k.
    Osss(OsssArgs),
    /// θ_n(t) along a time grid with the 1/2 crossing.
    Scan(ScanArgs),
    /// Block counts and the bottom-subset detector.
    Blocks(BlocksArgs),
    /// Decay fit, and optionally the Simon-Lieb leading term, of a theta CSV.
    Fit(FitArgs),
    /// Truncated mean cluster size of the origin.
    Susceptibility(SusceptibilityArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ThetaArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    /// Constraint law as four weights for κ = 0,1,2,3.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    /// Strictly increasing list of radii.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<Vec<u64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    /// Extra rings around the largest box (default 8 for cdpre, else 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pad: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DominanceArgs {
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    /// Times to compare at.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<Vec<f64>>,
    /// Window radius; the window is the block-aligned cover of B(n).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Accept ρ_0 > 0, where the first inequality of the chain can fail.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    allow_rho0: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OracleArgs {
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MzoneArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CovarianceArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    /// Vertex on ∂B(2m) as `x1,x2` (default `2m,0`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    w: Option<Vec<i64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pad: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OsssArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Record revealments of T_j for every j in 1..=n, not only k.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    all_k: bool,
    /// CSV file for the revealment table.
    #[arg(long)]
    #[serde(skip)]
    delta_out: Option<PathBuf>,
    /// CSV file for the influence table.
    #[arg(long)]
    #[serde(skip)]
    influence_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ScanArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    /// Strictly increasing times (default 0.30, 0.31, ..., 0.70).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pad: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BlocksArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FitArgs {
    /// Theta table CSV as written by `theta`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<DecayFamily>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    /// Inclusive radius range `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<Vec<u64>>,
    /// Also compare θ̂_n with the Simon-Lieb product term at this n.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    simon_lieb: Option<u64>,
    /// Bootstrap stage k of the scale ⌊n^{k/(k+1)}⌋.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<u32>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SusceptibilityArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    box_n: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidDistribution(_)
            | Error::InvalidTime(_)
            | Error::InvalidClock(_)
            | Error::InvalidParameter(_)
            | Error::RegionTooSmall(_)
            | Error::MissingScale(_)
            | Error::InsufficientRows(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn required<T>(value: Option<T>, name: &str) -> std::result::Result<T, Failure> {
    value.ok_or_else(|| config_err(format!("missing parameter `{name}`")))
}

fn positive(reps: u64) -> std::result::Result<u64, Failure> {
    if reps == 0 {
        return Err(config_err("replicates must be at least 1"));
    }
    Ok(reps)
}

fn dist_from(rho: Option<&Vec<f64>>) -> std::result::Result<Option<ConstraintDist>, Failure> {
    rho.map(|v| {
        let arr: [f64; 4] = v
            .as_slice()
            .try_into()
            .map_err(|_| config_err(format!("rho needs 4 weights, got {}", v.len())))?;
        ConstraintDist::new(arr).map_err(Failure::from)
    })
    .transpose()
}

fn cdpre_dist(model: Model, rho: Option<&Vec<f64>>) -> std::result::Result<Option<ConstraintDist>, Failure> {
    let dist = dist_from(rho)?;
    if model == Model::Cdpre && dist.is_none() {
        return Err(config_err("the cdpre model needs --rho"));
    }
    Ok(dist)
}

fn default_pad(model: Model) -> u64 {
    if model == Model::Cdpre {
        8
    } else {
        0
    }
}

/// Flags layered over the file's keys, then deserialized.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: &Map<String, Value>) -> std::result::Result<T, Failure> {
    let mut merged = file.clone();
    match serde_json::to_value(flags) {
        Ok(Value::Object(f)) => merged.extend(f),
        _ => return Err(Failure::Runtime("cannot serialize flags".into())),
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| config_err(format!("invalid configuration: {e}")))
}

/// Resolved parameters plus their stamp.
struct Stamp {
    command: &'static str,
    seed: u64,
    config: Value,
    hash: String,
}

impl Stamp {
    fn new(command: &'static str, seed: u64, config: Value) -> Stamp {
        let canonical = json!({ "command": command, "config": config }).to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hash = String::with_capacity(64);
        for b in digest {
            let _ = write!(hash, "{b:02x}");
        }
        Stamp { command, seed, config, hash }
    }

    fn csv_header(&self, extra: &[(&str, String)]) -> String {
        let mut s = format!(
            "# cdpre {}\n# command {}\n# seed {}\n# config_sha256 {}\n# config {}\n",
            version(),
            self.command,
            self.seed,
            self.hash,
            self.config
        );
        for (k, v) in extra {
            let _ = writeln!(s, "# {k} {v}");
        }
        s
    }

    fn json(&self, result: impl Serialize) -> std::result::Result<String, Failure> {
        let doc = json!({
            "meta": {
                "version": version(),
                "command": self.command,
                "seed": self.seed,
                "config_sha256": self.hash,
                "config": self.config,
            },
            "result": result,
        });
        serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| Failure::Runtime(e.to_string()))
    }
}

fn emit(out: Option<&Path>, text: &str) -> std::result::Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_into(header: String, body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> std::result::Result<String, Failure> {
    let mut buf = header.into_bytes();
    body(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Failure::Runtime(e.to_string()))
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("check failed");
            EXIT_CHECK
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("runtime error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cli: Cli) -> Outcome {
    let mut file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(config_err("config file must hold a JSON object")),
                Err(e) => return Err(config_err(format!("{}: {e}", p.display()))),
            }
        }
        None => Map::new(),
    };
    let threads = match (cli.threads, file.remove("threads")) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(
            v.as_u64().ok_or_else(|| config_err("`threads` must be a non-negative integer"))? as usize,
        ),
        (None, None) => None,
    };
    let out = match (cli.out, file.remove("out")) {
        (Some(p), _) => Some(p),
        (None, Some(Value::String(s))) => Some(PathBuf::from(s)),
        (None, Some(_)) => return Err(config_err("`out` must be a string")),
        (None, None) => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = out.as_deref();
    pool.install(|| match &cli.command {
        Command::Theta(a) => cmd_theta(merge(a, &file)?, out),
        Command::Dominance(a) => cmd_dominance(merge(a, &file)?, out),
        Command::OracleCheck(a) => cmd_oracle(merge(a, &file)?, out),
        Command::Mzone(a) => cmd_mzone(merge(a, &file)?, out),
        Command::Covariance(a) => cmd_covariance(merge(a, &file)?, out),
        Command::Osss(a) => {
            let mut merged: OsssArgs = merge(a, &file)?;
            merged.delta_out = a.delta_out.clone();
            merged.influence_out = a.influence_out.clone();
            cmd_osss(merged, out)
        }
        Command::Scan(a) => cmd_scan(merge(a, &file)?, out),
        Command::Blocks(a) => cmd_blocks(merge(a, &file)?, out),
        Command::Fit(a) => cmd_fit(merge(a, &file)?, out),
        Command::Susceptibility(a) => cmd_susceptibility(merge(a, &file)?, out),
    })
}

fn cmd_theta(a: ThetaArgs, out: Option<&Path>) -> Outcome {
    let model = a.model.unwrap_or(Model::Bernoulli);
    let dist = cdpre_dist(model, a.rho.as_ref())?;
    let t = required(a.t, "t")?;
    let n = required(a.n, "n")?;
    let reps = positive(a.reps.unwrap_or(1000))?;
    let pad = a.pad.unwrap_or(default_pad(model));
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new(
        "theta",
        seed,
        json!({ "model": model, "rho": dist, "t": t, "n": n, "reps": reps, "pad": pad, "seed": seed }),
    );
    let table = theta_table(model, dist.as_ref(), t, &n, reps, pad, seed)?;
    emit(out, &csv_into(stamp.csv_header(&[]), |b| table.write_csv(b))?)?;
    Ok(true)
}

fn cmd_dominance(a: DominanceArgs, out: Option<&Path>) -> Outcome {
    let dist = dist_from(a.rho.as_ref())?.ok_or_else(|| config_err("missing parameter `rho`"))?;
    if !dist.rho0_is_zero() && !a.allow_rho0 {
        return Err(config_err("rho_0 > 0 breaks the coupling; pass --allow-rho0 to run anyway"));
    }
    let times = a.t.unwrap_or_else(|| vec![0.3, 0.6, 0.9]);
    let n = a.n.unwrap_or(16);
    let reps = positive(a.reps.unwrap_or(10_000))?;
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new(
        "dominance",
        seed,
        json!({ "rho": dist, "t": times, "n": n, "reps": reps, "seed": seed, "allow_rho0": a.allow_rho0 }),
    );
    let rows = dominance_check(&dist, n, &times, reps, seed)?;
    let text = csv_into(stamp.csv_header(&[]), |b| {
        writeln!(b, "t,replicates,edges_per_replicate,cdpre_above_intermediate,intermediate_above_bernoulli")?;
        for r in &rows {
            writeln!(
                b,
                "{},{},{},{},{}",
                r.t,
                r.replicates,
                r.edges_per_replicate,
                r.violations.cdpre_above_intermediate,
                r.violations.intermediate_above_bernoulli
            )?;
        }
        Ok(())
    })?;
    emit(out, &text)?;
    Ok(rows.iter().all(|r| r.violations.total() == 0))
}

fn cmd_oracle(a: OracleArgs, out: Option<&Path>) -> Outcome {
    let times = a.t.unwrap_or_else(|| vec![0.2, 0.5, 0.8]);
    let reps = positive(a.reps.unwrap_or(100_000))?;
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new("oracle-check", seed, json!({ "t": times, "reps": reps, "seed": seed }));
    let rows = oracle_check(&times, reps, seed)?;
    let text = csv_into(stamp.csv_header(&[]), |b| {
        writeln!(b, "fixture,event,t,exact,estimate,sigma,replicates,pass")?;
        for r in &rows {
            writeln!(b, "{},{},{},{},{},{},{},{}", r.fixture, r.event, r.t, r.exact, r.estimate, r.sigma, r.replicates, r.pass)?;
        }
        Ok(())
    })?;
    emit(out, &text)?;
    Ok(rows.iter().all(|r| r.pass))
}

fn cmd_mzone(a: MzoneArgs, out: Option<&Path>) -> Outcome {
    let m = required(a.m, "m")?;
    let t = a.t.unwrap_or(1.0);
    let reps = positive(a.reps.unwrap_or(10_000))?;
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new("mzone", seed, json!({ "m": m, "t": t, "reps": reps, "seed": seed }));
    let e = mzone_escape_frequency(m, t, reps, seed)?;
    let text = csv_into(stamp.csv_header(&[]), |b| {
        writeln!(b, "m,n,t,estimate,stderr,replicates,bound,seed")?;
        writeln!(b, "{},{},{},{},{},{},{},{}", e.m, e.n, e.t, e.estimate, e.stderr, e.replicates, e.bound, e.seed)
    })?;
    emit(out, &text)?;
    Ok(e.estimate <= e.bound + 3.0 * (0.25 / reps as f64).sqrt())
}

fn cmd_covariance(a: CovarianceArgs, out: Option<&Path>) -> Outcome {
    let model = a.model.unwrap_or(Model::Bernoulli);
    let dist = cdpre_dist(model, a.rho.as_ref())?;
    let m = required(a.m, "m")?;
    let n = required(a.n, "n")?;
    let w = match a.w {
        Some(v) if v.len() == 2 => Vertex::new(v[0], v[1]),
        Some(v) => return Err(config_err(format!("w needs 2 coordinates, got {}", v.len()))),
        None => Vertex::new(2 * m as i64, 0),
    };
    let t = required(a.t, "t")?;
    let reps = positive(a.reps.unwrap_or(10_000))?;
    let pad = a.pad.unwrap_or(default_pad(model));
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new(
        "covariance",
        seed,
        json!({ "model": model, "rho": dist, "m": m, "n": n, "w": [w.x1, w.x2], "t": t, "reps": reps, "pad": pad, "seed": seed }),
    );
    let c = covariance_pair(&CovarianceParams { model, dist, m, n, w, t, replicates: reps, pad, seed })?;
    let z = zone_overlap(m, w, t, reps, seed)?;
    let text = csv_into(stamp.csv_header(&[]), |b| {
        writeln!(
            b,
            "m,n,t,estimate,stderr,replicates,bound,seed,model,w_x1,w_x2,within_bound,zone_overlap,zone_escape_x2"
        )?;
        writeln!(
            b,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.m,
            c.n,
            c.t,
            c.cov_hat,
            c.stderr,
            c.replicates,
            c.bound,
            c.seed,
            c.model,
            w.x1,
            w.x2,
            c.within_bound,
            z.overlap.estimate(),
            2.0 * z.escape.estimate()
        )
    })?;
    emit(out, &text)?;
    Ok(true)
}

fn cmd_osss(a: OsssArgs, out: Option<&Path>) -> Outcome {
    let t = a.t.unwrap_or(0.45);
    let n = a.n.unwrap_or(8);
    let k = a.k.unwrap_or(4);
    let reps = positive(a.reps.unwrap_or(10_000))?;
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new(
        "osss",
        seed,
        json!({ "t": t, "n": n, "k": k, "reps": reps, "seed": seed, "all_k": a.all_k }),
    );
    let ks: Vec<u64> = if a.all_k { (1..=n).collect() } else { vec![k] };
    let reveal = revealment_for(t, n, &ks, reps, seed)?;
    let infl = influence_table(t, n, reps, seed)?;
    let check = osss_from_reports(&reveal, &infl, k)?;
    if let Some(p) = &a.delta_out {
        fs::write(p, csv_into(stamp.csv_header(&[]), |b| reveal.write_csv(b))?)?;
    }
    if let Some(p) = &a.influence_out {
        fs::write(p, csv_into(stamp.csv_header(&[]), |b| infl.write_csv(b))?)?;
    }
    let summary = json!({
        "osss": check,
        "revealment": {
            "ks": reveal.ks,
            "theta_counts": reveal.theta_counts,
            "s_n": reveal.s_n,
            "beta_hat": reveal.beta_hat,
            "determination_mismatches": reveal.determination_mismatches,
            "chain_violations": reveal.chain_violations,
            "chain_excess": reveal.chain_excess,
        },
        "influence": { "resamples_per_replicate": infl.resamples_per_replicate },
    });
    emit(out, &stamp.json(summary)?)?;
    Ok(check.holds && check.determination_mismatches == 0 && reveal.chain_violations == 0)
}

fn cmd_scan(a: ScanArgs, out: Option<&Path>) -> Outcome {
    let model = a.model.unwrap_or(Model::Bernoulli);
    let dist = cdpre_dist(model, a.rho.as_ref())?;
    let n = required(a.n, "n")?;
    let grid = a.t_grid.unwrap_or_else(|| (30..=70).map(|i| i as f64 / 100.0).collect());
    let reps = positive(a.reps.unwrap_or(1000))?;
    let pad = a.pad.unwrap_or(default_pad(model));
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new(
        "scan",
        seed,
        json!({ "model": model, "rho": dist, "n": n, "t_grid": grid, "reps": reps, "pad": pad, "seed": seed }),
    );
    let scan = threshold_scan(model, dist.as_ref(), n, &grid, reps, pad, seed)?;
    let crossing = scan.crossing.map_or_else(|| "none".to_string(), |c| c.to_string());
    emit(out, &csv_into(stamp.csv_header(&[("crossing", crossing)]), |b| scan.write_csv(b))?)?;
    Ok(true)
}

fn cmd_blocks(a: BlocksArgs, out: Option<&Path>) -> Outcome {
    let reps = positive(a.reps.unwrap_or(1_000_000))?;
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new("blocks", seed, json!({ "reps": reps, "seed": seed }));
    let r = verify_block_combinatorics(reps, seed)?;
    // 0.001 at 10^6 draws, scaled with the standard error
    let tolerance = 0.001 * (1e6 / reps as f64).sqrt();
    let ok = r.block_edge_count == 49
        && r.a_count == 6
        && r.p_c_denominator == 13_983_816
        && (r.reduced_analog.estimate() - r.reduced_analog_exact).abs() <= tolerance
        && r.degenerate_analog.successes == reps;
    emit(out, &stamp.json(json!({ "report": r, "tolerance": tolerance, "pass": ok }))?)?;
    Ok(ok)
}

/// Reads a theta CSV, skipping `#` lines and the header.
fn read_theta_csv(path: &Path) -> std::result::Result<ThetaTable, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, what: &str| config_err(format!("{}:{line}: {what}", path.display()));
    let mut model = None;
    let mut t = 0.0;
    let mut seed = 0;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("model,") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 8 {
            return Err(bad(i + 1, "expected at least 8 columns"));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let int = |j: usize| f[j].parse::<u64>().map_err(|_| bad(i + 1, "bad integer"));
        model = Some(f[0].parse::<Model>().map_err(|_| bad(i + 1, "bad model"))?);
        t = num(1)?;
        seed = int(7)?;
        let replicates = int(5)?;
        let theta_hat = num(3)?;
        rows.push(ThetaRow {
            n: int(2)?,
            theta_hat,
            stderr: num(4)?,
            successes: (theta_hat * replicates as f64).round() as u64,
            replicates,
            pad: int(6)?,
            zero_bound: f.get(8).and_then(|s| s.parse().ok()),
        });
    }
    let model = model.ok_or_else(|| config_err(format!("{}: no rows", path.display())))?;
    Ok(ThetaTable { model, t, seed, rows })
}

fn cmd_fit(a: FitArgs, out: Option<&Path>) -> Outcome {
    let input = required(a.input, "input")?;
    let family = a.family.unwrap_or(DecayFamily::PureExponential);
    let epsilon = a.epsilon.unwrap_or(0.0);
    let range = match a.range.as_deref() {
        None => None,
        Some([lo, hi]) => Some((*lo, *hi)),
        Some(_) => return Err(config_err("range needs two values lo,hi")),
    };
    let stage = a.stage.unwrap_or(1);
    let table = read_theta_csv(&input)?;
    let stamp = Stamp::new(
        "fit",
        table.seed,
        json!({
            "input": input.display().to_string(),
            "rows": table.rows,
            "family": family,
            "epsilon": epsilon,
            "range": range,
            "simon_lieb": a.simon_lieb,
            "stage": stage,
        }),
    );
    let fit = decay_fit(&table, family, epsilon, range)?;
    let sl = a.simon_lieb.map(|n| simon_lieb_check(&table, n, stage)).transpose()?;
    emit(out, &stamp.json(json!({ "fit": fit, "simon_lieb": sl }))?)?;
    Ok(true)
}

fn cmd_susceptibility(a: SusceptibilityArgs, out: Option<&Path>) -> Outcome {
    let model = a.model.unwrap_or(Model::Bernoulli);
    let dist = cdpre_dist(model, a.rho.as_ref())?;
    let t = required(a.t, "t")?;
    let box_n = required(a.box_n, "box_n")?;
    let reps = positive(a.reps.unwrap_or(1000))?;
    let seed = a.seed.unwrap_or(0);
    let stamp = Stamp::new(
        "susceptibility",
        seed,
        json!({ "model": model, "rho": dist, "t": t, "box_n": box_n, "reps": reps, "seed": seed }),
    );
    let s = susceptibility(model, dist.as_ref(), t, box_n, reps, seed)?;
    let text = csv_into(stamp.csv_header(&[]), |b| {
        writeln!(b, "model,t,box_n,truncated_mean,stderr,replicates,seed")?;
        writeln!(b, "{},{},{},{},{},{},{}", s.model, s.t, s.box_n, s.truncated_mean, s.stderr, s.replicates, s.seed)
    })?;
    emit(out, &text)?;
    Ok(true)
}

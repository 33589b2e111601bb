//! Command-line front end.
//!
//! `run` applies a named method to a CSV of p-values, `simulate` runs a
//! scenario file through the replication engine, and `privacy` converts
//! between budget parameterisations. Output goes to the given writers so the
//! whole front end can be driven in-process.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::methods::{run_method, Method, MethodSettings, MethodOutcome};
use crate::privacy::{calibrate_laplace_scales, calibrate_peeling_scales, experiment_mu, gdp_to_approx_dp_delta};
use crate::pvalues::PValues;
use crate::simulate::{run_replications, SimScenario};
use crate::stream::RandomStream;
use crate::thresholds::gaussian_mu;
use crate::transform::NoiseKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sup", version, about = "Private multiple testing with noisy p-values")]
pub struct Cli {
    /// Worker threads for the replication engine (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random draw. `simulate` falls back to the scenario's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one procedure on a p-value file.
    Run(RunArgs),
    /// Run a simulation scenario and write its metrics table.
    Simulate(SimulateArgs),
    /// Privacy budget conversions.
    #[command(subcommand)]
    Privacy(PrivacyCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Laplace,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::Laplace => NoiseKind::Laplace,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// CSV with a `p` column and optional `id` column, or a headerless column of p-values.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination for the `id,p,noisy_p,rejected` table.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub method: String,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// GDP budget; overrides the (eps, delta) conversion for Gaussian noise.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.001)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    pub noise: NoiseArg,
    /// Sensitivity of the transformed p-values (η for the DP baselines).
    #[arg(long, default_value_t = 1e-4)]
    pub gs: f64,
    /// Number of peeled indices for the fixed-peeling methods.
    #[arg(long, default_value_t = 200)]
    pub m_peel: usize,
    #[arg(long)]
    pub m_tilde: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    /// Share of the budget spent on the null-proportion estimate.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Truncation level for the DP baselines (default 0.5α/m).
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Use the scenario's full-size `full_m`/`full_m1` design.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Subcommand)]
pub enum PrivacyCommand {
    /// δ(ε) of a μ-GDP mechanism.
    MuToDelta {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        eps: f64,
    },
    /// μ = 4ε/√(10 ln(1/δ)).
    EpsToMu {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Noise scales of the inference row and the peeling rows.
    Calibrate {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        gs: f64,
        #[arg(long)]
        m_peel: usize,
        #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
        noise: NoiseArg,
    },
}

/// Failure of a command, already classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoRoot(_) => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

type CmdResult = Result<(), CliError>;

/// Parses `args`, runs the command and returns the exit code. Messages go to
/// `out`, errors to `err`.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CmdResult {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            // the pool needs a Send closure, so collect output and copy it after
            let mut buf = Vec::new();
            let res = pool.install(|| execute(cli.command, cli.seed, &mut buf));
            out.write_all(&buf).map_err(|e| CliError::Internal(e.to_string()))?;
            res
        }
        None => execute(cli.command, cli.seed, out),
    }
}

fn execute(command: Command, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Run(args) => cmd_run(&args, seed.unwrap_or(0), out),
        Command::Simulate(args) => cmd_simulate(&args, seed, out),
        Command::Privacy(p) => cmd_privacy(&p, out),
    }
}

/// p-values read from a CSV file, with their ids.
#[derive(Clone, Debug, PartialEq)]
pub struct InputTable {
    pub ids: Vec<String>,
    pub p: Vec<f64>,
}

fn looks_numeric(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok()
}

/// Reads `id,p` (any column order, extra columns ignored) or a headerless
/// file of one or two columns (`p` or `id,p`). Missing ids become the
/// zero-based row index.
pub fn read_pvalue_csv<R: Read>(reader: R) -> Result<InputTable, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let first = match records.next() {
        None => return Err(CliError::Usage("no p-values".into())),
        Some(r) => r.map_err(csv_error)?,
    };
    let header = first.iter().any(|h| h == "p" || h == "id") || !first.iter().next_back().is_some_and(looks_numeric);
    let (id_col, p_col, width) = if header {
        let p_col = first
            .iter()
            .position(|h| h == "p")
            .ok_or_else(|| CliError::Usage("line 1: header has no `p` column".into()))?;
        (first.iter().position(|h| h == "id"), p_col, first.len())
    } else {
        match first.len() {
            1 => (None, 0, 1),
            2 => (Some(0), 1, 2),
            n => return Err(CliError::Usage(format!("line 1: expected 1 or 2 columns without a header, found {n}"))),
        }
    };
    let mut table = InputTable { ids: Vec::new(), p: Vec::new() };
    let mut push = |rec: &csv::StringRecord, line: u64| -> CmdResult {
        if rec.len() == 1 && rec[0].is_empty() {
            return Ok(());
        }
        if rec.len() != width {
            return Err(CliError::Usage(format!("line {line}: expected {width} fields, found {}", rec.len())));
        }
        let raw = &rec[p_col];
        let p: f64 = raw
            .parse()
            .map_err(|_| CliError::Usage(format!("line {line}: `{raw}` is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Usage(format!("line {line}: p-value {raw} is outside [0, 1]")));
        }
        let id = match id_col {
            Some(c) => rec[c].to_string(),
            None => table.p.len().to_string(),
        };
        table.ids.push(id);
        table.p.push(p);
        Ok(())
    };
    if !header {
        push(&first, 1)?;
    }
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        push(&rec, line)?;
    }
    if table.p.is_empty() {
        return Err(CliError::Usage("no p-values".into()));
    }
    Ok(table)
}

fn csv_error(e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match (line, e.kind()) {
        (_, csv::ErrorKind::Io(_)) => CliError::Internal(e.to_string()),
        (Some(l), _) => CliError::Usage(format!("line {l}: {e}")),
        (None, _) => CliError::Usage(e.to_string()),
    }
}

fn run_settings(args: &RunArgs) -> MethodSettings {
    let mut s = MethodSettings::new(args.alpha);
    s.gs = args.gs;
    s.mu = args.mu;
    s.eps = args.eps;
    s.delta = args.delta;
    s.noise = args.noise.into();
    s.m_peel = args.m_peel;
    s.nu = args.nu;
    let a = &mut s.adaptive;
    a.m_tilde = args.m_tilde.unwrap_or(a.m_tilde);
    a.tau = args.tau.unwrap_or(a.tau);
    a.c0 = args.c0.unwrap_or(a.c0);
    a.rho = args.rho.unwrap_or(a.rho);
    a.c = args.c.unwrap_or(a.c);
    s
}

/// `id,p,noisy_p,rejected` rows; `noisy_p` is empty for unreleased indices.
pub fn write_run_table<W: Write>(w: W, table: &InputTable, outcome: &MethodOutcome) -> csv::Result<()> {
    let mut noisy = vec![None; table.p.len()];
    for &(j, v) in &outcome.released {
        noisy[j] = Some(v);
    }
    let mut rejected = vec![false; table.p.len()];
    for &j in &outcome.rejected {
        rejected[j] = true;
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "p", "noisy_p", "rejected"])?;
    for j in 0..table.p.len() {
        let noisy_p = noisy[j].map(|v| v.to_string()).unwrap_or_default();
        wtr.write_record([table.ids[j].as_str(), &table.p[j].to_string(), &noisy_p, if rejected[j] { "1" } else { "0" }])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let method: Method = args.method.parse()?;
    let file = File::open(&args.input).map_err(|e| CliError::Usage(format!("{}: {e}", args.input.display())))?;
    let table = read_pvalue_csv(file)?;
    let pvals = PValues::new(table.p.clone())?;
    let settings = run_settings(args);
    let outcome = run_method(method, &pvals, &settings, &RandomStream::new(seed, 0))?;

    let f = File::create(&args.output).map_err(|e| io_err(&args.output, e))?;
    write_run_table(BufWriter::new(f), &table, &outcome).map_err(|e| CliError::Internal(e.to_string()))?;

    let mut lines = vec![
        format!("method={method}"),
        format!("m={}", pvals.len()),
        format!("alpha={}", settings.alpha),
        format!("rejections={}", outcome.rejected.len()),
    ];
    if let Some(j) = outcome.j_star {
        lines.push(format!("j_star={j}"));
    }
    if let Some(mp) = outcome.m_peel {
        lines.push(format!("m_peel={mp}"));
    }
    if let Some(pi0) = outcome.pi0_hat {
        lines.push(format!("pi0_hat={pi0}"));
    }
    match method {
        Method::Bh | Method::By | Method::Bonf | Method::Holm => {}
        Method::DpBh | Method::DpBonf => {
            lines.push(format!("eps={}", settings.eps));
            lines.push(format!("delta={}", settings.delta));
            lines.push(format!("eta={}", settings.gs));
        }
        _ => {
            let cfg = settings.test_config(method)?.expect("SUP method has a test configuration");
            lines.push(format!("noise={}", if cfg.noise == NoiseKind::Gaussian { "gaussian" } else { "laplace" }));
            if cfg.noise == NoiseKind::Gaussian {
                lines.push(format!("mu={}", gaussian_mu(cfg.budget)?));
            } else {
                lines.push(format!("eps={}", settings.eps));
                lines.push(format!("delta={}", settings.delta));
            }
            lines.push(format!("gs={}", settings.gs));
        }
    }
    lines.push(format!("seed={seed}"));
    for l in lines {
        writeln!(out, "{l}").map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let mut scenario = SimScenario::from_path(&args.scenario)?;
    if args.full {
        scenario = scenario.full_scale();
    }
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let table = run_replications(&scenario)?;
    let mut f = File::create(&args.output).map_err(|e| io_err(&args.output, e))?;
    f.write_all(table.to_csv().as_bytes()).map_err(|e| io_err(&args.output, e))?;
    writeln!(out, "methods={}\nm={}\nm1={}\nreps={}\nseed={}", scenario.methods.len(), scenario.m, scenario.m1, table.reps, scenario.seed)
        .map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_privacy(cmd: &PrivacyCommand, out: &mut dyn Write) -> CmdResult {
    let text = match *cmd {
        PrivacyCommand::MuToDelta { mu, eps } => format!("delta={}\n", gdp_to_approx_dp_delta(mu, eps)?),
        PrivacyCommand::EpsToMu { eps, delta } => format!("mu={}\n", experiment_mu(eps, delta)?),
        PrivacyCommand::Calibrate { mu, eps, delta, gs, m_peel, noise } => {
            let scales = match (noise, mu, eps, delta) {
                (NoiseArg::Gaussian, Some(mu), None, None) => calibrate_peeling_scales(mu, gs, m_peel)?,
                (NoiseArg::Gaussian, None, Some(e), Some(d)) => calibrate_peeling_scales(experiment_mu(e, d)?, gs, m_peel)?,
                (NoiseArg::Laplace, None, Some(e), Some(d)) => calibrate_laplace_scales(e, d, gs, m_peel)?,
                (NoiseArg::Gaussian, ..) => {
                    return Err(CliError::Usage("gaussian calibration needs either --mu or both --eps and --delta".into()))
                }
                (NoiseArg::Laplace, ..) => {
                    return Err(CliError::Usage("laplace calibration needs --eps and --delta and no --mu".into()))
                }
            };
            format!("sigma0={}\nsigma1={}\n", scales.sigma0, scales.sigma1)
        }
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<InputTable, CliError> {
        read_pvalue_csv(s.as_bytes())
    }

    #[test]
    fn csv_shapes() {
        let t = read("id,p\na,0.01\nb,0.5\n").unwrap();
        assert_eq!(t.ids, vec!["a", "b"]);
        assert_eq!(t.p, vec![0.01, 0.5]);
        let t = read("p,id,extra\n0.2,x,1\n").unwrap();
        assert_eq!((t.ids[0].as_str(), t.p[0]), ("x", 0.2));
        let t = read("0.3\n0.02\n").unwrap();
        assert_eq!(t.ids, vec!["0", "1"]);
        let t = read("g7,0.3\ng9,1\n").unwrap();
        assert_eq!(t.ids, vec!["g7", "g9"]);
        assert_eq!(read("p\n0.1\n\n0.2\n").unwrap().p, vec![0.1, 0.2]);
    }

    #[test]
    fn csv_errors_name_the_line() {
        for (input, needle) in [
            ("", "no p-values"),
            ("id,p\n", "no p-values"),
            ("id,p\na,0.1\nb,zz\n", "line 3"),
            ("p\n0.1\n1.5\n", "line 3"),
            ("0.1\n0.2,0.3\n", "line 2"),
            ("id,q\na,0.1\n", "line 1"),
        ] {
            match read(input) {
                Err(CliError::Usage(m)) => assert!(m.contains(needle), "{input:?}: {m}"),
                other => panic!("{input:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn privacy_lines() {
        let mut out = Vec::new();
        assert_eq!(run_cli(["sup", "privacy", "eps-to-mu", "--eps", "0.5", "--delta", "0.001"], &mut out, &mut Vec::new()), 0);
        let text = String::from_utf8(out).unwrap();
        let mu: f64 = text.strip_prefix("mu=").unwrap().trim().parse().unwrap();
        assert!((mu - 0.24063651202681936).abs() < 1e-15);
        let mut err = Vec::new();
        assert_eq!(run_cli(["sup", "privacy", "calibrate", "--gs", "1e-4", "--m-peel", "5"], &mut Vec::new(), &mut err), 2);
        assert_eq!(run_cli(["sup", "privacy", "mu-to-delta", "--mu", "-1", "--eps", "1"], &mut Vec::new(), &mut err), 2);
        assert_eq!(run_cli(["sup", "bogus"], &mut Vec::new(), &mut err), 2);
        let mut out = Vec::new();
        assert_eq!(run_cli(["sup", "--help"], &mut out, &mut Vec::new()), 0);
        assert!(!out.is_empty());
    }
}

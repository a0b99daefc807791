use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bargain_core::dynamics::{self, estimate_rate, DynamicsConfig, Trajectory};
use bargain_core::elementary::{self, ElementaryInstance, ElementarySpec, SpecError};
use bargain_core::graph::{check_outcome, Market, ProfitState};
use bargain_core::io::{trajectory_json, write_trajectory_csv, IoError, NetworkDocument};
use bargain_core::linear_model::{default_linearization_horizon, detect_linearization};
use bargain_core::scan::{random_reduced, reduced_limit, run_scan, write_scan_csv, ScanError, ScanPlan};
use bargain_core::spectral::spectrum_for;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "bargain", version, about = "Edge-balanced bargaining dynamics on exchange networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form spectrum, rate and time of an elementary graph.
    Spectrum {
        /// e.g. "path:n=8", "cycle:n=6", "blossom:n=3,m=4", "bicycle:l=3,n=2,m=5"
        spec: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the dynamics on an elementary graph or a network file.
    Simulate {
        /// Spec string or path to a network JSON document.
        input: String,
        /// zeros, ones, random, or a JSON file with one value per node.
        #[arg(long, default_value = "zeros")]
        x0: String,
        #[command(flatten)]
        run: RunArgs,
        /// Trajectory output (full node state per step).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Summary JSON; printed to stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Convergence-time scan over one size parameter.
    Scan {
        /// Spec with the scanned parameter as '*', e.g. "blossom:n=2,m=*".
        template: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
        /// Row output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Fit summary JSON; printed to stderr when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Check that an outcome is stable and balanced (exit 1 if not).
    Verify {
        /// Network JSON document; its "x" field is the outcome unless --outcome is given.
        network: PathBuf,
        /// JSON array with one value per node.
        #[arg(long)]
        outcome: Option<PathBuf>,
        #[arg(long, default_value_t = bargain_core::graph::DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-12)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn config(&self) -> Result<DynamicsConfig, CliError> {
        DynamicsConfig::new(self.alpha, self.epsilon, self.horizon).map_err(|e| CliError::Input(e.to_string()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum CliError {
    /// Exit 1: an outcome failed verification.
    Verification,
    /// Exit 2: unreadable or malformed input.
    Input(String),
    /// Exit 3: well-formed input that violates an invariant.
    Invariant(String),
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Parse { .. } => CliError::Input(e.to_string()),
            SpecError::SpecInvariantViolation { .. } => CliError::Invariant(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Invalid(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Spec(s) => s.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => io::stdout().write_all(bytes).map_err(|e| CliError::Input(e.to_string())),
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("plain JSON value");
    s.push('\n');
    s.into_bytes()
}

fn parse_spec(text: &str) -> Result<ElementarySpec, CliError> {
    let spec: ElementarySpec = text.parse()?;
    spec.check()?;
    Ok(spec)
}

fn cmd_spectrum(spec: &str, alpha: f64, out: Option<&Path>) -> Result<(), CliError> {
    let spec = parse_spec(spec)?;
    let report = spectrum_for(&spec, alpha).map_err(|e| CliError::Input(e.to_string()))?;
    write_out(out, &pretty(&report.to_json()))
}

fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

enum Source {
    Elementary(ElementaryInstance),
    Network(Market, Option<ProfitState>),
}

fn initial_state(source: &Source, x0: &str, seed: u64) -> Result<ProfitState, CliError> {
    let state_err = |e: String| CliError::Invariant(format!("initial state: {e}"));
    match (source, x0) {
        (Source::Elementary(inst), "zeros" | "ones" | "random") => {
            let v = match x0 {
                "zeros" => vec![0.0; inst.dim()],
                "ones" => vec![1.0; inst.dim()],
                _ => random_reduced(inst.dim(), seed),
            };
            elementary::from_reduced(inst, &v).map_err(|e| state_err(e.to_string()))
        }
        (Source::Network(market, given), "zeros") => Ok(given.clone().unwrap_or_else(|| market.zero_state())),
        (Source::Network(market, _), "ones") => {
            market.state(vec![1.0; market.node_count()]).map_err(|e| state_err(e.to_string()))
        }
        (Source::Network(market, _), "random") => {
            // each matched pair splits its weight uniformly; other nodes draw from [0, w_max]
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w_max = market.network().max_weight();
            let mut x: Vec<f64> = (0..market.node_count()).map(|_| rng.gen::<f64>() * w_max).collect();
            for &(u, v) in market.matching().pairs() {
                x[u] = rng.gen::<f64>() * market.matched_weight(u);
                x[v] = market.matched_weight(u) - x[u];
            }
            market.state(x).map_err(|e| state_err(e.to_string()))
        }
        (source, path) => {
            let market = match source {
                Source::Elementary(inst) => &inst.market,
                Source::Network(market, _) => market,
            };
            market
                .state(read_values(Path::new(path))?)
                .map_err(|e| state_err(e.to_string()))
        }
    }
}

fn cmd_simulate(
    input: &str,
    x0: &str,
    run: &RunArgs,
    out: Option<&Path>,
    format: Format,
    summary_path: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = run.config()?;
    let source = if Path::new(input).is_file() {
        let (market, x) = NetworkDocument::parse(&read(Path::new(input))?)?.into_market()?;
        Source::Network(market, x)
    } else {
        Source::Elementary(elementary::build(&parse_spec(input)?)?)
    };
    let start = initial_state(&source, x0, run.seed)?;
    let market = match &source {
        Source::Elementary(inst) => &inst.market,
        Source::Network(market, _) => market,
    };
    let traj = dynamics::simulate(market, &start, &cfg);

    if let Some(path) = out {
        let mut bytes = Vec::new();
        match format {
            Format::Csv => write_trajectory_csv(&traj.states, &mut bytes)?,
            Format::Json => bytes = pretty(&trajectory_json(&traj, &cfg)),
        }
        write_out(Some(path), &bytes)?;
    }

    let mut warnings: Vec<String> = market.warnings().iter().map(|w| format!("{w:?}")).collect();
    let mut summary = json!({
        "converged": traj.converged,
        "steps_taken": traj.steps_taken,
        "final_state": traj.last(),
        "config": cfg,
    });
    match &source {
        Source::Elementary(inst) => elementary_summary(inst, &start, &traj, &cfg, &mut summary, &mut warnings),
        Source::Network(market, _) => {
            if traj.converged {
                match estimate_rate(&traj, traj.last(), market.network().max_weight()) {
                    Ok(fit) => summary["rate"] = json!(fit),
                    Err(e) => summary["rate_error"] = json!(e.to_string()),
                }
            } else {
                summary["rate_error"] = json!("not converged; no limit to measure against");
            }
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    summary["warnings"] = json!(warnings);
    write_out(summary_path, &pretty(&summary))
}

fn elementary_summary(
    inst: &ElementaryInstance,
    start: &ProfitState,
    traj: &Trajectory,
    cfg: &DynamicsConfig,
    summary: &mut Value,
    warnings: &mut Vec<String>,
) {
    summary["spec"] = json!(inst.spec.to_string());
    let reduced: Result<Vec<Vec<f64>>, _> = traj
        .states
        .iter()
        .map(|s| elementary::to_reduced(inst, &inst.market.state(s.clone()).expect("simulated states are finite")))
        .collect();
    let reduced = match reduced {
        Ok(r) => r,
        Err(e) => {
            warnings.push(format!("reduced export suppressed: {e}"));
            summary["reduced_final_state"] = Value::Null;
            return;
        }
    };
    summary["reduced_final_state"] = json!(reduced.last());
    let reduced = Trajectory {
        states: reduced,
        converged: traj.converged,
        steps_taken: traj.steps_taken,
    };
    match reduced_limit(inst, &reduced.states[0], traj.last(), cfg.alpha) {
        Some(x_star) => match estimate_rate(&reduced, &x_star, 1.0) {
            Ok(fit) => summary["rate"] = json!(fit),
            Err(e) => summary["rate_error"] = json!(e.to_string()),
        },
        None => summary["rate_error"] = json!("model has no unique fixed point"),
    }
    if !inst.gateways.is_empty() {
        let lin_cfg = DynamicsConfig {
            horizon: default_linearization_horizon(&inst.spec),
            ..*cfg
        };
        summary["linearization"] = match detect_linearization(inst, start, &lin_cfg) {
            Ok(report) => json!(report),
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
}

fn cmd_scan(
    template: &str,
    sizes: Vec<usize>,
    run: &RunArgs,
    out: Option<&Path>,
    format: Format,
    summary_path: Option<&Path>,
) -> Result<(), CliError> {
    let plan = ScanPlan::new(template, sizes, run.config()?, run.seed)?;
    let summary = run_scan(&plan)?;
    let mut bytes = Vec::new();
    match format {
        Format::Csv => write_scan_csv(&summary, &mut bytes)?,
        Format::Json => bytes = pretty(&json!(summary.rows)),
    }
    write_out(out, &bytes)?;
    let fit = json!({
        "template": summary.template,
        "param": summary.param,
        "alpha": summary.alpha,
        "seed": summary.seed,
        "exponent": summary.exponent,
        "prefactor": summary.prefactor,
        "ratio_empirical_asymptotic": summary.rows.iter().map(|r| r.ratio_empirical()).collect::<Vec<_>>(),
        "non_convergent": summary.rows.iter().filter(|r| r.flag != bargain_core::scan::RowFlag::Ok).map(|r| r.spec.clone()).collect::<Vec<_>>(),
    });
    match summary_path {
        Some(p) => write_out(Some(p), &pretty(&fit)),
        None => {
            eprint!("{}", String::from_utf8(pretty(&fit)).expect("JSON is UTF-8"));
            Ok(())
        }
    }
}

fn cmd_verify(network: &Path, outcome: Option<&Path>, tol: f64, out: Option<&Path>) -> Result<(), CliError> {
    let (market, x) = NetworkDocument::parse(&read(network)?)?.into_market()?;
    let x = match outcome {
        Some(p) => market
            .state(read_values(p)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => x.ok_or_else(|| CliError::Input("no outcome: add \"x\" to the network or pass --outcome".into()))?,
    };
    let report = check_outcome(&market, &x, tol);
    write_out(out, &pretty(&json!(report)))?;
    if report.stable && report.balanced {
        Ok(())
    } else {
        Err(CliError::Verification)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spectrum { spec, alpha, out } => cmd_spectrum(&spec, alpha, out.as_deref()),
        Command::Simulate {
            input,
            x0,
            run,
            out,
            format,
            summary,
        } => cmd_simulate(&input, &x0, &run, out.as_deref(), format, summary.as_deref()),
        Command::Scan {
            template,
            sizes,
            run,
            out,
            format,
            summary,
        } => cmd_scan(&template, sizes, &run, out.as_deref(), format, summary.as_deref()),
        Command::Verify {
            network,
            outcome,
            tol,
            out,
        } => cmd_verify(&network, outcome.as_deref(), tol, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Verification) => ExitCode::from(1),
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

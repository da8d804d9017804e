//! The `sisal` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input or configuration,
//! 3 internal inconsistency.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sisal_core::modelio::{self, load_image, load_model};
use sisal_core::selectinf::line_for;
use sisal_core::{infer, ClassMode, Error, GraphSpec, TestConfig, TestKind};

use crate::experiment::{run_fpr, run_tpr, ExperimentConfig};
use crate::fixtures::fixture_model;
use crate::gen::{null_pair_from, trial_rng};
use crate::oracle::{grid_points, oracle_verdicts};

#[derive(Debug, Parser)]
#[command(name = "sisal", version, about = "Selective p-values for CAM salient regions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test the salient region of one query/reference pair.
    Infer(InferArgs),
    /// Rejection rates on null image pairs.
    SimulateFpr(SimArgs),
    /// Rejection rates on image pairs with a planted signal.
    SimulateTpr(TprArgs),
    /// Compare the exact truncation region with a brute-force grid scan.
    OracleCheck(OracleArgs),
    /// Load and validate a model file.
    ModelValidate(ModelArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TestArg {
    Mean,
    Global,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, value_enum, default_value = "mean")]
    pub test: TestArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Saliency threshold; defaults to 0 for the mean test and 5 for the global test.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// `predicted` or `fixed:<k>`.
    #[arg(long, default_value = "predicted", value_parser = parse_class_mode)]
    pub class_mode: ClassMode,
}

impl TestArgs {
    pub fn config(&self) -> TestConfig {
        let kind = match self.test {
            TestArg::Mean => TestKind::MeanNull,
            TestArg::Global => TestKind::GlobalNull,
        };
        let default_tau = match kind {
            TestKind::MeanNull => 0.0,
            TestKind::GlobalNull => 5.0,
        };
        let mut cfg = TestConfig::with_kind(kind, self.sigma, self.tau.unwrap_or(default_tau));
        cfg.alpha = self.alpha;
        cfg.class_mode = self.class_mode;
        cfg
    }
}

fn parse_class_mode(s: &str) -> Result<ClassMode, String> {
    if s == "predicted" {
        return Ok(ClassMode::Predicted);
    }
    s.strip_prefix("fixed:")
        .and_then(|k| k.parse().ok())
        .map(ClassMode::Fixed)
        .ok_or_else(|| format!("expected `predicted` or `fixed:<k>`, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[command(flatten)]
    pub test: TestArgs,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Model file; the built-in 8x8 random-weight model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output path; the summary is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the runtime_ms column empty so repeated runs are byte-identical.
    #[arg(long)]
    pub no_runtime: bool,
}

#[derive(Debug, Args)]
pub struct TprArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Comma-separated signal strengths.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub delta: Vec<f64>,
    /// Pixels in the square signal patch.
    #[arg(long, default_value_t = 16)]
    pub region_size: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Check this pair instead of random null pairs.
    #[arg(long, requires = "reference")]
    pub query: Option<PathBuf>,
    #[arg(long, requires = "query")]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
}

/// Command failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_internal() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<modelio::ModelError> for Failure {
    fn from(e: modelio::ModelError) -> Self {
        Failure {
            code: 2,
            message: format!("[{}] {e}", e.code()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn model_or_fixture(path: &Option<PathBuf>) -> Result<GraphSpec, Failure> {
    match path {
        Some(p) => Ok(load_model(p)?),
        None => Ok(fixture_model()),
    }
}

fn cmd_infer(args: &InferArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let graph = load_model(&args.model)?;
    let x = load_image(&args.query)?;
    let xref = load_image(&args.reference)?;
    let cfg = args.test.config();
    let r = infer(&graph, &x, &xref, &cfg)?;
    let [h, w, _] = graph.input_shape();
    let mask = r.region.mask();
    let rows: Vec<String> = mask
        .chunks(w)
        .take(h)
        .map(|row| row.iter().map(|&m| if m { '1' } else { '0' }).collect())
        .collect();
    let intervals: Vec<[f64; 2]> = r.truncation.region.intervals().iter().map(|iv| [iv.lo(), iv.hi()]).collect();
    let doc = json!({
        "test": match cfg.kind { TestKind::MeanNull => "mean", TestKind::GlobalNull => "global" },
        "tau": cfg.tau,
        "sigma": cfg.sigma,
        "target_class": r.target_class,
        "statistic": r.statistic,
        "p_selective": r.p_selective,
        "p_oc": r.p_oc,
        "p_bonferroni": r.p_bonferroni,
        "p_naive": r.p_naive,
        "reject_selective": r.p_selective <= cfg.alpha,
        "region_size": r.region.len(),
        "region_mask": rows,
        "interval_count": r.interval_count,
        "intervals": intervals,
        "oc_interval": [r.oc_interval.lo(), r.oc_interval.hi()],
        "runtime_ms": r.runtime_ms,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable")).map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })
}

fn experiment_config(sim: &SimArgs, deltas: Vec<f64>, region_size: usize) -> ExperimentConfig {
    ExperimentConfig {
        n: sim.n,
        trials: sim.trials,
        test: sim.test.config(),
        deltas,
        true_region_size: region_size,
        seed: sim.seed,
        jobs: sim.jobs,
        record_runtime: !sim.no_runtime,
    }
}

fn write_report(sim: &SimArgs, report: &crate::experiment::Report, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    if let Some(path) = &sim.out {
        std::fs::write(path, report.to_csv()).map_err(|e| io_failure(path, e))?;
    }
    write!(out, "{}", report.summary_text()).map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })
}

fn cmd_oracle(args: &OracleArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let graph = model_or_fixture(&args.model)?;
    let cfg = args.test.config();
    if !(args.grid_step > 0.0) {
        return Err(Error::InvalidConfig("grid step must be positive".into()).into());
    }
    let pairs: Vec<_> = match (&args.query, &args.reference) {
        (Some(q), Some(r)) => vec![(load_image(q)?, load_image(r)?)],
        _ => (0..args.trials)
            .map(|t| null_pair_from(&mut trial_rng(args.seed, t as u64), graph.pixel_count(), cfg.sigma))
            .collect(),
    };
    let mut disagreements = 0usize;
    for (i, (x, xref)) in pairs.iter().enumerate() {
        let r = match infer(&graph, x, xref, &cfg) {
            Err(Error::EmptyRegion) => {
                let _ = writeln!(out, "instance {i}: no salient region, skipped");
                continue;
            }
            other => other?,
        };
        let shape = graph.input_shape().to_vec();
        let line = line_for(
            &x.clone().reshape(shape.clone())?,
            &xref.clone().reshape(shape)?,
            &r.region,
            &cfg,
        )?;
        let grid = grid_points(r.truncation.sweep_bounds, args.grid_step);
        let verdicts = oracle_verdicts(&graph, &line, &r.region, &cfg, &grid)?;
        let ends: Vec<f64> = r.truncation.region.intervals().iter().flat_map(|iv| [iv.lo(), iv.hi()]).collect();
        let bad = grid
            .iter()
            .zip(&verdicts)
            .filter(|(&z, &v)| {
                let near_end = ends.iter().any(|e| (z - e).abs() <= 1e-6);
                !near_end && v != r.truncation.region.contains(z)
            })
            .count();
        disagreements += bad;
        let _ = writeln!(
            out,
            "instance {i}: {} intervals, {} grid points, {bad} disagreements",
            r.interval_count,
            grid.len()
        );
    }
    if disagreements > 0 {
        return Err(Failure {
            code: 3,
            message: format!("{disagreements} grid points disagree with the exact region"),
        });
    }
    Ok(())
}

fn cmd_validate(args: &ModelArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let g = load_model(&args.model)?;
    let kinds: Vec<&str> = g.layers().iter().map(|l| l.kind()).collect();
    let _ = writeln!(
        out,
        "ok: input {:?}, {} classes, layers [{}]",
        g.input_shape(),
        g.class_count(),
        kinds.join(", ")
    );
    Ok(())
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Infer(a) => cmd_infer(a, out),
        Command::SimulateFpr(sim) => {
            let graph = model_or_fixture(&sim.model)?;
            let report = run_fpr(&graph, &experiment_config(sim, Vec::new(), 1))?;
            write_report(sim, &report, out)
        }
        Command::SimulateTpr(a) => {
            let graph = model_or_fixture(&a.sim.model)?;
            let report = run_tpr(&graph, &experiment_config(&a.sim, a.delta.clone(), a.region_size))?;
            write_report(&a.sim, &report, out)
        }
        Command::OracleCheck(a) => cmd_oracle(a, out),
        Command::ModelValidate(a) => cmd_validate(a, out),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_mode_parsing() {
        assert_eq!(parse_class_mode("predicted"), Ok(ClassMode::Predicted));
        assert_eq!(parse_class_mode("fixed:1"), Ok(ClassMode::Fixed(1)));
        assert!(parse_class_mode("fixed:").is_err());
        assert!(parse_class_mode("top").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["sisal", "infer", "--bogus"]), 1);
        assert_eq!(run(["sisal", "frobnicate"]), 1);
        assert_eq!(run(["sisal", "--help"]), 0);
    }

    #[test]
    fn tau_defaults_follow_the_test() {
        let cli = Cli::try_parse_from(["sisal", "simulate-fpr", "--test", "global"]).unwrap();
        let Command::SimulateFpr(sim) = cli.command else { panic!() };
        assert_eq!(sim.test.config().tau, 5.0);
        let cli = Cli::try_parse_from(["sisal", "simulate-fpr", "--tau", "-1.5"]).unwrap();
        let Command::SimulateFpr(sim) = cli.command else { panic!() };
        assert_eq!(sim.test.config().tau, -1.5);
    }
}

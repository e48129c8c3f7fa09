use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridfuse::alloc::{AllocError, BudgetMode, Sense};
use hybridfuse::config::{ExperimentConfig, Scenario, PRESETS};
use hybridfuse::emit::{self, EmitError, Format};
use hybridfuse::experiment::{self, ExperimentError};
use hybridfuse::Execution;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hybridfuse", version, about = "Hybrid quantized/full-precision detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ROC of the configured detectors
    Roc(Common),
    /// Fisher information over a (tau1, tau3) grid of a 2-bit quantizer
    FiLandscape(Common),
    /// Optimize quantizer thresholds
    DesignQuantizer(Common),
    /// Solve one bandwidth allocation
    Allocate(Common),
    /// Allocation sweep over the number of sensors
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetArg {
    Exact,
    Atmost,
}

#[derive(Clone, Copy, ValueEnum)]
enum SenseArg {
    Max,
    Min,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration (quantizer-2bit, landscape-2bit, roc-clean, roc-noisy, sweep-exact, allocate)
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, value_enum)]
    budget_mode: Option<BudgetArg>,
    #[arg(long, value_enum)]
    sense: Option<SenseArg>,
    /// Run on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Experiment(ExperimentError),
    Emit(EmitError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Experiment(ExperimentError::Alloc(AllocError::Infeasible)) => "infeasible",
            CliError::Experiment(ExperimentError::Config(_)) => "config",
            CliError::Experiment(_) => "validation",
            CliError::Emit(_) => "io",
        }
    }

    fn code(&self) -> u8 {
        match self.kind() {
            "usage" | "config" => 2,
            "infeasible" => 3,
            "validation" => 4,
            _ => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Experiment(e) => e.to_string(),
            CliError::Emit(e) => e.to_string(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl From<EmitError> for CliError {
    fn from(e: EmitError) -> Self {
        CliError::Emit(e)
    }
}

fn load(scenario: Scenario, args: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path).map_err(ExperimentError::from)?,
        (None, Some(name)) => ExperimentConfig::preset(name).map_err(ExperimentError::from)?,
        (None, None) => ExperimentConfig::for_scenario(scenario),
    };
    if config.scenario != scenario {
        return Err(CliError::Usage(format!(
            "config describes `{}` but the `{}` subcommand was run",
            config.scenario.name(),
            scenario.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(mode) = args.budget_mode {
        config.allocation.budget_mode = match mode {
            BudgetArg::Exact => BudgetMode::Exact,
            BudgetArg::Atmost => BudgetMode::AtMost,
        };
    }
    if let Some(sense) = args.sense {
        let sense = match sense {
            SenseArg::Max => Sense::MaximizeFI,
            SenseArg::Min => Sense::MinimizeFI,
        };
        config.allocation.sense = sense;
        config.sweep.senses = vec![sense];
    }
    config.validate().map_err(ExperimentError::from)?;
    Ok(config)
}

/// Second CSV file next to the main output, e.g. `out.csv` -> `out.breakdown.csv`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (scenario, args) = match &cli.command {
        Command::Roc(a) => (Scenario::Roc, a),
        Command::FiLandscape(a) => (Scenario::FiLandscape, a),
        Command::DesignQuantizer(a) => (Scenario::DesignQuantizer, a),
        Command::Allocate(a) => (Scenario::Allocate, a),
        Command::Sweep(a) => (Scenario::Sweep, a),
    };
    let config = load(scenario, args)?;
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let name = scenario.name();
    let seed = config.seed;

    // (main output, optional secondary CSV table)
    let (main, extra) = match scenario {
        Scenario::Roc => {
            let r = experiment::run_roc(&config, exec)?;
            match format {
                Format::Csv => (emit::to_csv(&r.points)?, None),
                Format::Json => (emit::to_json(name, seed, &r)?, None),
            }
        }
        Scenario::FiLandscape => {
            let r = experiment::run_landscape(&config, exec)?;
            match format {
                Format::Csv => (emit::to_csv(&r.cells)?, None),
                Format::Json => (emit::to_json(name, seed, &r)?, None),
            }
        }
        Scenario::DesignQuantizer => {
            let r = experiment::run_design(&config, exec)?;
            match format {
                Format::Csv => (emit::to_csv(&r.rows)?, None),
                Format::Json => (emit::to_json(name, seed, &r)?, None),
            }
        }
        Scenario::Allocate => {
            let r = experiment::run_allocate(&config, exec)?;
            match format {
                Format::Csv => (emit::to_csv(&r.breakdown)?, None),
                Format::Json => (emit::to_json(name, seed, &r)?, None),
            }
        }
        Scenario::Sweep => {
            let r = experiment::run_sweep(&config, exec)?;
            match format {
                Format::Csv => (emit::to_csv(&r.points)?, Some(emit::to_csv(&r.breakdown)?)),
                Format::Json => (emit::to_json(name, seed, &r)?, None),
            }
        }
    };

    match &args.out {
        Some(path) => {
            emit::write_file(path, &main)?;
            if let Some(extra) = extra {
                emit::write_file(&sibling(path, "breakdown"), &extra)?;
            }
        }
        None => print!("{main}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            report(&CliError::Usage(e.kind().to_string()), Some(e.render().to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, None);
            ExitCode::from(e.code())
        }
    }
}

fn report(e: &CliError, detail: Option<String>) {
    let mut body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.message() } });
    if let Some(d) = detail {
        body["error"]["detail"] = serde_json::Value::String(d.trim_end().to_string());
    }
    if let CliError::Usage(_) = e {
        body["error"]["presets"] = PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().into();
    }
    eprintln!("{body}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use hybridfuse::emit::Envelope;
    use hybridfuse::experiment::{AllocateReport, SweepReport};

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("hybridfuse").chain(args.iter().copied())).unwrap()
    }

    fn run_to_string(args: &[&str]) -> Result<String, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.txt");
        let mut full: Vec<&str> = args.to_vec();
        let out_s = out.to_str().unwrap().to_string();
        full.extend(["--out", &out_s]);
        run(cli(&full))?;
        Ok(std::fs::read_to_string(out).unwrap())
    }

    const SMALL_SWEEP: &str = r#"
scenario = "sweep"
seed = 9
[allocation]
epsilons = [0.0, 0.2]
budget = 120
l0 = 32
levels = 2
budget_mode = "atmost"
[sweep]
m_min = 10
m_max = 20
m_step = 10
senses = ["max", "min"]
[[sweep.cases]]
name = "A"
freqs = [0.5, 0.5]
"#;

    #[test]
    fn roc_csv_header_and_rows() {
        let text = run_to_string(&["roc", "--preset", "roc-clean", "--trials", "200"]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "detector,pfa_target,eta,pd_theory,pfa_mc,pd_mc,stderr_mc");
        assert_eq!(lines.count(), 6 * 12);
    }

    #[test]
    fn seed_flag_controls_output() {
        let a = run_to_string(&["roc", "--preset", "roc-noisy", "--trials", "300", "--seed", "5"]).unwrap();
        let b = run_to_string(&["roc", "--preset", "roc-noisy", "--trials", "300", "--seed", "5"]).unwrap();
        let c = run_to_string(&["roc", "--preset", "roc-noisy", "--trials", "300", "--seed", "6"]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sequential_matches_parallel() {
        let a = run_to_string(&["roc", "--preset", "roc-clean", "--trials", "300"]).unwrap();
        let b = run_to_string(&["roc", "--preset", "roc-clean", "--trials", "300", "--sequential"]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn allocate_overrides_reach_the_solver() {
        let text = run_to_string(&["allocate", "--preset", "allocate", "--format", "json", "--sense", "min"]).unwrap();
        let env: Envelope<serde_json::Value> = emit::from_json(&text).unwrap();
        assert_eq!(env.scenario, "allocate");
        assert_eq!(env.seed, 4);
        let report: AllocateReport = serde_json::from_value(env.data).unwrap();
        assert_eq!(report.sense, Sense::MinimizeFI);

        let exact = run_to_string(&["allocate", "--preset", "allocate", "--format", "json", "--budget-mode", "exact"]);
        let env: Envelope<AllocateReport> = emit::from_json(&exact.unwrap()).unwrap();
        assert_eq!(env.data.budget_mode, BudgetMode::Exact);
        assert_eq!(env.data.result.bits_used, 500);
    }

    #[test]
    fn sweep_csv_writes_breakdown_sibling() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("sweep.toml");
        std::fs::write(&cfg, SMALL_SWEEP).unwrap();
        let out = dir.path().join("sweep.csv");
        run(cli(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])).unwrap();
        let main = std::fs::read_to_string(&out).unwrap();
        assert!(main.starts_with("case,m_total,sense,feasible,total_fi,bits_used,lambda,pd_theory\n"));
        assert_eq!(main.lines().count(), 1 + 2 * 2);
        let extra = std::fs::read_to_string(dir.path().join("sweep.breakdown.csv")).unwrap();
        assert!(extra.starts_with("case,m_total,sense,level,error_class,count\n"));

        let json = dir.path().join("sweep.json");
        run(cli(&["sweep", "--config", cfg.to_str().unwrap(), "--format", "json", "--out", json.to_str().unwrap()]))
            .unwrap();
        let env: Envelope<SweepReport> = emit::from_json(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(env.data.points.len(), 4);
        assert!(env.data.points.iter().all(|p| p.feasible));
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("/tmp/a.csv"), "breakdown"), PathBuf::from("/tmp/a.breakdown.csv"));
        assert_eq!(sibling(Path::new("b"), "breakdown"), PathBuf::from("b.breakdown.csv"));
    }

    #[test]
    fn error_kinds_and_codes() {
        let e = run(cli(&["roc", "--preset", "nope"])).unwrap_err();
        assert_eq!((e.kind(), e.code()), ("config", 2));

        let e = run(cli(&["roc", "--preset", "sweep-exact"])).unwrap_err();
        assert_eq!((e.kind(), e.code()), ("usage", 2));

        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("tight.toml");
        std::fs::write(
            &cfg,
            SMALL_SWEEP
                .replace("scenario = \"sweep\"", "scenario = \"allocate\"")
                .replace("budget = 120", "budget = 5\nm_total = 10\nfreqs = [0.5, 0.5]")
                .split("[sweep]")
                .next()
                .unwrap(),
        )
        .unwrap();
        let e = run(cli(&["allocate", "--config", cfg.to_str().unwrap()])).unwrap_err();
        assert_eq!((e.kind(), e.code()), ("infeasible", 3));

        std::fs::write(&cfg, "scenario = \"roc\"\n[signal]\nsigma_n2 = -1.0\n").unwrap();
        let e = run(cli(&["roc", "--config", cfg.to_str().unwrap()])).unwrap_err();
        assert_eq!(e.code(), 2);

        let e = run(cli(&["roc", "--config", "/nonexistent/x.toml"])).unwrap_err();
        assert_eq!(e.kind(), "config");

        let e =
            run(cli(&["roc", "--preset", "roc-clean", "--trials", "10", "--out", "/nonexistent/dir/o.csv"])).unwrap_err();
        assert_eq!((e.kind(), e.code()), ("io", 1));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert!(Cli::try_parse_from(["hybridfuse", "roc", "--format", "xml"]).is_err());
        assert!(Cli::try_parse_from(["hybridfuse", "roc", "--config", "a", "--preset", "b"]).is_err());
        assert!(Cli::try_parse_from(["hybridfuse", "sweep", "--budget-mode", "atleast"]).is_err());
        assert!(Cli::try_parse_from(["hybridfuse", "allocate", "--sense", "max"]).is_ok());
    }
}

//! `mkp`: build, verify, optimize, simulate and report Mean King's Problem setups.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mkp_core::inference::{Experiment, Scoring, Strategy};
use mkp_core::optics::{build_setup, simulate, SetupModel};
use mkp_core::qstate::{bell_state, collapsed_state, is_odd_prime, TwoPhotonState};
use mkp_core::report::{format_sig, write_table_csv, BasisTable, EvaluationReport, PhaseFile};
use mkp_core::tuner::{optimize, Objective, TunerConfig};
use mkp_core::verify::run_suites;
use mkp_core::Error;

#[derive(Parser)]
#[command(
    name = "mkp",
    version,
    about = "Mean King's Problem linear-optics simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the state, VAA and simulator invariant suites.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Random phase/state draws for the simulator checks.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Tune phase shifters with multi-start BFGS and write a phase file.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 500)]
        restarts: usize,
        /// p_v, p_m-average, or p_m-subset:<m>,<m>,...
        #[arg(long, default_value = "p_v")]
        objective: String,
    },
    /// Propagate one two-photon state and print its click distribution.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Phase file; all-zero phases when omitted.
        #[arg(long)]
        phases: Option<PathBuf>,
        /// bell, vaa:<k>, mub:<m>:<j> (collapsed state) or ket:<i>:<j>.
        #[arg(long, default_value = "bell")]
        state: String,
    },
    /// Score a phase file: per-basis D,m,p_M CSV or a JSON report with posteriors.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        phases: PathBuf,
    },
    /// Dump the VAA basis and mapping table as JSON.
    ExportVaa {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Odd prime dimension (defaults to 3, or to the phase file's dimension).
    #[arg(long)]
    dim: Option<usize>,
    /// Setup JSON; the built-in topology when omitted.
    #[arg(long)]
    setup: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Condition every distribution on a two-detector coincidence.
    #[arg(long)]
    post_select: bool,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Print probabilities as percentages in CSV output.
    #[arg(long)]
    percent: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    VaaMap,
    BasisConditioned,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::VaaMap => Strategy::VaaMap,
            StrategyArg::BasisConditioned => Strategy::BasisConditioned,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum SetupSource {
    Builtin,
    Json(PathBuf),
}

/// Validated settings shared by every subcommand.
struct RunConfig {
    dim: usize,
    setup_source: SetupSource,
    restarts: usize,
    seed: u64,
    scoring: Scoring,
    format: Format,
    percent: bool,
    out: Option<PathBuf>,
}

/// A failure with its exit status: 1 for failed checks, 2 for usage or validation.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::NonFiniteLoss
            | Error::DegenerateOutput
            | Error::ConstructionInconsistent { .. } => 1,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

impl RunConfig {
    fn new(
        common: &CommonArgs,
        restarts: usize,
        default_dim: usize,
        default_format: Format,
    ) -> Result<Self, Failure> {
        let dim = common.dim.unwrap_or(default_dim);
        if !is_odd_prime(dim) {
            return Err(Error::NotOddPrime(dim).into());
        }
        if restarts == 0 {
            return Err(usage("--restarts must be at least 1"));
        }
        Ok(Self {
            dim,
            setup_source: match &common.setup {
                Some(path) => SetupSource::Json(path.clone()),
                None => SetupSource::Builtin,
            },
            restarts,
            seed: common.seed,
            scoring: Scoring {
                strategy: common.strategy.map(Strategy::from).unwrap_or_default(),
                post_select: common.post_select,
            },
            format: common.format.unwrap_or(default_format),
            percent: common.percent,
            out: common.out.clone(),
        })
    }

    fn setup(&self) -> Result<SetupModel, Failure> {
        let setup = match &self.setup_source {
            SetupSource::Builtin => build_setup(self.dim)?,
            SetupSource::Json(path) => SetupModel::from_json(&read(path)?)?,
        };
        if setup.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: setup.dim(),
            }
            .into());
        }
        Ok(setup)
    }

    fn experiment(&self) -> Result<Experiment, Failure> {
        Ok(Experiment::new(self.setup()?)?)
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(path) => fs::write(path, text).map_err(|e| Error::Io(e).into()),
            None => io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::Io(e).into()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn p_m_table(p_m: &[f64]) -> String {
    let mut s = String::from("m\tp_M\n");
    for (m, p) in p_m.iter().enumerate() {
        s += &format!("{m}\t{}\n", format_sig(*p, 6));
    }
    s
}

fn cmd_verify(config: &RunConfig, samples: usize) -> Result<ExitCode, Failure> {
    let exp = config.experiment()?;
    let results = run_suites(&exp, config.seed, samples)?;
    let mut text = format!("verify D={}\n", config.dim);
    for r in &results {
        text += &format!(
            "{:<26} {:<4} max deviation {:.3e} (tolerance {:.0e})\n",
            r.name,
            if r.passed() { "ok" } else { "FAIL" },
            r.deviation,
            r.tolerance
        );
    }
    if config.format == Format::Json {
        text = serde_json::to_string_pretty(&results).map_err(Error::from)? + "\n";
    }
    config.emit(&text)?;
    match results.iter().find(|r| !r.passed()) {
        Some(r) => Err(Failure {
            code: 1,
            message: format!("invariant {} failed", r.name),
        }),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_optimize(config: &RunConfig, objective: &str) -> Result<ExitCode, Failure> {
    let exp = config.experiment()?;
    let objective: Objective = objective.parse()?;
    let tuner = TunerConfig {
        restarts: config.restarts,
        seed: config.seed,
        scoring: config.scoring,
        ..Default::default()
    };
    let run = optimize(&exp, &objective, &tuner)?;
    let file = PhaseFile::from_run(&exp, &run)?;
    let p_m: Vec<f64> = file.p_m.values().copied().collect();
    let summary = format!(
        "D={} objective={} scoring={} restarts={} seed={}\np_V\t{}\n{}",
        config.dim,
        objective,
        config.scoring,
        config.restarts,
        config.seed,
        format_sig(file.p_v, 6),
        p_m_table(&p_m)
    );
    config.emit(&(file.to_json() + "\n"))?;
    if config.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_state(spec: &str, exp: &Experiment) -> Result<TwoPhotonState, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let idx = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| usage(format!("bad index {s:?} in --state")))
    };
    let state = match parts.as_slice() {
        ["bell"] => bell_state(exp.mubs(), exp.dim())?,
        ["vaa", k] => {
            let k = idx(k)?;
            if k >= exp.vaa().len() {
                return Err(usage(format!("VAA index {k} out of range")));
            }
            exp.vaa().state(k).clone()
        }
        ["mub", m, j] => collapsed_state(exp.mubs(), idx(m)?, idx(j)?)?,
        ["ket", i, j] => {
            let (i, j) = (idx(i)?, idx(j)?);
            TwoPhotonState::basis(exp.dim(), i, j)?
        }
        _ => return Err(usage(format!("unrecognized --state {spec:?}"))),
    };
    Ok(state)
}

fn load_phases(path: &Path, dim: usize) -> Result<PhaseFile, Failure> {
    let file = PhaseFile::from_json(&read(path)?)?;
    if file.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: file.dim,
        }
        .into());
    }
    Ok(file)
}

fn cmd_simulate(
    config: &RunConfig,
    phases: Option<&Path>,
    state: &str,
) -> Result<ExitCode, Failure> {
    let exp = config.experiment()?;
    let phases = match phases {
        Some(path) => load_phases(path, config.dim)?.phases,
        None => vec![0.0; exp.phase_count()],
    };
    let state = parse_state(state, &exp)?;
    let dist = simulate(exp.setup(), &phases, &state)?;
    let detectors = exp.setup().detectors();
    let text = match config.format {
        Format::Csv => {
            let mut s = String::from("pattern,probability\n");
            for (p, prob) in dist.iter() {
                s += &format!("{},{}\n", p.label(detectors), format_sig(prob, 6));
            }
            s
        }
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = dist
                .iter()
                .map(|(p, prob)| (p.label(detectors), prob.into()))
                .collect();
            serde_json::to_string_pretty(&map).map_err(Error::from)? + "\n"
        }
    };
    config.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(common: &CommonArgs, phases: &Path) -> Result<ExitCode, Failure> {
    let file = PhaseFile::from_json(&read(phases)?)?;
    let mut config = RunConfig::new(common, 1, file.dim, Format::Csv)?;
    if file.dim != config.dim {
        return Err(Error::DimensionMismatch {
            expected: config.dim,
            got: file.dim,
        }
        .into());
    }
    if common.strategy.is_none() {
        config.scoring.strategy = file.strategy;
    }
    config.scoring.post_select |= file.post_select;
    let exp = config.experiment()?;
    let ev = exp.evaluate(&file.phases, config.scoring)?;
    let text = match config.format {
        Format::Csv => {
            let mut buf = Vec::new();
            let row = BasisTable {
                dim: config.dim,
                p_m: ev.p_m.clone(),
            };
            write_table_csv(&[row], config.percent, &mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        Format::Json => {
            let report = EvaluationReport::new(&exp, &file.phases, &ev);
            serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"
        }
    };
    config.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_vaa(config: &RunConfig) -> Result<ExitCode, Failure> {
    let exp = config.experiment()?;
    let text = serde_json::to_string_pretty(exp.vaa()).map_err(Error::from)? + "\n";
    config.emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match &cli.command {
        Command::Verify { common, samples } => {
            cmd_verify(&RunConfig::new(common, 1, 3, Format::Csv)?, *samples)
        }
        Command::Optimize {
            common,
            restarts,
            objective,
        } => cmd_optimize(
            &RunConfig::new(common, *restarts, 3, Format::Json)?,
            objective,
        ),
        Command::Simulate {
            common,
            phases,
            state,
        } => cmd_simulate(
            &RunConfig::new(common, 1, 3, Format::Csv)?,
            phases.as_deref(),
            state,
        ),
        Command::Report { common, phases } => cmd_report(common, phases),
        Command::ExportVaa { common } => {
            cmd_export_vaa(&RunConfig::new(common, 1, 3, Format::Json)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();

    if let Some(threads) = std::env::var("MKP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
        {
            log::warn!("could not size worker pool: {err}");
        }
    }

    match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

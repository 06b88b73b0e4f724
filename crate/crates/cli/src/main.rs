//! `kgflow`: flowline tooling, corpus runs, fitting, scheduling and
//! simulation from one binary.
//!
//! Results go to stdout or to the file named by `--out`; diagnostics go to
//! stderr. Exit status is 0 on success, 1 on usage or domain errors and 2 on
//! i/o errors.

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgflow_core::sim::Admission;

use crate::config::{Overrides, RunConfig, CATALOG_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kgflow", version, about = "Build, schedule and simulate knowledge graph construction flowlines")]
struct Cli {
    /// TOML file with option defaults; flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flowline language tools.
    #[command(subcommand)]
    Gfl(GflCommand),
    /// Run a flowline over a corpus and export N-Triples.
    Run(RunArgs),
    /// Score predicted N-Triples against gold.
    Eval(EvalArgs),
    /// Warm-up run measuring per-task weights and pipe payloads.
    Profile(ProfileArgs),
    /// Fit the linear price model of a catalog.
    FitPrice(FitPriceArgs),
    /// Fit the price to makespan curve and its optimal unit price.
    FitG(FitGArgs),
    /// Procure VMs and assign tasks.
    Schedule(ScheduleArgs),
    /// Simulate a plan processing a corpus.
    Simulate(SimulateArgs),
    /// Schedule and simulate over several eta values with both baselines.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
enum GflCommand {
    /// Parse and validate.
    Check { file: PathBuf },
    /// Print the canonical formatting.
    Fmt {
        file: PathBuf,
        /// Fail when the file is not already formatted.
        #[arg(long)]
        check: bool,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print a Graphviz rendering.
    Dot {
        file: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Inputs {
    /// Flowline as GFL, or as JSON when the name ends in `.json`.
    #[arg(long, value_name = "FILE")]
    flowline: Option<PathBuf>,
    /// JSON-lines corpus.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    ontology: Option<PathBuf>,
    /// Endpoint specs by model name, TOML or JSON.
    #[arg(long, value_name = "FILE")]
    endpoints: Option<PathBuf>,
    #[arg(long)]
    slice_size: Option<u64>,
    /// Measure wall time instead of the per-row logical clock.
    #[arg(long)]
    wall_clock: bool,
}

impl Inputs {
    fn apply(&self, o: &mut Overrides) {
        o.flowline.clone_from(&self.flowline);
        o.corpus.clone_from(&self.corpus);
        o.ontology.clone_from(&self.ontology);
        o.endpoints.clone_from(&self.endpoints);
        o.slice_size = self.slice_size;
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// N-Triples output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Namespace of minted IRIs.
    #[arg(long)]
    namespace: Option<String>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Profile only the first N documents.
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted N-Triples.
    #[arg(long, value_name = "FILE")]
    predicted: PathBuf,
    /// Gold N-Triples (`.nt`) or an annotated JSON-lines corpus.
    #[arg(long, value_name = "FILE")]
    gold: PathBuf,
    /// Ontology used to canonicalize corpus gold.
    #[arg(long, value_name = "FILE")]
    ontology: Option<PathBuf>,
    #[arg(long)]
    namespace: Option<String>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitPriceArgs {
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    /// `trimmed` or `ordinary` least squares.
    #[arg(long, default_value = "trimmed")]
    method: String,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitGArgs {
    /// JSON array of `{price, makespan}`; a null makespan marks an
    /// infeasible procurement.
    #[arg(long, value_name = "FILE")]
    observations: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    /// Pin the infeasibility threshold.
    #[arg(long)]
    c: Option<f64>,
    /// Fit all three parameters, ignoring infeasible observations.
    #[arg(long)]
    free: bool,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Model {
    #[arg(long, value_name = "FILE")]
    flowline: Option<PathBuf>,
    /// Per-slice task weights and pipe payloads.
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,
    #[arg(long)]
    corpus_size: Option<u64>,
    #[arg(long)]
    slice_size: Option<u64>,
    /// Inter-VM latency in seconds.
    #[arg(long)]
    latency: Option<f64>,
    /// Inter-VM bandwidth in bytes per second.
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl Model {
    fn apply(&self, o: &mut Overrides) {
        o.flowline.clone_from(&self.flowline);
        o.profile.clone_from(&self.profile);
        o.corpus_size = self.corpus_size;
        o.slice_size = self.slice_size;
        o.latency_s = self.latency;
        o.bandwidth_bps = self.bandwidth;
    }
}

#[derive(Debug, Args)]
struct Dynamics {
    /// Log-normal sigma of task duration noise.
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `sequential`, `pipelined` or `unbounded`.
    #[arg(long, value_parser = parse_admission)]
    admission: Option<Admission>,
}

impl Dynamics {
    fn apply(&self, o: &mut Overrides) {
        o.jitter = self.jitter;
        o.seed = self.seed;
        o.admission = self.admission;
    }
}

fn parse_admission(s: &str) -> Result<Admission, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown admission `{s}`"))
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[command(flatten)]
    model: Model,
    /// VM catalog; defaults to $KGFLOW_CATALOG, then the bundled qCloud one.
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    /// Fit the price to makespan curve on these observations.
    #[arg(long, value_name = "FILE", conflicts_with = "fit")]
    observations: Option<PathBuf>,
    /// Use the curve `a,b,c` directly.
    #[arg(long, value_name = "A,B,C", value_delimiter = ',', num_args = 3)]
    fit: Option<Vec<f64>>,
    #[arg(long)]
    refine_rounds: Option<usize>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: Model,
    #[command(flatten)]
    dynamics: Dynamics,
    #[arg(long, value_name = "FILE")]
    plan: Option<PathBuf>,
    /// Write the timeline as a chrome trace.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: Model,
    #[command(flatten)]
    dynamics: Dynamics,
    #[arg(long, value_name = "FILE")]
    catalog: Option<PathBuf>,
    /// Comma separated eta values.
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    /// Also write the rows as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl Command {
    /// Settings given on the command line.
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        match self {
            Command::Gfl(_) => {}
            Command::Run(a) => {
                a.inputs.apply(&mut o);
                o.output.clone_from(&a.out);
                o.namespace.clone_from(&a.namespace);
            }
            Command::Profile(a) => {
                a.inputs.apply(&mut o);
                o.output.clone_from(&a.out);
            }
            Command::Eval(a) => {
                o.ontology.clone_from(&a.ontology);
                o.namespace.clone_from(&a.namespace);
                o.output.clone_from(&a.out);
            }
            Command::FitPrice(a) => {
                o.catalog.clone_from(&a.catalog);
                o.output.clone_from(&a.out);
            }
            Command::FitG(a) => {
                o.observations.clone_from(&a.observations);
                o.eta = a.eta;
                o.output.clone_from(&a.out);
            }
            Command::Schedule(a) => {
                a.model.apply(&mut o);
                o.catalog.clone_from(&a.catalog);
                o.eta = a.eta;
                o.observations.clone_from(&a.observations);
                o.refine_rounds = a.refine_rounds;
                o.output.clone_from(&a.out);
            }
            Command::Simulate(a) => {
                a.model.apply(&mut o);
                a.dynamics.apply(&mut o);
                o.plan.clone_from(&a.plan);
                o.output.clone_from(&a.out);
            }
            Command::Sweep(a) => {
                a.model.apply(&mut o);
                a.dynamics.apply(&mut o);
                o.catalog.clone_from(&a.catalog);
                o.etas.clone_from(&a.etas);
                o.output.clone_from(&a.out);
            }
        }
        o
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => Overrides::from_file(p)?,
        None => Overrides::default(),
    };
    let env_catalog = std::env::var_os(CATALOG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let cfg = RunConfig::resolve(&cli.command.overrides(), &file, env_catalog)?;
    log::debug!("resolved options: {cfg:?}");
    match cli.command {
        Command::Gfl(GflCommand::Check { file }) => commands::gfl_check(&file),
        Command::Gfl(GflCommand::Fmt { file, check, out }) => commands::gfl_fmt(&file, check, out.as_ref()),
        Command::Gfl(GflCommand::Dot { file, out }) => commands::gfl_dot(&file, out.as_ref()),
        Command::Run(a) => commands::run(&cfg, a.inputs.wall_clock),
        Command::Profile(a) => commands::profile(&cfg, a.inputs.wall_clock, a.sample),
        Command::Eval(a) => commands::eval(&cfg, &a.predicted, &a.gold),
        Command::FitPrice(a) => commands::fit_price(&cfg, &a.method),
        Command::FitG(a) => commands::fit_g(&cfg, a.c, a.free),
        Command::Schedule(a) => commands::schedule(&cfg, a.fit.as_deref()),
        Command::Simulate(a) => commands::simulate(&cfg, a.trace.as_ref()),
        Command::Sweep(a) => commands::sweep(&cfg, a.csv.as_ref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::{Path, PathBuf};

use serde::Serialize;

use kgflow_core::cost::{
    fit_price_linear_with, fit_price_makespan_with, optimal_unit_price, CurveFitOptions, FitMethod, MakespanPriceFit,
    PriceFit,
};
use kgflow_core::flowline::{validate, validate_profile, Flowline, TaskProfile};
use kgflow_core::gfl::{emit_dot, format, parse};
use kgflow_core::scheduler::{evaluate_plan, schedule as plan_schedule, PlanContext, ScheduleOptions};
use kgflow_core::sim::{simulate as run_simulation, sweep_eta, SimConfig, SweepConfig, SweepRow};
use kgflow_runtime::ntriples::{canonical_set, parse_ntriples, write_ntriples};
use kgflow_runtime::{eval_prf, run_flowline, Clock, Document, EndpointSet, RunOptions, RunOutput};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

pub fn gfl_check(path: &Path) -> Result<()> {
    let f = parse(&files::read(path)?).map_err(|e| CliError::in_file(path, e))?;
    let report = validate(&f);
    for w in &report.warnings {
        log::warn!("{}: {w}", path.display());
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        vertices: usize,
        edges: usize,
        entry: &'a str,
        exit: &'a str,
        models: Vec<&'a str>,
    }
    files::emit(
        None,
        &files::to_json(&Summary {
            vertices: f.vertices.len(),
            edges: f.edges.len(),
            entry: &f.entry,
            exit: &f.exit,
            models: f.model_ids(),
        }),
    )
}

pub fn gfl_fmt(path: &Path, check: bool, out: Option<&PathBuf>) -> Result<()> {
    let text = files::read(path)?;
    let f = parse(&text).map_err(|e| CliError::in_file(path, e))?;
    let formatted = format(&f);
    if check {
        return if formatted.trim_end() == text.trim_end() {
            Ok(())
        } else {
            Err(CliError::in_file(path, "not in canonical format"))
        };
    }
    files::emit(out, &formatted)
}

pub fn gfl_dot(path: &Path, out: Option<&PathBuf>) -> Result<()> {
    let f = parse(&files::read(path)?).map_err(|e| CliError::in_file(path, e))?;
    files::emit(out, &emit_dot(&f))
}

fn execute(cfg: &RunConfig, wall_clock: bool, sample: Option<usize>) -> Result<(Flowline, Vec<Document>, RunOutput)> {
    let flowline = files::flowline(cfg.need(&cfg.flowline, "flowline")?)?;
    let mut corpus = files::corpus(cfg.need(&cfg.corpus, "corpus")?)?;
    if let Some(n) = sample {
        corpus.truncate(n);
    }
    let ontology = files::ontology(cfg.ontology.as_deref())?;
    let specs = files::endpoints(cfg.need(&cfg.endpoints, "endpoints")?)?;
    let mut endpoints = EndpointSet::from_specs(&specs, Some(&corpus)).map_err(CliError::domain)?;
    let options = RunOptions {
        slice_size: cfg.slice_size as usize,
        clock: if wall_clock { Clock::Wall } else { Clock::default() },
    };
    let out = run_flowline(&flowline, &ontology, &corpus, &mut endpoints, &options).map_err(CliError::domain)?;
    for issue in &out.report.dropped {
        log::warn!("dropped row `{}` at `{}`: {}", issue.row_id, issue.task, issue.message);
    }
    Ok((flowline, corpus, out))
}

/// Triples go to the output file, the run report to stdout.
pub fn run(cfg: &RunConfig, wall_clock: bool) -> Result<()> {
    let target = cfg.need(&cfg.output, "out")?.to_path_buf();
    let (_, _, out) = execute(cfg, wall_clock, None)?;
    let ontology = files::ontology(cfg.ontology.as_deref())?;
    let statements = canonical_set(&out.triples, &cfg.namespace, &ontology);
    files::emit(Some(&target), &write_ntriples(&statements))?;
    log::info!("wrote {} triples to {}", statements.len(), target.display());
    files::emit(None, &files::to_json(&out.report))
}

pub fn profile(cfg: &RunConfig, wall_clock: bool, sample: Option<usize>) -> Result<()> {
    let (flowline, _, out) = execute(cfg, wall_clock, sample)?;
    let profile = out.report.profile();
    for w in validate_profile(&flowline, &profile).warnings {
        log::warn!("{w}");
    }
    files::emit(cfg.output.as_ref(), &files::to_json(&profile))
}

pub fn eval(cfg: &RunConfig, predicted: &Path, gold: &Path) -> Result<()> {
    let nt = |path: &Path| -> Result<_> { parse_ntriples(&files::read(path)?).map_err(|e| CliError::in_file(path, e)) };
    let predicted = nt(predicted)?;
    let gold = if gold.extension().is_some_and(|e| e == "nt") {
        nt(gold)?
    } else {
        let ontology = files::ontology(cfg.ontology.as_deref())?;
        let docs = files::corpus(gold)?;
        let triples: Vec<_> = docs.iter().flat_map(Document::gold_triples).collect();
        canonical_set(&triples, &cfg.namespace, &ontology)
    };
    files::emit(cfg.output.as_ref(), &files::to_json(&eval_prf(&predicted, &gold)))
}

pub fn fit_price(cfg: &RunConfig, method: &str) -> Result<()> {
    let method: FitMethod = serde_json::from_value(serde_json::Value::String(method.to_string()))
        .map_err(|_| CliError::domain(format!("unknown fit method `{method}` (expected trimmed or ordinary)")))?;
    let catalog = files::catalog(cfg.catalog.as_deref())?;
    let fit: PriceFit = fit_price_linear_with(&catalog, method).map_err(CliError::domain)?;
    files::emit(cfg.output.as_ref(), &files::to_json(&fit))
}

pub fn fit_g(cfg: &RunConfig, c: Option<f64>, free: bool) -> Result<()> {
    let obs = files::observations(cfg.need(&cfg.observations, "observations")?)?;
    let fit = fit_price_makespan_with(&obs, CurveFitOptions { c, free }).map_err(CliError::domain)?;
    let x0 = optimal_unit_price(&fit, cfg.eta).map_err(CliError::domain)?;
    #[derive(Serialize)]
    struct Out {
        #[serde(flatten)]
        fit: MakespanPriceFit,
        eta: f64,
        x0: f64,
    }
    files::emit(cfg.output.as_ref(), &files::to_json(&Out { fit, eta: cfg.eta, x0 }))
}

fn context(cfg: &RunConfig, eta: f64) -> PlanContext {
    PlanContext {
        net: cfg.net,
        corpus_size: cfg.corpus_size,
        slice_size: cfg.slice_size,
        eta,
    }
}

fn model(cfg: &RunConfig) -> Result<(Flowline, TaskProfile)> {
    let flowline = files::flowline(cfg.need(&cfg.flowline, "flowline")?)?;
    let profile = files::profile(cfg.need(&cfg.profile, "profile")?)?;
    let report = validate_profile(&flowline, &profile);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if !report.is_ok() {
        return Err(CliError::domain(format!("profile does not fit the flowline: {report}")));
    }
    Ok((flowline, profile))
}

pub fn schedule(cfg: &RunConfig, fit: Option<&[f64]>) -> Result<()> {
    let (flowline, profile) = model(cfg)?;
    let catalog = files::catalog(cfg.catalog.as_deref())?;
    let fit = match (fit, &cfg.observations) {
        (Some(&[a, b, c]), _) => Some(MakespanPriceFit::new(a, b, c)),
        (Some(_), _) => return Err(CliError::domain("--fit takes three numbers a,b,c")),
        (None, Some(path)) => Some(
            fit_price_makespan_with(&files::observations(path)?, CurveFitOptions::default())
                .map_err(|e| CliError::in_file(path, e))?,
        ),
        (None, None) => None,
    };
    let options = ScheduleOptions {
        fit,
        refine_rounds: cfg.refine_rounds,
    };
    let plan =
        plan_schedule(&flowline, &profile, &catalog, &context(cfg, cfg.eta), &options).map_err(CliError::domain)?;
    log::info!("procured {}", plan.describe());
    files::emit(cfg.output.as_ref(), &format!("{}\n", plan.to_json()))
}

fn sim_config(cfg: &RunConfig) -> SimConfig {
    SimConfig {
        latency_s: cfg.net.latency_s,
        bandwidth_bps: cfg.net.bandwidth_bps,
        slice_size: cfg.slice_size,
        corpus_size: cfg.corpus_size,
        jitter: cfg.jitter,
        seed: cfg.seed,
        admission: cfg.admission,
    }
}

pub fn simulate(cfg: &RunConfig, trace: Option<&PathBuf>) -> Result<()> {
    let (flowline, profile) = model(cfg)?;
    let plan = files::plan(cfg.need(&cfg.plan, "plan")?)?;
    let sim = sim_config(cfg);
    let result = run_simulation(&plan, &flowline, &profile, &sim).map_err(CliError::domain)?;
    let predicted = evaluate_plan(&plan, &flowline, &profile, &context(cfg, cfg.eta)).map_err(CliError::domain)?;
    if let Some(path) = trace {
        files::emit(Some(path), &files::to_json(&result.chrome_trace()))?;
    }
    #[derive(Serialize)]
    struct Out<'a> {
        plan: String,
        slices: u64,
        total_time: f64,
        monetary_cost: f64,
        /// Slice count times the analytical makespan.
        predicted_total_time: f64,
        predicted_monetary_cost: f64,
        per_slice_makespan: &'a [f64],
    }
    files::emit(
        cfg.output.as_ref(),
        &files::to_json(&Out {
            plan: plan.describe(),
            slices: sim.slices(),
            total_time: result.total_time,
            monetary_cost: result.monetary_cost,
            predicted_total_time: predicted.cost_com_s,
            predicted_monetary_cost: predicted.cost_mon,
            per_slice_makespan: &result.per_slice_makespan,
        }),
    )
}

pub fn sweep(cfg: &RunConfig, csv: Option<&PathBuf>) -> Result<()> {
    let (flowline, profile) = model(cfg)?;
    let catalog = files::catalog(cfg.catalog.as_deref())?;
    let config = SweepConfig {
        sim: sim_config(cfg),
        seed: cfg.seed,
    };
    let rows = sweep_eta(&flowline, &profile, &catalog, &cfg.etas, &config).map_err(CliError::domain)?;
    if let Some(path) = csv {
        let mut text = format!("{}\n", SweepRow::CSV_HEADER);
        for r in &rows {
            text.push_str(&r.csv());
            text.push('\n');
        }
        files::emit(Some(path), &text)?;
    }
    files::emit(cfg.output.as_ref(), &files::to_json(&rows))
}

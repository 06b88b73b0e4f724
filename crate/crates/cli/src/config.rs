//! Option resolution: command-line flags override the config file, which
//! overrides the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kgflow_core::cost::check_eta;
use kgflow_core::flowline::NetworkParams;
use kgflow_core::sim::Admission;
use kgflow_runtime::ntriples::DEFAULT_NAMESPACE;

use crate::error::{CliError, Result};

pub const CATALOG_ENV: &str = "KGFLOW_CATALOG";

pub const DEFAULT_SLICE_SIZE: u64 = 200;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_CORPUS_SIZE: u64 = 10_000;
pub const DEFAULT_ETAS: [f64; 3] = [0.2, 0.5, 0.8];

/// Every optional setting. Used both for the TOML file and for the flags of
/// one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub flowline: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub endpoints: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub slice_size: Option<u64>,
    pub corpus_size: Option<u64>,
    pub eta: Option<f64>,
    pub etas: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub latency_s: Option<f64>,
    pub bandwidth_bps: Option<f64>,
    pub jitter: Option<f64>,
    pub admission: Option<Admission>,
    pub refine_rounds: Option<usize>,
    pub namespace: Option<String>,
}

macro_rules! layer {
    ($top:expr, $base:expr, $($field:ident),*) => {
        Overrides { $($field: $top.$field.clone().or_else(|| $base.$field.clone()),)* }
    };
}

impl Overrides {
    /// Read a TOML config file. Relative paths inside it are taken relative
    /// to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut o: Overrides = toml::from_str(&text).map_err(|e| CliError::in_file(path, e))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut o.flowline,
            &mut o.corpus,
            &mut o.ontology,
            &mut o.endpoints,
            &mut o.catalog,
            &mut o.profile,
            &mut o.plan,
            &mut o.observations,
            &mut o.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(o)
    }

    /// Settings of `self`, falling back to `base` field by field.
    pub fn over(&self, base: &Overrides) -> Overrides {
        layer!(
            self,
            base,
            flowline,
            corpus,
            ontology,
            endpoints,
            catalog,
            profile,
            plan,
            observations,
            output,
            slice_size,
            corpus_size,
            eta,
            etas,
            seed,
            latency_s,
            bandwidth_bps,
            jitter,
            admission,
            refine_rounds,
            namespace
        )
    }
}

/// Fully resolved options of one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub flowline: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub endpoints: Option<PathBuf>,
    /// Falls back to the `KGFLOW_CATALOG` environment variable, then to the
    /// bundled qCloud catalog.
    pub catalog: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub slice_size: u64,
    pub corpus_size: u64,
    pub eta: f64,
    pub etas: Vec<f64>,
    pub seed: u64,
    pub net: NetworkParams,
    pub jitter: f64,
    pub admission: Admission,
    pub refine_rounds: usize,
    pub namespace: String,
}

impl RunConfig {
    /// Layer flags over the file over the defaults and check the result.
    pub fn resolve(flags: &Overrides, file: &Overrides, env_catalog: Option<PathBuf>) -> Result<Self> {
        let o = flags.over(file);
        let net = NetworkParams::default();
        let cfg = RunConfig {
            flowline: o.flowline,
            corpus: o.corpus,
            ontology: o.ontology,
            endpoints: o.endpoints,
            catalog: o.catalog.or(env_catalog),
            profile: o.profile,
            plan: o.plan,
            observations: o.observations,
            output: o.output,
            slice_size: o.slice_size.unwrap_or(DEFAULT_SLICE_SIZE),
            corpus_size: o.corpus_size.unwrap_or(DEFAULT_CORPUS_SIZE),
            eta: o.eta.unwrap_or(DEFAULT_ETA),
            etas: o.etas.unwrap_or_else(|| DEFAULT_ETAS.to_vec()),
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            net: NetworkParams {
                latency_s: o.latency_s.unwrap_or(net.latency_s),
                bandwidth_bps: o.bandwidth_bps.unwrap_or(net.bandwidth_bps),
            },
            jitter: o.jitter.unwrap_or(0.0),
            admission: o.admission.unwrap_or_default(),
            refine_rounds: o.refine_rounds.unwrap_or(50),
            namespace: o.namespace.unwrap_or_else(|| DEFAULT_NAMESPACE.to_string()),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        check_eta(self.eta).map_err(CliError::domain)?;
        if self.etas.is_empty() {
            return Err(CliError::domain("etas must not be empty"));
        }
        for &eta in &self.etas {
            check_eta(eta).map_err(CliError::domain)?;
        }
        if self.slice_size == 0 {
            return Err(CliError::domain("slice size must be positive"));
        }
        if self.corpus_size == 0 {
            return Err(CliError::domain("corpus size must be positive"));
        }
        self.net.check().map_err(CliError::domain)?;
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(CliError::domain(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        Ok(())
    }

    /// A path the command cannot do without.
    pub fn need<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| CliError::domain(format!("missing --{flag} (or `{}` in the config file)", flag.replace('-', "_"))))
    }
}

//! Reading inputs and writing results.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use kgflow_core::cost::{load_catalog, Observation, VmType};
use kgflow_core::fixtures::QCLOUD_JSON;
use kgflow_core::flowline::{Flowline, TaskProfile};
use kgflow_core::gfl::parse;
use kgflow_core::scheduler::SchedulePlan;
use kgflow_runtime::endpoint::EndpointSpec;
use kgflow_runtime::{load_corpus, Document, Ontology};

use crate::error::{CliError, Result};

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// A `.json` flowline or GFL source.
pub fn flowline(path: &Path) -> Result<Flowline> {
    let text = read(path)?;
    if is_json(path) {
        Flowline::from_json(&text).map_err(|e| CliError::in_file(path, e))
    } else {
        parse(&text).map_err(|e| CliError::in_file(path, e))
    }
}

pub fn profile(path: &Path) -> Result<TaskProfile> {
    TaskProfile::from_json(&read(path)?).map_err(|e| CliError::in_file(path, e))
}

pub fn plan(path: &Path) -> Result<SchedulePlan> {
    SchedulePlan::from_json(&read(path)?).map_err(|e| CliError::in_file(path, e))
}

/// The given catalog, or the bundled qCloud one.
pub fn catalog(path: Option<&Path>) -> Result<Vec<VmType>> {
    match path {
        Some(p) => load_catalog(&read(p)?).map_err(|e| CliError::in_file(p, e)),
        None => load_catalog(QCLOUD_JSON).map_err(CliError::domain),
    }
}

pub fn observations(path: &Path) -> Result<Vec<Observation>> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::in_file(path, e))
}

pub fn corpus(path: &Path) -> Result<Vec<Document>> {
    // Surface a missing file as an i/o error rather than a parse error.
    std::fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    load_corpus(path).map_err(CliError::domain)
}

pub fn ontology(path: Option<&Path>) -> Result<Ontology> {
    match path {
        Some(p) => Ontology::from_json(&read(p)?).map_err(|e| CliError::in_file(p, e)),
        None => Ok(Ontology::default()),
    }
}

/// Endpoint specs by binding name, from TOML (`.toml`) or JSON. Relative
/// oracle corpus paths are taken relative to the file.
pub fn endpoints(path: &Path) -> Result<BTreeMap<String, EndpointSpec>> {
    let text = read(path)?;
    let mut specs: BTreeMap<String, EndpointSpec> = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| CliError::in_file(path, e))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::in_file(path, e))?
    };
    let dir = path.parent().unwrap_or(Path::new(""));
    for spec in specs.values_mut() {
        if let EndpointSpec::OracleCe { corpus: Some(c), .. } | EndpointSpec::OracleCc { corpus: Some(c), .. } = spec {
            if c.is_relative() {
                *c = dir.join(&*c);
            }
        }
    }
    Ok(specs)
}

/// Write `text` to `path`, or to stdout when there is no path.
pub fn emit(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}

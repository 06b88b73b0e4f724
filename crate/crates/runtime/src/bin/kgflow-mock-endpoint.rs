//! Serve a mock endpoint over stdin and stdout.
//!
//! Usage: `kgflow-mock-endpoint SPEC.json`, where the file holds one endpoint
//! spec (gazetteer, keyword, oracle-ce or oracle-cc). Oracles must name
//! their own corpus.

use std::io::{self, BufReader};
use std::process::ExitCode;

use kgflow_runtime::endpoint::{serve, EndpointSpec};

fn main() -> ExitCode {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: kgflow-mock-endpoint SPEC.json");
        return ExitCode::from(1);
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{path}: {e}");
            return ExitCode::from(2);
        }
    };
    let spec: EndpointSpec = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{path}: {e}");
            return ExitCode::from(1);
        }
    };
    if matches!(spec, EndpointSpec::Subprocess { .. }) {
        eprintln!("{path}: a mock endpoint cannot wrap another process");
        return ExitCode::from(1);
    }
    let mut endpoint = match spec.build(None) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("{path}: {e}");
            return ExitCode::from(1);
        }
    };
    match serve(endpoint.as_mut(), BufReader::new(io::stdin().lock()), io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

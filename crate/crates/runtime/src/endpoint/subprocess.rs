use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use kgflow_core::flowline::ModelTask;

use super::{Endpoint, EndpointError, Hello, InferResult, InferRow, Request, Response};

/// An endpoint served by a child process over line-delimited JSON.
pub struct SubprocessEndpoint {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    hello: Hello,
}

impl SubprocessEndpoint {
    /// Start `command` and perform the hello handshake.
    pub fn spawn(command: &[String]) -> Result<Self, EndpointError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| EndpointError::Config("empty endpoint command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut endpoint = SubprocessEndpoint {
            child,
            stdin,
            stdout,
            hello: Hello {
                task: ModelTask::Ce,
                label_set: Vec::new(),
            },
        };
        match endpoint.call(&Request::Hello)? {
            Response::Hello(h) => endpoint.hello = h,
            other => return Err(EndpointError::Protocol(format!("expected hello, got {other:?}"))),
        }
        Ok(endpoint)
    }

    fn call(&mut self, request: &Request) -> Result<Response, EndpointError> {
        let mut line = serde_json::to_string(request).map_err(|e| EndpointError::Protocol(e.to_string()))?;
        line.push('\n');
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply)? == 0 {
            return Err(EndpointError::Protocol("endpoint closed its output".into()));
        }
        match serde_json::from_str(&reply) {
            Ok(Response::Error { error }) => Err(EndpointError::Remote(error)),
            Ok(r) => Ok(r),
            Err(e) => Err(EndpointError::Protocol(format!("bad response: {e}"))),
        }
    }
}

impl Endpoint for SubprocessEndpoint {
    fn task(&self) -> ModelTask {
        self.hello.task
    }

    fn label_set(&self) -> Vec<String> {
        self.hello.label_set.clone()
    }

    fn infer(&mut self, rows: &[InferRow]) -> Result<Vec<InferResult>, EndpointError> {
        let request = Request::Infer {
            task: self.hello.task,
            rows: rows.to_vec(),
        };
        match self.call(&request)? {
            Response::Rows { rows: out } if out.len() == rows.len() => Ok(out),
            Response::Rows { rows: out } => Err(EndpointError::Protocol(format!(
                "{} results for {} rows",
                out.len(),
                rows.len()
            ))),
            other => Err(EndpointError::Protocol(format!("unexpected response {other:?}"))),
        }
    }
}

impl Drop for SubprocessEndpoint {
    fn drop(&mut self) {
        // Endpoints keep no state between requests, so stopping them abruptly
        // loses nothing.
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

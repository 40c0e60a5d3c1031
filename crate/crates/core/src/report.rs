//! Deterministic JSON report envelopes.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::Result;
use crate::structures::hex_digest;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputRef {
    pub fn read(path: &Path) -> Result<(InputRef, String)> {
        let text = std::fs::read_to_string(path)?;
        let sha256 = hex_digest(text.as_bytes());
        Ok((InputRef { path: path.to_path_buf(), sha256 }, text))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: String,
    pub inputs: Vec<InputRef>,
    pub arguments: Value,
    pub status: Status,
    pub result: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A violation, rejection or counterexample.
    Flagged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Flagged => 1,
        }
    }
}

impl Report {
    pub fn new(command: &str, arguments: Value) -> Report {
        Report { command: command.into(), inputs: Vec::new(), arguments, status: Status::Ok, result: Value::Null }
    }

    pub fn to_value(&self) -> Value {
        json!({
            "tool": "msow",
            "version": crate::VERSION,
            "command": self.command,
            "inputs": self.inputs.iter().map(|i| json!({ "path": i.path.display().to_string(), "sha256": i.sha256 })).collect::<Vec<_>>(),
            "arguments": self.arguments,
            "status": match self.status { Status::Ok => "ok", Status::Flagged => "flagged" },
            "result": self.result,
        })
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes to `out`, or stdout when absent.
    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        match out {
            Some(p) => std::fs::write(p, self.render())?,
            None => print!("{}", self.render()),
        }
        Ok(())
    }
}

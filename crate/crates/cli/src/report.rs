use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub version: &'static str,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub parameters: Value,
    pub seeds: Vec<u64>,
    pub reports: Value,
    pub metrics: Value,
}

impl RunReport {
    pub fn new(command: &'static str) -> Self {
        RunReport {
            command,
            version: env!("CARGO_PKG_VERSION"),
            inputs: Vec::new(),
            outputs: Vec::new(),
            parameters: Value::Null,
            seeds: Vec::new(),
            reports: Value::Null,
            metrics: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Pretty JSON to `dest`, or to stdout when no destination is given.
    pub fn emit(&self, dest: Option<&PathBuf>) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::new("internal", e.to_string(), None))?;
        match dest {
            Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::io(p, e)),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize to JSON")
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>, path: Option<&Path>) -> Self {
        CliError {
            kind: kind.into(),
            message: message.into(),
            path: path.map(|p| p.display().to_string()),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new("io", e.to_string(), Some(path))
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("usage", message, None)
    }

    /// Single-line JSON, as written to stderr.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {} ({p})", self.kind, self.message),
            None => write!(f, "{}: {}", self.kind, self.message),
        }
    }
}

impl From<condproj::Error> for CliError {
    fn from(e: condproj::Error) -> Self {
        CliError::new(e.kind(), e.to_string(), None)
    }
}

/// Attaches the offending file to errors raised while handling it.
pub trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> WithPath<T> for condproj::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|e| {
            let mut err = CliError::from(e);
            err.path = Some(path.display().to_string());
            err
        })
    }
}

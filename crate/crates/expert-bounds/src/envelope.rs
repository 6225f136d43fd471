//! Machine-readable output envelope shared by every CLI command.
//!
//! Every number that influenced a result is echoed back under `command`,
//! including resolved defaults and seeds, so any published figure can be
//! reproduced from the envelope alone. Floats are serialized with 17
//! significant digits so a parsed envelope round-trips bit-exactly.

use std::io;

use serde::Serialize;

use crate::error::Error;
use crate::model::ValidationReport;

pub const TOOL_NAME: &str = "expert-bounds";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommandEcho {
    pub name: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeError {
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEnvelope {
    pub tool: ToolInfo,
    pub command: CommandEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<EnvelopeError>,
}

impl OutputEnvelope {
    pub fn new(command: &str, params: serde_json::Value) -> Self {
        OutputEnvelope {
            tool: ToolInfo {
                name: TOOL_NAME,
                version: TOOL_VERSION,
            },
            command: CommandEcho {
                name: command.to_string(),
                params,
            },
            result: None,
            validation: None,
            warnings: Vec::new(),
            error: None,
        }
    }

    pub fn with_error(mut self, err: &Error) -> Self {
        if let Error::Validation(report) = err {
            self.validation = Some(report.clone());
        }
        self.error = Some(EnvelopeError {
            kind: error_kind(err),
            message: err.to_string(),
        });
        self
    }

    pub fn to_json(&self) -> String {
        json_17(self)
    }
}

/// Stable machine-readable error class names.
pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::InvalidInput(_) => "invalid_input",
        Error::Domain(_) => "domain",
        Error::Validation(_) => "validation",
        Error::Infeasible(_) => "infeasible",
        Error::Precondition(_) => "precondition",
        Error::Solver(_) => "solver",
        Error::Generation(_) => "generation",
        Error::Estimation(_) => "estimation",
        Error::Inference(_) => "inference",
        Error::Format { .. } => "format",
        Error::Io(_) => "io",
    }
}

/// Process exit code for an error: 2 for bad inputs or failed validation,
/// 3 for computation failures.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_)
        | Error::Domain(_)
        | Error::Validation(_)
        | Error::Infeasible(_)
        | Error::Precondition(_)
        | Error::Estimation(_)
        | Error::Format { .. } => 2,
        Error::Solver(_) | Error::Generation(_) | Error::Inference(_) | Error::Io(_) => 3,
    }
}

struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with 17-significant-digit floats (exact f64 round-trip).
pub fn json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
    value
        .serialize(&mut ser)
        .expect("serialization cannot fail for finite values");
    String::from_utf8(out).expect("serde_json emits utf-8")
}

/// Render a number with 6 significant digits for the text format.
pub fn format_sig6(x: f64) -> String {
    format!("{x:.5e}")
}

/// Flatten a JSON tree into `path = value` lines; numbers use 6 significant
/// digits so text output carries the same figures as the JSON envelope.
pub fn render_value_text(value: &serde_json::Value, path: &str, out: &mut String) {
    match value {
        serde_json::Value::Object(map) => {
            for (key, child) in map {
                let child_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                render_value_text(child, &child_path, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                render_value_text(child, &format!("{path}[{i}]"), out);
            }
        }
        serde_json::Value::Number(n) => {
            let rendered = if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    format_sig6(f)
                } else {
                    n.to_string()
                }
            } else {
                n.to_string()
            };
            out.push_str(&format!("{path} = {rendered}\n"));
        }
        serde_json::Value::String(s) => out.push_str(&format!("{path} = {s}\n")),
        serde_json::Value::Bool(b) => out.push_str(&format!("{path} = {b}\n")),
        serde_json::Value::Null => out.push_str(&format!("{path} = null\n")),
    }
}

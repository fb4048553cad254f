use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use subquad::Error;

/// Bumped whenever a field of [`RunReport`] changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: &'static str,
    /// Arguments after the program name.
    pub command: Vec<String>,
    /// SHA-256 over the arguments and the canonical form of every input read.
    pub inputs_digest: String,
    pub seed: Option<u64>,
    pub ok: bool,
    pub outputs: Value,
    pub warnings: Vec<String>,
    pub error: Option<ErrorReport>,
    pub timing: Timing,
}

#[derive(Serialize)]
pub struct Timing {
    pub wall_time_secs: f64,
}

#[derive(Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

pub struct Summary {
    pub seed: Option<u64>,
    pub outputs: Value,
    pub warnings: Vec<String>,
}

pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure {
            kind: "invalid_argument",
            message: msg.into(),
            exit_code: 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            kind: "io",
            message: format!("{}: {e}", path.display()),
            exit_code: 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, exit_code) = match &e {
            Error::InvalidArgument(_) => ("invalid_argument", 2),
            Error::Parse(_) => ("parse", 2),
            Error::OutOfRegime(_) => ("out_of_regime", 3),
            Error::InfeasibleConditioning => ("infeasible_conditioning", 3),
            Error::GrowthAssumptionViolated { .. } => ("growth_assumption_violated", 3),
            Error::BudgetExhausted { .. } => ("budget_exhausted", 3),
            Error::SamplerStuck { .. } => ("sampler_stuck", 3),
            Error::OracleTooLarge { .. } => ("oracle_too_large", 4),
            Error::Internal(_) => ("internal", 1),
        };
        Failure {
            kind,
            message: e.to_string(),
            exit_code,
        }
    }
}

fn digest(argv: &[String], parts: &[String]) -> String {
    let mut h = Sha256::new();
    for chunk in argv.iter().skip(1).chain(parts) {
        h.update((chunk.len() as u64).to_le_bytes());
        h.update(chunk.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunReport {
    pub fn success(argv: &[String], parts: &[String], s: Summary, wall: f64) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command: argv.iter().skip(1).cloned().collect(),
            inputs_digest: digest(argv, parts),
            seed: s.seed,
            ok: true,
            outputs: s.outputs,
            warnings: s.warnings,
            error: None,
            timing: Timing { wall_time_secs: wall },
        }
    }

    pub fn failure(argv: &[String], parts: &[String], f: Failure, wall: f64) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command: argv.iter().skip(1).cloned().collect(),
            inputs_digest: digest(argv, parts),
            seed: None,
            ok: false,
            outputs: Value::Null,
            warnings: vec![],
            error: Some(ErrorReport {
                kind: f.kind,
                message: f.message,
                exit_code: f.exit_code,
            }),
            timing: Timing { wall_time_secs: wall },
        }
    }
}

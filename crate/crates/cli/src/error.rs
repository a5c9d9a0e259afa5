use std::fmt;
use std::path::Path;

use rmc_core::expression::ExprError;
use rmc_core::integrator::IntegrateError;
use rmc_core::model::ModelError;
use rmc_core::samplers::SampleError;
use rmc_core::stats::StatsError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn parse(what: &str, text: &str, err: &ExprError) -> Self {
        let mut message = format!("cannot parse {what}: {err}\n  {text}");
        let offset = match err {
            ExprError::Syntax { offset, .. }
            | ExprError::UnknownIdentifier { offset, .. }
            | ExprError::Arity { offset, .. } => Some(*offset),
            _ => None,
        };
        if let Some(offset) = offset {
            let col = text[..offset.min(text.len())].chars().count();
            message.push_str(&format!("\n  {}^", " ".repeat(col)));
        }
        Self {
            code: EXIT_PARSE,
            message,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::usage(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Parse(inner) => Self {
                code: EXIT_PARSE,
                message: inner.to_string(),
            },
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<SampleError> for CliError {
    fn from(e: SampleError) -> Self {
        match e {
            SampleError::BudgetExhausted { .. } => Self {
                code: EXIT_BUDGET,
                message: e.to_string(),
            },
            SampleError::Model(m) => m.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::Sample(s) => s.into(),
            IntegrateError::Model(m) => m.into(),
            other => Self::usage(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        Self::usage(e.to_string())
    }
}

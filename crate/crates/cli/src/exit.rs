//! Process exit codes.

use std::fmt;

use surgen::Error;

pub const DATA: i32 = 2;
pub const MISSING: i32 = 3;
pub const INPUT: i32 = 4;
pub const INTERNAL: i32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(INPUT, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(DATA, message)
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self::new(MISSING, message)
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        Self::new(INTERNAL, e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::MissingPrerequisite(_) => MISSING,
            Error::Format { .. }
            | Error::Crop { .. }
            | Error::Capacity(_)
            | Error::Protocol(_)
            | Error::DegenerateClass(_)
            | Error::SampleSize { .. }
            | Error::Image(_)
            | Error::Io { .. } => DATA,
            Error::Parse { .. } | Error::Input(_) | Error::InvalidConfig(_) | Error::Json(_) => INPUT,
            Error::Checkpoint(_) | Error::ComponentTag { .. } => MISSING,
            Error::Shape(_)
            | Error::Numeric(_)
            | Error::SingularSchedule { .. }
            | Error::NonFiniteGradient(_) => INTERNAL,
        };
        CliError::new(code, e.to_string())
    }
}

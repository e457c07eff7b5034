//! The crate-wide error and its exit-code / HTTP-status mapping.

use thiserror::Error;

use crate::checker::CheckError;
use crate::config::ConfigError;
use crate::harness::HarnessError;
use crate::lang::{ClauseError, NormalizeError};
use crate::llm::LlmError;
use crate::project::ProjectError;
use crate::registry::RegistryError;
use crate::store::LockError;
use crate::testgen::TestgenError;
use crate::trace::TraceError;

pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const VIOLATIONS: i32 = 3;
    pub const PROJECT: i32 = 4;
    pub const VALIDATION: i32 = 5;
    pub const PROVIDER: i32 = 6;
    pub const HARNESS: i32 = 7;
    pub const CONFLICT: i32 = 8;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Clause(#[from] ClauseError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Testgen(#[from] TestgenError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("{0}")]
    Internal(String),
}

/// Coarse classes shared by the exit-code table and the HTTP mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Internal,
    Usage,
    NotFound,
    Project,
    Validation,
    Provider,
    Harness,
    Conflict,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Internal => exit::INTERNAL,
            ErrorClass::Usage | ErrorClass::NotFound => exit::USAGE,
            ErrorClass::Project => exit::PROJECT,
            ErrorClass::Validation => exit::VALIDATION,
            ErrorClass::Provider => exit::PROVIDER,
            ErrorClass::Harness => exit::HARNESS,
            ErrorClass::Conflict => exit::CONFLICT,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorClass::NotFound => 404,
            ErrorClass::Conflict => 409,
            ErrorClass::Validation | ErrorClass::Usage => 422,
            ErrorClass::Provider | ErrorClass::Harness => 502,
            ErrorClass::Internal | ErrorClass::Project => 500,
        }
    }
}

fn trace_class(e: &TraceError) -> ErrorClass {
    match e {
        TraceError::UnknownNode(_) => ErrorClass::NotFound,
        TraceError::AlreadySpecified { .. } => ErrorClass::Conflict,
        TraceError::Validation(_) => ErrorClass::Validation,
        TraceError::Dangling(_) | TraceError::KindMismatch { .. } => ErrorClass::Project,
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::NotFound(_) => ErrorClass::NotFound,
            Error::Conflict(_) | Error::Lock(LockError::Held { .. }) => ErrorClass::Conflict,
            Error::Project(_) | Error::Lock(_) => ErrorClass::Project,
            Error::Config(_) => ErrorClass::Usage,
            Error::Registry(e) => match e {
                RegistryError::UnknownTask(_) | RegistryError::UnknownContract(_) => ErrorClass::NotFound,
                RegistryError::IllegalTransition { .. } => ErrorClass::Conflict,
                RegistryError::InvalidClause { .. } | RegistryError::Parse(_) => ErrorClass::Validation,
                RegistryError::Trace(t) => trace_class(t),
            },
            Error::Trace(e) => trace_class(e),
            Error::Clause(_) | Error::Normalize(_) => ErrorClass::Validation,
            Error::Llm(e) => match e {
                LlmError::UnknownTemplate(_) | LlmError::MissingVariable(_) => ErrorClass::Internal,
                LlmError::InvalidRequest(_) | LlmError::Config(_) | LlmError::Script(_) => ErrorClass::Usage,
                _ => ErrorClass::Provider,
            },
            Error::Harness(_) => ErrorClass::Harness,
            Error::Testgen(e) => match e {
                TestgenError::UnknownTask(_) => ErrorClass::NotFound,
                TestgenError::Registry(r) => Error::Registry(r.clone()).class(),
                TestgenError::Trace(t) => trace_class(t),
                _ => ErrorClass::Validation,
            },
            Error::Check(e) => match e {
                CheckError::Harness(_) => ErrorClass::Harness,
                CheckError::UnknownPlan(_) | CheckError::NoReport(_) => ErrorClass::NotFound,
                CheckError::MissingClause(_) => ErrorClass::Project,
                CheckError::Trace(t) => trace_class(t),
                CheckError::UnitMismatch { .. } | CheckError::EmptyReport => ErrorClass::Internal,
            },
            Error::Internal(_) => ErrorClass::Internal,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }

    pub fn http_status(&self) -> u16 {
        self.class().http_status()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! CLI error categories and their process exit codes.
//!
//! 0 success, 2 usage error, 3 data error, 4 numerical abort.

use posture_core::adalstm::LstmError;
use posture_core::baselines::BaselineError;
use posture_core::ensemble::EnsembleError;
use posture_core::eval::experiment::ExperimentError;
use posture_core::eval::EvalError;
use posture_core::features::FeatureError;
use posture_core::signal::io::DataIoError;
use posture_core::signal::SignalError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataIoError> for CliError {
    fn from(e: DataIoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LstmError> for CliError {
    fn from(e: LstmError) -> Self {
        match e {
            LstmError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::SingularCovariance => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Lstm(inner) => inner.into(),
            ExperimentError::Baseline(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

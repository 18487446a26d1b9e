//! Exit-code mapping: 2 usage (clap), 3 data/format, 4 hierarchy
//! validation, 5 training failure.

use hicl_core::corpus::DataError;
use hicl_core::evaluation::EvalError;
use hicl_core::hierarchy::HierarchyError;
use hicl_core::model::ModelIoError;
use hicl_core::predictor::PredictError;
use hicl_core::selection::SelectionError;
use hicl_core::trainer::TrainError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Hierarchy(String),
    Training(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Hierarchy(_) => 4,
            CliError::Training(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Data(m)
            | CliError::Hierarchy(m)
            | CliError::Training(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<HierarchyError> for CliError {
    fn from(e: HierarchyError) -> Self {
        match e {
            // labels that do not fit the taxonomy are a data problem
            HierarchyError::UnknownLabel(_) => CliError::Data(e.to_string()),
            other => CliError::Hierarchy(other.to_string()),
        }
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Training(e.to_string())
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::EmptyGrid | SelectionError::InvalidGrid(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Training(other.to_string()),
        }
    }
}

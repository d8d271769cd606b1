use std::fmt;

use flow360::augment::AugmentError;
use flow360::eval::EvalError;
use flow360::raster::RasterError;
use flow360::sphconv::{ConvError, FitError};
use flow360::sphere::SphereError;
use flow360::warp::WarpError;

/// Process exit codes: 2 usage/config, 3 i/o, 4 bad data.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Io(msg) | CliError::Data(msg) => f.write_str(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError::Io(err.to_string())
    }
}

impl From<RasterError> for CliError {
    fn from(err: RasterError) -> CliError {
        match err {
            RasterError::Io(_) => CliError::Io(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<SphereError> for CliError {
    fn from(err: SphereError) -> CliError {
        CliError::Data(err.to_string())
    }
}

impl From<AugmentError> for CliError {
    fn from(err: AugmentError) -> CliError {
        CliError::Data(err.to_string())
    }
}

impl From<WarpError> for CliError {
    fn from(err: WarpError) -> CliError {
        CliError::Data(err.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> CliError {
        CliError::Data(err.to_string())
    }
}

impl From<ConvError> for CliError {
    fn from(err: ConvError) -> CliError {
        match err {
            ConvError::Io(_) => CliError::Io(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(err: FitError) -> CliError {
        match err {
            FitError::Conv(ConvError::Io(_)) => CliError::Io(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

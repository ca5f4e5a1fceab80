use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numeric core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Shape or axis mismatch; the message names the offending axis.
    Dim { op: &'static str, detail: String },
    /// Invalid configuration value (dilation < 1, keep rate out of range, ...).
    Param { op: &'static str, detail: String },
    /// Non-finite values encountered where finite ones are required.
    Numeric { op: &'static str, detail: String },
    /// API misuse (e.g. backward on a non-scalar node).
    Usage { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dim { op, detail } => write!(f, "{op}: dimension error: {detail}"),
            Error::Param { op, detail } => write!(f, "{op}: parameter error: {detail}"),
            Error::Numeric { op, detail } => write!(f, "{op}: numeric error: {detail}"),
            Error::Usage { detail } => write!(f, "usage error: {detail}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! dim_err {
    ($op:expr, $($arg:tt)*) => {
        $crate::error::Error::Dim { op: $op, detail: alloc::format!($($arg)*) }
    };
}

macro_rules! param_err {
    ($op:expr, $($arg:tt)*) => {
        $crate::error::Error::Param { op: $op, detail: alloc::format!($($arg)*) }
    };
}

macro_rules! numeric_err {
    ($op:expr, $($arg:tt)*) => {
        $crate::error::Error::Numeric { op: $op, detail: alloc::format!($($arg)*) }
    };
}

pub(crate) use {dim_err, numeric_err, param_err};

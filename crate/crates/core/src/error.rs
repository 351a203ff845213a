use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    Domain(&'static str),
    /// The requested quantity does not exist for these inputs (no root, n ≤ 0, ...).
    Infeasible(&'static str),
    /// An ante or a data purchase exceeds the wealth available.
    InsufficientWealth {
        what: &'static str,
        requested: f64,
        available: f64,
    },
    /// Prior null probability of exactly 0 or 1: the equalizing condition divides by 1 − q.
    DegeneratePrior(f64),
    /// Emitted parameters violate the mFDR reward caps.
    CapViolation { psi: f64, cap: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::InsufficientWealth {
                what,
                requested,
                available,
            } => write!(
                f,
                "insufficient {what}: requested {requested}, available {available}"
            ),
            Error::DegeneratePrior(q) => write!(
                f,
                "degenerate prior q = {q}: the equalizing condition is undefined at q = 0 or q = 1"
            ),
            Error::CapViolation { psi, cap } => {
                write!(f, "reward {psi} exceeds the mFDR cap {cap}")
            }
        }
    }
}

impl core::error::Error for Error {}

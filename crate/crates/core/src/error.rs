use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} budget exceeded: requested {requested}, limit {limit}")]
    Budget {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        LabError::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Work limits shared by the enumeration and quadrature routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    /// Maximum number of ordered s-tuples enumerated by the grouping engine.
    pub tuples: u64,
    /// Maximum number of pairs visited by the brute-force oracle.
    pub brute_pairs: u64,
    /// Maximum number of quadrature cells times frequencies.
    pub cell_ops: u64,
    /// Maximum number of complex values materialised by `eval_grid`.
    pub grid_values: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            tuples: 200_000_000,
            brute_pairs: 100_000_000,
            cell_ops: 20_000_000_000,
            grid_values: 16_000_000,
        }
    }
}

pub(crate) fn check_budget(what: &'static str, requested: u128, limit: u64) -> Result<()> {
    if requested > limit as u128 {
        Err(LabError::Budget {
            what,
            requested,
            limit: limit as u128,
        })
    } else {
        Ok(())
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    /// The user decoding last must have a strictly smaller NCR than its companion.
    #[error("invalid SIC order: last-SIC NCR {last} must be below companion NCR {companion}")]
    InvalidOrder { last: f64, companion: f64 },

    #[error("instance with {users} users exceeds the exhaustive-search limit of {limit}")]
    TooLargeInstance { users: usize, limit: usize },

    #[error("non-finite rate for user {user} in slot {slot}")]
    NonFiniteRate { user: usize, slot: u64 },

    #[error("dimension mismatch: {what} has {got} entries, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

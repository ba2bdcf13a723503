use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CR-PNN II inapplicable for order {order} with input dimension {n}; use CR-PNN I for orders below n+2 = {}", n + 2)]
    Topology { n: usize, order: usize },

    #[error("power c = {power} outside the admissible range [1, {}] for {taylor_layers} Taylor layers", taylor_layers + 2)]
    PowerOutOfRange { taylor_layers: usize, power: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("numeric overflow in layer {layer} activations; scale inputs to [-1, 1]")]
    Overflow { layer: usize },

    #[error("training diverged at epoch {epoch}: mse = {mse}")]
    Diverged { epoch: usize, mse: f64 },

    #[error("spectrum too large: C(n+L, n) = {bound} monomials per coordinate exceeds the limit of {limit}")]
    SpectrumTooLarge { bound: u128, limit: u128 },

    #[error("requested {requested} items but only {available} monomials of degree <= {degree} exist in {n} variables")]
    Capacity {
        requested: usize,
        available: u128,
        degree: usize,
        n: usize,
    },

    #[error("layer {layer}: expected a {expected_rows}x{expected_cols} weight matrix, found {found_rows}x{found_cols}")]
    LayerShape {
        layer: usize,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("malformed model document: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

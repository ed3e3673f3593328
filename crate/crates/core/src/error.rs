use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A malformed operator tree or an operator applied outside its arity rules.
    #[error("structural error: {0}")]
    Structural(String),

    /// A primitive evaluated outside its real domain.
    #[error("domain error: {node} is undefined at arguments {args:?} ({reason}){}", point_suffix(.point))]
    Domain {
        node: String,
        args: Vec<f64>,
        reason: &'static str,
        point: Vec<f64>,
    },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        message: String,
        line: usize,
        column: usize,
    },

    #[error("format error: {0}")]
    Format(String),
}

fn point_suffix(point: &[f64]) -> String {
    if point.is_empty() {
        String::new()
    } else {
        format!(" while evaluating at {point:?}")
    }
}

impl Error {
    /// Short machine-readable category, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Structural(_) => "structural",
            Error::Domain { .. } => "domain",
            Error::NoSolution(_) => "no-solution",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "degenerate",
            Error::Config(_) => "config",
            Error::Syntax { .. } => "syntax",
            Error::Format(_) => "format",
        }
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    /// Attaches the top-level evaluation point to a domain error that does not carry one yet.
    pub(crate) fn at_point(self, at: &[f64]) -> Self {
        match self {
            Error::Domain {
                node,
                args,
                reason,
                point,
            } if point.is_empty() => Error::Domain {
                node,
                args,
                reason,
                point: at.to_vec(),
            },
            other => other,
        }
    }
}

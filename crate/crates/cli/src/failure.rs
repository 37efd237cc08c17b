use std::fmt;

use kgctx::Error;

/// Process exit status classes. The numeric values are a stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// A failed command: what went wrong and which exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

pub type CmdResult<T> = Result<T, Failure>;

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Usage,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Data,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn numeric(msg: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Numeric,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            kind: self.kind,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Diverged { .. } | Error::NonFinite(_) => ExitKind::Numeric,
            _ => ExitKind::Data,
        };
        Self { kind, error: e.into() }
    }
}

/// Adds context to any core result.
pub trait Context<T> {
    fn ctx(self, what: impl fmt::Display + Send + Sync + 'static) -> CmdResult<T>;
}

impl<T> Context<T> for kgctx::Result<T> {
    fn ctx(self, what: impl fmt::Display + Send + Sync + 'static) -> CmdResult<T> {
        self.map_err(|e| Failure::from(e).context(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let div = Error::Diverged {
            epoch: 2,
            hint: "x".into(),
        };
        assert_eq!(Failure::from(div).kind, ExitKind::Numeric);
        assert_eq!(Failure::from(Error::NoNonNaGold).kind, ExitKind::Data);
        assert_eq!(Failure::usage("bad flag").kind.code(), 1);
        let f = Failure::from(Error::NoNonNaGold).context("evaluating p.jsonl");
        assert_eq!(f.to_string(), "evaluating p.jsonl: no non-NA gold");
    }
}

//! Plain-text model files.
//!
//! ```text
//! hcr d=2 degree=3
//! 0 0 1
//! 1 1 0.5
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so `load(save(m)) == m`.

use std::fmt::Write as _;
use std::path::Path;

use super::{HcrError, HcrModel, MultiIndex};
use crate::Scalar;

fn parse_err(line: usize, msg: impl Into<String>) -> HcrError {
    HcrError::Parse {
        line,
        msg: msg.into(),
    }
}

fn header_field(token: Option<&str>, key: &str) -> Result<usize, HcrError> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(1, format!("expected `{key}=<integer>` in header")))
}

impl<S: Scalar> HcrModel<S> {
    pub fn to_text(&self) -> String {
        let mut out = format!("hcr d={} degree={}\n", self.dim, self.degree());
        for (idx, a) in &self.coeffs {
            for j in idx.as_slice() {
                write!(out, "{j} ").expect("write to string");
            }
            writeln!(out, "{a}").expect("write to string");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HcrError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("hcr") {
            return Err(parse_err(1, "header must start with `hcr`"));
        }
        let dim = header_field(tokens.next(), "d")?;
        let degree = header_field(tokens.next(), "degree")?;
        if tokens.next().is_some() {
            return Err(parse_err(1, "trailing tokens in header"));
        }
        let mut model = Self::uniform(dim, degree)?;
        for (no, line) in lines.filter(|(_, l)| !l.is_empty()) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 1 {
                return Err(parse_err(no, format!("expected {} fields, got {}", dim + 1, fields.len())));
            }
            let idx = fields[..dim]
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(no, e.to_string()))?;
            let value: S = fields[dim]
                .parse()
                .map_err(|_| parse_err(no, format!("bad coefficient `{}`", fields[dim])))?;
            model
                .set(MultiIndex::new(idx), value)
                .map_err(|e| parse_err(no, e.to_string()))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HcrError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HcrError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

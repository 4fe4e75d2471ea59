//! Versioned text format shared by fitted kernel models.
//!
//! ```text
//! mmc-model 1 <kind>
//! key = value          (fixed order, one per line)
//! ...
//! <data lines>
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Floats are written
//! with Rust's shortest round-trip formatting, so a reload is bit-identical.

use std::fs;
use std::io::{BufRead, Lines};
use std::path::Path;
use std::str::FromStr;

use super::{IkModel, NystromModel};
use crate::error::{Error, Result};

pub(crate) const MAGIC: &str = "mmc-model 1";

pub(crate) struct HeaderReader<R> {
    lines: Lines<R>,
}

impl<R: BufRead> HeaderReader<R> {
    pub(crate) fn new(r: R, kind: &str) -> Result<Self> {
        let mut me = Self { lines: r.lines() };
        let first = me.next_data()?;
        let expected = format!("{MAGIC} {kind}");
        if first.trim() != expected {
            return Err(Error::ModelFormat(format!(
                "expected header {expected:?}, found {first:?}"
            )));
        }
        Ok(me)
    }

    pub(crate) fn next_data(&mut self) -> Result<String> {
        for line in self.lines.by_ref() {
            let line = line.map_err(|e| Error::ModelFormat(e.to_string()))?;
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Ok(trimmed.to_string());
            }
        }
        Err(Error::ModelFormat("unexpected end of model file".into()))
    }
}

pub(crate) fn parse_header<R: BufRead, T: FromStr>(r: &mut HeaderReader<R>, key: &str) -> Result<T> {
    let line = r.next_data()?;
    let value = line
        .split_once('=')
        .filter(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
        .ok_or_else(|| Error::ModelFormat(format!("expected `{key} = ...`, found {line:?}")))?;
    value
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad value for {key}: {value:?}")))
}

/// A model of either family, as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Isolation(IkModel),
    Nystrom(NystromModel),
}

pub fn save_model(model: &AnyModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    match model {
        AnyModel::Isolation(m) => m.write_to(&mut buf),
        AnyModel::Nystrom(m) => m.write_to(&mut buf),
    }
    .expect("writing to memory");
    crate::io::write_atomic(path.as_ref(), &buf)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let kind = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .and_then(|l| l.strip_prefix(MAGIC))
        .map(str::trim)
        .unwrap_or("");
    match kind {
        "isolation" => Ok(AnyModel::Isolation(IkModel::read_from(text.as_bytes())?)),
        "nystrom" => Ok(AnyModel::Nystrom(NystromModel::read_from(text.as_bytes())?)),
        _ => Err(Error::ModelFormat(format!(
            "{} is not a model file",
            path.display()
        ))),
    }
}

//! Artifact output: atomic file writes and the key-value record format used
//! for run manifests and metrics.
//!
//! A record is plain UTF-8 text, one `key = value` pair per line, in the
//! order the keys were pushed. The first line is always
//! `schema = <name>/<version>`.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{Error, Result};

/// Writes `bytes` to `path` through a temp file in the same directory and a
/// rename, so readers never observe a partial file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Ordered key-value text record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    entries: Vec<(String, String)>,
}

impl Record {
    pub fn new(schema: &str, version: u32) -> Self {
        Self {
            entries: vec![("schema".into(), format!("{schema}/{version}"))],
        }
    }

    /// Appends a pair. Newlines in the value are replaced by spaces.
    pub fn push(&mut self, key: &str, value: impl Display) -> &mut Self {
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.entries.push((key.to_string(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::InvalidParameter(format!("record line {}: {line:?}", i + 1)))?;
            entries.push((k.to_string(), v.to_string()));
        }
        if entries.first().map(|(k, _)| k.as_str()) != Some("schema") {
            return Err(Error::InvalidParameter("record does not start with a schema line".into()));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip_keeps_order() {
        let mut r = Record::new("manifest", 1);
        r.push("b", 2).push("a", "x\ny").push("f", 0.1);
        let back = Record::parse(&r.to_text()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("a"), Some("x y"));
        let keys: Vec<_> = back.entries().iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["schema", "b", "a", "f"]);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first version").unwrap();
        write_atomic(&p, b"2").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"2");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

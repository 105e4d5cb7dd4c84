//! Byte-stable writers: shortest round-trip floats, fixed column order, and a record of
//! every file with its SHA-256.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn fmt_f64(v: f64) -> String {
    ryu::Buffer::new().format(v).to_owned()
}

/// Compact float for file names: `400`, `0.5`, `1e-5`.
pub fn tag(v: f64) -> String {
    let s = fmt_f64(v);
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

/// CSV body with a header row; every cell is a float.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// `n,c_n` rows up to the last nonzero entry.
pub fn cluster_csv(c: &[f64]) -> String {
    let last = c.iter().rposition(|v| *v != 0.0).map_or(0, |i| i + 1);
    let mut out = String::from("n,c_n\n");
    let mut buf = ryu::Buffer::new();
    for (i, v) in c[..last].iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, buf.format(*v));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct OutputSink {
    root: PathBuf,
    files: Vec<FileRecord>,
}

impl OutputSink {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Io { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        }
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(FileRecord {
            path: rel.to_owned(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_is_shortest_round_trip() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-300), "1e-300");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        for v in [0.1 + 0.2, 1.0 / 3.0, 6.02e23, -4.9e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(tag(400.0), "400");
        assert_eq!(tag(0.5), "0.5");
    }

    #[test]
    fn csv_layout() {
        assert_eq!(csv(&["t", "value"], [vec![1.0, 0.5], vec![2.0, 0.25]]), "t,value\n1.0,0.5\n2.0,0.25\n");
        assert_eq!(cluster_csv(&[0.5, 0.0, 0.25, 0.0, 0.0]), "n,c_n\n1,0.5\n2,0.0\n3,0.25\n");
    }

    #[test]
    fn sink_records_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = OutputSink::create(dir.path()).unwrap();
        sink.write("a/b.csv", b"abc").unwrap();
        let rec = &sink.files()[0];
        assert_eq!(rec.path, "a/b.csv");
        assert_eq!(rec.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(std::fs::read(dir.path().join("a/b.csv")).unwrap(), b"abc");
    }
}

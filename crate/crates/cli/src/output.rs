//! Output plumbing: provenance headers, digests and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Tool version, configuration hash and digests of every input read.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &str, config_sha256: &str, seed: u64) -> Self {
        Self {
            tool: "geoprobe",
            version: VERSION,
            command: command.to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
            inputs: Vec::new(),
        }
    }

    /// Records `path` (as `label`) with the digest of its current contents.
    pub fn add_input(&mut self, label: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.add_digest(label, &bytes);
        Ok(())
    }

    pub fn add_digest(&mut self, label: &str, bytes: &[u8]) {
        if self.inputs.iter().any(|d| d.path == label) {
            return;
        }
        self.inputs.push(InputDigest {
            path: label.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Appends inputs of `other` not yet recorded.
    pub fn merge(&mut self, other: &Provenance) {
        for d in &other.inputs {
            if !self.inputs.iter().any(|x| x.path == d.path) {
                self.inputs.push(d.clone());
            }
        }
    }

    /// `#`-prefixed header lines for CSV outputs.
    pub fn csv_header(&self) -> String {
        let mut s = format!(
            "# {} {} {} config_sha256={} seed={}\n",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        );
        for d in &self.inputs {
            s.push_str(&format!("# input {} sha256={}\n", d.path, d.sha256));
        }
        s
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let name = path
        .file_name()
        .context("output path has no file name")?
        .to_string_lossy();
    let tmp: PathBuf = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f =
            fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&WithProvenance {
        provenance: prov,
        body,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV with a provenance comment header. `rows` are already formatted.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    write_atomic(path, format!("{}{body}", prov.csv_header()).as_bytes())
}

/// Fixed-precision float for CSV cells; empty for missing values.
pub fn fmt(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// Reads CSV text, skipping `#` comment lines.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_and_header() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let mut p = Provenance::new("train", "00", 3);
        p.add_digest("a.act", b"abc");
        p.add_digest("a.act", b"other");
        assert_eq!(p.inputs.len(), 1);
        assert!(p.csv_header().starts_with("# geoprobe "));
        assert!(p.csv_header().contains("# input a.act sha256=ba78"));
    }

    #[test]
    fn atomic_write_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.csv");
        let prov = Provenance::new("eval", "ff", 0);
        write_csv(
            &path,
            &prov,
            &["a", "b"],
            &[vec!["1".into(), fmt(Some(0.5))]],
        )
        .unwrap();
        let (h, rows) = read_csv(&path).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1".to_string(), "0.500000".to_string()]]);
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}

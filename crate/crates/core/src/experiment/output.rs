use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::hypotheses::HypothesisReport;

/// Shortest decimal text that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedFile {
    /// Path relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// Failure makes the run fail.
    Hard,
    /// Reported with its margin; does not change the exit status.
    Soft,
    /// A measured quantity without a pass/fail threshold.
    Info,
}

/// One diagnostic verdict. `margin` = threshold - value, so negative margins are failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOutcome {
    pub name: String,
    pub severity: Severity,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub margin: f64,
    pub note: String,
}

impl DiagnosticOutcome {
    /// Passes when value ≤ threshold.
    pub fn at_most(
        name: &str,
        severity: Severity,
        value: f64,
        threshold: f64,
        note: impl Into<String>,
    ) -> Self {
        DiagnosticOutcome {
            name: name.to_string(),
            severity,
            passed: value <= threshold,
            value,
            threshold,
            margin: threshold - value,
            note: note.into(),
        }
    }

    /// Passes when value ≥ threshold.
    pub fn at_least(
        name: &str,
        severity: Severity,
        value: f64,
        threshold: f64,
        note: impl Into<String>,
    ) -> Self {
        DiagnosticOutcome {
            name: name.to_string(),
            severity,
            passed: value >= threshold,
            value,
            threshold,
            margin: value - threshold,
            note: note.into(),
        }
    }

    pub fn info(name: &str, value: f64, note: impl Into<String>) -> Self {
        DiagnosticOutcome {
            name: name.to_string(),
            severity: Severity::Info,
            passed: true,
            value,
            threshold: f64::NAN,
            margin: f64::NAN,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub mode: String,
    pub started: String,
    pub finished: String,
    pub directory: PathBuf,
    pub files: Vec<EmittedFile>,
    pub diagnostics: Vec<DiagnosticOutcome>,
    pub hypotheses: HypothesisReport,
    /// Headline numbers of the run (h, α, observed orders, ...).
    pub summary: BTreeMap<String, f64>,
    /// Run directories of sweep points, relative to this one.
    pub children: Vec<String>,
}

impl RunManifest {
    /// True when every hard diagnostic passed.
    pub fn passed(&self) -> bool {
        self.diagnostics
            .iter()
            .all(|d| d.passed || d.severity != Severity::Hard)
    }

    pub fn diagnostic(&self, name: &str) -> Option<&DiagnosticOutcome> {
        self.diagnostics.iter().find(|d| d.name == name)
    }

    pub fn failed_hard(&self) -> Vec<&DiagnosticOutcome> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Hard && !d.passed)
            .collect()
    }
}

/// Writes files into one run directory and keeps the list of what it wrote.
pub struct RunWriter {
    dir: PathBuf,
    files: Vec<EmittedFile>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[EmittedFile] {
        &self.files
    }

    fn emit(&mut self, name: &str, bytes: Vec<u8>) -> io::Result<()> {
        fs::write(self.dir.join(name), &bytes)?;
        self.files.push(EmittedFile {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> io::Result<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.emit(name, bytes)
    }

    /// `key = value` lines.
    pub fn record(&mut self, name: &str, pairs: &[(&str, String)]) -> io::Result<()> {
        let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        self.emit(name, text.into_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.emit(name, bytes)
    }

    pub fn text(&mut self, name: &str, text: &str) -> io::Result<()> {
        self.emit(name, text.as_bytes().to_vec())
    }

    /// Adds files written by someone else (a sweep point), hashing them from disk.
    pub fn adopt(&mut self, rel: &str) -> io::Result<()> {
        let bytes = fs::read(self.dir.join(rel))?;
        self.files.push(EmittedFile {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            1e-300,
            6.02e23,
            -2.5e-7,
            f64::MIN_POSITIVE,
            123456789.0,
        ] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(0.1), "0.1");
    }

    #[test]
    fn writer_lists_what_it_wrote() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(&dir.path().join("a/b")).unwrap();
        w.csv(
            "x.csv",
            &["t", "y"],
            vec![vec![0.0, 0.1], vec![1.0, 1.0 / 3.0]],
        )
        .unwrap();
        w.record("r.txt", &[("alpha", fmt_f64(0.5))]).unwrap();
        let names: Vec<&str> = w.files().iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["x.csv", "r.txt"]);
        let text = fs::read_to_string(dir.path().join("a/b/x.csv")).unwrap();
        assert_eq!(text, "t,y\n0.0,0.1\n1.0,0.3333333333333333\n");
        assert_eq!(w.files()[0].sha256, sha256_hex(text.as_bytes()));
    }

    #[test]
    fn hard_failures_decide() {
        let mut m = RunManifest {
            run_id: "x".into(),
            config_hash: "y".into(),
            mode: "density".into(),
            started: String::new(),
            finished: String::new(),
            directory: PathBuf::new(),
            files: vec![],
            diagnostics: vec![DiagnosticOutcome::at_most(
                "soft",
                Severity::Soft,
                2.0,
                1.0,
                "",
            )],
            hypotheses: HypothesisReport {
                verdicts: BTreeMap::new(),
            },
            summary: BTreeMap::new(),
            children: vec![],
        };
        assert!(m.passed());
        m.diagnostics.push(DiagnosticOutcome::at_least(
            "hard",
            Severity::Hard,
            0.5,
            1.0,
            "",
        ));
        assert!(!m.passed());
        assert_eq!(m.failed_hard()[0].margin, -0.5);
    }
}

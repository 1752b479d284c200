//! Probe/response datasets and their CSV form.
//!
//! The file layout is one row per epoch:
//!
//! ```text
//! epoch,alpha_1,...,alpha_m,beta_1,...,beta_m
//! ```

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ordered probe/response pairs `(alpha_k, beta_k)` over `K` epochs.
///
/// Datasets built with [`ProbeResponseDataset::new`] hold true responses
/// (nonnegative). Datasets built with [`ProbeResponseDataset::from_measurements`]
/// hold noisy measurements, which may leave the nonnegative orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResponseDataset {
    probes: Vec<Vec<f64>>,
    responses: Vec<Vec<f64>>,
}

impl ProbeResponseDataset {
    pub fn new(probes: Vec<Vec<f64>>, responses: Vec<Vec<f64>>) -> Result<Self> {
        let d = Self::from_measurements(probes, responses)?;
        for (k, b) in d.responses.iter().enumerate() {
            if let Some(x) = b.iter().find(|x| **x < 0.0) {
                return Err(Error::InvalidDataset(format!(
                    "response {} has negative component {x}",
                    k + 1
                )));
            }
        }
        Ok(d)
    }

    /// Like [`new`](Self::new) but accepts any finite response values.
    pub fn from_measurements(probes: Vec<Vec<f64>>, responses: Vec<Vec<f64>>) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::InvalidDataset("no epochs".into()));
        }
        if probes.len() != responses.len() {
            return Err(Error::InvalidDataset(format!(
                "{} probes but {} responses",
                probes.len(),
                responses.len()
            )));
        }
        let m = probes[0].len();
        if m == 0 {
            return Err(Error::InvalidDataset("zero-dimensional probes".into()));
        }
        validate_probes(&probes)?;
        for (k, b) in responses.iter().enumerate() {
            if b.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    found: b.len(),
                });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "response {} is not finite",
                    k + 1
                )));
            }
        }
        Ok(Self { probes, responses })
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.probes[0].len()
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.probes
    }

    pub fn responses(&self) -> &[Vec<f64>] {
        &self.responses
    }

    /// `cost[t][s] = alpha_t' beta_s`.
    pub fn cost_matrix(&self) -> Vec<Vec<f64>> {
        self.probes
            .iter()
            .map(|a| self.responses.iter().map(|b| dot(a, b)).collect())
            .collect()
    }

    /// Same probes, different responses.
    pub fn with_responses(&self, responses: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_measurements(self.probes.clone(), responses)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            context: "cannot open dataset",
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(file, path)
    }

    fn parse_csv<R: std::io::Read>(reader: R, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.first() != Some(&"epoch") || cols.len() < 3 || !(cols.len() - 1).is_multiple_of(2) {
            return Err(bad("header must be epoch,alpha_1..alpha_m,beta_1..beta_m".into()));
        }
        let m = (cols.len() - 1) / 2;
        for i in 0..m {
            if cols[1 + i] != format!("alpha_{}", i + 1) || cols[1 + m + i] != format!("beta_{}", i + 1) {
                return Err(bad(format!("unexpected column names in header {cols:?}")));
            }
        }
        let mut probes = Vec::new();
        let mut responses = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
            probes.push(vals[..m].to_vec());
            responses.push(vals[m..].to_vec());
        }
        Self::from_measurements(probes, responses)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf);
        crate::harness::output::write_bytes(path, &buf)
    }

    pub(crate) fn write_to(&self, out: &mut Vec<u8>) {
        let m = self.dim();
        let mut header = vec!["epoch".to_string()];
        header.extend((1..=m).map(|i| format!("alpha_{i}")));
        header.extend((1..=m).map(|i| format!("beta_{i}")));
        writeln!(out, "{}", header.join(",")).unwrap();
        for (k, (a, b)) in self.probes.iter().zip(&self.responses).enumerate() {
            let row: Vec<String> = std::iter::once((k + 1).to_string())
                .chain(a.iter().chain(b).map(|x| x.to_string()))
                .collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
    }
}

/// Probes must be nonempty, of equal dimension, and strictly positive.
pub fn validate_probes(probes: &[Vec<f64>]) -> Result<()> {
    let Some(first) = probes.first() else {
        return Err(Error::InvalidDataset("no probes".into()));
    };
    let m = first.len();
    if m == 0 {
        return Err(Error::InvalidDataset("zero-dimensional probes".into()));
    }
    for (k, a) in probes.iter().enumerate() {
        if a.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: a.len(),
            });
        }
        if a.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "probe {} must be strictly positive",
                k + 1
            )));
        }
    }
    Ok(())
}

//! CSV and JSON artifacts of a run.

use std::fs::File;
use std::path::{Path, PathBuf};

use becgrape::{ControlGrid, OptimizationResult};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// 15 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.14e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Names the basis states of a run in CSV headers and rows.
#[derive(Clone, Debug)]
pub enum Basis {
    Orders(Vec<i64>),
    Pairs(Vec<(i64, i64)>),
}

impl Basis {
    pub fn len(&self) -> usize {
        match self {
            Basis::Orders(v) => v.len(),
            Basis::Pairs(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            Basis::Orders(v) => v.iter().map(|n| format!("p_{n}")).collect(),
            Basis::Pairs(v) => v.iter().map(|(m, n)| format!("p_{m}_{n}")).collect(),
        }
    }
}

/// Collects the files a run writes so the manifest can hash them.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, CliError> {
        let path = self.root.join(name);
        self.written.push(path.clone());
        Ok(csv::Writer::from_path(path)?)
    }

    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut w = self.csv(name)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|x| fmt(*x)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pulse(&mut self, name: &str, control: &ControlGrid) -> Result<(), CliError> {
        let mut w = self.csv(name)?;
        let mut header = vec!["step_index".to_string(), "t_start".to_string()];
        if control.n_channels() == 1 {
            header.push("phi".into());
        } else {
            header.extend(["phi12", "phi23", "phi31"].map(String::from));
        }
        w.write_record(&header)?;
        for k in 0..control.n_steps() {
            let mut rec = vec![k.to_string(), fmt(control.t_start(k))];
            rec.extend((0..control.n_channels()).map(|c| fmt(control.value(c, k))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trace(&mut self, name: &str, result: &OptimizationResult) -> Result<(), CliError> {
        let mut w = self.csv(name)?;
        w.write_record(["iteration", "fidelity", "grad_norm"])?;
        for (i, (f, g)) in result.fidelity_trace.iter().zip(&result.grad_norm_trace).enumerate() {
            w.write_record([i.to_string(), fmt(*f), fmt(*g)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_populations(&mut self, name: &str, basis: &Basis, probs: &[f64]) -> Result<(), CliError> {
        let mut w = self.csv(name)?;
        match basis {
            Basis::Orders(orders) => {
                w.write_record(["index", "probability"])?;
                for (n, p) in orders.iter().zip(probs) {
                    w.write_record([n.to_string(), fmt(*p)])?;
                }
            }
            Basis::Pairs(pairs) => {
                w.write_record(["m", "n", "probability"])?;
                for ((m, n), p) in pairs.iter().zip(probs) {
                    w.write_record([m.to_string(), n.to_string(), fmt(*p)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.root.join(name);
        let text = serde_json::to_string_pretty(value).expect("summary serializes");
        std::fs::write(&path, text + "\n")?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `manifest.json` listing every artifact with its hash.
    pub fn finish(mut self, manifest: ManifestHeader) -> Result<(), CliError> {
        let mut outputs = Vec::new();
        for path in &self.written {
            let bytes = std::fs::read(path)?;
            let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            outputs.push(OutputEntry { file, sha256: sha256_hex(&bytes) });
        }
        let m = Manifest { header: manifest, outputs };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(self.root.join("manifest.json"), text + "\n")?;
        self.written.clear();
        Ok(())
    }
}

#[derive(Serialize)]
pub struct ManifestHeader {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub core_version: &'static str,
    pub subcommand: &'static str,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub os: &'static str,
    pub arch: &'static str,
    /// Configuration after command-line overrides.
    pub effective_config: serde_json::Value,
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    #[serde(flatten)]
    header: ManifestHeader,
    outputs: Vec<OutputEntry>,
}

/// Reads a pulse CSV into `values[channel][step]`.
pub fn read_pulse(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |msg: String| CliError::Config(format!("pulse file {}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let channels = match header.len() {
        3 => 1,
        5 => 3,
        n => return Err(bad(format!("expected 3 or 5 columns, found {n}"))),
    };
    if header.get(0) != Some("step_index") || header.get(1) != Some("t_start") {
        return Err(bad("header must start with step_index,t_start".into()));
    }
    let mut values = vec![Vec::new(); channels];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let step: usize =
            rec[0].trim().parse().map_err(|_| bad(format!("row {}: bad step index {:?}", line + 2, &rec[0])))?;
        if step != values[0].len() {
            return Err(bad(format!("row {}: step {step} out of order", line + 2)));
        }
        for (c, ch) in values.iter_mut().enumerate() {
            let v: f64 =
                rec[c + 2].trim().parse().map_err(|_| bad(format!("row {}: bad value {:?}", line + 2, &rec[c + 2])))?;
            ch.push(v);
        }
    }
    if values[0].is_empty() {
        return Err(bad("no rows".into()));
    }
    Ok(values)
}

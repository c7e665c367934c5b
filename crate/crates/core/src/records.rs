//! On-disk formats: device records, the device library and CSV outputs.
//!
//! Every CSV starts with a `# config_sha256=<hex> seed=<u64>` comment line
//! followed by a header row.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{BenchmarkGrid, EfficiencyHistogram, ProjectedDevice};
use crate::device::{DeviceVector, OperatingCondition};
use crate::error::{Error, Result};
use crate::local_opt::OptimizationTrace;
use crate::trainer::{EffMaxTable, HistoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Glonet,
    Baseline,
    BoundaryRefined,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Glonet => "glonet",
            Provenance::Baseline => "baseline",
            Provenance::BoundaryRefined => "boundary-refined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRecord {
    pub id: usize,
    pub device: DeviceVector,
    pub condition: OperatingCondition,
    pub efficiency: f64,
    pub provenance: Provenance,
    #[serde(default)]
    pub generator_seed: Option<u64>,
    #[serde(default)]
    pub checkpoint: Option<String>,
    /// Condition lies outside the range the generator was trained on.
    #[serde(default)]
    pub extrapolated: bool,
    pub created_unix_s: u64,
}

impl DeviceRecord {
    pub fn file_name(&self) -> String {
        format!("device_{:05}.json", self.id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Config hash and seed stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunStamp {
    pub config_sha256: String,
    pub seed: u64,
}

impl RunStamp {
    pub fn comment(&self) -> String {
        format!("# config_sha256={} seed={}", self.config_sha256, self.seed)
    }
}

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, stamp: &RunStamp, header: &[&str]) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{}", stamp.comment()).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header).map_err(|e| Error::csv(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| Error::csv(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Header and rows of a CSV written by [`CsvOut`], comment line skipped.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(String::from).collect())
                .map_err(|e| Error::csv(path, e))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn f(x: f64) -> String {
    x.to_string()
}

pub fn write_history(path: &Path, stamp: &RunStamp, history: &[HistoryRecord]) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        stamp,
        &["iteration", "mean_eff", "max_eff", "loss", "mean_abs_n"],
    )?;
    for h in history {
        out.row([
            h.iteration.to_string(),
            f(h.mean_eff),
            f(h.max_eff),
            f(h.loss),
            f(h.mean_abs_n),
        ])?;
    }
    out.finish()
}

pub fn write_timing(path: &Path, stamp: &RunStamp, history: &[HistoryRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, stamp, &["iteration", "seconds", "failed_devices"])?;
    for h in history {
        out.row([h.iteration.to_string(), f(h.seconds), h.failed_devices.to_string()])?;
    }
    out.finish()
}

pub fn write_effmax(path: &Path, stamp: &RunStamp, table: &EffMaxTable) -> Result<()> {
    let mut out = CsvOut::create(path, stamp, &["lambda_nm", "theta_deg", "eff_max"])?;
    for (l, t, v) in table.entries() {
        out.row([f(l), f(t), f(v)])?;
    }
    out.finish()
}

pub fn cell_device_id(cell: usize) -> String {
    format!("device_{cell:05}")
}

pub fn write_grid(path: &Path, stamp: &RunStamp, grid: &BenchmarkGrid) -> Result<()> {
    let mut out = CsvOut::create(path, stamp, &["lambda_nm", "theta_deg", "best_eff", "device_id"])?;
    for (k, c) in grid.cells.iter().enumerate() {
        out.row([
            f(c.condition.wavelength_nm),
            f(c.condition.angle_deg),
            f(c.best_efficiency),
            cell_device_id(k),
        ])?;
    }
    out.finish()
}

pub fn write_histogram(path: &Path, stamp: &RunStamp, hist: &EfficiencyHistogram) -> Result<()> {
    let mut out = CsvOut::create(path, stamp, &["bin_lo", "bin_hi", "count"])?;
    for (k, &count) in hist.counts.iter().enumerate() {
        let (lo, hi) = hist.edges(k);
        out.row([f(lo), f(hi), count.to_string()])?;
    }
    out.finish()
}

pub fn write_pca(path: &Path, stamp: &RunStamp, points: &[ProjectedDevice]) -> Result<()> {
    let mut out = CsvOut::create(path, stamp, &["device_id", "x", "y", "eff", "iteration"])?;
    for p in points {
        out.row([
            p.device_id.to_string(),
            f(p.x),
            f(p.y),
            f(p.efficiency),
            p.iteration.to_string(),
        ])?;
    }
    out.finish()
}

pub fn write_trace(path: &Path, stamp: &RunStamp, trace: &OptimizationTrace) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        stamp,
        &["iteration", "efficiency", "binary_efficiency", "best_binary_efficiency"],
    )?;
    for k in 0..trace.efficiencies.len() {
        out.row([
            (k + 1).to_string(),
            f(trace.efficiencies[k]),
            f(trace.binary_efficiencies[k]),
            f(trace.best_so_far[k]),
        ])?;
    }
    out.finish()
}

/// A directory of per-device JSON records under `devices/` plus `index.csv`.
pub struct DeviceLibrary {
    pub root: PathBuf,
}

impl DeviceLibrary {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn devices_dir(&self) -> PathBuf {
        self.root.join("devices")
    }

    pub fn write(&self, stamp: &RunStamp, records: &[DeviceRecord]) -> Result<()> {
        let dir = self.devices_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let index = self.root.join("index.csv");
        let mut out = CsvOut::create(
            &index,
            stamp,
            &["device_id", "lambda_nm", "theta_deg", "efficiency", "provenance", "file"],
        )?;
        for r in records {
            let name = r.file_name();
            r.save(&dir.join(&name))?;
            out.row([
                r.id.to_string(),
                f(r.condition.wavelength_nm),
                f(r.condition.angle_deg),
                f(r.efficiency),
                r.provenance.tag().to_string(),
                format!("devices/{name}"),
            ])?;
        }
        out.finish()
    }

    /// Records listed in `index.csv`, in index order.
    pub fn read(&self) -> Result<Vec<DeviceRecord>> {
        let (header, rows) = read_csv(&self.root.join("index.csv"))?;
        let col = header
            .iter()
            .position(|h| h == "file")
            .ok_or_else(|| Error::InvalidInput("index.csv has no file column".into()))?;
        rows.iter()
            .map(|row| DeviceRecord::load(&self.root.join(&row[col])))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> RunStamp {
        RunStamp {
            config_sha256: "ab".repeat(32),
            seed: 3,
        }
    }

    #[test]
    fn library_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lib = DeviceLibrary::new(dir.path());
        let rec = DeviceRecord {
            id: 0,
            device: DeviceVector::new(vec![1.0, -1.0, 1.0, 1.0]).unwrap(),
            condition: OperatingCondition::new(900.0, 60.0),
            efficiency: 0.625,
            provenance: Provenance::Glonet,
            generator_seed: Some(1),
            checkpoint: None,
            extrapolated: false,
            created_unix_s: 0,
        };
        lib.write(&stamp(), std::slice::from_ref(&rec)).unwrap();
        assert_eq!(lib.read().unwrap(), vec![rec]);
        let text = std::fs::read_to_string(dir.path().join("index.csv")).unwrap();
        assert!(text.starts_with("# config_sha256=abab"));
        assert_eq!(text.lines().nth(1).unwrap(), "device_id,lambda_nm,theta_deg,efficiency,provenance,file");
    }

    #[test]
    fn history_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("history.csv");
        let h = HistoryRecord {
            iteration: 1,
            mean_eff: 0.25,
            max_eff: 0.5,
            loss: -0.1,
            mean_abs_n: 0.3,
            seconds: 12.0,
            failed_devices: 0,
        };
        write_history(&p, &stamp(), &[h]).unwrap();
        let (header, rows) = read_csv(&p).unwrap();
        assert_eq!(header, ["iteration", "mean_eff", "max_eff", "loss", "mean_abs_n"]);
        assert_eq!(rows, vec![vec!["1", "0.25", "0.5", "-0.1", "0.3"]]);
    }
}

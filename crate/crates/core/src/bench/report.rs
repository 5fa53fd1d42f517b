use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::switching::SwitchStrategy;

/// One measured (camera subset, strategy) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    /// Camera names joined with `+`.
    pub camera_set: String,
    pub num_cams: u32,
    pub strategy: SwitchStrategy,
    pub fps_measured: f64,
    /// Mean sampled latency; empty when the view cannot change.
    pub switch_latency_ms: Option<f64>,
    pub display_latency_ms: f64,
    pub display_latency_stddev_ms: f64,
    pub bandwidth_bytes_per_s: f64,
    pub bandwidth_mib_per_s: f64,
    pub throughput_fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockInfo {
    pub mode: String,
    pub seed: u64,
    pub sampling_period_ms: f64,
    pub wall_throughput: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub records: Vec<RunRecord>,
    pub clock: ClockInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Vec<RunRecord>, csv::Error> {
        csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.clock;
        let _ = writeln!(out, "scenario: {}", self.scenario);
        let _ = writeln!(
            out,
            "clock: {} (seed {}, capture period {} ms{})",
            c.mode,
            c.seed,
            c.sampling_period_ms,
            if c.wall_throughput {
                ", wall-clock throughput"
            } else {
                ""
            }
        );
        let _ = writeln!(out, "runs: {}", self.records.len());
        let _ = writeln!(
            out,
            "{:<28} {:>4} {:<14} {:>8} {:>10} {:>16} {:>10} {:>10}",
            "cameras", "n", "strategy", "fps", "switch ms", "display ms", "MiB/s", "wall fps"
        );
        for r in &self.records {
            let switch = r.switch_latency_ms.map_or("-".to_string(), |v| format!("{v:.1}"));
            let wall = r.throughput_fps.map_or("-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                out,
                "{:<28} {:>4} {:<14} {:>8.2} {:>10} {:>9.1} ±{:>5.1} {:>10.1} {:>10}",
                r.camera_set,
                r.num_cams,
                r.strategy.to_string(),
                r.fps_measured,
                switch,
                r.display_latency_ms,
                r.display_latency_stddev_ms,
                r.bandwidth_mib_per_s,
                wall
            );
        }
        out
    }

    /// Writes `report.csv` or `report.txt` into `dir`, creating it.
    pub fn write_to(&self, dir: &Path, format: ReportFormat) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let (name, body) = match format {
            ReportFormat::Csv => ("report.csv", self.to_csv().map_err(io::Error::other)?),
            ReportFormat::Text => ("report.txt", self.to_text()),
        };
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        Ok(path)
    }
}

//! Report envelope, run manifest and output formatting.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use screenmix_core::rng::RNG_ALGORITHM;

/// Provenance recorded in every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub master_seed: u64,
    pub rng_algorithm: String,
    /// Wall-clock time of the run; the only field allowed to differ between reruns.
    pub timestamp: String,
    pub config_digest: String,
}

impl RunManifest {
    pub fn new(master_seed: u64, config_bytes: &[u8]) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_digest: format!("sha256:{}", hex::encode(Sha256::digest(config_bytes))),
        }
    }

    fn table(&self) -> String {
        format!(
            "# screenmix {}\n# seed: {}\n# rng: {}\n# timestamp: {}\n# config: {}\n",
            self.tool_version, self.master_seed, self.rng_algorithm, self.timestamp, self.config_digest
        )
    }
}

/// A command result that can be shown as a table and as CSV rows.
pub trait Render {
    fn table(&self) -> String;
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub manifest: RunManifest,
    pub command: String,
    pub result: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

impl<T: Render + Serialize + DeserializeOwned> Report<T> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn to_table(&self) -> String {
        format!("{}{}", self.manifest.table(), self.result.table())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.result.csv_header()).expect("in-memory write");
        for row in self.result.csv_rows() {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.to_table(),
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Probability at report precision.
pub fn prob(x: f64) -> String {
    format!("{x:.4}")
}

/// Seconds at report precision.
pub fn secs(x: f64) -> String {
    format!("{x:.2}")
}

pub fn opt_prob(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), prob)
}

/// Left-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}", w = *w)).collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

//! File formats: CSV tables, single-column frame CSV, TOML artifacts, digests.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signalgen::{PulseTruth, SignalFrame};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_existing(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_bytes(path, text.as_bytes())
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_existing(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Shortest round-trip decimal form; `inf`/`-inf`/`NaN` for the rest.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// A header row plus string cells, written with optional `#` comment lines
/// before the header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(mut self, line: impl Into<String>) -> Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for c in &self.comments {
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_existing(path)?;
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string())
            .collect();
        let parse_err = |e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = r.headers().map_err(parse_err)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(parse_err)?;
        Ok(Self { comments, header, rows })
    }
}

/// Single `sample` column; truth metadata, if any, in a leading comment.
pub fn write_frame_csv(path: &Path, frame: &SignalFrame) -> Result<()> {
    let mut table = CsvTable::new(&["sample"]);
    if let Some(t) = frame.truth {
        table = table.comment(format!(
            "onset_index={},pulse_len={},snr_db={}",
            t.onset_index,
            t.pulse_len,
            fmt_f64(t.snr_db)
        ));
    }
    for &v in &frame.samples {
        table.push(vec![fmt_f64(v)]);
    }
    table.write(path)
}

pub fn read_frame_csv(path: &Path) -> Result<SignalFrame> {
    let table = CsvTable::read(path)?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    if table.header.len() != 1 {
        return Err(bad(format!("expected one column, found {}", table.header.len())));
    }
    let samples = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r[0].trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: '{}' is not a finite number", i + 1, r[0])))
        })
        .collect::<Result<Vec<f64>>>()?;
    let truth = match table.comments.iter().find(|c| c.contains("onset_index=")) {
        Some(c) => Some(parse_truth(c).ok_or_else(|| bad(format!("malformed truth comment '{c}'")))?),
        None => None,
    };
    SignalFrame::new(samples, truth)
}

fn parse_truth(line: &str) -> Option<PulseTruth> {
    let mut onset = None;
    let mut len = None;
    let mut snr = None;
    for kv in line.split(',') {
        let (k, v) = kv.split_once('=')?;
        match k.trim() {
            "onset_index" => onset = v.trim().parse().ok(),
            "pulse_len" => len = v.trim().parse().ok(),
            "snr_db" => snr = v.trim().parse().ok(),
            _ => {}
        }
    }
    Some(PulseTruth {
        onset_index: onset?,
        pulse_len: len?,
        snr_db: snr?,
    })
}

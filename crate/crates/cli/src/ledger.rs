//! JSON-lines run ledger: one record per (dataset, method, fold, candidate).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tabcluster_core::eval::UnitOutcome;

use crate::error::BenchError;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const RUN_FILE: &str = "run.json";

/// Position of a unit in configuration order; sorting by it gives the
/// canonical ledger order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub dataset: usize,
    pub method: usize,
    pub fold: usize,
    pub candidate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub key: UnitKey,
    pub dataset: String,
    pub method: String,
    pub status: UnitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<UnitOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything that determines the numbers of a run. `resume` refuses a
/// ledger written under a different fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFingerprint {
    pub datasets: Vec<String>,
    /// FNV-1a digest of each dataset's features and labels, hex.
    pub dataset_digests: Vec<String>,
    pub methods: Vec<String>,
    pub seed: u64,
    pub grid: Vec<tabcluster_core::embed::MethodConfig>,
    pub options: tabcluster_core::eval::ProtocolOptions,
}

impl RunFingerprint {
    pub fn read(dir: &Path) -> Result<Option<Self>, BenchError> {
        let path = dir.join(RUN_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(BenchError::io(&path))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| BenchError::Failed(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        let path = dir.join(RUN_FILE);
        let text = serde_json::to_string_pretty(self).expect("fingerprint serializes") + "\n";
        fs::write(&path, text).map_err(BenchError::io(&path))
    }
}

/// Latest record per key. Later lines win, so a retried unit replaces
/// its failed record.
pub fn read_ledger(dir: &Path) -> Result<BTreeMap<UnitKey, LedgerRecord>, BenchError> {
    let path = dir.join(LEDGER_FILE);
    let mut out = BTreeMap::new();
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(BenchError::io(&path)(e)),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(BenchError::io(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LedgerRecord>(&line) {
            Ok(rec) => {
                out.insert(rec.key, rec);
            }
            // a torn final line from an interrupted run is dropped
            Err(e) if e.is_eof() => {}
            Err(e) => return Err(BenchError::Failed(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

/// Appends records, flushing each line.
pub struct LedgerWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LedgerWriter {
    pub fn append(dir: &Path) -> Result<Self, BenchError> {
        let path = dir.join(LEDGER_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(BenchError::io(&path))?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, rec: &LedgerRecord) -> Result<(), BenchError> {
        let line = serde_json::to_string(rec).expect("ledger record serializes");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(BenchError::io(&self.path))
    }
}

/// Rewrites the ledger with one record per key in key order.
pub fn rewrite_sorted(dir: &Path, records: &BTreeMap<UnitKey, LedgerRecord>) -> Result<(), BenchError> {
    let path = dir.join(LEDGER_FILE);
    let tmp = dir.join(format!("{LEDGER_FILE}.tmp"));
    let mut text = String::new();
    for rec in records.values() {
        text.push_str(&serde_json::to_string(rec).expect("ledger record serializes"));
        text.push('\n');
    }
    fs::write(&tmp, text).map_err(BenchError::io(&tmp))?;
    fs::rename(&tmp, &path).map_err(BenchError::io(&path))
}

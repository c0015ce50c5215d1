//! Parallel execution of run units with a resumable ledger.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use rayon::prelude::*;
use tabcluster_core::data::Dataset;
use tabcluster_core::embed::MethodConfig;
use tabcluster_core::eval::{
    candidate_count, fold_plan, run_unit_with_model, select_and_aggregate, BenchMethod, FoldPlan, ProtocolOptions,
    UnitOutcome, N_FOLDS,
};
use tabcluster_core::numkit::rng::fnv1a;

use crate::config::BenchmarkConfig;
use crate::error::{BenchError, DataError};
use crate::ledger::{read_ledger, rewrite_sorted, LedgerRecord, LedgerWriter, RunFingerprint, UnitKey, UnitStatus};
use crate::report::{write_tables, ResultGrid};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the ledger and skip units already done.
    pub resume: bool,
    /// Stop after this many units; used to simulate an interrupted run.
    pub max_units: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub total_units: usize,
    /// Units executed by this invocation.
    pub executed: usize,
    /// `dataset/method/fold/candidate: error` for every failed unit.
    pub failed: Vec<String>,
    /// Cells without a complete set of results.
    pub missing: Vec<String>,
    pub grid: ResultGrid,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty() && self.missing.is_empty()
    }
}

/// Status of every unit of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    pub status: BTreeMap<UnitKey, UnitStatus>,
}

impl RunLedger {
    pub fn pending(&self) -> usize {
        self.status.values().filter(|s| **s == UnitStatus::Pending).count()
    }
}

fn dataset_digest(ds: &Dataset) -> String {
    let mut bytes = Vec::with_capacity(8 * (ds.x.as_slice().len() + ds.y.len()));
    for v in ds.x.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &y in &ds.y {
        bytes.extend_from_slice(&(y as u64).to_le_bytes());
    }
    format!("{:016x}", fnv1a(&bytes))
}

fn all_keys(n_datasets: usize, methods: &[BenchMethod], grid: &[MethodConfig]) -> Vec<UnitKey> {
    let mut keys = Vec::new();
    for dataset in 0..n_datasets {
        for (method, &m) in methods.iter().enumerate() {
            for fold in 0..N_FOLDS {
                for candidate in 0..candidate_count(m, grid) {
                    keys.push(UnitKey {
                        dataset,
                        method,
                        fold,
                        candidate,
                    });
                }
            }
        }
    }
    keys
}

pub fn ledger_status(
    records: &BTreeMap<UnitKey, LedgerRecord>,
    n_datasets: usize,
    methods: &[BenchMethod],
    grid: &[MethodConfig],
) -> RunLedger {
    let status = all_keys(n_datasets, methods, grid)
        .into_iter()
        .map(|k| (k, records.get(&k).map_or(UnitStatus::Pending, |r| r.status)))
        .collect();
    RunLedger { status }
}

fn file_stem(ds: &str, method: &str, key: &UnitKey) -> String {
    let clean: String = ds
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{clean}__{method}__fold{}__cand{}", key.fold, key.candidate)
}

struct Job<'a> {
    key: UnitKey,
    method: BenchMethod,
    ds: &'a Dataset,
    plan: &'a FoldPlan,
}

#[allow(clippy::too_many_arguments)]
fn execute(
    job: &Job<'_>,
    grid: &[MethodConfig],
    opts: &ProtocolOptions,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> LedgerRecord {
    let result = catch_unwind(AssertUnwindSafe(|| {
        run_unit_with_model(job.method, job.ds, job.plan, job.key.fold, job.key.candidate, grid, opts, seed)
    }));
    let mut rec = LedgerRecord {
        key: job.key,
        dataset: job.ds.name.clone(),
        method: job.method.id().into(),
        status: UnitStatus::Failed,
        outcome: None,
        error: None,
    };
    match result {
        Ok(Ok((outcome, model))) => {
            if let (Some(dir), Some(model)) = (checkpoint_dir, model) {
                let path = dir.join(format!("{}.json", file_stem(&job.ds.name, job.method.id(), &job.key)));
                let text = serde_json::to_string(&model).expect("model serializes");
                if let Err(e) = fs::write(&path, text) {
                    rec.error = Some(format!("{}: {e}", path.display()));
                    return rec;
                }
            }
            rec.status = UnitStatus::Done;
            rec.outcome = Some(outcome);
        }
        Ok(Err(e)) => rec.error = Some(e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            rec.error = Some(format!("panic: {msg}"));
        }
    }
    rec
}

/// Aggregates every cell whose units are all done.
pub fn assemble(
    datasets: &[String],
    methods: &[BenchMethod],
    grid: &[MethodConfig],
    records: &BTreeMap<UnitKey, LedgerRecord>,
) -> Result<ResultGrid, BenchError> {
    let mut cells = Vec::with_capacity(datasets.len());
    for (d, name) in datasets.iter().enumerate() {
        let mut row = Vec::with_capacity(methods.len());
        for (m, &method) in methods.iter().enumerate() {
            let mut outcomes: Vec<UnitOutcome> = Vec::new();
            let mut complete = true;
            for fold in 0..N_FOLDS {
                for candidate in 0..candidate_count(method, grid) {
                    let key = UnitKey {
                        dataset: d,
                        method: m,
                        fold,
                        candidate,
                    };
                    match records.get(&key).and_then(|r| r.outcome.as_ref()) {
                        Some(o) => outcomes.push(o.clone()),
                        None => complete = false,
                    }
                }
            }
            row.push(if complete {
                Some(select_and_aggregate(method, name, &outcomes).map_err(|e| BenchError::Failed(e.to_string()))?)
            } else {
                None
            });
        }
        cells.push(row);
    }
    Ok(ResultGrid {
        datasets: datasets.to_vec(),
        methods: methods.iter().map(|m| m.id().to_string()).collect(),
        cells,
    })
}

fn write_histories(dir: &Path, records: &BTreeMap<UnitKey, LedgerRecord>) -> Result<(), BenchError> {
    let hist_dir = dir.join("history");
    for rec in records.values() {
        let Some(outcome) = &rec.outcome else { continue };
        if outcome.history.is_empty() {
            continue;
        }
        fs::create_dir_all(&hist_dir).map_err(BenchError::io(&hist_dir))?;
        let mut text = String::from("epoch,recon_loss,cluster_loss,total_loss\n");
        for h in &outcome.history {
            text.push_str(&format!("{},{},{},{}\n", h.epoch, h.recon_loss, h.cluster_loss, h.total_loss));
        }
        let path = hist_dir.join(format!("{}.csv", file_stem(&rec.dataset, &rec.method, &rec.key)));
        fs::write(&path, text).map_err(BenchError::io(&path))?;
    }
    Ok(())
}

/// Runs (or resumes) a benchmark and writes every output file.
pub fn run_benchmark(cfg: &BenchmarkConfig, run: &RunOptions) -> Result<RunSummary, BenchError> {
    let methods = cfg.validate()?;
    let threads = cfg.threads()?;
    let datasets = cfg.load_datasets()?;
    let plans = datasets
        .iter()
        .map(|ds| {
            fold_plan(ds, cfg.seed, cfg.stratified).map_err(|source| {
                BenchError::Data(DataError::Invalid {
                    name: ds.name.clone(),
                    source,
                })
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grid = cfg.grid();
    let opts = cfg.protocol_options();
    let fingerprint = RunFingerprint {
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        dataset_digests: datasets.iter().map(dataset_digest).collect(),
        methods: methods.iter().map(|m| m.id().to_string()).collect(),
        seed: cfg.seed,
        grid: grid.clone(),
        options: opts.clone(),
    };

    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(BenchError::io(dir))?;
    let mut records = if run.resume {
        match RunFingerprint::read(dir)? {
            Some(prev) if prev != fingerprint => {
                return Err(BenchError::Config(format!(
                    "{} holds a run with a different configuration or data",
                    dir.display()
                )))
            }
            _ => read_ledger(dir)?,
        }
    } else {
        let ledger = dir.join(crate::ledger::LEDGER_FILE);
        if ledger.exists() {
            fs::remove_file(&ledger).map_err(BenchError::io(&ledger))?;
        }
        BTreeMap::new()
    };
    fingerprint.write(dir)?;
    let checkpoint_dir = if cfg.checkpoints {
        let p = dir.join("checkpoints");
        fs::create_dir_all(&p).map_err(BenchError::io(&p))?;
        Some(p)
    } else {
        None
    };

    let keys = all_keys(datasets.len(), &methods, &grid);
    let total_units = keys.len();
    let mut jobs: Vec<Job<'_>> = keys
        .into_iter()
        .filter(|k| records.get(k).map_or(true, |r| r.status != UnitStatus::Done))
        .map(|key| Job {
            key,
            method: methods[key.method],
            ds: &datasets[key.dataset],
            plan: &plans[key.dataset],
        })
        .collect();
    if let Some(max) = run.max_units {
        jobs.truncate(max);
    }
    let executed = jobs.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::Failed(format!("thread pool: {e}")))?;
    let mut writer = LedgerWriter::append(dir)?;
    let (tx, rx) = mpsc::channel::<LedgerRecord>();
    let new_records = thread::scope(|s| {
        let handle = s.spawn(move || -> Result<Vec<LedgerRecord>, BenchError> {
            let mut got = Vec::new();
            for rec in rx {
                writer.write(&rec)?;
                got.push(rec);
            }
            Ok(got)
        });
        pool.install(|| {
            jobs.par_iter().for_each_with(tx, |tx, job| {
                let rec = execute(job, &grid, &opts, cfg.seed, checkpoint_dir.as_deref());
                // the writer only stops early on an IO error, reported below
                let _ = tx.send(rec);
            });
        });
        handle.join().expect("ledger writer panicked")
    })?;
    for rec in new_records {
        records.insert(rec.key, rec);
    }
    rewrite_sorted(dir, &records)?;

    let failed = records
        .values()
        .filter(|r| r.status == UnitStatus::Failed)
        .map(|r| {
            format!(
                "{}/{}/fold{}/cand{}: {}",
                r.dataset,
                r.method,
                r.key.fold,
                r.key.candidate,
                r.error.as_deref().unwrap_or("unknown error")
            )
        })
        .collect();
    let result_grid = assemble(&fingerprint.datasets, &methods, &grid, &records)?;
    write_histories(dir, &records)?;
    let missing = write_tables(dir, &result_grid)?;
    Ok(RunSummary {
        output_dir: dir.to_path_buf(),
        total_units,
        executed,
        failed,
        missing,
        grid: result_grid,
    })
}

/// Rebuilds the tables of a results directory from its ledger.
pub fn report(dir: &Path) -> Result<ResultGrid, BenchError> {
    let fp = RunFingerprint::read(dir)?
        .ok_or_else(|| BenchError::Failed(format!("{}: no {} found", dir.display(), crate::ledger::RUN_FILE)))?;
    let methods = fp
        .methods
        .iter()
        .map(|m| BenchMethod::from_id(m).ok_or_else(|| BenchError::Failed(format!("unknown method {m:?} in run file"))))
        .collect::<Result<Vec<_>, _>>()?;
    let records = read_ledger(dir)?;
    let grid = assemble(&fp.datasets, &methods, &fp.grid, &records)?;
    write_tables(dir, &grid)?;
    Ok(grid)
}

//! Result files and tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tabcluster_core::eval::{rank_methods, AccuracyCell, EvalResult, RankTable};

use crate::error::BenchError;

/// Rounds half-up to one decimal. The value is first printed to nine
/// decimals so binary noise does not decide the rounding direction.
pub fn one_decimal(v: f64) -> String {
    let s = format!("{:.9}", v.abs());
    let (int, frac) = s.split_once('.').expect("fixed-point output has a dot");
    let digits = frac.as_bytes();
    let mut tenths: u64 = int.parse::<u64>().expect("integer part") * 10 + u64::from(digits[0] - b'0');
    if digits[1] >= b'5' {
        tenths += 1;
    }
    let sign = if v < 0.0 && tenths > 0 { "-" } else { "" };
    format!("{sign}{}.{}", tenths / 10, tenths % 10)
}

/// `"mean (std)"` with one decimal each.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{} ({})", one_decimal(mean), one_decimal(std))
}

/// Results of a complete or partial benchmark, in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultGrid {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    /// `cells[dataset][method]`; `None` when the cell is incomplete.
    pub cells: Vec<Vec<Option<EvalResult>>>,
}

impl ResultGrid {
    pub fn missing(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (d, row) in self.cells.iter().enumerate() {
            for (m, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    out.push(format!("{}/{}", self.datasets[d], self.methods[m]));
                }
            }
        }
        out
    }

    pub fn rank_table(&self) -> Result<RankTable, BenchError> {
        let missing = self.missing();
        if !missing.is_empty() {
            return Err(BenchError::Failed(format!("incomplete results: missing {}", missing.join(", "))));
        }
        let cells: Vec<Vec<Option<AccuracyCell>>> = self
            .cells
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.as_ref().map(|r| AccuracyCell { mean: r.mean, std: r.std }))
                    .collect()
            })
            .collect();
        rank_methods(&self.datasets, &self.methods, &cells).map_err(|e| BenchError::Failed(e.to_string()))
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (dataset, method, fold): the chosen candidate's held-out
/// accuracy.
pub fn results_csv(grid: &ResultGrid) -> String {
    let mut out = String::from("dataset,method,fold,accuracy,chosen_gamma,seed\n");
    for row in &grid.cells {
        for r in row.iter().flatten() {
            for (f, (acc, chosen)) in r.fold_accuracies.iter().zip(&r.chosen).enumerate() {
                let gamma = chosen.gamma.map(|g| g.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{f},{acc},{gamma},{}",
                    csv_escape(&r.dataset),
                    r.method,
                    chosen.seed
                );
            }
        }
    }
    out
}

/// Unrounded mean and std per cell.
pub fn summary_csv(grid: &ResultGrid) -> String {
    let mut out = String::from("dataset,method,mean,std\n");
    for row in &grid.cells {
        for r in row.iter().flatten() {
            let _ = writeln!(out, "{},{},{},{}", csv_escape(&r.dataset), r.method, r.mean, r.std);
        }
    }
    out
}

fn accuracy_rows(grid: &ResultGrid) -> Vec<Vec<String>> {
    grid.cells
        .iter()
        .zip(&grid.datasets)
        .map(|(row, name)| {
            let mut cells = vec![name.clone()];
            cells.extend(
                row.iter()
                    .map(|c| c.as_ref().map_or_else(|| "-".to_string(), |r| format_cell(r.mean, r.std))),
            );
            cells
        })
        .collect()
}

fn rank_rows(t: &RankTable) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = t
        .ranks
        .iter()
        .zip(&t.datasets)
        .map(|(r, name)| {
            let mut cells = vec![name.clone()];
            cells.extend(r.iter().map(usize::to_string));
            cells
        })
        .collect();
    let mut avg = vec!["Average".to_string()];
    avg.extend(t.average.iter().zip(&t.average_std).map(|(m, s)| format_cell(*m, *s)));
    rows.push(avg);
    let mut overall = vec!["Overall rank".to_string()];
    overall.extend(t.overall.iter().map(usize::to_string));
    rows.push(overall);
    rows
}

fn header(methods: &[String]) -> Vec<String> {
    let mut h = vec!["dataset".to_string()];
    h.extend(methods.iter().cloned());
    h
}

fn to_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let line: Vec<String> = r.iter().map(|c| csv_escape(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn to_markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        out.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    out
}

pub fn accuracy_table_csv(grid: &ResultGrid) -> String {
    to_csv(&header(&grid.methods), &accuracy_rows(grid))
}

pub fn accuracy_table_markdown(grid: &ResultGrid) -> String {
    to_markdown(&header(&grid.methods), &accuracy_rows(grid))
}

pub fn rank_table_csv(t: &RankTable) -> String {
    to_csv(&header(&t.methods), &rank_rows(t))
}

pub fn rank_table_markdown(t: &RankTable) -> String {
    to_markdown(&header(&t.methods), &rank_rows(t))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), BenchError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(BenchError::io(&path))
}

/// Writes results, summary and accuracy tables, and the rank table when
/// every cell is present. Returns the missing cells.
pub fn write_tables(dir: &Path, grid: &ResultGrid) -> Result<Vec<String>, BenchError> {
    write(dir, "results.csv", &results_csv(grid))?;
    write(dir, "summary.csv", &summary_csv(grid))?;
    write(dir, "accuracy_table.csv", &accuracy_table_csv(grid))?;
    write(dir, "accuracy_table.md", &accuracy_table_markdown(grid))?;
    let missing = grid.missing();
    if missing.is_empty() {
        let t = grid.rank_table()?;
        write(dir, "rank_table.csv", &rank_table_csv(&t))?;
        write(dir, "rank_table.md", &rank_table_markdown(&t))?;
    } else {
        for name in ["rank_table.csv", "rank_table.md"] {
            let _ = fs::remove_file(dir.join(name));
        }
    }
    Ok(missing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up() {
        assert_eq!(format_cell(90.157, 4.25), "90.2 (4.3)");
        assert_eq!(one_decimal(0.05), "0.1");
        assert_eq!(one_decimal(0.04999), "0.0");
        assert_eq!(one_decimal(99.95), "100.0");
        assert_eq!(one_decimal(2.0 / 7.0 * 7.0), "2.0");
        assert_eq!(one_decimal(-1.25), "-1.3");
        assert_eq!(one_decimal(-0.01), "0.0");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_escape("a,b"), "\"a,b\"");
        assert_eq!(csv_escape("plain"), "plain");
    }
}

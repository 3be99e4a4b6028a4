//! Comparison tables over summary files: one row per (file, scheme),
//! gap medians per checkpoint in two-significant-digit scientific
//! notation.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub struct Summary {
    pub label: String,
    /// scheme -> ordered (k, gap_median, err_median)
    pub rows: BTreeMap<String, Vec<(u64, f64, Option<f64>)>>,
}

pub fn load_summary(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading summary {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty summary file")?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .with_context(|| format!("summary missing column {name}"))
    };
    let (ischeme, ik, igap, ierr) = (
        idx("scheme")?,
        idx("k")?,
        idx("gap_median")?,
        idx("err_median")?,
    );
    let mut rows: BTreeMap<String, Vec<(u64, f64, Option<f64>)>> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let scheme = f[ischeme].to_string();
        let k: u64 = f[ik].parse().context("bad k")?;
        let gap: f64 = f[igap].parse().context("bad gap_median")?;
        let err: Option<f64> = if f[ierr].is_empty() {
            None
        } else {
            Some(f[ierr].parse().context("bad err_median")?)
        };
        rows.entry(scheme).or_default().push((k, gap, err));
    }
    Ok(Summary {
        label: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        rows,
    })
}

/// Two-significant-digit scientific notation (0.0091 renders as 9.1e-3).
pub fn sci2(v: f64) -> String {
    format!("{v:.1e}")
}

/// Aligned text table across summaries; all schemes must share the same
/// checkpoint list.
pub fn compare_report(summaries: &[Summary]) -> Result<String> {
    let mut checkpoints: Option<Vec<u64>> = None;
    for s in summaries {
        for rows in s.rows.values() {
            let ks: Vec<u64> = rows.iter().map(|(k, _, _)| *k).collect();
            match &checkpoints {
                None => checkpoints = Some(ks),
                Some(existing) => {
                    if *existing != ks {
                        bail!(
                            "mismatched checkpoints: {existing:?} vs {ks:?} (in {})",
                            s.label
                        );
                    }
                }
            }
        }
    }
    let checkpoints = checkpoints.context("no rows to compare")?;

    let mut header = vec!["run".to_string(), "scheme".to_string()];
    for k in &checkpoints {
        header.push(format!("gap@{k}"));
    }
    header.push("err@final".to_string());

    let mut table: Vec<Vec<String>> = vec![header];
    for s in summaries {
        for (scheme, rows) in &s.rows {
            let mut line = vec![s.label.clone(), scheme.clone()];
            for (_, gap, _) in rows {
                line.push(sci2(*gap));
            }
            line.push(
                rows.last()
                    .and_then(|(_, _, e)| *e)
                    .map(sci2)
                    .unwrap_or_else(|| "-".to_string()),
            );
            table.push(line);
        }
    }

    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    }
    Ok(out)
}

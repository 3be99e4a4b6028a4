//! Experiment grid execution: one run per (scheme, seed), CSV and summary
//! emission, and the run manifest.

use crate::config::Experiment;
use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use std::time::Instant;
use svi_core::metrics::{attach_reference, RunMeta, RunRecord};
use svi_core::solvers::{run, RunConfig, SolverKind};

pub const TRIAL_SCHEMA: &str = "svi-trial-csv v1";
pub const TRIAL_HEADER: &str =
    "k,proj_full,proj_member,proj_half,samples,gamma,N,gap_avg,dist_X_iter,dist_X_avg,err_ref,elapsed_ms";

pub struct GridOutcome {
    pub trials: usize,
    pub divergences: Vec<(SolverKind, u64, String)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders a trial record. The elapsed column is written as zero so that
/// re-running an identical config yields byte-identical files; measured
/// timings go to `timings.csv`.
pub fn trial_csv(rec: &RunRecord<f64>) -> String {
    let mut out = format!("# {TRIAL_SCHEMA}\n{TRIAL_HEADER}\n");
    for row in rec.rows() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},0\n",
            row.k,
            row.projections_full,
            row.projections_member,
            row.projections_halfspace,
            row.samples,
            fmt(row.gamma),
            row.batch,
            fmt(row.gap_avg),
            fmt(row.dist_x_iterate),
            fmt(row.dist_x_avg),
            row.err_ref.map(fmt).unwrap_or_default(),
        ));
    }
    out
}

fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct TrialResult {
    kind: SolverKind,
    seed: u64,
    record: RunRecord<f64>,
    diverged: Option<String>,
}

pub fn run_experiment(exp: &mut Experiment, out_dir: &Path) -> Result<GridOutcome> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;

    if exp.compute_reference && exp.problem.reference_solution().is_none() {
        attach_reference(&mut exp.problem, 1e-10, 500_000, 1e-6)
            .context("reference solve failed; set compute_reference = false to skip")?;
    }

    let hash = config_hash(&exp.config_text);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.parallelism)
        .build()
        .context("building worker pool")?;

    let grid: Vec<(SolverKind, u64)> = exp
        .schemes
        .iter()
        .flat_map(|&k| exp.seeds.iter().map(move |&s| (k, s)))
        .collect();

    let problem = &exp.problem;
    let noise = &exp.noise;
    let results: Vec<TrialResult> = pool.install(|| {
        grid.par_iter()
            .map(|&(kind, seed)| {
                let mut cfg = RunConfig::new(kind, exp.step, exp.iterations);
                cfg.batch = exp.batch;
                cfg.checkpoints = exp.checkpoints.clone();
                cfg.kbar = exp.kbar;
                cfg.assume_rp_stepsize_admissible = exp.assume_rp_stepsize_admissible;
                cfg.meta = RunMeta {
                    scheme: kind.name().to_string(),
                    seed,
                    problem_id: exp.problem_id.clone(),
                    config_hash: hash.clone(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match run(problem, noise, &cfg, &mut rng) {
                    Ok(record) => TrialResult {
                        kind,
                        seed,
                        record,
                        diverged: None,
                    },
                    Err(failure) => TrialResult {
                        kind,
                        seed,
                        record: failure.partial,
                        diverged: Some(failure.error.to_string()),
                    },
                }
            })
            .collect()
    });

    // trial CSVs + measured timings (deterministic file order)
    let mut timings = String::from("scheme,seed,k,elapsed_ms\n");
    for r in &results {
        let name = format!("{}_seed{}.csv", r.kind.name(), r.seed);
        fs::write(out_dir.join(&name), trial_csv(&r.record))
            .with_context(|| format!("writing {name}"))?;
        for row in r.record.rows() {
            timings.push_str(&format!(
                "{},{},{},{:.3}\n",
                r.kind.name(),
                r.seed,
                row.k,
                row.elapsed_ms
            ));
        }
    }
    fs::write(out_dir.join("timings.csv"), timings)?;

    // summary: per-scheme mean/median across seeds at each checkpoint
    let mut summary = String::from(
        "scheme,k,proj_full,proj_member,proj_half,samples,gap_mean,gap_median,dist_iter_mean,dist_avg_mean,err_mean,err_median\n",
    );
    for &kind in &exp.schemes {
        let recs: Vec<&RunRecord<f64>> = results
            .iter()
            .filter(|r| r.kind == kind && r.diverged.is_none())
            .map(|r| &r.record)
            .collect();
        if recs.is_empty() {
            continue;
        }
        for &k in &exp.checkpoints {
            let rows: Vec<_> = recs.iter().filter_map(|r| r.row_at(k)).collect();
            if rows.is_empty() {
                continue;
            }
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&svi_core::metrics::RunRow<f64>) -> f64| {
                rows.iter().map(|r| f(r)).sum::<f64>() / n
            };
            let median = |f: &dyn Fn(&svi_core::metrics::RunRow<f64>) -> f64| {
                let mut v: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v[v.len() / 2]
            };
            let err_rows: Vec<f64> = rows.iter().filter_map(|r| r.err_ref).collect();
            let (err_mean, err_median) = if err_rows.is_empty() {
                (String::new(), String::new())
            } else {
                let mut v = err_rows.clone();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (
                    fmt(err_rows.iter().sum::<f64>() / err_rows.len() as f64),
                    fmt(v[v.len() / 2]),
                )
            };
            summary.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                kind.name(),
                k,
                rows[0].projections_full,
                rows[0].projections_member,
                rows[0].projections_halfspace,
                rows[0].samples,
                fmt(mean(&|r| r.gap_avg)),
                fmt(median(&|r| r.gap_avg)),
                fmt(mean(&|r| r.dist_x_iterate)),
                fmt(mean(&|r| r.dist_x_avg)),
                err_mean,
                err_median,
            ));
        }
    }
    fs::write(out_dir.join("summary.csv"), summary)?;

    let divergences: Vec<(SolverKind, u64, String)> = results
        .iter()
        .filter_map(|r| r.diverged.as_ref().map(|e| (r.kind, r.seed, e.clone())))
        .collect();

    let manifest = serde_json::json!({
        "tool": "svi",
        "version": env!("CARGO_PKG_VERSION"),
        "schema": TRIAL_SCHEMA,
        "config_hash": hash,
        "problem": exp.problem_id,
        "iterations": exp.iterations,
        "checkpoints": exp.checkpoints,
        "schemes": exp.schemes.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "seeds": exp.seeds,
        "parallelism": exp.parallelism,
        "divergences": divergences
            .iter()
            .map(|(k, s, e)| serde_json::json!({"scheme": k.name(), "seed": s, "error": e}))
            .collect::<Vec<_>>(),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    Ok(GridOutcome {
        trials: results.len(),
        divergences,
    })
}

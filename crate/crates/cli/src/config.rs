//! Experiment configuration: strict TOML with nested sections. Unknown
//! keys are rejected. See the README for the full schema.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use svi_core::problem::ViProblem;
use svi_core::problems::{
    build_cournot, build_markov, build_synthetic, CournotSpec, MarkovSpec, SyntheticKind,
};
use svi_core::sampling::{BatchSchedule, NoiseModel, StepSchedule};
use svi_core::solvers::{validate_step_admissible, SolverKind};
use svi_core::Vector;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    pub run: RunSection,
    pub step: StepSection,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: String,
    // cournot
    pub firms: Option<usize>,
    pub nodes: Option<usize>,
    pub cap: Option<f64>,
    pub cost: Option<f64>,
    pub slope: Option<f64>,
    pub price_mean: Option<f64>,
    pub price_halfwidth: Option<f64>,
    // markov
    pub states: Option<usize>,
    pub features: Option<usize>,
    pub p_seed: Option<u64>,
    // synthetic
    pub variant: Option<String>,
    // file
    pub path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub schemes: Vec<String>,
    pub iterations: u64,
    pub checkpoints: Option<Vec<u64>>,
    pub checkpoints_log: Option<usize>,
    #[serde(default)]
    pub kbar: u64,
    pub seeds: Option<Vec<u64>>,
    pub master_seed: Option<u64>,
    pub trials: Option<u64>,
    pub output_dir: Option<String>,
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub assume_rp_stepsize_admissible: bool,
    /// Solve and attach a high-accuracy reference before running, so the
    /// error column is populated.
    #[serde(default = "default_true")]
    pub compute_reference: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub kind: String,
    pub gamma: f64,
    pub t: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    pub exponent: f64,
    pub min: u64,
}

impl Default for BatchSection {
    fn default() -> Self {
        BatchSection {
            exponent: 1.1,
            min: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: String,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    /// Uniform half-width applied to every coordinate.
    pub half_width: Option<f64>,
}

/// A validated experiment: problem, noise, schedules, and the grid axes.
pub struct Experiment {
    pub problem: ViProblem<f64>,
    pub problem_id: String,
    pub noise: NoiseModel<f64>,
    pub schemes: Vec<SolverKind>,
    pub step: StepSchedule<f64>,
    pub batch: BatchSchedule,
    pub iterations: u64,
    pub checkpoints: Vec<u64>,
    pub kbar: u64,
    pub seeds: Vec<u64>,
    pub output_dir: Option<String>,
    pub parallelism: usize,
    pub assume_rp_stepsize_admissible: bool,
    pub compute_reference: bool,
    pub config_text: String,
}

pub fn log_spaced_checkpoints(count: usize, iterations: u64) -> Vec<u64> {
    if iterations == 0 {
        return vec![0];
    }
    let count = count.max(2);
    let hi = (iterations as f64).ln();
    let lo = 1.0f64.ln();
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            t.exp().round().clamp(1.0, iterations as f64) as u64
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Parses and validates a config file into a runnable experiment.
pub fn parse_config(text: &str) -> Result<Experiment> {
    let cfg: ConfigFile = toml::from_str(text).context("config parse error")?;

    let (problem, default_noise, problem_id) = build_problem(&cfg.problem)?;

    let noise = match &cfg.noise {
        None => default_noise,
        Some(n) => match n.kind.as_str() {
            "none" => NoiseModel::None,
            "state-scaled-gaussian" => NoiseModel::StateScaledGaussian {
                nu1: n.nu1.unwrap_or(0.0),
                nu2: n.nu2.unwrap_or(0.0),
            },
            "additive-uniform" => {
                let hw = n
                    .half_width
                    .context("additive-uniform noise needs half_width")?;
                if hw < 0.0 {
                    bail!("half_width must be nonnegative");
                }
                NoiseModel::AdditiveUniform {
                    half_widths: Vector::from_elem(problem.dim(), hw),
                }
            }
            other => bail!("unknown noise kind '{other}'"),
        },
    };

    if cfg.run.schemes.is_empty() {
        bail!("schemes list must not be empty");
    }
    let schemes: Vec<SolverKind> = cfg
        .run
        .schemes
        .iter()
        .map(|s| SolverKind::parse(s).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;

    let step = match cfg.step.kind.as_str() {
        "constant" => StepSchedule::constant(cfg.step.gamma)?,
        "diminishing" => StepSchedule::diminishing(cfg.step.gamma, cfg.step.t.unwrap_or(1.0))?,
        other => bail!("unknown step kind '{other}'"),
    };
    let batch = BatchSchedule::new(cfg.batch.exponent, cfg.batch.min)?;

    let iterations = cfg.run.iterations;
    let checkpoints = match (&cfg.run.checkpoints, cfg.run.checkpoints_log) {
        (Some(_), Some(_)) => bail!("set either checkpoints or checkpoints_log, not both"),
        (Some(list), None) => {
            let mut l = list.clone();
            l.sort_unstable();
            l.dedup();
            if l.iter().any(|&k| k > iterations) {
                bail!("checkpoints must lie in [0, iterations]");
            }
            l
        }
        (None, count) => log_spaced_checkpoints(count.unwrap_or(20), iterations),
    };

    let seeds = match (&cfg.run.seeds, cfg.run.master_seed, cfg.run.trials) {
        (Some(list), None, None) => {
            if list.is_empty() {
                bail!("seeds list must not be empty");
            }
            list.clone()
        }
        (None, Some(master), Some(trials)) => {
            if trials == 0 {
                bail!("trials must be >= 1");
            }
            (0..trials).map(|i| master.wrapping_add(i)).collect()
        }
        (None, None, None) => bail!("provide seeds or (master_seed, trials)"),
        _ => bail!("provide either seeds or (master_seed, trials), not a mix"),
    };

    // admissibility for every scheme/step pairing
    for &kind in &schemes {
        validate_step_admissible(
            kind,
            &step,
            &batch,
            &problem,
            &noise,
            cfg.run.assume_rp_stepsize_admissible,
        )?;
        if kind.is_random_projection() && problem.constraint_family().is_none() {
            bail!("scheme {kind} needs a problem with a constraint family");
        }
    }

    Ok(Experiment {
        problem,
        problem_id,
        noise,
        schemes,
        step,
        batch,
        iterations,
        checkpoints,
        kbar: cfg.run.kbar,
        seeds,
        output_dir: cfg.run.output_dir.clone(),
        parallelism: cfg.run.parallelism.unwrap_or(1).max(1),
        assume_rp_stepsize_admissible: cfg.run.assume_rp_stepsize_admissible,
        compute_reference: cfg.run.compute_reference,
        config_text: text.to_string(),
    })
}

fn build_problem(sec: &ProblemSection) -> Result<(ViProblem<f64>, NoiseModel<f64>, String)> {
    match sec.kind.as_str() {
        "cournot" => {
            let firms = sec.firms.unwrap_or(5);
            let nodes = sec.nodes.unwrap_or(4);
            let spec = CournotSpec::uniform(
                firms,
                nodes,
                sec.cap.unwrap_or(300.0),
                sec.cost.unwrap_or(1.5),
                sec.slope.unwrap_or(0.05),
                sec.price_mean.unwrap_or(50.0),
                sec.price_halfwidth.unwrap_or(0.5),
            );
            let (p, noise) = build_cournot(&spec)?;
            Ok((p, noise, format!("cournot-{firms}x{nodes}")))
        }
        "markov" => {
            let spec = MarkovSpec {
                n_states: sec.states.unwrap_or(200),
                r_dims: sec.features.unwrap_or(10),
                p_seed: sec.p_seed.unwrap_or(7),
            };
            let (p, noise) = build_markov(&spec)?;
            Ok((
                p,
                noise,
                format!("markov-{}x{}-seed{}", spec.n_states, spec.r_dims, spec.p_seed),
            ))
        }
        "synthetic" => {
            let variant = sec.variant.as_deref().unwrap_or("interior");
            let kind = match variant {
                "interior" => SyntheticKind::Interior,
                "boundary" => SyntheticKind::Boundary,
                "skew" => SyntheticKind::Skew,
                other => bail!("unknown synthetic variant '{other}'"),
            };
            Ok((
                build_synthetic(kind)?,
                NoiseModel::None,
                format!("synthetic-{variant}"),
            ))
        }
        "file" => {
            let path = sec.path.as_ref().context("file problem needs path")?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading problem file {path}"))?;
            let p = svi_core::format::parse_problem::<f64>(&text)?;
            Ok((p, NoiseModel::None, format!("file-{path}")))
        }
        other => bail!("unknown problem kind '{other}'"),
    }
}

//! The iteration schemes and the outer run loop with exact projection and
//! sample accounting.
//!
//! Eight kinds are provided: projected gradient (SPG) and extragradient
//! (SEG) baselines, the single-projection reflected-gradient (SPRG) and
//! subgradient-extragradient (SSE) schemes, their variance-reduced variants
//! (v-SPRG, v-SSE) driven by an increasing batch size, and random-projection
//! variants (r-SPRG, r-SSE) that project onto one sampled member of a
//! constraint family per iteration. Deterministic variants are obtained by
//! running with a zero-noise oracle.
//!
//! Iteration convention: step `s = 1, 2, …` updates the iterate pair using
//! step size `γ_s = step_size(sched, s)` and, for the variance-reduced
//! kinds, batch size `N = batch_size(sched, s−1)`, so after `K` steps the
//! sample counter equals `Σ_{k<K} N_k` exactly. Both iterates start at
//! `x₀` (so the first reflected step is a plain projected step).

use crate::error::{Error, Result};
use crate::metrics::{self, RunMeta, RunRecord, RunRow};
use crate::problem::ViProblem;
use crate::projections::{
    dist_to_set, halfspace_from_sse_iterates, project, sample_constraint, Projector,
};
use crate::sampling::{
    admissible_gamma_max, batch_size, step_size, BatchSchedule, NoiseModel, StepSchedule,
    StochasticOracle,
};
use crate::scalar::{c, Scalar};
use crate::Vector;
use rand::Rng;
use std::time::Instant;

/// Iterate norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Spg,
    Seg,
    Sprg,
    Sse,
    VSprg,
    VSse,
    RSprg,
    RSse,
}

impl SolverKind {
    pub const ALL: [SolverKind; 8] = [
        SolverKind::Spg,
        SolverKind::Seg,
        SolverKind::Sprg,
        SolverKind::Sse,
        SolverKind::VSprg,
        SolverKind::VSse,
        SolverKind::RSprg,
        SolverKind::RSse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Spg => "spg",
            SolverKind::Seg => "seg",
            SolverKind::Sprg => "sprg",
            SolverKind::Sse => "sse",
            SolverKind::VSprg => "v-sprg",
            SolverKind::VSse => "v-sse",
            SolverKind::RSprg => "r-sprg",
            SolverKind::RSse => "r-sse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_lowercase().replace('_', "-");
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown scheme '{s}'")))
    }

    /// Whether batch averages follow the batch schedule (otherwise N ≡ 1).
    pub fn is_variance_reduced(&self) -> bool {
        matches!(self, SolverKind::VSprg | SolverKind::VSse)
    }

    pub fn is_random_projection(&self) -> bool {
        matches!(self, SolverKind::RSprg | SolverKind::RSse)
    }

    /// Declared projections per iteration: (full-set, member, halfspace).
    pub fn projections_per_iter(&self) -> (u64, u64, u64) {
        match self {
            SolverKind::Spg => (1, 0, 0),
            SolverKind::Seg => (2, 0, 0),
            SolverKind::Sprg => (1, 0, 0),
            SolverKind::Sse => (1, 0, 1),
            SolverKind::VSprg => (1, 0, 0),
            SolverKind::VSse => (1, 0, 1),
            SolverKind::RSprg => (0, 1, 0),
            SolverKind::RSse => (0, 1, 1),
        }
    }

    /// Map evaluations (batches) per iteration.
    pub fn batches_per_iter(&self) -> u64 {
        match self {
            SolverKind::Spg | SolverKind::Sprg | SolverKind::VSprg | SolverKind::RSprg => 1,
            SolverKind::Seg | SolverKind::Sse | SolverKind::VSse | SolverKind::RSse => 2,
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub projections_full: u64,
    pub projections_member: u64,
    pub projections_halfspace: u64,
    pub samples: u64,
}

/// Mutable per-run state: the iterate pair, averaging accumulators, the
/// window store for random-projection schemes, and exact counters.
#[derive(Debug, Clone)]
pub struct SolverState<T: Scalar> {
    kind: SolverKind,
    x_curr: Vector<T>,
    x_prev: Vector<T>,
    x_half: Option<Vector<T>>,
    k: u64,
    avg_sum: Vector<T>,
    avg_count: u64,
    /// `(γ_s, evaluation point)` per step, 1-based step index `s`;
    /// populated by the random-projection kinds only.
    window: Vec<(T, Vector<T>)>,
    pub counters: Counters,
    last_halfspace: Option<(Vector<T>, T)>,
}

impl<T: Scalar> SolverState<T> {
    pub fn new(kind: SolverKind, x0: Vector<T>) -> Self {
        let n = x0.len();
        SolverState {
            kind,
            x_curr: x0.clone(),
            x_prev: x0,
            x_half: None,
            k: 0,
            avg_sum: Vector::zeros(n),
            avg_count: 0,
            window: Vec::new(),
            counters: Counters::default(),
            last_halfspace: None,
        }
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn iterate(&self) -> &Vector<T> {
        &self.x_curr
    }

    pub fn previous_iterate(&self) -> &Vector<T> {
        &self.x_prev
    }

    pub fn half_iterate(&self) -> Option<&Vector<T>> {
        self.x_half.as_ref()
    }

    /// Completed steps.
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn average_accumulator(&self) -> (&Vector<T>, u64) {
        (&self.avg_sum, self.avg_count)
    }

    pub fn window_points(&self) -> &[(T, Vector<T>)] {
        &self.window
    }

    fn accumulate_average(&mut self, point: &Vector<T>) {
        self.avg_sum = &self.avg_sum + point;
        self.avg_count += 1;
    }

    fn finish_step(&mut self, x_next: Vector<T>) -> Result<()> {
        let norm_sq = x_next.dot(&x_next);
        if !norm_sq.is_finite() || norm_sq > c::<T>(DIVERGENCE_NORM * DIVERGENCE_NORM) {
            return Err(Error::Diverged {
                k: (self.k + 1) as usize,
                reason: format!("iterate norm {:e}", norm_sq.sqrt()),
            });
        }
        self.x_prev = std::mem::replace(&mut self.x_curr, x_next);
        self.k += 1;
        Ok(())
    }

    /// Per-kind feasibility and accounting invariants; intended for tests
    /// and debugging, not the hot loop (full-set membership runs Dykstra).
    pub fn check_invariants(&self, problem: &ViProblem<T>, tol: T) -> Result<()> {
        let (full, member, half) = self.kind.projections_per_iter();
        let want = Counters {
            projections_full: full * self.k,
            projections_member: member * self.k,
            projections_halfspace: half * self.k,
            samples: self.counters.samples,
        };
        if want != self.counters {
            return Err(Error::invalid(format!(
                "projection counters {:?} disagree with declared per-iteration counts {:?}",
                self.counters, want
            )));
        }
        match self.kind {
            SolverKind::Spg | SolverKind::Seg | SolverKind::Sprg | SolverKind::VSprg => {
                let d = dist_to_set(problem.feasible_set(), &self.x_curr)?;
                if d > tol {
                    return Err(Error::Infeasible {
                        dist: d.to_f64().unwrap_or(f64::NAN),
                        tol: tol.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
            SolverKind::Sse | SolverKind::VSse => {
                if let Some(xh) = &self.x_half {
                    let d = dist_to_set(problem.feasible_set(), xh)?;
                    if d > tol {
                        return Err(Error::Infeasible {
                            dist: d.to_f64().unwrap_or(f64::NAN),
                            tol: tol.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                }
                if let Some((normal, rhs)) = &self.last_halfspace {
                    let slack = normal.dot(&self.x_curr) - *rhs;
                    if slack > c::<T>(1e-8) {
                        return Err(Error::invalid(format!(
                            "iterate violates its separating halfspace by {slack:e}"
                        )));
                    }
                }
            }
            SolverKind::RSprg | SolverKind::RSse => {}
        }
        Ok(())
    }
}

fn reflect<T: Scalar>(x_curr: &Vector<T>, x_prev: &Vector<T>) -> Vector<T> {
    x_curr * c::<T>(2.0) - x_prev
}

/// `x_{k+1} = Π_X(x_k − γ F̄(x_k))`.
pub fn step_spg<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    batch: u64,
    rng: &mut R,
) -> Result<()> {
    state.accumulate_average(&state.x_curr.clone());
    let f = oracle.batch_average(&state.x_curr, batch, rng)?;
    let z = &state.x_curr - &(f * gamma);
    let x_next = project(problem.feasible_set(), &z)?;
    state.counters.projections_full += 1;
    state.counters.samples += batch;
    state.finish_step(x_next)
}

/// Extragradient baseline: two full-set projections and two batches.
pub fn step_seg<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    batch: u64,
    rng: &mut R,
) -> Result<()> {
    let f1 = oracle.batch_average(&state.x_curr, batch, rng)?;
    let x_half = project(problem.feasible_set(), &(&state.x_curr - &(f1 * gamma)))?;
    let f2 = oracle.batch_average(&x_half, batch, rng)?;
    let x_next = project(problem.feasible_set(), &(&state.x_curr - &(f2 * gamma)))?;
    state.accumulate_average(&x_half);
    state.x_half = Some(x_half);
    state.counters.projections_full += 2;
    state.counters.samples += 2 * batch;
    state.finish_step(x_next)
}

/// Variance-reduced reflected-gradient step:
/// `x_{k+1} = Π_X(x_k − γ · mean_j F(2x_k − x_{k−1}, ω_j))`.
pub fn step_v_sprg<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    batch: u64,
    rng: &mut R,
) -> Result<()> {
    state.accumulate_average(&state.x_curr.clone());
    let y = reflect(&state.x_curr, &state.x_prev);
    let f = oracle.batch_average(&y, batch, rng)?;
    let z = &state.x_curr - &(f * gamma);
    let x_next = project(problem.feasible_set(), &z)?;
    state.counters.projections_full += 1;
    state.counters.samples += batch;
    state.finish_step(x_next)
}

/// Single-sample reflected-gradient step (`N ≡ 1`).
pub fn step_sprg<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    rng: &mut R,
) -> Result<()> {
    step_v_sprg(state, problem, oracle, gamma, 1, rng)
}

/// Variance-reduced subgradient-extragradient step: one full-set projection
/// plus a closed-form projection onto the separating halfspace `C_k`.
pub fn step_v_sse<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    batch: u64,
    rng: &mut R,
) -> Result<()> {
    let f1 = oracle.batch_average(&state.x_curr, batch, rng)?;
    let z = &state.x_curr - &(f1 * gamma);
    let x_half = project(problem.feasible_set(), &z)?;
    let ck = halfspace_from_sse_iterates(&z, &x_half);
    let f2 = oracle.batch_average(&x_half, batch, rng)?;
    let w = &state.x_curr - &(f2 * gamma);
    let x_next = project(&ck, &w)?;
    if let Projector::Halfspace { normal, rhs } = ck {
        state.last_halfspace = Some((normal, rhs));
    }
    state.accumulate_average(&x_half);
    state.x_half = Some(x_half);
    state.counters.projections_full += 1;
    state.counters.projections_halfspace += 1;
    state.counters.samples += 2 * batch;
    state.finish_step(x_next)
}

/// Single-sample subgradient-extragradient step (`N ≡ 1`).
pub fn step_sse<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    rng: &mut R,
) -> Result<()> {
    step_v_sse(state, problem, oracle, gamma, 1, rng)
}

/// Random-projection reflected-gradient step: the full-set projection is
/// replaced by a projection onto one sampled member. The constraint index
/// is drawn after the noise sample, so a single-member family reproduces
/// the single-sample scheme on the same rng stream bit for bit.
pub fn step_r_sprg<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    rng: &mut R,
) -> Result<()> {
    let family = problem
        .constraint_family()
        .ok_or_else(|| Error::invalid("random-projection scheme needs a constraint family"))?;
    let y = reflect(&state.x_curr, &state.x_prev);
    let f = oracle.sample(&y, rng)?;
    let idx = sample_constraint(family, rng);
    let z = &state.x_curr - &(f * gamma);
    let x_next = project(family.member(idx), &z)?;
    state.window.push((gamma, y));
    state.counters.projections_member += 1;
    state.counters.samples += 1;
    state.finish_step(x_next)
}

/// Random-projection subgradient-extragradient step: member projection for
/// the half-iterate, closed-form halfspace projection for the update.
pub fn step_r_sse<T: Scalar, R: Rng + ?Sized>(
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    rng: &mut R,
) -> Result<()> {
    let family = problem
        .constraint_family()
        .ok_or_else(|| Error::invalid("random-projection scheme needs a constraint family"))?;
    let f1 = oracle.sample(&state.x_curr, rng)?;
    let idx = sample_constraint(family, rng);
    let z = &state.x_curr - &(f1 * gamma);
    let x_half = project(family.member(idx), &z)?;
    let ck = halfspace_from_sse_iterates(&z, &x_half);
    let f2 = oracle.sample(&x_half, rng)?;
    let w = &state.x_curr - &(f2 * gamma);
    let x_next = project(&ck, &w)?;
    if let Projector::Halfspace { normal, rhs } = ck {
        state.last_halfspace = Some((normal, rhs));
    }
    state.window.push((gamma, x_half.clone()));
    state.x_half = Some(x_half);
    state.counters.projections_member += 1;
    state.counters.projections_halfspace += 1;
    state.counters.samples += 2;
    state.finish_step(x_next)
}

/// Dispatches one step of `kind`; `batch` only applies to the
/// variance-reduced kinds, every other kind is single-sample by definition.
pub fn step<T: Scalar, R: Rng + ?Sized>(
    kind: SolverKind,
    state: &mut SolverState<T>,
    problem: &ViProblem<T>,
    oracle: &mut StochasticOracle<T>,
    gamma: T,
    batch: u64,
    rng: &mut R,
) -> Result<()> {
    match kind {
        SolverKind::Spg => step_spg(state, problem, oracle, gamma, 1, rng),
        SolverKind::Seg => step_seg(state, problem, oracle, gamma, 1, rng),
        SolverKind::Sprg => step_sprg(state, problem, oracle, gamma, rng),
        SolverKind::Sse => step_sse(state, problem, oracle, gamma, rng),
        SolverKind::VSprg => step_v_sprg(state, problem, oracle, gamma, batch, rng),
        SolverKind::VSse => step_v_sse(state, problem, oracle, gamma, batch, rng),
        SolverKind::RSprg => step_r_sprg(state, problem, oracle, gamma, rng),
        SolverKind::RSse => step_r_sse(state, problem, oracle, gamma, rng),
    }
}

/// Burn-in index `k̄ = ⌈1/(1 − (1−β/2)^{1/t}) − 1⌉` of the window average,
/// for users who can supply the contraction factor `β ∈ (0,1)`.
pub fn compute_kbar<T: Scalar>(beta: T, t: u32) -> Result<u64> {
    if beta <= T::zero() || beta >= T::one() {
        return Err(Error::invalid("beta must lie strictly inside (0, 1)"));
    }
    if t == 0 {
        return Err(Error::invalid("t must be >= 1"));
    }
    let half = beta / c::<T>(2.0);
    let root = (T::one() - half).powf(T::one() / T::from_u32(t).expect("small t"));
    let value = T::one() / (T::one() - root) - T::one();
    Ok(value.ceil().to_u64().unwrap_or(0))
}

/// Run configuration for [`run`].
#[derive(Debug, Clone)]
pub struct RunConfig<T: Scalar> {
    pub kind: SolverKind,
    pub step: StepSchedule<T>,
    pub batch: BatchSchedule,
    pub iterations: u64,
    /// Iteration indices at which metrics are recorded; must lie in
    /// `[0, iterations]` (and leave room for `kbar` on random-projection
    /// kinds).
    pub checkpoints: Vec<u64>,
    pub kbar: u64,
    /// Override of the default start `Π_X(0)`; must be feasible.
    pub x0: Option<Vector<T>>,
    /// Skip the admissible-step check for random-projection kinds, whose
    /// full theoretical step condition involves unobservable constants.
    pub assume_rp_stepsize_admissible: bool,
    pub gap_tol: T,
    pub gap_max_iters: usize,
    pub meta: RunMeta,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(kind: SolverKind, step: StepSchedule<T>, iterations: u64) -> Self {
        RunConfig {
            kind,
            step,
            batch: BatchSchedule::new(1.1, 1).expect("default schedule"),
            iterations,
            checkpoints: vec![iterations],
            kbar: 0,
            x0: None,
            assume_rp_stepsize_admissible: false,
            gap_tol: c(1e-9),
            gap_max_iters: 2_000,
            meta: RunMeta::default(),
        }
    }

    pub fn with_checkpoints(mut self, cps: Vec<u64>) -> Self {
        self.checkpoints = cps;
        self
    }

    pub fn with_batch(mut self, batch: BatchSchedule) -> Self {
        self.batch = batch;
        self
    }
}

/// A failed run still carries the rows recorded before the failure.
#[derive(Debug)]
pub struct RunFailure<T: Scalar> {
    pub error: Error,
    pub partial: RunRecord<T>,
}

/// Validates a scheme/step pairing against [`admissible_gamma_max`].
pub fn validate_step_admissible<T: Scalar>(
    kind: SolverKind,
    step: &StepSchedule<T>,
    batch: &BatchSchedule,
    problem: &ViProblem<T>,
    noise: &NoiseModel<T>,
    assume_rp_admissible: bool,
) -> Result<()> {
    if kind.is_random_projection() && assume_rp_admissible {
        return Ok(());
    }
    let n0 = if kind.is_variance_reduced() {
        batch_size(batch, 0)
    } else {
        1
    };
    let bound = admissible_gamma_max(kind, problem.lipschitz(), noise.nu1(), n0)?;
    let gamma = step.max_step();
    if gamma > bound * (T::one() + c(1e-12)) {
        return Err(Error::InadmissibleStep {
            scheme: kind.name().into(),
            gamma: gamma.to_f64().unwrap_or(f64::NAN),
            bound: bound.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Executes `config.iterations` steps of the scheme, recording metric rows
/// at every checkpoint. Deterministic given the rng stream; counters are
/// exact; a divergence error carries the partial record.
pub fn run<T: Scalar, R: Rng + ?Sized>(
    problem: &ViProblem<T>,
    noise: &NoiseModel<T>,
    config: &RunConfig<T>,
    rng: &mut R,
) -> std::result::Result<RunRecord<T>, Box<RunFailure<T>>> {
    let setup = || -> Result<(SolverState<T>, Vec<u64>)> {
        validate_step_admissible(
            config.kind,
            &config.step,
            &config.batch,
            problem,
            noise,
            config.assume_rp_stepsize_admissible,
        )?;
        if config.kind.is_random_projection() && problem.constraint_family().is_none() {
            return Err(Error::invalid(
                "random-projection scheme needs a problem with a constraint family",
            ));
        }
        let mut cps: Vec<u64> = config.checkpoints.clone();
        cps.sort_unstable();
        cps.dedup();
        if cps.iter().any(|&k| k > config.iterations) {
            return Err(Error::invalid("checkpoints must lie in [0, iterations]"));
        }
        if config.kind.is_random_projection() && config.kbar > 0 {
            if let Some(&maxcp) = cps.iter().filter(|&&k| k > 0).max() {
                if maxcp + config.kbar > config.iterations {
                    return Err(Error::invalid(
                        "window checkpoints need run length >= K + kbar",
                    ));
                }
            }
        }
        let x0 = match &config.x0 {
            Some(x) => {
                let d = dist_to_set(problem.feasible_set(), x)?;
                if d > c(1e-8) {
                    return Err(Error::Infeasible {
                        dist: d.to_f64().unwrap_or(f64::NAN),
                        tol: 1e-8,
                    });
                }
                x.clone()
            }
            None => project(problem.feasible_set(), &Vector::zeros(problem.dim()))?,
        };
        Ok((SolverState::new(config.kind, x0), cps))
    };

    let (mut state, checkpoints) = match setup() {
        Ok(v) => v,
        Err(e) => {
            return Err(Box::new(RunFailure {
                error: e,
                partial: RunRecord::new(config.meta.clone()),
            }))
        }
    };

    // Fresh oracle per run: its sample counter matches the state counters.
    let mut oracle = StochasticOracle::new(problem.map().clone(), noise.clone());
    let mut record = RunRecord::new(config.meta.clone());
    let started = Instant::now();
    // Cache of Π_X over stored window points (window index s-1), filled
    // lazily at checkpoints so overlapping windows project each point once.
    let mut proj_cache: Vec<Option<Vector<T>>> = Vec::new();
    // Deferred rows for window checkpoints with kbar > 0: (emit_at, base, row).
    let mut pending: Vec<(u64, u64, RunRow<T>)> = Vec::new();
    let defer_windows = config.kind.is_random_projection() && config.kbar > 0;

    macro_rules! bail {
        ($err:expr) => {
            return Err(Box::new(RunFailure {
                error: $err,
                partial: record,
            }))
        };
    }

    if checkpoints.binary_search(&0).is_ok() {
        match metrics::initial_row(problem, &state, config) {
            Ok(mut row) => {
                row.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
                record.push(row);
            }
            Err(e) => bail!(e),
        }
    }

    for s in 1..=config.iterations {
        let gamma = match step_size(&config.step, s) {
            Ok(g) => g,
            Err(e) => bail!(e),
        };
        let batch = if config.kind.is_variance_reduced() {
            batch_size(&config.batch, s - 1)
        } else {
            1
        };
        if let Err(e) = step(config.kind, &mut state, problem, &mut oracle, gamma, batch, rng) {
            bail!(e);
        }
        debug_assert_eq!(oracle.samples_drawn(), state.counters.samples);

        let at_checkpoint = checkpoints.binary_search(&s).is_ok();
        if defer_windows {
            if at_checkpoint {
                // Non-window metrics reflect iteration s; the window average
                // needs kbar more steps before it can be formed.
                match metrics::checkpoint_row_without_average(problem, &state, config, s, gamma, batch)
                {
                    Ok(row) => pending.push((s + config.kbar, s, row)),
                    Err(e) => bail!(e),
                }
            }
            while let Some(pos) = pending.iter().position(|(at, _, _)| *at == s) {
                let (_, base, mut row) = pending.remove(pos);
                if let Err(e) =
                    metrics::fill_window_metrics(problem, &state, config, base, &mut proj_cache, &mut row)
                {
                    bail!(e);
                }
                row.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
                record.push(row);
            }
        } else if at_checkpoint {
            match metrics::checkpoint_row(problem, &state, config, s, gamma, batch, &mut proj_cache) {
                Ok(mut row) => {
                    row.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
                    record.push(row);
                }
                Err(e) => bail!(e),
            }
        }
    }

    debug_assert!(pending.is_empty(), "validated checkpoints leave no pending rows");
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::finalize_uniform_average;
    use crate::problem::AffineMonotoneMap;
    use crate::problems::{build_synthetic, build_wedge_family, SyntheticKind};
    use crate::Matrix;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn interior() -> ViProblem<f64> {
        build_synthetic(SyntheticKind::Interior).unwrap()
    }

    fn oracle_for(problem: &ViProblem<f64>) -> StochasticOracle<f64> {
        StochasticOracle::new(problem.map().clone(), NoiseModel::None)
    }

    #[test]
    fn v_sprg_hand_iteration() {
        let p = interior();
        let mut o = oracle_for(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = SolverState::new(SolverKind::VSprg, array![0.0]);
        step_v_sprg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        assert_eq!(st.iterate()[0], 0.5);
        step_v_sprg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        assert!((st.iterate()[0] - 0.9).abs() < 1e-15);
        assert_eq!(st.counters.projections_full, 2);
        assert_eq!(st.counters.samples, 2);
        st.check_invariants(&p, 1e-9).unwrap();
    }

    #[test]
    fn v_sse_hand_iteration() {
        let p = interior();
        let mut o = oracle_for(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = SolverState::new(SolverKind::VSse, array![0.0]);
        step_v_sse(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        // z = 0.5 interior so C = R, x1 = 0 + 0.1*4.5
        assert!((st.iterate()[0] - 0.45).abs() < 1e-15);
        assert_eq!(st.half_iterate().unwrap()[0], 0.5);
        assert_eq!(st.counters.projections_full, 1);
        assert_eq!(st.counters.projections_halfspace, 1);
        assert_eq!(st.counters.samples, 2);
        st.check_invariants(&p, 1e-9).unwrap();
    }

    #[test]
    fn v_sse_active_halfspace_case() {
        // X = nonneg, F(x) = x + 1, solution x* = 0
        let map = AffineMonotoneMap::new(Matrix::<f64>::eye(1), array![1.0]).unwrap();
        let p = ViProblem::new(map, Projector::nonneg(1), 1.0).unwrap();
        let mut o = oracle_for(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = SolverState::new(SolverKind::VSse, array![0.0]);
        step_v_sse(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        assert_eq!(st.half_iterate().unwrap()[0], 0.0);
        assert_eq!(st.iterate()[0], 0.0);
    }

    #[test]
    fn seg_hand_iteration() {
        let p = interior();
        let mut o = oracle_for(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = SolverState::new(SolverKind::Seg, array![0.0]);
        step_seg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        assert_eq!(st.half_iterate().unwrap()[0], 0.5);
        assert!((st.iterate()[0] - 0.45).abs() < 1e-15);
        step_seg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        assert_eq!(st.counters.projections_full, 4);
        st.check_invariants(&p, 1e-9).unwrap();
    }

    #[test]
    fn spg_hand_iteration() {
        let p = interior();
        let mut o = oracle_for(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = SolverState::new(SolverKind::Spg, array![0.0]);
        step_spg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        assert_eq!(st.iterate()[0], 0.5);
    }

    // Wedge family with an interior solution (F(x*) = 0): member
    // projections fix x* exactly, so the stationarity contract applies to
    // the random-projection kinds as well.
    fn wedge_interior() -> ViProblem<f64> {
        let map = AffineMonotoneMap::new(Matrix::<f64>::eye(2), array![-2.0, -3.0]).unwrap();
        let h1 = Projector::halfspace(array![-1.0, 0.0], 0.0);
        let h2 = Projector::halfspace(array![0.0, -1.0], 0.0);
        let full = Projector::dykstra(vec![h1.clone(), h2.clone()]);
        let family =
            crate::projections::ConstraintFamily::uniform(vec![h1, h2], full.clone()).unwrap();
        ViProblem::new(map, full, 1.0)
            .unwrap()
            .with_family(family)
            .with_reference_feasible(array![2.0, 3.0])
            .unwrap()
    }

    #[test]
    fn fixed_point_stability_all_kinds() {
        // interior solution: F(x*) = 0
        for kind in SolverKind::ALL {
            let p = if kind.is_random_projection() {
                wedge_interior()
            } else {
                interior()
            };
            let xstar = p.reference_solution().unwrap().clone();
            let mut o = oracle_for(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut st = SolverState::new(kind, xstar.clone());
            for _ in 0..5 {
                step(kind, &mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
                let d = st.iterate() - &xstar;
                assert!(
                    d.dot(&d).sqrt() <= 1e-12,
                    "{kind} drifted from the solution"
                );
            }
        }
        // boundary solution: F(x*) != 0 but the projection pins x*
        let p = build_synthetic::<f64>(SyntheticKind::Boundary).unwrap();
        let xstar = p.reference_solution().unwrap().clone();
        for kind in [SolverKind::Spg, SolverKind::Seg, SolverKind::VSprg, SolverKind::VSse] {
            let mut o = oracle_for(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut st = SolverState::new(kind, xstar.clone());
            for _ in 0..5 {
                step(kind, &mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
                let d = st.iterate() - &xstar;
                assert!(d.dot(&d).sqrt() <= 1e-12, "{kind} drifted at the boundary");
            }
        }
    }

    #[test]
    fn r_sprg_branch_enumeration() {
        // noise off: the constraint index is the only randomness, so a
        // cloned rng replays the sampled branch
        let (p, _) = build_wedge_family::<f64>().unwrap();
        let fam = p.constraint_family().unwrap();
        let gamma = 0.2;
        let x0 = array![0.0, 0.0];
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut replay = rng.clone();
            let mut o = oracle_for(&p);
            let mut st = SolverState::new(SolverKind::RSprg, x0.clone());
            step_r_sprg(&mut st, &p, &mut o, gamma, &mut rng).unwrap();
            let idx = sample_constraint(fam, &mut replay);
            // z = x0 - gamma * F(0) = (2 gamma, -3 gamma)
            let expect = if idx == 0 {
                array![2.0 * gamma, -3.0 * gamma] // {x1 >= 0} already holds
            } else {
                array![2.0 * gamma, 0.0]
            };
            assert_eq!(st.iterate(), &expect, "seed {seed} branch {idx}");
            assert_eq!(st.counters.projections_member, 1);
            if idx == 0 {
                // iterate left the intersection
                let d = dist_to_set(p.feasible_set(), st.iterate()).unwrap();
                assert!(d > 1e-3, "expected infeasible iterate, dist {d}");
            }
        }
    }

    #[test]
    fn r_sse_branch_enumeration() {
        let (p, _) = build_wedge_family::<f64>().unwrap();
        let fam = p.constraint_family().unwrap();
        let gamma = 0.2;
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut replay = rng.clone();
            let mut o = oracle_for(&p);
            let mut st = SolverState::new(SolverKind::RSse, array![0.0, 0.0]);
            step_r_sse(&mut st, &p, &mut o, gamma, &mut rng).unwrap();
            let idx = sample_constraint(fam, &mut replay);
            // z = (2g, -3g); member 0 keeps it, member 1 zeroes x2
            let x_half = if idx == 0 {
                array![2.0 * gamma, -3.0 * gamma]
            } else {
                array![2.0 * gamma, 0.0]
            };
            assert_eq!(st.half_iterate().unwrap(), &x_half, "seed {seed}");
            assert_eq!(st.counters.projections_member, 1);
            assert_eq!(st.counters.projections_halfspace, 1);
            assert_eq!(st.counters.samples, 2);
        }
    }

    #[test]
    fn kbar_formula() {
        assert_eq!(compute_kbar(0.5f64, 1).unwrap(), 3);
        assert_eq!(compute_kbar(0.9f64, 1).unwrap(), 2);
        assert_eq!(compute_kbar(0.5f64, 2).unwrap(), 7);
        assert!(compute_kbar(0.0f64, 1).is_err());
        assert!(compute_kbar(1.0f64, 1).is_err());
        assert!(compute_kbar(0.5f64, 0).is_err());
    }

    #[test]
    fn run_zero_iterations_records_initial_point() {
        let p = interior();
        let cfg = RunConfig::new(SolverKind::VSprg, StepSchedule::constant(0.1).unwrap(), 0)
            .with_checkpoints(vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap();
        assert_eq!(rec.rows().len(), 1);
        let row = &rec.rows()[0];
        assert_eq!(row.k, 0);
        assert_eq!(row.samples, 0);
        assert_eq!(row.err_ref.unwrap(), 5.0); // x0 = 0, x* = 5
    }

    #[test]
    fn run_counters_and_checkpoint_monotonicity() {
        let p = interior();
        for (kind, per_iter) in [(SolverKind::Seg, 2u64), (SolverKind::VSprg, 1), (SolverKind::VSse, 1)] {
            let cfg = RunConfig::new(kind, StepSchedule::constant(0.1).unwrap(), 40)
                .with_checkpoints(vec![10, 20, 40])
                .with_batch(BatchSchedule::new(1.1, 1).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let rec = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap();
            let mut prev = 0;
            for row in rec.rows() {
                assert_eq!(row.projections_full, per_iter * row.k);
                assert!(row.projections_full > prev);
                prev = row.projections_full;
            }
        }
    }

    #[test]
    fn run_oracle_accounting_exact() {
        let p = interior();
        let batch = BatchSchedule::new(1.1, 1).unwrap();
        let k_total = 200u64;
        let cfg = RunConfig::new(SolverKind::VSprg, StepSchedule::constant(0.1).unwrap(), k_total)
            .with_checkpoints(vec![k_total])
            .with_batch(batch);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rec = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap();
        let want: u64 = (0..k_total).map(|k| batch_size(&batch, k)).sum();
        assert_eq!(rec.rows()[0].samples, want);
    }

    #[test]
    fn run_converges_deterministically() {
        let p = interior();
        let cfg = RunConfig::new(SolverKind::VSprg, StepSchedule::constant(0.1).unwrap(), 1000)
            .with_checkpoints(vec![1000]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap();
        assert!(rec.rows()[0].err_ref.unwrap() <= 1e-6);
    }

    #[test]
    fn run_rejects_inadmissible_step() {
        let p = interior(); // L = 1
        let cfg = RunConfig::new(SolverKind::VSprg, StepSchedule::constant(0.2).unwrap(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fail = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap_err();
        assert!(matches!(fail.error, Error::InadmissibleStep { .. }));
    }

    #[test]
    fn run_requires_family_for_random_projection() {
        let p = interior();
        let cfg = RunConfig::new(SolverKind::RSprg, StepSchedule::diminishing(0.1, 1.0).unwrap(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fail = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap_err();
        assert!(matches!(fail.error, Error::InvalidArgument(_)));
    }

    #[test]
    fn run_divergence_carries_partial_record() {
        // inadmissible-by-far step on an unconstrained-ish problem via the
        // rp flag escape hatch: r-SPRG with a huge constant step diverges
        let (p, _) = build_wedge_family::<f64>().unwrap();
        let mut cfg = RunConfig::new(SolverKind::RSprg, StepSchedule::constant(1e9).unwrap(), 2000);
        cfg.assume_rp_stepsize_admissible = true;
        cfg.checkpoints = vec![1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fail = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap_err();
        assert!(matches!(fail.error, Error::Diverged { .. }));
        assert_eq!(fail.partial.rows().len(), 1);
    }

    #[test]
    fn run_window_average_with_kbar_defers_rows() {
        let (p, _) = build_wedge_family::<f64>().unwrap();
        let mut cfg = RunConfig::new(SolverKind::RSprg, StepSchedule::diminishing(0.1, 1.0).unwrap(), 30);
        cfg.kbar = 4;
        cfg.checkpoints = vec![10, 20];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rec = run(&p, &NoiseModel::None, &cfg, &mut rng).unwrap();
        assert_eq!(rec.rows().len(), 2);
        assert_eq!(rec.rows()[0].k, 10);
        assert!(rec.rows()[0].gap_avg.is_finite());
        // a checkpoint too close to the end must be rejected
        cfg.checkpoints = vec![28];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(run(&p, &NoiseModel::None, &cfg, &mut rng).is_err());
    }

    #[test]
    fn uniform_average_examples() {
        let p = interior();
        let mut st = SolverState::new(SolverKind::VSprg, array![0.0]);
        let mut o = oracle_for(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        step_v_sprg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        // K = 1: average is x0
        assert_eq!(finalize_uniform_average(&st).unwrap()[0], 0.0);
        step_v_sprg(&mut st, &p, &mut o, 0.1, 1, &mut rng).unwrap();
        // average of x0 = 0 and x1 = 0.5
        assert_eq!(finalize_uniform_average(&st).unwrap()[0], 0.25);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(SolverKind::parse("v-sprg").unwrap(), SolverKind::VSprg);
        assert_eq!(SolverKind::parse("V_SSE").unwrap(), SolverKind::VSse);
        assert!(SolverKind::parse("frob").is_err());
    }
}

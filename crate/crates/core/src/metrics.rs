//! Gap-function estimation, distances, averaging finalization, reference
//! solutions, and the record rows emitted by solver runs.

use crate::error::{Error, Result};
use crate::problem::ViProblem;
use crate::projections::{dist_to_set, project};
use crate::scalar::{c, Scalar};
use crate::solvers::{RunConfig, SolverState};
use crate::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of maximizing `φ(y) = F(y)ᵀ(x − y)` over the feasible set.
#[derive(Debug, Clone, Copy)]
pub struct GapEstimate<T: Scalar> {
    /// The gap value `sup_y F(y)ᵀ(x − y)` (up to ascent accuracy).
    pub value: T,
    /// Projected-gradient stationarity residual at the maximizer,
    /// `‖y − Π_X(y + σ∇φ(y))‖ / σ`.
    pub certificate_residual: T,
    pub iterations_used: usize,
}

/// Feasibility slack accepted by the gap oracle before it refuses a point.
const GAP_FEAS_TOL: f64 = 1e-6;

/// Gap function `G(x) = sup_{y∈X} F(y)ᵀ(x−y)` for an affine monotone map,
/// by multi-start projected gradient ascent.
///
/// `φ` is concave because the symmetric part of `M` is positive
/// semidefinite; the ascent step is `1/λ_max(M+Mᵀ)` (capped when the
/// quadratic part vanishes, in which case `φ` is linear and each ascent
/// step lands on the boundary). Ten starts are used: `x` itself, the
/// reference solution when known, the projected origin, and projected
/// random probes at several scales.
pub fn gap<T: Scalar>(
    problem: &ViProblem<T>,
    x: &Vector<T>,
    tol: T,
    max_iters: usize,
) -> Result<GapEstimate<T>> {
    let set = problem.feasible_set();
    let d = dist_to_set(set, x)?;
    if d > c(GAP_FEAS_TOL) {
        return Err(Error::Infeasible {
            dist: d.to_f64().unwrap_or(f64::NAN),
            tol: GAP_FEAS_TOL,
        });
    }
    let map = problem.map();
    let n = problem.dim();

    let lam = map.max_doubled_sym_eigenvalue().max(T::zero());
    let lam_floor = c::<T>(1e-8) * (T::one() + problem.lipschitz());
    let sigma = if lam > lam_floor {
        T::one() / lam
    } else {
        c::<T>(1e8) / (T::one() + problem.lipschitz())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x6a70);
    let mut starts: Vec<Vector<T>> = vec![x.clone()];
    if let Some(r) = problem.reference_solution() {
        starts.push(r.clone());
    }
    starts.push(project(set, &Vector::zeros(n))?);
    for scale in [0.5, 2.0, 8.0] {
        let probe = x + &Vector::from_shape_fn(n, |_| T::standard_normal(&mut rng) * c(scale));
        starts.push(project(set, &probe)?);
    }
    while starts.len() < 10 {
        let scale = c::<T>(10.0);
        let probe = Vector::from_shape_fn(n, |_| T::standard_normal(&mut rng) * scale);
        starts.push(project(set, &probe)?);
    }

    let phi = |y: &Vector<T>| -> Result<(T, Vector<T>)> {
        let f = map.evaluate(y)?;
        let diff = x - y;
        let value = f.dot(&diff);
        let grad = map.matrix().t().dot(&diff) - &f;
        Ok((value, grad))
    };

    let mut best_value = T::neg_infinity();
    let mut best_point: Option<Vector<T>> = None;
    let mut total_iters = 0usize;

    for start in starts {
        let mut y = start;
        for _ in 0..max_iters {
            total_iters += 1;
            let (value, grad) = phi(&y)?;
            if value > best_value {
                best_value = value;
                best_point = Some(y.clone());
            }
            let stepped = &y + &(grad * sigma);
            let y_next = project(set, &stepped)?;
            let moved = &y_next - &y;
            let resid = moved.dot(&moved).sqrt() / sigma;
            y = y_next;
            if resid <= tol {
                break;
            }
        }
        let (value, _) = phi(&y)?;
        if value > best_value {
            best_value = value;
            best_point = Some(y);
        }
    }

    let best = best_point.expect("at least one start");
    let (_, grad) = phi(&best)?;
    let stepped = &best + &(grad * sigma);
    let replayed = project(set, &stepped)?;
    let moved = &replayed - &best;
    let residual = moved.dot(&moved).sqrt() / sigma;

    Ok(GapEstimate {
        value: best_value,
        certificate_residual: residual,
        iterations_used: total_iters,
    })
}

/// Deterministic extragradient on the expected map with `γ = 0.9/L`, run
/// until the natural-map residual `‖x − Π_X(x − γF(x))‖` drops below `tol`.
pub fn reference_solve<T: Scalar>(
    problem: &ViProblem<T>,
    tol: T,
    max_iters: usize,
) -> Result<Vector<T>> {
    let set = problem.feasible_set();
    let map = problem.map();
    let lip = problem.lipschitz();
    if lip <= T::zero() {
        return Err(Error::invalid("reference solve needs L > 0"));
    }
    let gamma = c::<T>(0.9) / lip;
    let mut x = project(set, &Vector::zeros(problem.dim()))?;
    let mut residual = T::infinity();
    for _ in 0..max_iters {
        let f = map.evaluate(&x)?;
        let x_half = project(set, &(&x - &(f * gamma)))?;
        let moved = &x_half - &x;
        residual = moved.dot(&moved).sqrt();
        if residual <= tol {
            return Ok(x);
        }
        let f_half = map.evaluate(&x_half)?;
        x = project(set, &(&x - &(f_half * gamma)))?;
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// Computes a reference solution, certifies it (`gap(x*) ≤ gap_tol`,
/// `dist(x*, X) ≤ 1e−8`), and attaches it to the problem.
pub fn attach_reference<T: Scalar>(
    problem: &mut ViProblem<T>,
    solve_tol: T,
    max_iters: usize,
    gap_tol: T,
) -> Result<Vector<T>> {
    let x = reference_solve(problem, solve_tol, max_iters)?;
    let d = dist_to_set(problem.feasible_set(), &x)?;
    if d > c(1e-8) {
        return Err(Error::Infeasible {
            dist: d.to_f64().unwrap_or(f64::NAN),
            tol: 1e-8,
        });
    }
    let g = gap(problem, &x, gap_tol * c(1e-2), 5_000)?;
    if g.value > gap_tol {
        return Err(Error::invalid(format!(
            "reference candidate has gap {:e} above tolerance {:e}",
            g.value, gap_tol
        )));
    }
    problem.set_reference_unchecked(x.clone());
    Ok(x)
}

/// `x̄_K`: the accumulated uniform average (of iterates or half-iterates,
/// per scheme). Errors when no points were accumulated.
pub fn finalize_uniform_average<T: Scalar>(state: &SolverState<T>) -> Result<Vector<T>> {
    let (sum, count) = state.average_accumulator();
    if count == 0 {
        return Err(Error::invalid("uniform average over zero points"));
    }
    Ok(sum / T::from_u64(count).expect("count"))
}

fn window_bounds(k: u64, kbar: u64, stored: u64) -> Result<(usize, usize)> {
    if k == 0 {
        return Err(Error::invalid("window average needs K >= 1"));
    }
    if stored < k + kbar {
        return Err(Error::invalid(format!(
            "window for K={k}, kbar={kbar} needs run length >= {}, have {stored}",
            k + kbar
        )));
    }
    let lo = (k / 2 + kbar).max(1);
    let hi = k + kbar;
    Ok((lo as usize, hi as usize))
}

/// `ȳ_{K,k̄}`: step-size weighted average of the *projected* window points
/// `Π_X(p_w)` over `w ∈ [⌊K/2⌋+k̄, K+k̄]`. The stored points are the
/// scheme's evaluation points (reflections for r-SPRG, half-iterates for
/// r-SSE); the result lies in `X` by convexity.
pub fn finalize_window_average<T: Scalar>(
    state: &SolverState<T>,
    problem: &ViProblem<T>,
    k: u64,
    kbar: u64,
) -> Result<Vector<T>> {
    let mut cache: Vec<Option<Vector<T>>> = Vec::new();
    window_average_cached(state, problem, k, kbar, &mut cache)
}

pub(crate) fn window_average_cached<T: Scalar>(
    state: &SolverState<T>,
    problem: &ViProblem<T>,
    k: u64,
    kbar: u64,
    cache: &mut Vec<Option<Vector<T>>>,
) -> Result<Vector<T>> {
    let points = state.window_points();
    if points.is_empty() {
        return Err(Error::invalid("empty window: scheme stores no window points"));
    }
    let (lo, hi) = window_bounds(k, kbar, points.len() as u64)?;
    if cache.len() < points.len() {
        cache.resize(points.len(), None);
    }
    let mut weighted = Vector::zeros(problem.dim());
    let mut total = T::zero();
    for idx in lo..=hi {
        let (gamma, point) = &points[idx - 1];
        let slot = &mut cache[idx - 1];
        if slot.is_none() {
            *slot = Some(project(problem.feasible_set(), point)?);
        }
        let projected = slot.as_ref().expect("just filled");
        weighted += &(projected * *gamma);
        total += *gamma;
    }
    if total <= T::zero() {
        return Err(Error::invalid("window weights sum to zero"));
    }
    Ok(weighted / total)
}

/// Raw (unprojected) weighted average over the same window; its distance to
/// `X` is the infeasibility-of-the-average metric.
fn window_raw_average<T: Scalar>(
    state: &SolverState<T>,
    dim: usize,
    k: u64,
    kbar: u64,
) -> Result<Vector<T>> {
    let points = state.window_points();
    let (lo, hi) = window_bounds(k, kbar, points.len() as u64)?;
    let mut weighted = Vector::zeros(dim);
    let mut total = T::zero();
    for idx in lo..=hi {
        let (gamma, point) = &points[idx - 1];
        weighted += &(point * *gamma);
        total += *gamma;
    }
    Ok(weighted / total)
}

/// Least-squares fit of `log(value)` against `log(k)`:
/// returns `(slope, intercept, r²)`. All abscissae and values must be
/// positive and at least 3 points are required.
pub fn fit_loglog_slope<T: Scalar>(rows: &[(T, T)]) -> Result<(T, T, T)> {
    if rows.len() < 3 {
        return Err(Error::invalid("slope fit needs at least 3 points"));
    }
    if rows.iter().any(|(k, v)| *k <= T::zero() || *v <= T::zero()) {
        return Err(Error::invalid(
            "slope fit needs positive abscissae and values; floor noise values and exclude them",
        ));
    }
    let n = T::from_usize(rows.len()).expect("count");
    let xs: Vec<T> = rows.iter().map(|(k, _)| k.ln()).collect();
    let ys: Vec<T> = rows.iter().map(|(_, v)| v.ln()).collect();
    let mean_x = xs.iter().copied().sum::<T>() / n;
    let mean_y = ys.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (*x - mean_x) * (*x - mean_x);
        sxy += (*x - mean_x) * (*y - mean_y);
    }
    if sxx == T::zero() {
        return Err(Error::invalid("slope fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for (x, y) in xs.iter().zip(ys.iter()) {
        let fit = intercept + slope * *x;
        ss_res += (*y - fit) * (*y - fit);
        ss_tot += (*y - mean_y) * (*y - mean_y);
    }
    let r2 = if ss_tot == T::zero() {
        T::one()
    } else {
        T::one() - ss_res / ss_tot
    };
    Ok((slope, intercept, r2))
}

/// Metadata identifying a run.
#[derive(Debug, Clone, Default)]
pub struct RunMeta {
    pub scheme: String,
    pub seed: u64,
    pub problem_id: String,
    pub config_hash: String,
}

/// One checkpoint row.
#[derive(Debug, Clone)]
pub struct RunRow<T: Scalar> {
    pub k: u64,
    pub projections_full: u64,
    pub projections_member: u64,
    pub projections_halfspace: u64,
    pub samples: u64,
    pub gamma: T,
    pub batch: u64,
    /// Gap at the scheme-appropriate averaged point (for random-projection
    /// schemes, the average of projected window points).
    pub gap_avg: T,
    /// Distance of the current iterate to the full feasible set.
    pub dist_x_iterate: T,
    /// Distance of the (raw) averaged point to the full feasible set.
    pub dist_x_avg: T,
    /// `‖x_k − x*‖` when a reference solution exists.
    pub err_ref: Option<T>,
    /// Wall-clock time since the run started; excluded from determinism.
    pub elapsed_ms: f64,
}

/// Per-run metric rows, ordered by `k`, with non-decreasing counters.
#[derive(Debug, Clone)]
pub struct RunRecord<T: Scalar> {
    pub meta: RunMeta,
    rows: Vec<RunRow<T>>,
}

impl<T: Scalar> RunRecord<T> {
    pub fn new(meta: RunMeta) -> Self {
        RunRecord { meta, rows: Vec::new() }
    }

    pub fn push(&mut self, row: RunRow<T>) {
        if let Some(last) = self.rows.last() {
            debug_assert!(last.k < row.k, "rows must be ordered by k");
            debug_assert!(last.samples <= row.samples);
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[RunRow<T>] {
        &self.rows
    }

    pub fn row_at(&self, k: u64) -> Option<&RunRow<T>> {
        self.rows.iter().find(|r| r.k == k)
    }
}

fn err_ref<T: Scalar>(problem: &ViProblem<T>, x: &Vector<T>) -> Option<T> {
    problem.reference_solution().map(|r| {
        let d = x - r;
        d.dot(&d).sqrt()
    })
}

fn gap_at_feasible<T: Scalar>(
    problem: &ViProblem<T>,
    point: &Vector<T>,
    config: &RunConfig<T>,
) -> Result<T> {
    let d = dist_to_set(problem.feasible_set(), point)?;
    let feasible = if d > c(1e-8) {
        project(problem.feasible_set(), point)?
    } else {
        point.clone()
    };
    Ok(gap(problem, &feasible, config.gap_tol, config.gap_max_iters)?.value)
}

pub(crate) fn initial_row<T: Scalar>(
    problem: &ViProblem<T>,
    state: &SolverState<T>,
    config: &RunConfig<T>,
) -> Result<RunRow<T>> {
    let x0 = state.iterate();
    Ok(RunRow {
        k: 0,
        projections_full: 0,
        projections_member: 0,
        projections_halfspace: 0,
        samples: 0,
        gamma: T::zero(),
        batch: 0,
        gap_avg: gap_at_feasible(problem, x0, config)?,
        dist_x_iterate: dist_to_set(problem.feasible_set(), x0)?,
        dist_x_avg: dist_to_set(problem.feasible_set(), x0)?,
        err_ref: err_ref(problem, x0),
        elapsed_ms: 0.0,
    })
}

/// Full checkpoint row for the uniform-average schemes and for
/// random-projection schemes with `kbar = 0`.
pub(crate) fn checkpoint_row<T: Scalar>(
    problem: &ViProblem<T>,
    state: &SolverState<T>,
    config: &RunConfig<T>,
    s: u64,
    gamma: T,
    batch: u64,
    proj_cache: &mut Vec<Option<Vector<T>>>,
) -> Result<RunRow<T>> {
    let mut row = checkpoint_row_without_average(problem, state, config, s, gamma, batch)?;
    if state.kind().is_random_projection() {
        fill_window_metrics(problem, state, config, s, proj_cache, &mut row)?;
    } else {
        let avg = finalize_uniform_average(state)?;
        row.dist_x_avg = dist_to_set(problem.feasible_set(), &avg)?;
        row.gap_avg = gap_at_feasible(problem, &avg, config)?;
    }
    Ok(row)
}

/// Row with iterate-level metrics only; window metrics are filled in later
/// once the window extends `kbar` past the checkpoint.
pub(crate) fn checkpoint_row_without_average<T: Scalar>(
    problem: &ViProblem<T>,
    state: &SolverState<T>,
    config: &RunConfig<T>,
    s: u64,
    gamma: T,
    batch: u64,
) -> Result<RunRow<T>> {
    let _ = config;
    Ok(RunRow {
        k: s,
        projections_full: state.counters.projections_full,
        projections_member: state.counters.projections_member,
        projections_halfspace: state.counters.projections_halfspace,
        samples: state.counters.samples,
        gamma,
        batch,
        gap_avg: T::nan(),
        dist_x_iterate: dist_to_set(problem.feasible_set(), state.iterate())?,
        dist_x_avg: T::nan(),
        err_ref: err_ref(problem, state.iterate()),
        elapsed_ms: 0.0,
    })
}

pub(crate) fn fill_window_metrics<T: Scalar>(
    problem: &ViProblem<T>,
    state: &SolverState<T>,
    config: &RunConfig<T>,
    base_k: u64,
    proj_cache: &mut Vec<Option<Vector<T>>>,
    row: &mut RunRow<T>,
) -> Result<()> {
    let projected_avg = window_average_cached(state, problem, base_k, config.kbar, proj_cache)?;
    let raw_avg = window_raw_average(state, problem.dim(), base_k, config.kbar)?;
    row.dist_x_avg = dist_to_set(problem.feasible_set(), &raw_avg)?;
    row.gap_avg = gap_at_feasible(problem, &projected_avg, config)?;
    Ok(())
}

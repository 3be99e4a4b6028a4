//! Stochastic oracles, noise models, batch-size schedules, and step-size
//! schedules with the admissible step bounds of each scheme.

use crate::error::{Error, Result};
use crate::problem::AffineMonotoneMap;
use crate::scalar::{c, Scalar};
use crate::solvers::SolverKind;
use crate::Vector;
use rand::Rng;

/// Additive noise `w` with zero conditional mean and state-dependent second
/// moment `E[‖w‖² | x] ≤ ν₁²‖x‖² + ν₂²`.
#[derive(Debug, Clone)]
pub enum NoiseModel<T: Scalar> {
    /// No noise: samples are exact map evaluations.
    None,
    /// Independent uniform noise per coordinate on `[-h_i, h_i]`; a zero
    /// half-width marks the coordinate noiseless (and consumes no
    /// randomness). `ν₁ = 0`, `ν₂² = Σ h_i²/3`.
    AdditiveUniform { half_widths: Vector<T> },
    /// `w = (ν₁‖x‖ g₁ + ν₂ g₂)/√2 · u` with independent standard normals
    /// `g₁, g₂` and `u` uniform on the unit sphere. The exact second moment
    /// is `(ν₁²‖x‖² + ν₂²)/2`, satisfying the state-dependent bound with a
    /// factor-2 margin.
    StateScaledGaussian { nu1: T, nu2: T },
}

impl<T: Scalar> NoiseModel<T> {
    /// The state-scaling coefficient ν₁ of the second-moment bound.
    pub fn nu1(&self) -> T {
        match self {
            NoiseModel::StateScaledGaussian { nu1, .. } => *nu1,
            _ => T::zero(),
        }
    }

    /// The constant coefficient ν₂ of the second-moment bound
    /// (for `AdditiveUniform`, `√(Σ h_i²/3)`).
    pub fn nu2(&self) -> T {
        match self {
            NoiseModel::None => T::zero(),
            NoiseModel::AdditiveUniform { half_widths } => {
                let sumsq: T = half_widths.iter().map(|h| *h * *h).sum();
                (sumsq / c(3.0)).sqrt()
            }
            NoiseModel::StateScaledGaussian { nu2, .. } => *nu2,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseModel::None)
    }

    /// One noise draw at state `x`, written into `out` (added in place).
    fn add_draw<R: Rng + ?Sized>(&self, x: &Vector<T>, out: &mut Vector<T>, rng: &mut R) {
        match self {
            NoiseModel::None => {}
            NoiseModel::AdditiveUniform { half_widths } => {
                for (o, h) in out.iter_mut().zip(half_widths.iter()) {
                    if *h > T::zero() {
                        *o += T::uniform(rng, -*h, *h);
                    }
                }
            }
            NoiseModel::StateScaledGaussian { nu1, nu2 } => {
                let n = out.len();
                let xnorm = x.dot(x).sqrt();
                let g1 = T::standard_normal(rng);
                let g2 = T::standard_normal(rng);
                let scale = (*nu1 * xnorm * g1 + *nu2 * g2) / c::<T>(2.0).sqrt();
                loop {
                    let u = Vector::from_shape_fn(n, |_| T::standard_normal(rng));
                    let un = u.dot(&u).sqrt();
                    if un > T::epsilon() {
                        for (o, ui) in out.iter_mut().zip(u.iter()) {
                            *o += scale * (*ui / un);
                        }
                        break;
                    }
                }
            }
        }
    }
}

/// Sampling oracle for `F(x, ω) = F(x) + w`: produces single samples and
/// batch averages, and counts every draw. One oracle instance per trial.
#[derive(Debug, Clone)]
pub struct StochasticOracle<T: Scalar> {
    map: AffineMonotoneMap<T>,
    noise: NoiseModel<T>,
    sample_counter: u64,
}

impl<T: Scalar> StochasticOracle<T> {
    pub fn new(map: AffineMonotoneMap<T>, noise: NoiseModel<T>) -> Self {
        StochasticOracle {
            map,
            noise,
            sample_counter: 0,
        }
    }

    pub fn map(&self) -> &AffineMonotoneMap<T> {
        &self.map
    }

    pub fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }

    /// Total single-sample draws so far (batch averages count their full
    /// batch size).
    pub fn samples_drawn(&self) -> u64 {
        self.sample_counter
    }

    /// One sample `F(x) + w`; increments the counter by 1.
    pub fn sample<R: Rng + ?Sized>(&mut self, x: &Vector<T>, rng: &mut R) -> Result<Vector<T>> {
        let mut f = self.map.evaluate(x)?;
        self.noise.add_draw(x, &mut f, rng);
        self.sample_counter += 1;
        Ok(f)
    }

    /// Arithmetic mean of `n` independent samples at `x`; increments the
    /// counter by `n`. The noise being additive, this is computed as
    /// `F(x) + (Σ w_j)/n` with a single map evaluation.
    pub fn batch_average<R: Rng + ?Sized>(
        &mut self,
        x: &Vector<T>,
        n: u64,
        rng: &mut R,
    ) -> Result<Vector<T>> {
        if n == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        let mut f = self.map.evaluate(x)?;
        if !self.noise.is_none() {
            let mut acc = Vector::zeros(x.len());
            for _ in 0..n {
                self.noise.add_draw(x, &mut acc, rng);
            }
            let inv = T::one() / T::from_u64(n).expect("batch size");
            f = &f + &(acc * inv);
        }
        self.sample_counter += n;
        Ok(f)
    }
}

/// Increasing batch sizes `N_k = max(N_min, ⌈(k+1)^a⌉)` with `a > 1`, which
/// keeps `Σ 1/N_k` finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSchedule {
    exponent: f64,
    floor: u64,
}

impl BatchSchedule {
    pub fn new(exponent: f64, floor: u64) -> Result<Self> {
        if exponent.is_nan() || exponent <= 1.0 {
            return Err(Error::invalid("batch exponent must satisfy a > 1"));
        }
        if floor == 0 {
            return Err(Error::invalid("batch floor must be >= 1"));
        }
        Ok(BatchSchedule { exponent, floor })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn floor(&self) -> u64 {
        self.floor
    }
}

/// `N_k = max(N_min, ⌈(k+1)^a⌉)`. Values that land within 1e−9 of an
/// integer snap to it before the ceiling, so exact powers are not bumped by
/// floating-point error.
pub fn batch_size(sched: &BatchSchedule, k: u64) -> u64 {
    let v = ((k + 1) as f64).powf(sched.exponent);
    let r = v.round();
    let n = if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        v.ceil() as u64
    };
    n.max(sched.floor)
}

/// Step-size schedule: constant `γ` or diminishing `γ_k = γ₀ / k^{t/2}`
/// for `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule<T: Scalar> {
    Constant(T),
    Diminishing { gamma0: T, t: T },
}

impl<T: Scalar> StepSchedule<T> {
    pub fn constant(gamma: T) -> Result<Self> {
        if gamma <= T::zero() {
            return Err(Error::invalid("step size must be positive"));
        }
        Ok(StepSchedule::Constant(gamma))
    }

    /// `t ∈ [1, 2)` gives `Σ γ_k = ∞` and `Σ γ_k² < ∞`; larger `t` is
    /// accepted for the infeasibility-rate experiments.
    pub fn diminishing(gamma0: T, t: T) -> Result<Self> {
        if gamma0 <= T::zero() {
            return Err(Error::invalid("initial step size must be positive"));
        }
        if t < T::one() {
            return Err(Error::invalid("diminishing exponent needs t >= 1"));
        }
        Ok(StepSchedule::Diminishing { gamma0, t })
    }

    /// The largest step the schedule ever takes (the value checked against
    /// admissible bounds).
    pub fn max_step(&self) -> T {
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::Diminishing { gamma0, .. } => *gamma0,
        }
    }
}

/// Step at iteration `k`; diminishing schedules index from `k ≥ 1`.
pub fn step_size<T: Scalar>(sched: &StepSchedule<T>, k: u64) -> Result<T> {
    match sched {
        StepSchedule::Constant(g) => Ok(*g),
        StepSchedule::Diminishing { gamma0, t } => {
            if k == 0 {
                return Err(Error::invalid(
                    "diminishing step schedule is indexed from k >= 1",
                ));
            }
            let kf = T::from_u64(k).expect("iteration index");
            Ok(*gamma0 / kf.powf(*t / c(2.0)))
        }
    }
}

/// Largest admissible constant step for a scheme on a problem with Lipschitz
/// constant `L`, noise state-scaling `ν₁`, and initial batch size `N₀`:
///
/// * reflected-gradient schemes: `1/(8 L̃)` with `L̃² = L² + 10 ν₁²/N₀`;
/// * subgradient-extragradient schemes: `1/(√2 L̃)` with `L̃² = L² + 4 ν₁²/N₀`;
/// * random-projection SSE: `1/(2 √(L² + 5 ν₁²))`, the tighter of its two
///   published bounds (the almost-sure analysis alone allows
///   `1/(2 √(L² + 2 ν₁²))`);
/// * plain projection/extragradient baselines and random-projection
///   reflected gradient: unbounded (`+∞`). For the latter the theory only
///   requires square-summable steps plus a bound involving constants that
///   are not observable, so no finite check is possible here; see the
///   `assume_rp_stepsize_admissible` experiment flag.
pub fn admissible_gamma_max<T: Scalar>(
    scheme: SolverKind,
    lipschitz: T,
    nu1: T,
    n0: u64,
) -> Result<T> {
    if lipschitz < T::zero() || nu1 < T::zero() {
        return Err(Error::invalid("L and nu1 must be nonnegative"));
    }
    if lipschitz == T::zero() && nu1 == T::zero() {
        return Err(Error::invalid(
            "both L and nu1 are zero: constant map, solvers are exact in one step",
        ));
    }
    if n0 == 0 {
        return Err(Error::invalid("initial batch size must be >= 1"));
    }
    let n0t = T::from_u64(n0).expect("batch size");
    let l2 = lipschitz * lipschitz;
    let v2 = nu1 * nu1;
    Ok(match scheme {
        SolverKind::Sprg | SolverKind::VSprg => {
            let lt = (l2 + c::<T>(10.0) * v2 / n0t).sqrt();
            T::one() / (c::<T>(8.0) * lt)
        }
        SolverKind::Sse | SolverKind::VSse => {
            let lt = (l2 + c::<T>(4.0) * v2 / n0t).sqrt();
            T::one() / (c::<T>(2.0).sqrt() * lt)
        }
        SolverKind::RSse => T::one() / (c::<T>(2.0) * (l2 + c::<T>(5.0) * v2).sqrt()),
        SolverKind::Spg | SolverKind::Seg | SolverKind::RSprg => T::infinity(),
    })
}

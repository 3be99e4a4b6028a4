//! Solvers for monotone stochastic variational inequality problems.
//!
//! Given a closed convex set `X` and a monotone Lipschitz map `F` accessed
//! through a noisy sampling oracle, the crate implements projection-type
//! iterations that find `x* ∈ X` with `F(x*)ᵀ(x − x*) ≥ 0` for all `x ∈ X`:
//!
//! * classical baselines (projected gradient, extragradient),
//! * single-projection schemes (projected reflected gradient, subgradient
//!   extragradient with a closed-form halfspace projection),
//! * their variance-reduced variants driven by an increasing batch size, and
//! * random-projection variants that touch one member of a constraint
//!   intersection per iteration.
//!
//! Supporting machinery: Euclidean projectors (closed forms plus Dykstra for
//! intersections), gap-function estimation for affine monotone maps, batch
//! and step schedules with their admissible step bounds, benchmark problem
//! builders (a Nash-Cournot network game and a Markov invariant-distribution
//! projection), and a text serialization format for problems.
//!
//! All numerics are generic over the scalar type through [`scalar::Scalar`];
//! `f64` is the intended default and concrete aliases are exported at the
//! crate root.

pub mod error;
pub mod format;
pub mod metrics;
pub mod problem;
pub mod problems;
pub mod projections;
pub mod sampling;
pub mod scalar;
pub mod solvers;

mod linalg;

pub use error::Error;
pub use scalar::Scalar;

/// Dense vector of scalars.
pub type Vector<T> = ndarray::Array1<T>;
/// Dense row-major matrix of scalars.
pub type Matrix<T> = ndarray::Array2<T>;

pub type MapF64 = problem::AffineMonotoneMap<f64>;
pub type ProblemF64 = problem::ViProblem<f64>;
pub type ProjectorF64 = projections::Projector<f64>;
pub type FamilyF64 = projections::ConstraintFamily<f64>;
pub type OracleF64 = sampling::StochasticOracle<f64>;
pub type StateF64 = solvers::SolverState<f64>;
pub type RunRecordF64 = metrics::RunRecord<f64>;

pub type MapF32 = problem::AffineMonotoneMap<f32>;
pub type ProblemF32 = problem::ViProblem<f32>;
pub type ProjectorF32 = projections::Projector<f32>;

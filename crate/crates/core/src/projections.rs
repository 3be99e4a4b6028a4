//! Euclidean projection operators onto closed convex sets.
//!
//! Closed forms where they exist (boxes, halfspaces, hyperplanes, the
//! simplex, a halfspace-hyperplane intersection), Dykstra's alternating
//! method for general intersections, and the constraint-sampling machinery
//! used by the random-projection solvers.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::Vector;
use rand::Rng;

/// Euclidean projector onto a closed convex set.
#[derive(Debug, Clone)]
pub enum Projector<T: Scalar> {
    /// Axis-aligned box `lo ≤ y ≤ hi`; infinite bounds allowed.
    Box { lo: Vector<T>, hi: Vector<T> },
    /// Nonnegative orthant `y ≥ 0` in `dim` dimensions.
    Nonneg { dim: usize },
    /// Halfspace `cᵀy ≤ rhs`.
    Halfspace { normal: Vector<T>, rhs: T },
    /// Hyperplane `aᵀy = rhs`.
    Hyperplane { normal: Vector<T>, rhs: T },
    /// Scaled standard simplex `{ y ≥ 0, Σy = radius }`.
    Simplex { dim: usize, radius: T },
    /// Intersection of one halfspace and one hyperplane, projected in closed
    /// form via the two-constraint KKT system.
    HalfspaceMeetHyperplane {
        half_normal: Vector<T>,
        half_rhs: T,
        plane_normal: Vector<T>,
        plane_rhs: T,
    },
    /// Product set: each block projects its own index list independently.
    /// Indices not covered by any block are unconstrained.
    Product { blocks: Vec<ProductBlock<T>> },
    /// `{x : normals·x ≤ offsets (row-wise), plane_normalᵀx = plane_rhs}`,
    /// projected by a primal active-set method on the KKT system. Built
    /// for low-dimensional sets cut by many nearly parallel halfspaces,
    /// where Dykstra's facet-by-facet sweep stalls.
    PolyhedronMeetHyperplane {
        normals: crate::Matrix<T>,
        offsets: Vector<T>,
        plane_normal: Vector<T>,
        plane_rhs: T,
    },
    /// General intersection via Dykstra's alternating projection method.
    DykstraIntersection {
        members: Vec<Projector<T>>,
        tol: T,
        max_iters: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ProductBlock<T: Scalar> {
    pub indices: Vec<usize>,
    pub projector: Projector<T>,
}

/// Defaults used wherever a Dykstra intersection is constructed implicitly.
pub const DYKSTRA_DEFAULT_TOL: f64 = 1e-10;
pub const DYKSTRA_DEFAULT_MAX_ITERS: usize = 20_000;

impl<T: Scalar> Projector<T> {
    pub fn nonneg(dim: usize) -> Self {
        Projector::Nonneg { dim }
    }

    pub fn boxed(lo: Vector<T>, hi: Vector<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::invalid("box with lo > hi is empty"));
        }
        Ok(Projector::Box { lo, hi })
    }

    pub fn halfspace(normal: Vector<T>, rhs: T) -> Self {
        Projector::Halfspace { normal, rhs }
    }

    pub fn hyperplane(normal: Vector<T>, rhs: T) -> Result<Self> {
        if normal.iter().all(|v| *v == T::zero()) {
            return Err(Error::invalid("hyperplane needs a nonzero normal"));
        }
        Ok(Projector::Hyperplane { normal, rhs })
    }

    pub fn simplex(dim: usize, radius: T) -> Result<Self> {
        if radius <= T::zero() {
            return Err(Error::invalid("simplex radius must be positive"));
        }
        Ok(Projector::Simplex { dim, radius })
    }

    pub fn dykstra(members: Vec<Projector<T>>) -> Self {
        Projector::DykstraIntersection {
            members,
            tol: c(DYKSTRA_DEFAULT_TOL),
            max_iters: DYKSTRA_DEFAULT_MAX_ITERS,
        }
    }

    /// `{x : normals·x ≤ offsets, plane_normalᵀx = plane_rhs}`.
    pub fn polyhedron_meet_hyperplane(
        normals: crate::Matrix<T>,
        offsets: Vector<T>,
        plane_normal: Vector<T>,
        plane_rhs: T,
    ) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: normals.nrows(),
                got: offsets.len(),
            });
        }
        if normals.ncols() != plane_normal.len() {
            return Err(Error::DimensionMismatch {
                expected: normals.ncols(),
                got: plane_normal.len(),
            });
        }
        if plane_normal.iter().all(|v| *v == T::zero()) {
            return Err(Error::invalid("hyperplane needs a nonzero normal"));
        }
        Ok(Projector::PolyhedronMeetHyperplane {
            normals,
            offsets,
            plane_normal,
            plane_rhs,
        })
    }

    /// Ambient dimension, when the variant pins one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Projector::Box { lo, .. } => Some(lo.len()),
            Projector::Nonneg { dim } => Some(*dim),
            Projector::Halfspace { normal, .. } => Some(normal.len()),
            Projector::Hyperplane { normal, .. } => Some(normal.len()),
            Projector::Simplex { dim, .. } => Some(*dim),
            Projector::HalfspaceMeetHyperplane { plane_normal, .. } => Some(plane_normal.len()),
            Projector::Product { blocks } => blocks
                .iter()
                .flat_map(|b| b.indices.iter().copied().max())
                .max()
                .map(|m| m + 1),
            Projector::PolyhedronMeetHyperplane { plane_normal, .. } => Some(plane_normal.len()),
            Projector::DykstraIntersection { members, .. } => {
                members.iter().find_map(|m| m.dim())
            }
        }
    }
}

fn check_dim<T: Scalar>(p: &Projector<T>, z: &Vector<T>) -> Result<()> {
    if let Some(d) = p.dim() {
        let needs_exact = !matches!(p, Projector::Product { .. });
        if (needs_exact && z.len() != d) || z.len() < d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
    }
    Ok(())
}

/// Euclidean projection of `z` onto the set; for the Dykstra variant the
/// result is within its configured tolerance of the exact projection.
pub fn project<T: Scalar>(p: &Projector<T>, z: &Vector<T>) -> Result<Vector<T>> {
    check_dim(p, z)?;
    match p {
        Projector::Box { lo, hi } => Ok(Vector::from_shape_fn(z.len(), |i| {
            clamp(z[i], lo[i], hi[i])
        })),
        Projector::Nonneg { .. } => Ok(z.mapv(|v| v.max(T::zero()))),
        Projector::Halfspace { normal, rhs } => project_halfspace_closed_form(normal, *rhs, z),
        Projector::Hyperplane { normal, rhs } => {
            let nn = normal.dot(normal);
            if nn == T::zero() {
                return Err(Error::invalid("hyperplane with zero normal"));
            }
            let shift = (normal.dot(z) - *rhs) / nn;
            Ok(z - &(normal * shift))
        }
        Projector::Simplex { radius, .. } => Ok(project_simplex(z, *radius)),
        Projector::HalfspaceMeetHyperplane {
            half_normal,
            half_rhs,
            plane_normal,
            plane_rhs,
        } => project_halfspace_meet_hyperplane(
            half_normal,
            *half_rhs,
            plane_normal,
            *plane_rhs,
            z,
        ),
        Projector::Product { blocks } => {
            let mut out = z.clone();
            for block in blocks {
                let sub = Vector::from_shape_fn(block.indices.len(), |i| z[block.indices[i]]);
                let proj = project(&block.projector, &sub)?;
                for (i, &idx) in block.indices.iter().enumerate() {
                    out[idx] = proj[i];
                }
            }
            Ok(out)
        }
        Projector::PolyhedronMeetHyperplane {
            normals,
            offsets,
            plane_normal,
            plane_rhs,
        } => project_polyhedron_active_set(normals, offsets, plane_normal, *plane_rhs, z),
        Projector::DykstraIntersection {
            members,
            tol,
            max_iters,
        } => project_dykstra(members, *tol, *max_iters, z),
    }
}

#[inline]
fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    v.max(lo).min(hi)
}

/// Closed-form projection onto `{y : cᵀy ≤ rhs}`.
///
/// A zero normal with `rhs ≥ 0` denotes all of `ℝⁿ` (the degenerate
/// separating halfspace produced by the subgradient-extragradient step when
/// the unprojected point was already feasible); a zero normal with `rhs < 0`
/// is an empty set and an error.
pub fn project_halfspace_closed_form<T: Scalar>(
    normal: &Vector<T>,
    rhs: T,
    z: &Vector<T>,
) -> Result<Vector<T>> {
    let nn = normal.dot(normal);
    if nn == T::zero() {
        return if rhs >= T::zero() {
            Ok(z.clone())
        } else {
            Err(Error::EmptyHalfspace {
                rhs: rhs.to_f64().unwrap_or(f64::NAN),
            })
        };
    }
    let excess = normal.dot(z) - rhs;
    if excess <= T::zero() {
        Ok(z.clone())
    } else {
        Ok(z - &(normal * (excess / nn)))
    }
}

/// Sort-based projection onto `{y ≥ 0, Σy = radius}`; threshold ties resolve
/// through the usual cumulative-sum rule.
fn project_simplex<T: Scalar>(z: &Vector<T>, radius: T) -> Vector<T> {
    let mut sorted: Vec<T> = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - radius) / T::from_usize(j + 1).expect("small count");
        if v - t > T::zero() {
            theta = t;
        } else {
            break;
        }
    }
    z.mapv(|v| (v - theta).max(T::zero()))
}

/// Closed-form projection onto `{cᵀy ≤ b_in} ∩ {aᵀy = b_eq}`: project onto
/// the hyperplane; if the halfspace is satisfied we are done, otherwise both
/// constraints are active and the 2x2 KKT system gives the answer. Falls
/// back to Dykstra when the two normals are numerically parallel.
fn project_halfspace_meet_hyperplane<T: Scalar>(
    half_normal: &Vector<T>,
    half_rhs: T,
    plane_normal: &Vector<T>,
    plane_rhs: T,
    z: &Vector<T>,
) -> Result<Vector<T>> {
    let aa = plane_normal.dot(plane_normal);
    if aa == T::zero() {
        return Err(Error::invalid("hyperplane with zero normal"));
    }
    let on_plane = z - &(plane_normal * ((plane_normal.dot(z) - plane_rhs) / aa));
    let cc = half_normal.dot(half_normal);
    if cc == T::zero() {
        return if half_rhs >= T::zero() {
            Ok(on_plane)
        } else {
            Err(Error::EmptyHalfspace {
                rhs: half_rhs.to_f64().unwrap_or(f64::NAN),
            })
        };
    }
    if half_normal.dot(&on_plane) <= half_rhs {
        return Ok(on_plane);
    }

    // Both active: y = z - λ a - μ c with aᵀy = b_eq, cᵀy = b_in.
    let ac = plane_normal.dot(half_normal);
    let det = aa * cc - ac * ac;
    let scale = aa * cc;
    if det.abs() <= scale * c::<T>(1e-24) {
        let members = vec![
            Projector::Hyperplane {
                normal: plane_normal.clone(),
                rhs: plane_rhs,
            },
            Projector::Halfspace {
                normal: half_normal.clone(),
                rhs: half_rhs,
            },
        ];
        return project_dykstra(&members, c(DYKSTRA_DEFAULT_TOL), DYKSTRA_DEFAULT_MAX_ITERS, z);
    }
    let r1 = plane_normal.dot(z) - plane_rhs;
    let r2 = half_normal.dot(z) - half_rhs;
    let lambda = (cc * r1 - ac * r2) / det;
    let mu = (aa * r2 - ac * r1) / det;
    Ok(z - &(plane_normal * lambda) - &(half_normal * mu))
}

/// Dykstra's alternating projection method for `∩ members`.
///
/// Stops when both the change across a full cycle and the worst member
/// infeasibility fall below `tol`; returns an error carrying the best
/// iterate and its residual otherwise.
fn project_dykstra<T: Scalar>(
    members: &[Projector<T>],
    tol: T,
    max_iters: usize,
    z: &Vector<T>,
) -> Result<Vector<T>> {
    if members.is_empty() {
        return Ok(z.clone());
    }
    if members.len() == 1 {
        return project(&members[0], z);
    }
    let n = z.len();
    let mut x = z.clone();
    let mut corrections: Vec<Vector<T>> = vec![Vector::zeros(n); members.len()];
    let mut residual = T::infinity();

    for _cycle in 0..max_iters {
        let mut cycle_change = T::zero();
        for (m, corr) in members.iter().zip(corrections.iter_mut()) {
            let y = &x + &*corr;
            let projected = project(m, &y)?;
            *corr = &y - &projected;
            let step = &projected - &x;
            cycle_change += step.dot(&step);
            x = projected;
        }
        let mut violation = T::zero();
        for m in members {
            let back = project(m, &x)?;
            let d = &back - &x;
            violation = violation.max(d.dot(&d).sqrt());
        }
        residual = violation.max(cycle_change.sqrt());
        if violation <= tol && cycle_change.sqrt() <= tol {
            return Ok(x);
        }
    }
    Err(Error::DykstraNonConvergence {
        iters: max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
        best: x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
    })
}

/// Projection onto `{x : Cx ≤ b, aᵀx = rhs}` through the dual.
///
/// With `E = [C; aᵀ]` and `d = (b; rhs)` the dual of the projection is the
/// bound-constrained quadratic `min ½uᵀEEᵀu − (Ex₀ − d)ᵀu` over
/// `u = (λ ≥ 0, μ free)`, and `x* = x₀ − Eᵀu*`. This is solved with the
/// Lawson–Hanson active-set loop (most-positive-gradient insertion, inner
/// line search back to the feasible box), which terminates finitely and is
/// immune to the constraint near-parallelism that stalls cyclic schemes.
/// The negative gradient `w = (Ex₀ − d) − EEᵀu` restricted to the zero set
/// equals the primal slacks `-(Cx − b)`, so the stopping test
/// `max_{i∈Z} w_i ≤ ε` bounds the worst primal violation directly.
fn project_polyhedron_active_set<T: Scalar>(
    normals: &crate::Matrix<T>,
    offsets: &Vector<T>,
    plane_normal: &Vector<T>,
    plane_rhs: T,
    x0: &Vector<T>,
) -> Result<Vector<T>> {
    let m = normals.nrows();
    let n = normals.ncols();
    let rows = m + 1; // inequality rows then the hyperplane
    let mut e = crate::Matrix::<T>::zeros((rows, n));
    for i in 0..m {
        for j in 0..n {
            e[[i, j]] = normals[[i, j]];
        }
    }
    for j in 0..n {
        e[[m, j]] = plane_normal[j];
    }
    let mut d = Vector::<T>::zeros(rows);
    for i in 0..m {
        d[i] = offsets[i];
    }
    d[m] = plane_rhs;

    let cvec = e.dot(x0) - &d;
    let scale = (T::one() + x0.dot(x0).sqrt()).max(d.iter().fold(T::zero(), |a, &v| a.max(v.abs())));
    let eps = c::<T>(1e-11) * scale;

    let mut u = Vector::<T>::zeros(rows);
    let mut passive: Vec<usize> = vec![m]; // the free hyperplane multiplier
    let max_outer = 12 * rows + 200;

    let sub_solve = |passive: &[usize], u_full: &Vector<T>| -> Option<Vec<T>> {
        let p = passive.len();
        let mut gram = crate::Matrix::<T>::zeros((p, p));
        for (pi, &i) in passive.iter().enumerate() {
            for (pj, &j) in passive.iter().enumerate() {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += e[[i, k]] * e[[j, k]];
                }
                gram[[pi, pj]] = acc;
            }
        }
        let rhs = Vector::from_shape_fn(p, |pi| cvec[passive[pi]]);
        match crate::linalg::solve_dense(&gram, &rhs) {
            Some(y) => Some(y.to_vec()),
            None => {
                // dependent passive rows: damp the system slightly; the
                // outer stopping test still certifies the primal answer
                let bump = gram
                    .iter()
                    .fold(T::zero(), |a, &v| a.max(v.abs()))
                    .max(T::one())
                    * c::<T>(1e-13);
                let mut damped = gram;
                for i in 0..p {
                    damped[[i, i]] += bump;
                }
                crate::linalg::solve_dense(&damped, &rhs).map(|y| y.to_vec())
            }
        }
        .map(|mut y| {
            let _ = u_full;
            for v in y.iter_mut() {
                if !v.is_finite() {
                    *v = T::zero();
                }
            }
            y
        })
    };

    // enforce the free hyperplane multiplier before the first gradient test
    if let Some(y) = sub_solve(&passive, &u) {
        for (pi, &i) in passive.iter().enumerate() {
            u[i] = y[pi];
        }
    }

    for _outer in 0..max_outer {
        // negative gradient w = c − E(Eᵀu)
        let et_u = e.t().dot(&u);
        let w = &cvec - &e.dot(&et_u);

        let mut best: Option<(usize, T)> = None;
        for i in 0..m {
            if passive.contains(&i) {
                continue;
            }
            if w[i] > eps && best.map(|(_, v)| w[i] > v).unwrap_or(true) {
                best = Some((i, w[i]));
            }
        }
        let Some((enter, _)) = best else {
            return Ok(x0 - &e.t().dot(&u));
        };
        passive.push(enter);

        // inner loop: pull the passive solution back into the feasible box
        for _inner in 0..(rows + 2) {
            let Some(y) = sub_solve(&passive, &u) else {
                break;
            };
            let mut alpha = T::one();
            let mut blockers: Vec<usize> = Vec::new();
            for (pi, &i) in passive.iter().enumerate() {
                if i == m {
                    continue; // free variable
                }
                if y[pi] < T::zero() {
                    let denom = u[i] - y[pi];
                    if denom > T::zero() {
                        let a = u[i] / denom;
                        if a < alpha {
                            alpha = a;
                            blockers = vec![i];
                        } else if a == alpha {
                            blockers.push(i);
                        }
                    } else {
                        alpha = T::zero();
                        blockers = vec![i];
                    }
                }
            }
            if alpha >= T::one() {
                for (pi, &i) in passive.iter().enumerate() {
                    u[i] = if i == m { y[pi] } else { y[pi].max(T::zero()) };
                }
                break;
            }
            for (pi, &i) in passive.iter().enumerate() {
                let stepped = u[i] + alpha * (y[pi] - u[i]);
                u[i] = if i == m { stepped } else { stepped.max(T::zero()) };
            }
            for &i in &blockers {
                u[i] = T::zero();
            }
            passive.retain(|&i| i == m || u[i] > T::zero());
        }
    }
    Err(Error::NoConvergence {
        iters: max_outer,
        residual: f64::NAN,
    })
}

/// Distance from `z` to the set: `‖z − project(z)‖`.
pub fn dist_to_set<T: Scalar>(p: &Projector<T>, z: &Vector<T>) -> Result<T> {
    let proj = project(p, z)?;
    let d = &proj - z;
    Ok(d.dot(&d).sqrt())
}

/// Separating halfspace `C_k` built from one subgradient-extragradient step:
/// normal `c = step_point − x_half` and offset `cᵀ x_half`, so that
/// `C_k = {y : cᵀ(y − x_half) ≤ 0}`. When `x_half` is the exact projection
/// of `step_point` onto `X`, the Fejer property of projections guarantees
/// `X ⊆ C_k`. An interior step (`step_point == x_half`) degenerates to the
/// whole space.
pub fn halfspace_from_sse_iterates<T: Scalar>(
    step_point: &Vector<T>,
    x_half: &Vector<T>,
) -> Projector<T> {
    let normal = step_point - x_half;
    let rhs = normal.dot(x_half);
    Projector::Halfspace { normal, rhs }
}

/// A finite family `{X_i}` whose intersection is the feasible set, with the
/// sampling weights used by the random-projection schemes and the full-set
/// projector kept for metrics.
#[derive(Debug, Clone)]
pub struct ConstraintFamily<T: Scalar> {
    members: Vec<Projector<T>>,
    weights: Vec<T>,
    full_set: Projector<T>,
}

impl<T: Scalar> ConstraintFamily<T> {
    /// Uniform weights over `members`.
    pub fn uniform(members: Vec<Projector<T>>, full_set: Projector<T>) -> Result<Self> {
        let m = members.len();
        if m == 0 {
            return Err(Error::invalid("constraint family needs >= 1 member"));
        }
        let w = T::one() / T::from_usize(m).expect("member count");
        Self::new(members, vec![w; m], full_set)
    }

    pub fn new(
        members: Vec<Projector<T>>,
        weights: Vec<T>,
        full_set: Projector<T>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("constraint family needs >= 1 member"));
        }
        if members.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| *w <= T::zero()) {
            return Err(Error::invalid("all family weights must be positive"));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > c(1e-12) {
            return Err(Error::invalid(format!(
                "family weights must sum to 1 (got {total})"
            )));
        }
        Ok(ConstraintFamily {
            members,
            weights,
            full_set,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &Projector<T> {
        &self.members[i]
    }

    pub fn members(&self) -> &[Projector<T>] {
        &self.members
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn full_set(&self) -> &Projector<T> {
        &self.full_set
    }

    /// Empirical linear-regularity ratio `dist²(z, X) / max_i dist²(z, X_i)`
    /// maximized over random probe points. Diagnostic only: it lower-bounds
    /// the regularity constant and certifies nothing.
    pub fn estimate_linear_regularity<R: Rng + ?Sized>(
        &self,
        trials: usize,
        scale: T,
        rng: &mut R,
    ) -> Result<T> {
        let dim = self
            .full_set
            .dim()
            .ok_or_else(|| Error::invalid("full set has no fixed dimension"))?;
        let mut worst = T::zero();
        for _ in 0..trials {
            let z = Vector::from_shape_fn(dim, |_| T::standard_normal(rng) * scale);
            let full = dist_to_set(&self.full_set, &z)?;
            let mut max_member = T::zero();
            for m in &self.members {
                max_member = max_member.max(dist_to_set(m, &z)?);
            }
            if max_member > T::zero() {
                worst = worst.max((full * full) / (max_member * max_member));
            }
        }
        Ok(worst)
    }
}

/// Draws a member index with the family's weights; i.i.d. across calls on
/// one rng stream. A single-member family returns 0 without consuming any
/// randomness, which keeps the m=1 reduction to full-projection schemes
/// stream-exact.
pub fn sample_constraint<T: Scalar, R: Rng + ?Sized>(
    family: &ConstraintFamily<T>,
    rng: &mut R,
) -> usize {
    let m = family.len();
    if m == 1 {
        return 0;
    }
    let u: T = T::uniform(rng, T::zero(), T::one());
    let mut acc = T::zero();
    for (i, w) in family.weights.iter().enumerate() {
        acc += *w;
        if u < acc {
            return i;
        }
    }
    m - 1
}

//! Builders for the two benchmark problems — a stochastic Nash-Cournot
//! network game and a low-dimensional Markov invariant-distribution
//! projection — plus small synthetic fixtures used throughout the tests.

use crate::error::{Error, Result};
use crate::problem::{estimate_lipschitz, AffineMonotoneMap, ViProblem};
use crate::projections::{ConstraintFamily, ProductBlock, Projector};
use crate::sampling::NoiseModel;
use crate::scalar::{c, Scalar};
use crate::{Matrix, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Nash-Cournot game over a network: `n_firms` producers sell into
/// `n_nodes` markets with linear price `a_j − b_j · (aggregate sales)` and
/// linear production cost. The variational formulation stacks
/// `x = (s; q)` with sales grouped by node; the map is affine with the
/// price-slope block on `s` and a constant cost block on `q`.
#[derive(Debug, Clone)]
pub struct CournotSpec<T: Scalar> {
    pub n_firms: usize,
    pub n_nodes: usize,
    /// Production capacity per (firm, node).
    pub cap: Matrix<T>,
    /// Price slope per node, all positive.
    pub b: Vector<T>,
    /// Marginal cost per (firm, node).
    pub cost: Matrix<T>,
    /// Mean price intercept per node.
    pub a_mean: Vector<T>,
    /// Half-width of the uniform intercept noise per node.
    pub a_halfwidth: Vector<T>,
}

impl<T: Scalar> CournotSpec<T> {
    /// The benchmark defaults: 5 firms, 4 nodes, cap 300, cost 1.5,
    /// slope 0.05, intercept `a ~ U[49.5, 50.5]`.
    pub fn defaults() -> Self {
        Self::uniform(5, 4, c(300.0), c(1.5), c(0.05), c(50.0), c(0.5))
    }

    /// All-constant parameters across firms and nodes.
    pub fn uniform(
        n_firms: usize,
        n_nodes: usize,
        cap: T,
        cost: T,
        b: T,
        a_mean: T,
        a_halfwidth: T,
    ) -> Self {
        CournotSpec {
            n_firms,
            n_nodes,
            cap: Matrix::from_elem((n_firms, n_nodes), cap),
            b: Vector::from_elem(n_nodes, b),
            cost: Matrix::from_elem((n_firms, n_nodes), cost),
            a_mean: Vector::from_elem(n_nodes, a_mean),
            a_halfwidth: Vector::from_elem(n_nodes, a_halfwidth),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_firms * self.n_nodes
    }

    fn validate(&self) -> Result<()> {
        if self.n_firms == 0 || self.n_nodes == 0 {
            return Err(Error::invalid("need at least one firm and one node"));
        }
        if self.b.len() != self.n_nodes
            || self.a_mean.len() != self.n_nodes
            || self.a_halfwidth.len() != self.n_nodes
        {
            return Err(Error::invalid("per-node parameter length mismatch"));
        }
        if self.cap.dim() != (self.n_firms, self.n_nodes)
            || self.cost.dim() != (self.n_firms, self.n_nodes)
        {
            return Err(Error::invalid("per-(firm,node) parameter shape mismatch"));
        }
        if self.b.iter().any(|v| *v <= T::zero()) {
            return Err(Error::invalid("price slopes must be positive"));
        }
        if self.cap.iter().any(|v| *v <= T::zero()) {
            return Err(Error::invalid("capacities must be positive"));
        }
        if self.a_halfwidth.iter().any(|v| *v < T::zero()) {
            return Err(Error::invalid("noise half-widths must be nonnegative"));
        }
        Ok(())
    }

    /// Index of `s_{ij}` in the stacked variable (sales grouped by node).
    pub fn s_index(&self, firm: usize, node: usize) -> usize {
        node * self.n_firms + firm
    }

    /// Index of `q_{ij}` in the stacked variable.
    pub fn q_index(&self, firm: usize, node: usize) -> usize {
        self.n_firms * self.n_nodes + node * self.n_firms + firm
    }
}

/// Builds the Cournot VI: map `F(x) = (B s − a; c)` with
/// `B = blockdiag_j b_j (I + 11ᵀ)`, per-firm feasible sets
/// `{Σ_j q_ij = Σ_j s_ij, 0 ≤ q ≤ cap, s ≥ 0}` exploited as a product for
/// Dykstra, a per-firm constraint family, uniform intercept noise on the
/// sales block, and the exact corner-distance diameter bound.
pub fn build_cournot<T: Scalar>(spec: &CournotSpec<T>) -> Result<(ViProblem<T>, NoiseModel<T>)> {
    spec.validate()?;
    let nf = spec.n_firms;
    let nn = spec.n_nodes;
    let n = spec.dim();

    let mut m = Matrix::zeros((n, n));
    for node in 0..nn {
        let b = spec.b[node];
        for i in 0..nf {
            for i2 in 0..nf {
                let extra = if i == i2 { T::one() } else { T::zero() };
                m[[spec.s_index(i, node), spec.s_index(i2, node)]] = b * (T::one() + extra);
            }
        }
    }
    let mut d = Vector::zeros(n);
    for node in 0..nn {
        for firm in 0..nf {
            d[spec.s_index(firm, node)] = -spec.a_mean[node];
            d[spec.q_index(firm, node)] = spec.cost[[firm, node]];
        }
    }
    let map = AffineMonotoneMap::new(m, d)?;

    // Per-firm set over (s_i., q_i.): hyperplane Σq - Σs = 0 meets the box
    // s >= 0, 0 <= q <= cap.
    let firm_projector = |firm: usize| -> Result<Projector<T>> {
        let mut normal = Vector::zeros(2 * nn);
        let mut lo = Vector::zeros(2 * nn);
        let mut hi = Vector::from_elem(2 * nn, T::infinity());
        for node in 0..nn {
            normal[node] = -T::one();
            normal[nn + node] = T::one();
            hi[nn + node] = spec.cap[[firm, node]];
        }
        lo.fill(T::zero());
        Ok(Projector::dykstra(vec![
            Projector::hyperplane(normal, T::zero())?,
            Projector::boxed(lo, hi)?,
        ]))
    };
    let firm_indices = |firm: usize| -> Vec<usize> {
        (0..nn)
            .map(|node| spec.s_index(firm, node))
            .chain((0..nn).map(|node| spec.q_index(firm, node)))
            .collect()
    };

    let full_blocks: Vec<ProductBlock<T>> = (0..nf)
        .map(|firm| {
            Ok(ProductBlock {
                indices: firm_indices(firm),
                projector: firm_projector(firm)?,
            })
        })
        .collect::<Result<_>>()?;
    let full_set = Projector::Product { blocks: full_blocks };

    // Family member i constrains firm i only; the rest pass through.
    let members: Vec<Projector<T>> = (0..nf)
        .map(|firm| {
            Ok(Projector::Product {
                blocks: vec![ProductBlock {
                    indices: firm_indices(firm),
                    projector: firm_projector(firm)?,
                }],
            })
        })
        .collect::<Result<_>>()?;
    let family = ConstraintFamily::uniform(members, full_set.clone())?;

    let lip = estimate_lipschitz(&map, 10_000, c(1e-12))?;

    // Effective bounds: q in [0, cap] and s_ij <= Σ_j cap_ij via the
    // per-firm budget identity; diameter is the corner distance.
    let mut diam_sq = T::zero();
    for firm in 0..nf {
        let row_cap: T = (0..nn).map(|node| spec.cap[[firm, node]]).sum();
        for node in 0..nn {
            diam_sq += row_cap * row_cap;
            let qc = spec.cap[[firm, node]];
            diam_sq += qc * qc;
        }
    }

    let mut half_widths = Vector::zeros(n);
    for node in 0..nn {
        for firm in 0..nf {
            half_widths[spec.s_index(firm, node)] = spec.a_halfwidth[node];
        }
    }
    let noise = if half_widths.iter().all(|h| *h == T::zero()) {
        NoiseModel::None
    } else {
        NoiseModel::AdditiveUniform { half_widths }
    };

    let problem = ViProblem::new(map, full_set, lip)?
        .with_family(family)
        .with_diameter_bound(diam_sq.sqrt());
    Ok((problem, noise))
}

/// Markov invariant-distribution approximation: approximate `π = Pᵀπ` in a
/// low-dimensional feature subspace `Σ x`, which is the VI on
/// `X = {x : Σx ≥ 0, eᵀΣx = 1}` with the affine map `S x`,
/// `S = Σᵀ(I − Pᵀ)Σ`.
#[derive(Debug, Clone, Copy)]
pub struct MarkovSpec {
    pub n_states: usize,
    pub r_dims: usize,
    /// Seed for the random transition matrix.
    pub p_seed: u64,

}

impl MarkovSpec {
    /// Paper-scale instance (1000 states, 20 features).
    pub fn full(p_seed: u64) -> Self {
        MarkovSpec {
            n_states: 1000,
            r_dims: 20,
            p_seed,
        }
    }

    /// Desk-scale instance used by the test suites.
    pub fn desk(p_seed: u64) -> Self {
        MarkovSpec {
            n_states: 200,
            r_dims: 10,
            p_seed,
        }
    }
}

/// Builds the Markov VI. The transition matrix has i.i.d. uniform entries
/// normalized per row (seeded); feature column `j` samples
/// `sin(j·π·(i+1)/(n+1))` over states `i` and the columns are
/// orthonormalized. The constraint family holds one
/// halfspace-meet-hyperplane member per state.
pub fn build_markov<T: Scalar>(spec: &MarkovSpec) -> Result<(ViProblem<T>, NoiseModel<T>)> {
    let n = spec.n_states;
    let r = spec.r_dims;
    if n == 0 || r == 0 || r > n {
        return Err(Error::invalid("need 1 <= r_dims <= n_states"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.p_seed);

    let mut p = Matrix::<T>::zeros((n, n));
    for i in 0..n {
        let mut total = T::zero();
        for j in 0..n {
            let v = T::uniform(&mut rng, T::zero(), T::one());
            p[[i, j]] = v;
            total += v;
        }
        for j in 0..n {
            p[[i, j]] /= total;
        }
    }

    let pi = c::<T>(std::f64::consts::PI);
    let n1 = T::from_usize(n + 1).expect("state count");
    let mut sigma = Matrix::<T>::zeros((n, r));
    for j in 0..r {
        let freq = T::from_usize(j + 1).expect("feature index");
        for i in 0..n {
            let pos = T::from_usize(i + 1).expect("state index");
            sigma[[i, j]] = (freq * pi * pos / n1).sin();
        }
    }
    // Modified Gram-Schmidt; the sampled sines are near-orthogonal already.
    for j in 0..r {
        for prev in 0..j {
            let proj: T = (0..n).map(|i| sigma[[i, j]] * sigma[[i, prev]]).sum();
            for i in 0..n {
                sigma[[i, j]] = sigma[[i, j]] - proj * sigma[[i, prev]];
            }
        }
        let norm: T = (0..n).map(|i| sigma[[i, j]] * sigma[[i, j]]).sum::<T>().sqrt();
        if norm <= c(1e-10) {
            return Err(Error::invalid(format!(
                "feature column {j} is rank-deficient after orthonormalization"
            )));
        }
        for i in 0..n {
            sigma[[i, j]] /= norm;
        }
    }

    // S = Σᵀ(I - Pᵀ)Σ
    let pt_sigma = p.t().dot(&sigma);
    let s = sigma.t().dot(&sigma) - sigma.t().dot(&pt_sigma);
    let map = AffineMonotoneMap::new(s, Vector::zeros(r))?;

    // X = {x : Σx ≥ 0, eᵀΣx = 1}. The full set projects by the active-set
    // method (a facet-by-facet Dykstra sweep stalls on the nearly parallel
    // sine halfspaces); family members are the per-state
    // halfspace-hyperplane intersections in closed form.
    let plane_normal = sigma.t().dot(&Vector::from_elem(n, T::one()));
    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let row = Vector::from_shape_fn(r, |j| -sigma[[i, j]]);
        members.push(Projector::HalfspaceMeetHyperplane {
            half_normal: row,
            half_rhs: T::zero(),
            plane_normal: plane_normal.clone(),
            plane_rhs: T::one(),
        });
    }
    let full_set = Projector::polyhedron_meet_hyperplane(
        sigma.mapv(|v| -v),
        Vector::zeros(n),
        plane_normal,
        T::one(),
    )?;
    let family = ConstraintFamily::uniform(members, full_set.clone())?;

    let lip = estimate_lipschitz(&map, 10_000, c(1e-12))?;
    let problem = ViProblem::new(map, full_set, lip)?.with_family(family);
    Ok((problem, NoiseModel::None))
}

/// Synthetic fixture kinds with known solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// `F(x) = x − 5` on `[0, 10]`: interior solution `x* = 5`.
    Interior,
    /// `F(x) = x − 5` on `[0, 3]`: boundary solution `x* = 3`.
    Boundary,
    /// Skew-symmetric rotation on the unit box: merely monotone, the
    /// solution set is the segment `{(0, t) : t ∈ [0, 1]}`.
    Skew,
}

/// Small closed-form test problems.
pub fn build_synthetic<T: Scalar>(kind: SyntheticKind) -> Result<ViProblem<T>> {
    match kind {
        SyntheticKind::Interior | SyntheticKind::Boundary => {
            let hi = if kind == SyntheticKind::Interior {
                c::<T>(10.0)
            } else {
                c::<T>(3.0)
            };
            let map = AffineMonotoneMap::new(Matrix::eye(1), Vector::from_elem(1, c(-5.0)))?;
            let set = Projector::boxed(Vector::zeros(1), Vector::from_elem(1, hi))?;
            let xstar = if kind == SyntheticKind::Interior {
                c::<T>(5.0)
            } else {
                c::<T>(3.0)
            };
            ViProblem::new(map, set, T::one())?
                .with_diameter_bound(hi)
                .with_reference_feasible(Vector::from_elem(1, xstar))
        }
        SyntheticKind::Skew => {
            let mut m = Matrix::zeros((2, 2));
            m[[0, 1]] = T::one();
            m[[1, 0]] = -T::one();
            let map = AffineMonotoneMap::new(m, Vector::zeros(2))?;
            let set = Projector::boxed(Vector::zeros(2), Vector::from_elem(2, T::one()))?;
            Ok(ViProblem::new(map, set, T::one())?.with_diameter_bound(c(2.0f64.sqrt())))
        }
    }
}

/// The wedge `{x₁ ≥ 0} ∩ {x₂ ≥ 0}` in 2-D as a two-member family over a
/// shifted quadratic map; used to exercise random projections leaving the
/// intersection.
pub fn build_wedge_family<T: Scalar>() -> Result<(ViProblem<T>, NoiseModel<T>)> {
    let map = AffineMonotoneMap::new(
        Matrix::eye(2),
        Vector::from_shape_fn(2, |i| if i == 0 { c(-2.0) } else { c(3.0) }),
    )?;
    let h1 = Projector::halfspace(Vector::from_shape_fn(2, |i| if i == 0 { -T::one() } else { T::zero() }), T::zero());
    let h2 = Projector::halfspace(Vector::from_shape_fn(2, |i| if i == 1 { -T::one() } else { T::zero() }), T::zero());
    let full = Projector::dykstra(vec![h1.clone(), h2.clone()]);
    let family = ConstraintFamily::uniform(vec![h1, h2], full.clone())?;
    let problem = ViProblem::new(map, full, T::one())?
        .with_family(family)
        .with_reference_feasible(Vector::from_shape_fn(2, |i| if i == 0 { c(2.0) } else { T::zero() }))?;
    Ok((problem, NoiseModel::None))
}

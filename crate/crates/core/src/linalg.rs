//! Small dense linear-algebra helpers: cyclic Jacobi for symmetric
//! eigenvalues and power iteration for the spectral norm. The problem sizes
//! here are tens of dimensions, so dense O(n^3) routines are plenty.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn symmetric_part<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let half = c::<T>(0.5);
    (m + &m.t()) * half
}

/// All eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi.
pub(crate) fn sym_eigenvalues<T: Scalar>(a_in: &Matrix<T>) -> Vec<T> {
    let n = a_in.nrows();
    assert_eq!(n, a_in.ncols(), "sym_eigenvalues needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a_in[[0, 0]]];
    }

    let mut a = a_in.clone();
    let scale = a
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v.abs()))
        .max(T::one());
    let tol = T::epsilon() * scale * c::<T>(0.5);

    for _sweep in 0..200 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol * c::<T>(1e-3) {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (c::<T>(2.0) * apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let cos = T::one() / (t * t + T::one()).sqrt();
                let sin = t * cos;

                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = cos * akp - sin * akq;
                    a[[k, q]] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = cos * apk - sin * aqk;
                    a[[q, k]] = sin * apk + cos * aqk;
                }
            }
        }
    }

    let mut eigs: Vec<T> = (0..n).map(|i| a[[i, i]]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    eigs
}

pub(crate) fn min_sym_eigenvalue<T: Scalar>(m: &Matrix<T>) -> T {
    let sym = symmetric_part(m);
    sym_eigenvalues(&sym)[0]
}

pub(crate) fn max_sym_eigenvalue<T: Scalar>(sym: &Matrix<T>) -> T {
    *sym_eigenvalues(sym).last().expect("nonempty matrix")
}

/// Spectral norm of a (possibly nonsymmetric) matrix by power iteration on
/// `MᵀM`, restarting from fresh random vectors on stagnation.
pub(crate) fn spectral_norm_power<T: Scalar>(m: &Matrix<T>, iters: usize, tol: T) -> Result<T> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "matrix entries in spectral norm estimate".into(),
        });
    }
    if iters == 0 {
        return Err(Error::invalid("power iteration needs iters >= 1"));
    }
    let n = m.ncols();
    if n == 0 {
        return Ok(T::zero());
    }

    let gram = m.t().dot(m);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
    let mut best = T::zero();
    for _restart in 0..3 {
        let mut v =
            crate::Vector::<T>::from_shape_fn(n, |_| T::uniform(&mut rng, -T::one(), T::one()));
        let norm = l2(&v);
        if norm <= T::epsilon() {
            continue;
        }
        v /= norm;
        let mut lambda = T::zero();
        for _ in 0..iters {
            let w = gram.dot(&v);
            let wnorm = l2(&w);
            if wnorm <= T::epsilon() * c::<T>(1e-6) {
                lambda = T::zero();
                break;
            }
            let next = &w / wnorm;
            let new_lambda = v.dot(&w);
            let done = (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(T::epsilon());
            v = next;
            lambda = new_lambda;
            if done {
                break;
            }
        }
        best = best.max(lambda.max(T::zero()));
    }
    Ok(best.sqrt())
}

fn l2<T: Scalar>(v: &crate::Vector<T>) -> T {
    v.dot(v).sqrt()
}

/// Solves `A x = b` for small dense `A` by Gaussian elimination with
/// partial pivoting; `None` when a pivot is numerically zero.
pub(crate) fn solve_dense<T: Scalar>(a: &Matrix<T>, b: &crate::Vector<T>) -> Option<crate::Vector<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return None;
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    let scale = a
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v.abs()))
        .max(T::one());
    let tiny = T::epsilon() * scale * c::<T>(64.0);
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[[row, col]].abs() > m[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if m[[pivot, col]].abs() <= tiny {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m[[col, j]];
                m[[col, j]] = m[[pivot, j]];
                m[[pivot, j]] = tmp;
            }
            let tmp = rhs[col];
            rhs[col] = rhs[pivot];
            rhs[pivot] = tmp;
        }
        for row in (col + 1)..n {
            let f = m[[row, col]] / m[[col, col]];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                m[[row, j]] = m[[row, j]] - f * m[[col, j]];
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut x = crate::Vector::<T>::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in (row + 1)..n {
            acc -= m[[row, j]] * x[j];
        }
        x[row] = acc / m[[row, row]];
    }
    Some(x)
}

//! Generalized eigensolvers for the assembled pencils.
//!
//! All pencils (S, M) here have diagonal positive M, so they are symmetrized
//! by the half transform T = M^{-1/2} S M^{-1/2}.  Kernel dimensions are
//! never inferred from floating-point thresholds: they come from exact
//! integer ranks of the incidence matrices, and the reported nonzero
//! spectrum is the tail of the sorted eigenvalue list beyond that count.
//!
//! The coexact spectrum at degree p is computed from the factor
//! L = M_p^{-1/2} B M_{p+1}^{1/2}: the pencil's nonzero spectrum equals the
//! nonzero squared singular values of L, shared between L L^T and L^T L, so
//! the solve runs on whichever side is smaller.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::complex::CellComplex;
use crate::conformal::{assemble, ConformalProfile};
use crate::error::{Error, Result};

/// Options for the pencil eigensolvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target for iterative solves.
    pub tol: f64,
    /// Matrix size above which the iterative path is used.
    pub dense_threshold: usize,
    /// Number of smallest eigenvalues requested on the iterative path.
    pub n_eigenvalues: usize,
    /// Cap on Lanczos steps.
    pub max_iter: usize,
    /// Seed of the deterministic start vector.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            dense_threshold: 1500,
            n_eigenvalues: 12,
            max_iter: 400,
            seed: 1,
        }
    }
}

/// One computed spectrum: the degree it belongs to, the exact kernel
/// dimension, and the eigenvalues above the kernel in ascending order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub degree: usize,
    pub n_cells: usize,
    /// Exact dimension of the pencil kernel (from integer ranks).
    pub kernel_dim: usize,
    /// Ascending eigenvalues.  Coexact slices list nonzero values only;
    /// full-pencil slices list the spectrum from the bottom, so the kernel
    /// occupies the first `kernel_dim` slots as numerical zeros.  On the
    /// iterative path the list is a prefix of the spectrum; on the dense
    /// path it is complete.
    pub eigenvalues: Vec<f64>,
    /// Largest relative residual among the reported eigenpairs.
    pub max_residual: f64,
    pub method: String,
}

impl SpectrumSlice {
    /// k-th listed eigenvalue, 1-based.  For coexact slices this is the
    /// k-th nonzero value; full-pencil slices start inside the kernel.
    pub fn nonzero(&self, k: usize) -> Option<f64> {
        self.eigenvalues.get(k - 1).copied()
    }
}

/// Smallest eigenvalues of the symmetric matrix t, ascending, together with
/// the largest relative residual of the returned pairs.  Uses a full dense
/// decomposition below the threshold and shift-inverted Lanczos above it.
pub fn symmetric_eigenvalues(t: &DMatrix<f64>, opts: &SolverOptions) -> Result<(Vec<f64>, f64, &'static str)> {
    let n = t.nrows();
    if n == 0 {
        return Ok((Vec::new(), 0.0, "dense"));
    }
    if n <= opts.dense_threshold {
        let (vals, res) = dense_symmetric(t)?;
        Ok((vals, res, "dense"))
    } else {
        let count = opts.n_eigenvalues.min(n);
        let (vals, res) = lanczos_smallest(t, count, opts)?;
        Ok((vals, res, "lanczos"))
    }
}

fn dense_symmetric(t: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let eig = nalgebra::SymmetricEigen::try_new(t.clone(), f64::EPSILON, 0).ok_or_else(|| {
        Error::NonConvergence { context: "dense symmetric eigensolve".into(), residual: f64::NAN }
    })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    // Dense reduction is backward stable; report the backward error scale.
    let scale = t.norm();
    let res = if scale > 0.0 { f64::EPSILON * (t.nrows() as f64).sqrt() } else { 0.0 };
    Ok((vals, res))
}

/// Shift-inverted Lanczos with full reorthogonalization for the smallest
/// `count` eigenvalues of a symmetric positive semidefinite matrix.
///
/// A Krylov space from one vector only ever sees one copy of a repeated
/// eigenvalue, and product complexes have genuinely multiple spectra, so on
/// breakdown the recurrence restarts a fresh branch with a random direction
/// orthogonal to everything found so far.  Branches couple through a zero
/// off-diagonal in the shared tridiagonal matrix, which keeps the Ritz
/// extraction a single small symmetric solve.
fn lanczos_smallest(
    t: &DMatrix<f64>,
    count: usize,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, f64)> {
    let n = t.nrows();
    if count == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let trace: f64 = (0..n).map(|i| t[(i, i)]).sum();
    let sigma = (trace / n as f64).max(f64::MIN_POSITIVE) * 1e-3;
    let mut shifted = t.clone();
    for i in 0..n {
        shifted[(i, i)] += sigma;
    }
    let chol = Cholesky::new(shifted).ok_or_else(|| Error::NonConvergence {
        context: "Cholesky of shifted operator (operator not positive semidefinite?)".into(),
        residual: f64::NAN,
    })?;
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut random_orthonormal = |basis: &[DVector<f64>]| -> Option<DVector<f64>> {
        for _ in 0..5 {
            let mut v =
                DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0f64)));
            for _ in 0..2 {
                for q in basis {
                    let c = q.dot(&v);
                    v.axpy(-c, q, 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-8 {
                return Some(v / norm);
            }
        }
        None
    };
    let start = random_orthonormal(&[]).expect("random start vector");
    let mut basis: Vec<DVector<f64>> = vec![start];
    let mut alphas: Vec<f64> = Vec::new();
    // betas[j] couples steps j and j+1; zero marks a branch restart.
    let mut betas: Vec<f64> = Vec::new();
    let max_m = opts.max_iter.min(n);
    let mut goal = (2 * count + 40).min(max_m);
    loop {
        while alphas.len() < goal {
            let j = alphas.len();
            let mut w = chol.solve(&basis[j]);
            let alpha = basis[j].dot(&w);
            alphas.push(alpha);
            w.axpy(-alpha, &basis[j], 1.0);
            if j > 0 && betas[j - 1] != 0.0 {
                w.axpy(-betas[j - 1], &basis[j - 1], 1.0);
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w);
                    w.axpy(-c, q, 1.0);
                }
            }
            let beta = w.norm();
            if beta > 1e-12 {
                betas.push(beta);
                basis.push(w / beta);
            } else {
                match random_orthonormal(&basis) {
                    Some(v) => {
                        betas.push(0.0);
                        basis.push(v);
                    }
                    None => {
                        betas.push(0.0);
                        break;
                    }
                }
            }
        }
        let m = alphas.len();
        let mut tri = DMatrix::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alphas[i];
            if i + 1 < m {
                tri[(i, i + 1)] = betas[i];
                tri[(i + 1, i)] = betas[i];
            }
        }
        let eig = nalgebra::SymmetricEigen::try_new(tri, f64::EPSILON, 0).ok_or_else(|| {
            Error::NonConvergence { context: "Lanczos Ritz solve".into(), residual: f64::NAN }
        })?;
        // Largest Ritz values of the inverted operator are the smallest
        // eigenvalues of t.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite Ritz values")
        });
        let beta_last = betas[m - 1];
        let space_spanned = basis.len() <= m;
        let exhausted = m >= max_m || space_spanned;
        let mut vals = Vec::with_capacity(count);
        let mut worst = 0.0f64;
        let mut converged = true;
        for &idx in order.iter().take(count) {
            let nu = eig.eigenvalues[idx];
            if nu <= 0.0 {
                converged = false;
                break;
            }
            let bound = beta_last * eig.eigenvectors[(m - 1, idx)].abs();
            let rel = bound / nu;
            worst = worst.max(rel);
            if rel > opts.tol {
                converged = false;
                break;
            }
            vals.push((1.0 / nu - sigma).max(0.0));
        }
        if converged && vals.len() == count {
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
            return Ok((vals, worst));
        }
        if exhausted {
            return Err(Error::NonConvergence {
                context: format!("Lanczos did not converge {count} eigenvalues in {m} steps"),
                residual: worst,
            });
        }
        goal = (goal + goal / 2 + 10).min(max_m);
    }
}

/// Coexact spectrum of the degree-p pencil: eigenvalues of (S_p, M_p)
/// restricted to the orthogonal complement of closed forms, solved on the
/// smaller side of the half factor.  The reported kernel is the space of
/// closed p-cochains, with its dimension from exact ranks.
pub fn coexact_spectrum(
    complex: &CellComplex,
    profile: &ConformalProfile,
    degree: usize,
    opts: &SolverOptions,
) -> Result<SpectrumSlice> {
    let n = complex.dimension();
    if degree >= n {
        return Err(Error::InvalidSpec(format!(
            "coexact spectrum needs degree < dimension, got {degree} on dimension {n}"
        )));
    }
    let lap = assemble(complex, profile, degree)?;
    let l = lap.half_up_factor().expect("degree < dimension has an up factor");
    let rank = complex.boundary_rank(degree + 1);
    let n_p = l.nrows();
    let n_up = l.ncols();
    let side = if n_up <= n_p { l.tr_mul(&l) } else { &l * l.transpose() };
    let side_n = side.nrows();
    let opts_side = enlarge_request(opts, side_n - rank, rank);
    let (vals, res, method) = symmetric_eigenvalues(&side, &opts_side)?;
    let nonzero = skip_kernel(vals, side_n - rank, rank);
    Ok(SpectrumSlice {
        degree,
        n_cells: n_p,
        kernel_dim: n_p - rank,
        eigenvalues: nonzero,
        max_residual: res,
        method: method.into(),
    })
}

/// Full Hodge pencil spectrum at degree p, including the exact-dimension
/// harmonic kernel.  Eigenvalues are complete on the dense path and a
/// prefix on the iterative path; `kernel_dim` leading entries are
/// numerically zero.
pub fn full_spectrum(
    complex: &CellComplex,
    profile: &ConformalProfile,
    degree: usize,
    opts: &SolverOptions,
) -> Result<SpectrumSlice> {
    let lap = assemble(complex, profile, degree)?;
    let n_p = lap.size();
    let mut t = DMatrix::zeros(n_p, n_p);
    if let Some(l) = lap.half_up_factor() {
        t += &l * l.transpose();
    }
    if let Some(r) = lap.half_down_factor() {
        t += r.tr_mul(&r);
    }
    let kernel = n_p - complex.boundary_rank(degree) - complex.boundary_rank(degree + 1);
    let (vals, res, method) = symmetric_eigenvalues(&t, opts)?;
    Ok(SpectrumSlice {
        degree,
        n_cells: n_p,
        kernel_dim: kernel,
        eigenvalues: vals,
        max_residual: res,
        method: method.into(),
    })
}

/// Dimension of the harmonic space at degree p (equals the Betti number).
pub fn harmonic_dimension(complex: &CellComplex, degree: usize) -> usize {
    complex.betti_numbers()[degree]
}

fn enlarge_request(opts: &SolverOptions, kernel: usize, rank: usize) -> SolverOptions {
    let mut o = opts.clone();
    o.n_eigenvalues = (opts.n_eigenvalues + kernel).min(kernel + rank);
    o
}

/// Drops the `kernel` smallest entries (exact zeros of the pencil) and
/// returns up to `rank` nonzero eigenvalues.
fn skip_kernel(mut vals: Vec<f64>, kernel: usize, rank: usize) -> Vec<f64> {
    if vals.len() <= kernel {
        return Vec::new();
    }
    let mut tail: Vec<f64> = vals.drain(kernel..).collect();
    tail.truncate(rank);
    tail
}

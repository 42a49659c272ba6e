//! One-dimensional radial reductions of the form pencils.
//!
//! Profiles that depend only on one coordinate reduce the coexact problem to
//! a weighted Sturm-Liouville pencil -(w1 f')' = mu w0 f on an interval,
//! discretized with midpoint-sampled weights and lumped mass:
//!
//! ```text
//! stiffness(f) = sum_e w1(mid_e) (f_{e+1} - f_e)^2 / dt
//! mass_i       = dt (w0(mid_{i-1}) + w0(mid_i)) / 2    (halved at the ends)
//! ```
//!
//! The half-transformed operator factors through a bidiagonal matrix, so the
//! eigenvalues are squared singular values.  They are extracted by Sturm
//! bisection on the Golub-Kahan tridiagonal form, which determines each
//! singular value to high *relative* accuracy.  That matters here: pinched
//! profiles push the fundamental eigenvalue many orders of magnitude below
//! the spectral norm, where dense reductions lose every significant digit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary conditions of the radial pencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialBoundary {
    /// Natural (Neumann) conditions at both ends; constants are in the
    /// kernel and are excluded from the reported spectrum.
    NeumannBoth,
    /// Natural condition at the inner end, zero condition at the outer end,
    /// for problems posed on a domain extended by zero across the outer
    /// boundary.
    OuterDirichlet,
}

/// Discretized radial pencil with midpoint weights.
#[derive(Debug, Clone)]
pub struct RadialProblem {
    dt: f64,
    w1_mid: Vec<f64>,
    w0_mid: Vec<f64>,
    boundary: RadialBoundary,
}

/// Eigenvalues of a radial pencil with their bisection residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialSpectrum {
    /// Smallest nonzero eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Relative enclosure width of each eigenvalue from the bisection.
    pub residuals: Vec<f64>,
    /// Dimension of the excluded kernel (1 for Neumann ends, else 0).
    pub kernel_dim: usize,
}

impl RadialProblem {
    /// Builds a problem from interval-midpoint samples of the stiffness and
    /// mass weights on a uniform grid spanning `length`.
    pub fn new(
        length: f64,
        w1_mid: Vec<f64>,
        w0_mid: Vec<f64>,
        boundary: RadialBoundary,
    ) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidSpec("radial length must be positive".into()));
        }
        if w1_mid.len() != w0_mid.len() {
            return Err(Error::DimensionMismatch(
                "stiffness and mass samples differ in length".into(),
            ));
        }
        if w1_mid.len() < 2 {
            return Err(Error::InvalidSpec("radial grid needs at least 3 points".into()));
        }
        for w in w1_mid.iter().chain(w0_mid.iter()) {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "radial weights must be positive and finite, got {w}"
                )));
            }
        }
        let dt = length / w1_mid.len() as f64;
        Ok(RadialProblem { dt, w1_mid, w0_mid, boundary })
    }

    /// Samples weight functions at interval midpoints of an `n_points` grid.
    pub fn from_functions(
        length: f64,
        n_points: usize,
        w1: impl Fn(f64) -> f64,
        w0: impl Fn(f64) -> f64,
        boundary: RadialBoundary,
    ) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidSpec("radial grid needs at least 3 points".into()));
        }
        let dt = length / (n_points - 1) as f64;
        let mids: Vec<f64> = (0..n_points - 1).map(|e| (e as f64 + 0.5) * dt).collect();
        let w1_mid = mids.iter().map(|&r| w1(r)).collect();
        let w0_mid = mids.iter().map(|&r| w0(r)).collect();
        Self::new(length, w1_mid, w0_mid, boundary)
    }

    pub fn n_points(&self) -> usize {
        self.w1_mid.len() + 1
    }

    pub fn boundary(&self) -> RadialBoundary {
        self.boundary
    }

    /// Number of unknowns after boundary elimination.
    pub fn n_unknowns(&self) -> usize {
        match self.boundary {
            RadialBoundary::NeumannBoth => self.n_points(),
            RadialBoundary::OuterDirichlet => self.n_points() - 1,
        }
    }

    /// Lumped mass diagonal over the unknowns.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        let n = self.n_points();
        let mut m = Vec::with_capacity(n);
        for i in 0..n {
            let left = if i > 0 { self.w0_mid[i - 1] } else { 0.0 };
            let right = if i < n - 1 { self.w0_mid[i] } else { 0.0 };
            m.push(self.dt * (left + right) / 2.0);
        }
        m.truncate(self.n_unknowns());
        m
    }

    /// Applies the stiffness form to a vector over the unknowns.
    pub fn apply_stiffness(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n_un = self.n_unknowns();
        if f.len() != n_un {
            return Err(Error::DimensionMismatch(format!(
                "vector has {} entries for {} unknowns",
                f.len(),
                n_un
            )));
        }
        let mut out = vec![0.0; n_un];
        for (e, &w1) in self.w1_mid.iter().enumerate() {
            let c = w1 / self.dt;
            let fe = f[e];
            let fe1 = if e + 1 < n_un { f[e + 1] } else { 0.0 };
            let g = c * (fe - fe1);
            out[e] += g;
            if e + 1 < n_un {
                out[e + 1] -= g;
            }
        }
        Ok(out)
    }

    /// Energy of a vector in the stiffness form.
    pub fn stiffness_energy(&self, f: &[f64]) -> Result<f64> {
        let sf = self.apply_stiffness(f)?;
        Ok(f.iter().zip(&sf).map(|(a, b)| a * b).sum())
    }

    /// Bidiagonal factor of the half-transformed pencil: (diagonal,
    /// superdiagonal) entries in absolute value.
    fn bidiagonal_factor(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.mass_diagonal();
        let n_un = m.len();
        let n_edges = self.w1_mid.len();
        let mut diag = Vec::with_capacity(n_edges);
        let mut sup = Vec::new();
        for (e, &w1) in self.w1_mid.iter().enumerate() {
            let c = w1 / self.dt;
            diag.push((c / m[e]).sqrt());
            if e + 1 < n_un {
                sup.push((c / m[e + 1]).sqrt());
            }
        }
        (diag, sup)
    }

    /// Smallest `count` nonzero eigenvalues by Sturm bisection on the
    /// Golub-Kahan form of the bidiagonal factor.
    pub fn smallest_eigenvalues(&self, count: usize) -> Result<RadialSpectrum> {
        let (diag, sup) = self.bidiagonal_factor();
        let n_sigma = diag.len();
        let kernel_dim = match self.boundary {
            RadialBoundary::NeumannBoth => 1,
            RadialBoundary::OuterDirichlet => 0,
        };
        let wanted = count.min(n_sigma);
        // Interleave diagonal and superdiagonal entries: the Golub-Kahan
        // tridiagonal has zero diagonal and these as off-diagonal entries.
        let mut off = Vec::with_capacity(diag.len() + sup.len());
        for i in 0..diag.len() {
            off.push(diag[i]);
            if i < sup.len() {
                off.push(sup[i]);
            }
        }
        let size = off.len() + 1;
        // Eigenvalues of the Golub-Kahan matrix are +-sigma plus
        // (size - 2 n_sigma) zeros, so the count of singular values below
        // x > 0 is the Sturm count minus (size - n_sigma).
        let below_shift = size - n_sigma;
        let pivmin = f64::MIN_POSITIVE
            * off.iter().fold(1.0f64, |acc, &c| acc.max(c * c)).max(1.0);
        let sigma_below = |x: f64| -> usize {
            let mut d = -x;
            let mut neg = 0usize;
            if d < 0.0 {
                neg += 1;
            }
            for &c in &off {
                let mut next = -x - (c * c) / d;
                if !next.is_finite() || next.abs() < pivmin {
                    next = -pivmin;
                }
                d = next;
                if d < 0.0 {
                    neg += 1;
                }
            }
            neg.saturating_sub(below_shift)
        };
        let mut hi0 = 0.0f64;
        for i in 0..=off.len() {
            let a = if i > 0 { off[i - 1] } else { 0.0 };
            let b = if i < off.len() { off[i] } else { 0.0 };
            hi0 = hi0.max(a + b);
        }
        hi0 *= 1.0 + 1e-12;
        let mut eigenvalues = Vec::with_capacity(wanted);
        let mut residuals = Vec::with_capacity(wanted);
        for k in 1..=wanted {
            let mut lo = 0.0f64;
            let mut hi = hi0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sigma_below(mid) >= k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            let sigma = 0.5 * (lo + hi);
            eigenvalues.push(sigma * sigma);
            residuals.push(if sigma > 0.0 { (hi - lo) / sigma } else { 0.0 });
        }
        Ok(RadialSpectrum { eigenvalues, residuals, kernel_dim })
    }
}

/// Radial reduction of the degree-p coexact pencil on a product of an
/// interval with a cross-section, for a profile h(r): stiffness weight
/// h^(n-2p-2), mass weight h^(n-2p), natural ends.
pub fn cylinder_problem(
    n: usize,
    p: usize,
    h: impl Fn(f64) -> f64,
    length: f64,
    n_points: usize,
) -> Result<RadialProblem> {
    check_degrees(n, p)?;
    let e1 = n as i32 - 2 * p as i32 - 2;
    let e0 = n as i32 - 2 * p as i32;
    RadialProblem::from_functions(
        length,
        n_points,
        |r| h(r).powi(e1),
        |r| h(r).powi(e0),
        RadialBoundary::NeumannBoth,
    )
}

/// Radial reduction over a ball-like region: the cross-section density
/// grows as c r^(n-p-1), the inner end is regular, and the outer end is a
/// zero condition so that test functions extend by zero across the boundary.
pub fn ball_problem(
    n: usize,
    p: usize,
    h: impl Fn(f64) -> f64,
    radius: f64,
    density_c: f64,
    n_points: usize,
) -> Result<RadialProblem> {
    check_degrees(n, p)?;
    if !(density_c.is_finite() && density_c > 0.0) {
        return Err(Error::InvalidSpec("density constant must be positive".into()));
    }
    let e1 = n as i32 - 2 * p as i32 - 2;
    let e0 = n as i32 - 2 * p as i32;
    let vexp = (n - p - 1) as i32;
    RadialProblem::from_functions(
        radius,
        n_points,
        |r| h(r).powi(e1) * density_c * r.powi(vexp),
        |r| h(r).powi(e0) * density_c * r.powi(vexp),
        RadialBoundary::OuterDirichlet,
    )
}

fn check_degrees(n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSpec("dimension must be positive".into()));
    }
    if p >= n {
        return Err(Error::InvalidSpec(format!(
            "form degree {p} must be below dimension {n}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn unit_interval_neumann() {
        let prob = cylinder_problem(1, 0, |_| 1.0, 1.0, 2001).unwrap();
        let s = prob.smallest_eigenvalues(3).unwrap();
        assert_eq!(s.kernel_dim, 1);
        assert_relative_eq!(s.eigenvalues[0], PI * PI, max_relative = 1e-6);
        assert_relative_eq!(s.eigenvalues[1], 4.0 * PI * PI, max_relative = 1e-5);
        assert_relative_eq!(s.eigenvalues[2], 9.0 * PI * PI, max_relative = 1e-5);
        assert!(s.residuals.iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn unit_interval_mixed_boundary() {
        let prob = RadialProblem::from_functions(
            1.0,
            2001,
            |_| 1.0,
            |_| 1.0,
            RadialBoundary::OuterDirichlet,
        )
        .unwrap();
        let s = prob.smallest_eigenvalues(2).unwrap();
        assert_eq!(s.kernel_dim, 0);
        // Neumann-Dirichlet interval: ((k + 1/2) pi)^2.
        assert_relative_eq!(s.eigenvalues[0], PI * PI / 4.0, max_relative = 1e-6);
        assert_relative_eq!(s.eigenvalues[1], 9.0 * PI * PI / 4.0, max_relative = 1e-6);
    }

    #[test]
    fn ball_density_reproduces_radial_bessel_zeros() {
        // n = 3, p = 0: -(r^2 f')' = mu r^2 f, regular at 0, zero at 1.
        // Eigenfunctions sin(k r)/r with sin(k) = 0: mu = (k pi)^2.
        let prob = ball_problem(3, 0, |_| 1.0, 1.0, 1.0, 2001).unwrap();
        let s = prob.smallest_eigenvalues(2).unwrap();
        assert_relative_eq!(s.eigenvalues[0], PI * PI, max_relative = 1e-5);
        assert_relative_eq!(s.eigenvalues[1], 4.0 * PI * PI, max_relative = 1e-5);
    }

    #[test]
    fn stiffness_application_matches_edge_energy() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let prob = cylinder_problem(5, 1, |r| 1.0 + r * r, 2.0, 50).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let f: Vec<f64> = (0..prob.n_unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let via_apply = prob.stiffness_energy(&f).unwrap();
        let dt = 2.0 / 49.0;
        let mut direct = 0.0;
        for e in 0..49 {
            let r = (e as f64 + 0.5) * dt;
            let w1 = (1.0f64 + r * r).powi(5 - 2 - 2);
            let df = f[e + 1] - f[e];
            direct += w1 * df * df / dt;
        }
        assert_relative_eq!(via_apply, direct, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_degree_rejected() {
        assert!(cylinder_problem(3, 3, |_| 1.0, 1.0, 10).is_err());
        assert!(ball_problem(0, 0, |_| 1.0, 1.0, 1.0, 10).is_err());
    }

    #[test]
    fn matches_complex_pencil_on_interval() {
        // A unit-weight path complex at degree 0 assembles exactly the same
        // pencil as the radial discretization of the unit interval, so the
        // two independent solvers must agree to solver precision.
        let k = crate::complex::ComplexSpec::path(101).build().unwrap();
        let h = crate::conformal::ConformalProfile::uniform(101, 1.0).unwrap();
        let s_complex =
            crate::eigen::coexact_spectrum(&k, &h, 0, &Default::default()).unwrap();
        let prob = cylinder_problem(1, 0, |_| 1.0, 1.0, 101).unwrap();
        let s_radial = prob.smallest_eigenvalues(5).unwrap();
        for (a, b) in s_radial.eigenvalues.iter().zip(s_complex.eigenvalues.iter().take(5)) {
            assert_relative_eq!(a, b, max_relative = 1e-11);
        }
    }

    #[test]
    fn constant_profile_scaling_law() {
        // A constant factor c rescales every eigenvalue by c^-2 exactly,
        // independently of n and p.
        let n = 7;
        let p = 2;
        let c = 3.0f64;
        let base = cylinder_problem(n, p, |_| 1.0, 1.0, 400).unwrap();
        let scaled = cylinder_problem(n, p, move |_| c, 1.0, 400).unwrap();
        let s0 = base.smallest_eigenvalues(4).unwrap();
        let s1 = scaled.smallest_eigenvalues(4).unwrap();
        for (a, b) in s0.eigenvalues.iter().zip(&s1.eigenvalues) {
            assert_relative_eq!(b, &(a / (c * c)), max_relative = 1e-12);
        }
    }
}

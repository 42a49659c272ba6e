//! Pinched conformal profiles and the small coexact eigenvalue they create.
//!
//! On an n-dimensional region fibered over a radial coordinate r in [0, R]
//! with cross-section density c r^(n-p-1), the profile drops from 1 to a
//! small eta across the middle of the interval:
//!
//! ```text
//! h = 1 on [0, R/4],   1 -> eta smoothly on [R/4, R/2],   eta on [R/2, R]
//! ```
//!
//! A degree-p test form equal to 1 inside the unit-profile region and cut
//! off to 0 across [R/2, 3R/4] gives the explicit Rayleigh bound
//!
//! ```text
//! mu_{p,1} <= eta^(n-2p-2) * int_{I3} f'^2 v dr / int_{I1} v dr
//! ```
//!
//! which decays like eta^(n-2p-2) whenever 1 <= p <= (n-3)/2.  The sweep
//! driver samples the discretized eigenvalue across eta and exposes the
//! log-log slope for comparison with that exponent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial::{ball_problem, cylinder_problem, RadialProblem, RadialSpectrum};

/// Largest degree p for which the pinch drives the degree-p coexact
/// eigenvalue to zero in dimension n (zero when no degree qualifies).
pub fn degree_limit(n: usize) -> usize {
    if n >= 5 {
        (n - 3) / 2
    } else {
        0
    }
}

/// Parameters of one pinched profile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PinchParams {
    /// Ambient dimension n.
    pub dimension: usize,
    /// Form degree p, in 1..=degree_limit(n).
    pub degree: usize,
    /// Pinch depth in (0, 1].
    pub eta: f64,
    /// Radial extent R of the fibered region.
    pub radius: f64,
    /// Reference volume of the whole space; the fibered region carries half
    /// of it when the profile is identically 1.
    pub total_volume: f64,
    /// Radial grid points.
    pub grid: usize,
}

impl PinchParams {
    pub fn new(dimension: usize, degree: usize, eta: f64) -> Result<Self> {
        let p = PinchParams {
            dimension,
            degree,
            eta,
            radius: 1.0,
            total_volume: 1.0,
            grid: 2000,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        let limit = degree_limit(n);
        if limit == 0 {
            return Err(Error::InvalidSpec(format!(
                "dimension {n} admits no pinchable degree (need n >= 5)"
            )));
        }
        if self.degree == 0 || self.degree > limit {
            return Err(Error::InvalidSpec(format!(
                "degree {} outside pinchable range 1..={limit} in dimension {n}",
                self.degree
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidSpec(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidSpec("radius must be positive".into()));
        }
        if !(self.total_volume.is_finite() && self.total_volume > 0.0) {
            return Err(Error::InvalidSpec("total volume must be positive".into()));
        }
        if self.grid < 3 {
            return Err(Error::InvalidSpec("grid needs at least 3 points".into()));
        }
        Ok(())
    }

    /// Cross-section density constant, fixed so the fibered region has
    /// volume total_volume/2 at profile 1.
    pub fn density_c(&self) -> f64 {
        let np = (self.dimension - self.degree) as f64;
        self.total_volume * np / (2.0 * self.radius.powf(np))
    }

    /// The radial profile value h(r).
    pub fn profile(&self, r: f64) -> f64 {
        let quarter = self.radius / 4.0;
        if r <= quarter {
            1.0
        } else if r < 2.0 * quarter {
            let x = (r - quarter) / quarter;
            1.0 + (self.eta - 1.0) * smoothstep(x)
        } else {
            self.eta
        }
    }

    /// Discretized radial pencil of the pinched region.
    pub fn operator(&self) -> Result<RadialProblem> {
        self.validate()?;
        let me = *self;
        ball_problem(
            self.dimension,
            self.degree,
            move |r| me.profile(r),
            self.radius,
            self.density_c(),
            self.grid,
        )
    }

    /// Smallest eigenvalues of the pinched pencil.
    pub fn smallest(&self, count: usize) -> Result<RadialSpectrum> {
        self.operator()?.smallest_eigenvalues(count)
    }

    /// Degree-q coexact pencil of the neighboring product region, which the
    /// same profile deforms without creating a small eigenvalue when
    /// q != degree.  Natural conditions at both ends.
    pub fn cylinder_spectrum(&self, q: usize, count: usize) -> Result<RadialSpectrum> {
        self.validate()?;
        let me = *self;
        let prob = cylinder_problem(
            self.dimension,
            q,
            move |r| me.profile(r),
            self.radius,
            self.grid,
        )?;
        prob.smallest_eigenvalues(count)
    }

    /// Explicit Rayleigh-quotient upper bound for the first coexact
    /// eigenvalue: cutoff energy over inner mass, scaling as
    /// eta^(n-2p-2).
    pub fn rayleigh_bound(&self) -> Result<f64> {
        self.validate()?;
        let n = self.dimension;
        let p = self.degree;
        let c = self.density_c();
        let vexp = (n - p - 1) as i32;
        let quarter = self.radius / 4.0;
        // Numerator: cutoff f drops 1 -> 0 across [R/2, 3R/4] by the same
        // smoothstep; f'(r) = -s'(x)/quarter with x = (r - R/2)/quarter.
        let steps = 8192;
        let mut num = 0.0;
        for i in 0..steps {
            let x = (i as f64 + 0.5) / steps as f64;
            let r = 2.0 * quarter + x * quarter;
            let fp = smoothstep_derivative(x) / quarter;
            num += fp * fp * c * r.powi(vexp) * (quarter / steps as f64);
        }
        // Denominator: exact mass of the inner quarter at profile 1.
        let np = (n - p) as f64;
        let den = c * quarter.powf(np) / np;
        let e = n as i32 - 2 * p as i32 - 2;
        Ok(self.eta.powi(e) * num / den)
    }

    /// Conformal volume of the whole space: the fibered region integrated
    /// against h^n plus the complement, which sits at profile eta and has
    /// reference volume total_volume/2.
    pub fn conformal_volume(&self) -> Result<f64> {
        self.validate()?;
        let n = self.dimension as i32;
        let vexp = (self.dimension - self.degree - 1) as i32;
        let c = self.density_c();
        let steps = 8192;
        let mut inner = 0.0;
        for i in 0..steps {
            let r = (i as f64 + 0.5) * self.radius / steps as f64;
            inner += self.profile(r).powi(n) * c * r.powi(vexp) * (self.radius / steps as f64);
        }
        Ok(inner + self.eta.powi(n) * self.total_volume / 2.0)
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn smoothstep_derivative(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    6.0 * x * (1.0 - x)
}

/// One row of a pinch sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinchRow {
    pub eta: f64,
    /// Smallest coexact eigenvalues of the pinched pencil, ascending.
    pub eigenvalues: Vec<f64>,
    /// Rayleigh upper bound for the first eigenvalue.
    pub upper_bound: f64,
    /// Conformal volume of the deformed space.
    pub volume: f64,
}

/// Sweeps the pinch depth and solves each pencil, in parallel over rows.
pub fn pinch_sweep(base: &PinchParams, etas: &[f64], count: usize) -> Result<Vec<PinchRow>> {
    base.validate()?;
    etas.par_iter()
        .map(|&eta| {
            let params = PinchParams { eta, ..*base };
            let spectrum = params.smallest(count)?;
            Ok(PinchRow {
                eta,
                eigenvalues: spectrum.eigenvalues,
                upper_bound: params.rayleigh_bound()?,
                volume: params.conformal_volume()?,
            })
        })
        .collect()
}

/// Least-squares slope of ln(y) against ln(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidSpec("slope fit needs at least two points".into()));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::InvalidSpec(
                "slope fit needs positive coordinates".into(),
            ));
        }
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::InvalidSpec("slope fit needs distinct x values".into()));
    }
    Ok((n * sxy - sx * sy) / denom)
}

/// Log-spaced grid from hi down to lo inclusive, `per_decade` points per
/// factor of ten.
pub fn log_grid(hi: f64, lo: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(hi > lo && lo > 0.0) || per_decade == 0 {
        return Err(Error::InvalidSpec("log grid needs hi > lo > 0".into()));
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    let steps = steps.max(1);
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        out.push(hi * (lo / hi).powf(t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degree_limit_by_dimension() {
        assert_eq!(degree_limit(4), 0);
        assert_eq!(degree_limit(5), 1);
        assert_eq!(degree_limit(6), 1);
        assert_eq!(degree_limit(7), 2);
        assert_eq!(degree_limit(8), 2);
        assert_eq!(degree_limit(9), 3);
    }

    #[test]
    fn params_validated() {
        assert!(PinchParams::new(5, 1, 0.5).is_ok());
        assert!(PinchParams::new(5, 2, 0.5).is_err());
        assert!(PinchParams::new(4, 1, 0.5).is_err());
        assert!(PinchParams::new(5, 0, 0.5).is_err());
        assert!(PinchParams::new(5, 1, 0.0).is_err());
        assert!(PinchParams::new(5, 1, 1.5).is_err());
    }

    #[test]
    fn bound_scales_exactly_with_eta() {
        let p1 = PinchParams::new(7, 1, 1.0).unwrap();
        let p2 = PinchParams { eta: 1e-3, ..p1 };
        let b1 = p1.rayleigh_bound().unwrap();
        let b2 = p2.rayleigh_bound().unwrap();
        // Exponent n - 2p - 2 = 3.
        assert_relative_eq!(b2 / b1, 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn volume_at_unit_profile_is_total() {
        let p = PinchParams::new(5, 1, 1.0).unwrap();
        assert_relative_eq!(p.conformal_volume().unwrap(), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn volume_decreases_with_eta() {
        let base = PinchParams::new(6, 1, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for eta in [1.0, 0.5, 0.1, 0.01] {
            let v = PinchParams { eta, ..base }.conformal_volume().unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn eigenvalue_below_bound_and_decaying() {
        let coarse = |eta: f64| PinchParams {
            eta,
            grid: 500,
            ..PinchParams::new(5, 1, 1.0).unwrap()
        };
        let p_hi = coarse(0.1);
        let p_lo = coarse(0.01);
        let mu_hi = p_hi.smallest(1).unwrap().eigenvalues[0];
        let mu_lo = p_lo.smallest(1).unwrap().eigenvalues[0];
        assert!(mu_hi <= p_hi.rayleigh_bound().unwrap());
        assert!(mu_lo <= p_lo.rayleigh_bound().unwrap());
        // Exponent n - 2p - 2 = 1: a decade in eta is about a decade in mu.
        let ratio = mu_lo / mu_hi;
        assert!(ratio < 0.2 && ratio > 0.05, "ratio {ratio}");
    }

    #[test]
    fn sweep_rows_are_ordered_and_complete() {
        let base = PinchParams { grid: 300, ..PinchParams::new(5, 1, 1.0).unwrap() };
        let etas = log_grid(1e-1, 1e-2, 4).unwrap();
        let rows = pinch_sweep(&base, &etas, 2).unwrap();
        assert_eq!(rows.len(), etas.len());
        for (row, &eta) in rows.iter().zip(&etas) {
            assert_eq!(row.eta, eta);
            assert_eq!(row.eigenvalues.len(), 2);
            assert!(row.eigenvalues[0] <= row.upper_bound);
        }
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = (1..=8)
            .map(|i| {
                let x = 10f64.powi(-i);
                (x, 3.5 * x.powf(2.25))
            })
            .collect();
        assert_relative_eq!(log_log_slope(&pts).unwrap(), 2.25, max_relative = 1e-10);
    }

    #[test]
    fn log_grid_spans_and_is_descending() {
        let g = log_grid(1e-1, 1e-4, 4).unwrap();
        assert_eq!(g.len(), 13);
        assert_relative_eq!(g[0], 1e-1, max_relative = 1e-12);
        assert_relative_eq!(g[12], 1e-4, max_relative = 1e-12);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}

//! Comparison and lower-bound machinery for covers and gluings.
//!
//! Three tools live here:
//!
//! * the quasi-isometry comparison: metrics within a pointwise ratio tau
//!   have all form eigenvalues within a factor tau^(3n-1);
//! * a cover bound: the k_q-th coexact eigenvalue of a space is bounded
//!   below through the first eigenvalues of a two-fold-intersecting open
//!   cover, its pairwise intersections, and a partition-of-unity gradient
//!   bound;
//! * an explicit gluing bound for a space cut into two overlapping pieces.
//!
//! The gluing denominator follows from a chain of norm estimates: a coexact
//! test form splits across the two pieces (one factor of each 1/mu_i); its
//! cutoff against the partition of unity pays the gradient constant against
//! the overlap's degree-(p-1) eigenvalue, twice per piece (the 4(c/mu+1)
//! (2/mu1 + 2/mu2) block); and the overlap's harmonic correction is
//! controlled by transporting a constant-length form from the overlap into
//! the second piece, which costs the volume ratio (entering squared because
//! the chain compares squared norms; a sharper variant would use the square
//! root of the ratio, the unsquared ratio is kept deliberately).

use serde::{Deserialize, Serialize};

use crate::complex::CellComplex;
use crate::conformal::{conformal_volume, ConformalProfile};
use crate::eigen::{coexact_spectrum, SolverOptions};
use crate::error::{Error, Result};

/// Enclosure for an eigenvalue under a quasi-isometry of ratio tau in
/// dimension n: [lambda tau^-(3n-1), lambda tau^(3n-1)].
pub fn dodziuk_interval(lambda: f64, tau: f64, n: usize) -> Result<(f64, f64)> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidSpec(format!("eigenvalue must be >= 0, got {lambda}")));
    }
    if !(tau.is_finite() && tau >= 1.0) {
        return Err(Error::InvalidSpec(format!("quasi-isometry ratio must be >= 1, got {tau}")));
    }
    let e = (3 * n) as i32 - 1;
    Ok((lambda * tau.powi(-e), lambda * tau.powi(e)))
}

/// Spectral data of one pairwise intersection of a cover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionData {
    /// Indices of the two overlapping domains.
    pub domains: (usize, usize),
    /// First coexact eigenvalue of the intersection one degree down.
    pub eigenvalue: f64,
    /// Harmonic dimension of the intersection at the bound's degree.
    pub harmonic_dim: usize,
}

/// Spectral data of an open cover without triple intersections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverData {
    /// First coexact eigenvalue of each domain at the bound's degree.
    pub domain_eigenvalues: Vec<f64>,
    /// One entry per unordered overlapping pair.
    pub intersections: Vec<IntersectionData>,
    /// Partition-of-unity gradient bound (1/length^2 units).
    pub gradient_bound: f64,
}

impl CoverData {
    pub fn validate(&self) -> Result<()> {
        if self.domain_eigenvalues.is_empty() {
            return Err(Error::InvalidSpec("cover has no domains".into()));
        }
        for mu in &self.domain_eigenvalues {
            if !(mu.is_finite() && *mu > 0.0) {
                return Err(Error::InvalidSpec(format!("domain eigenvalue must be > 0, got {mu}")));
            }
        }
        if !(self.gradient_bound.is_finite() && self.gradient_bound >= 0.0) {
            return Err(Error::InvalidSpec("gradient bound must be >= 0".into()));
        }
        let k = self.domain_eigenvalues.len();
        let mut seen = std::collections::BTreeSet::new();
        for inter in &self.intersections {
            let (i, j) = inter.domains;
            if i == j || i >= k || j >= k {
                return Err(Error::InvalidSpec(format!(
                    "intersection references invalid domain pair ({i}, {j})"
                )));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidSpec(format!("duplicate intersection pair ({i}, {j})")));
            }
            if !(inter.eigenvalue.is_finite() && inter.eigenvalue > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "intersection eigenvalue must be > 0, got {}",
                    inter.eigenvalue
                )));
            }
        }
        Ok(())
    }
}

/// Result of the cover bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McGowanBound {
    pub degree: usize,
    /// Index of the first eigenvalue the bound controls: 1 plus the summed
    /// harmonic dimensions of the intersections.
    pub k_q: usize,
    pub denominator: f64,
    /// a / denominator.
    pub bound: f64,
}

/// Cover lower bound with calibration constants a, b: each domain
/// contributes 1/mu_i plus, per neighboring domain j, the overlap term
/// (b c / mu_ij + 1)(1/mu_i + 1/mu_j); the bound is a over the total.
pub fn mcgowan_bound(data: &CoverData, degree: usize, a: f64, b: f64) -> Result<McGowanBound> {
    data.validate()?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidSpec("calibration constants must be positive".into()));
    }
    let mu = &data.domain_eigenvalues;
    let mut d: f64 = mu.iter().map(|m| 1.0 / m).sum();
    let mut k_q = 1usize;
    for inter in &data.intersections {
        let (i, j) = inter.domains;
        let term = (b * data.gradient_bound / inter.eigenvalue + 1.0) * (1.0 / mu[i] + 1.0 / mu[j]);
        // The overlap term appears once in domain i's sum and once in j's.
        d += 2.0 * term;
        k_q += inter.harmonic_dim;
    }
    Ok(McGowanBound { degree, k_q, denominator: d, bound: a / d })
}

/// Spectral data of a two-piece gluing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlueData {
    /// First coexact eigenvalues of the two pieces at the bound's degree.
    pub mu1: f64,
    pub mu2: f64,
    /// First coexact eigenvalue of the overlap one degree down.
    pub mu12: f64,
    /// Partition-of-unity gradient bound on the overlap.
    pub gradient_bound: f64,
    /// Volume of the second piece over the volume of the overlap.
    pub volume_ratio: f64,
}

impl GlueData {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu12", self.mu12),
            ("volume_ratio", self.volume_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSpec(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.gradient_bound.is_finite() && self.gradient_bound >= 0.0) {
            return Err(Error::InvalidSpec("gradient bound must be >= 0".into()));
        }
        Ok(())
    }
}

/// Denominator of the gluing bound; see the module docs for the chain of
/// estimates it assembles.
pub fn gluing_denominator(data: &GlueData) -> Result<f64> {
    data.validate()?;
    let GlueData { mu1, mu2, mu12, gradient_bound, volume_ratio } = *data;
    let split = 1.0 / mu1 + 1.0 / mu2;
    let cutoff = 4.0 * (gradient_bound / mu12 + 1.0) * (2.0 / mu1 + 2.0 / mu2);
    let harmonic = volume_ratio * volume_ratio * (2.0 / mu1 + 2.0 / mu2);
    Ok(3.0 * (split + cutoff + harmonic))
}

/// Lower bound for the first coexact eigenvalue of the glued space.
pub fn gluing_bound(data: &GlueData) -> Result<f64> {
    Ok(1.0 / gluing_denominator(data)?)
}

/// Gradient bound of the standard piecewise-linear partition of unity
/// across an overlap of the given width.
pub fn gradient_bound_from_width(width: f64) -> Result<f64> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidSpec("overlap width must be positive".into()));
    }
    Ok(1.0 / (width * width))
}

/// Assembles `CoverData` from vertex masks over a common complex: each
/// domain and each nonempty pairwise overlap becomes a full subcomplex, and
/// its first coexact eigenvalue is solved there (degree q on domains,
/// degree q-1 on overlaps; overlap harmonic dimensions at degree q).
pub fn cover_data_from_masks(
    complex: &CellComplex,
    profile: &ConformalProfile,
    masks: &[Vec<bool>],
    degree: usize,
    overlap_width: f64,
    opts: &SolverOptions,
) -> Result<CoverData> {
    if masks.is_empty() {
        return Err(Error::InvalidSpec("cover has no domains".into()));
    }
    if degree == 0 {
        return Err(Error::InvalidSpec("cover bound needs degree >= 1".into()));
    }
    let n0 = complex.n_cells(0);
    for m in masks {
        if m.len() != n0 {
            return Err(Error::DimensionMismatch("mask does not match vertex count".into()));
        }
    }
    let first_nonzero = |mask: &[bool], deg: usize| -> Result<f64> {
        let (sub, maps) = complex.subcomplex_by_vertices(mask)?;
        let sub_profile = profile.restrict(&maps[0])?;
        if deg >= sub.dimension() {
            return Err(Error::InvalidSpec(format!(
                "subdomain dimension {} too small for degree {deg}",
                sub.dimension()
            )));
        }
        let s = coexact_spectrum(&sub, &sub_profile, deg, opts)?;
        s.nonzero(1).ok_or_else(|| {
            Error::Infeasible(format!("subdomain has no nonzero degree-{deg} eigenvalue"))
        })
    };
    let mut domain_eigenvalues = Vec::with_capacity(masks.len());
    for mask in masks {
        domain_eigenvalues.push(first_nonzero(mask, degree)?);
    }
    let mut intersections = Vec::new();
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            let and_mask: Vec<bool> =
                masks[i].iter().zip(&masks[j]).map(|(a, b)| *a && *b).collect();
            if !and_mask.iter().any(|&k| k) {
                continue;
            }
            let (sub, maps) = complex.subcomplex_by_vertices(&and_mask)?;
            let _ = maps;
            let harmonic_dim = if degree <= sub.dimension() {
                sub.betti_numbers()[degree]
            } else {
                0
            };
            let eigenvalue = first_nonzero(&and_mask, degree - 1)?;
            intersections.push(IntersectionData { domains: (i, j), eigenvalue, harmonic_dim });
        }
    }
    let data = CoverData {
        domain_eigenvalues,
        intersections,
        gradient_bound: gradient_bound_from_width(overlap_width)?,
    };
    data.validate()?;
    Ok(data)
}

/// Assembles `GlueData` from two vertex masks: piece spectra at `degree`,
/// overlap spectrum one degree down, and the conformal volume ratio of the
/// second piece to the overlap.
pub fn glue_data_from_masks(
    complex: &CellComplex,
    profile: &ConformalProfile,
    mask1: &[bool],
    mask2: &[bool],
    degree: usize,
    overlap_width: f64,
    opts: &SolverOptions,
) -> Result<GlueData> {
    if degree == 0 {
        return Err(Error::InvalidSpec("gluing bound needs degree >= 1".into()));
    }
    let spectrum_on = |mask: &[bool], deg: usize| -> Result<f64> {
        let (sub, maps) = complex.subcomplex_by_vertices(mask)?;
        let sub_profile = profile.restrict(&maps[0])?;
        let s = coexact_spectrum(&sub, &sub_profile, deg, opts)?;
        s.nonzero(1)
            .ok_or_else(|| Error::Infeasible(format!("piece has no nonzero degree-{deg} eigenvalue")))
    };
    let and_mask: Vec<bool> = mask1.iter().zip(mask2).map(|(a, b)| *a && *b).collect();
    if !and_mask.iter().any(|&k| k) {
        return Err(Error::InvalidSpec("gluing pieces do not overlap".into()));
    }
    let volume_on = |mask: &[bool]| -> Result<f64> {
        let (sub, maps) = complex.subcomplex_by_vertices(mask)?;
        let sub_profile = profile.restrict(&maps[0])?;
        conformal_volume(&sub, &sub_profile)
    };
    let data = GlueData {
        mu1: spectrum_on(mask1, degree)?,
        mu2: spectrum_on(mask2, degree)?,
        mu12: spectrum_on(&and_mask, degree - 1)?,
        gradient_bound: gradient_bound_from_width(overlap_width)?,
        volume_ratio: volume_on(mask2)? / volume_on(&and_mask)?,
    };
    data.validate()?;
    Ok(data)
}

/// One randomized quasi-isometry comparison: the base and perturbed
/// profiles, the achieved ratio tau, and the eigenvalue ratios to contain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTrial {
    pub tau: f64,
    pub lo_factor: f64,
    pub hi_factor: f64,
    /// Pairwise ratios of perturbed to base nonzero eigenvalues.
    pub ratios: Vec<f64>,
    pub contained: bool,
}

/// Runs randomized conformal-pair comparisons at one degree: perturbs a
/// random base profile by per-vertex factors within [tau_max^-1/2,
/// tau_max^1/2], solves both coexact spectra, and checks every ratio
/// against the interval for the achieved tau.
pub fn comparison_trials(
    complex: &CellComplex,
    degree: usize,
    tau_max: f64,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<ComparisonTrial>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    if !(tau_max.is_finite() && tau_max >= 1.0) {
        return Err(Error::InvalidSpec(format!("tau must be >= 1, got {tau_max}")));
    }
    let n = complex.dimension();
    let n0 = complex.n_cells(0);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let base = ConformalProfile::from_values(
            (0..n0).map(|_| rng.gen_range(0.5..2.0)).collect(),
        )?;
        let spread = tau_max.sqrt().sqrt();
        let factors: Vec<f64> = if spread > 1.0 {
            (0..n0).map(|_| rng.gen_range(1.0 / spread..spread)).collect()
        } else {
            vec![1.0; n0]
        };
        let perturbed = base.pointwise_mul(&ConformalProfile::from_values(factors)?)?;
        let tau = base.metric_ratio(&perturbed)?;
        let s0 = coexact_spectrum(complex, &base, degree, opts)?;
        let s1 = coexact_spectrum(complex, &perturbed, degree, opts)?;
        let count = s0.eigenvalues.len().min(s1.eigenvalues.len());
        let mut ratios = Vec::with_capacity(count);
        let mut contained = true;
        let (mut lo_f, mut hi_f) = dodziuk_interval(1.0, tau, n)?;
        // Guard the open endpoints against solver roundoff.
        lo_f *= 1.0 - 1e-9;
        hi_f *= 1.0 + 1e-9;
        for k in 0..count {
            let r = s1.eigenvalues[k] / s0.eigenvalues[k];
            if !(r >= lo_f && r <= hi_f) {
                contained = false;
            }
            ratios.push(r);
        }
        out.push(ComparisonTrial { tau, lo_factor: lo_f, hi_factor: hi_f, ratios, contained });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::ComplexSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn interval_degenerate_at_ratio_one() {
        let (lo, hi) = dodziuk_interval(2.0, 1.0, 5).unwrap();
        assert_eq!(lo, 2.0);
        assert_eq!(hi, 2.0);
    }

    #[test]
    fn interval_exponent_three_n_minus_one() {
        let (lo, hi) = dodziuk_interval(1.0, 2.0, 5).unwrap();
        assert_eq!(lo, 2f64.powi(-14));
        assert_eq!(hi, 2f64.powi(14));
    }

    #[test]
    fn interval_rejects_bad_ratio() {
        assert!(dodziuk_interval(1.0, 0.5, 5).is_err());
        assert!(dodziuk_interval(-1.0, 2.0, 5).is_err());
    }

    #[test]
    fn cover_bound_single_domain() {
        let data = CoverData {
            domain_eigenvalues: vec![5.0],
            intersections: vec![],
            gradient_bound: 0.0,
        };
        let b = mcgowan_bound(&data, 1, 1.0, 1.0).unwrap();
        assert_eq!(b.k_q, 1);
        assert_eq!(b.denominator, 0.2);
        assert_eq!(b.bound, 5.0);
    }

    #[test]
    fn cover_bound_two_domain_hand_value() {
        let data = CoverData {
            domain_eigenvalues: vec![1.0, 1.0],
            intersections: vec![IntersectionData {
                domains: (0, 1),
                eigenvalue: 1.0,
                harmonic_dim: 0,
            }],
            gradient_bound: 1.0,
        };
        let b = mcgowan_bound(&data, 1, 1.0, 1.0).unwrap();
        assert_eq!(b.k_q, 1);
        assert_eq!(b.denominator, 10.0);
        assert_eq!(b.bound, 0.1);
    }

    #[test]
    fn cover_bound_counts_intersection_harmonics() {
        let data = CoverData {
            domain_eigenvalues: vec![1.0, 1.0],
            intersections: vec![IntersectionData {
                domains: (0, 1),
                eigenvalue: 1.0,
                harmonic_dim: 1,
            }],
            gradient_bound: 0.0,
        };
        let b = mcgowan_bound(&data, 1, 1.0, 1.0).unwrap();
        assert_eq!(b.k_q, 2);
    }

    #[test]
    fn glue_bound_hand_value() {
        let data = GlueData {
            mu1: 1.0,
            mu2: 1.0,
            mu12: 1.0,
            gradient_bound: 0.0,
            volume_ratio: 1.0,
        };
        assert_eq!(gluing_denominator(&data).unwrap(), 66.0);
        assert_eq!(gluing_bound(&data).unwrap(), 1.0 / 66.0);
    }

    #[test]
    fn glue_bound_improves_with_large_mu() {
        let mk = |mu: f64| GlueData {
            mu1: mu,
            mu2: mu,
            mu12: 1.0,
            gradient_bound: 1.0,
            volume_ratio: 1.0,
        };
        let b1 = gluing_bound(&mk(1.0)).unwrap();
        let b2 = gluing_bound(&mk(100.0)).unwrap();
        let b3 = gluing_bound(&mk(10000.0)).unwrap();
        assert!(b2 > b1 && b3 > b2);
        // In the large-mu limit the denominator is dominated by the mu12
        // cutoff block, which itself vanishes like 1/mu.
        assert_relative_eq!(b3 / b2, 100.0, max_relative = 0.1);
    }

    #[test]
    fn data_validation() {
        let mut data = CoverData {
            domain_eigenvalues: vec![],
            intersections: vec![],
            gradient_bound: 0.0,
        };
        assert!(mcgowan_bound(&data, 1, 1.0, 1.0).is_err());
        data.domain_eigenvalues = vec![1.0];
        data.intersections.push(IntersectionData {
            domains: (0, 0),
            eigenvalue: 1.0,
            harmonic_dim: 0,
        });
        assert!(mcgowan_bound(&data, 1, 1.0, 1.0).is_err());
        let glue = GlueData {
            mu1: 0.0,
            mu2: 1.0,
            mu12: 1.0,
            gradient_bound: 0.0,
            volume_ratio: 1.0,
        };
        assert!(gluing_bound(&glue).is_err());
    }

    #[test]
    fn torus_cover_data_from_masks() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(8), ComplexSpec::cycle(8)]);
        let k = spec.build().unwrap();
        let h = ConformalProfile::uniform(k.n_cells(0), 1.0).unwrap();
        // Two overlapping bands in the second coordinate covering the torus.
        let coord = |v: usize| k.vertex_coords()[v][1];
        let mask1: Vec<bool> = (0..64).map(|v| coord(v) < 0.625).collect();
        let mask2: Vec<bool> = (0..64).map(|v| coord(v) >= 0.5 || coord(v) < 0.125).collect();
        let data =
            cover_data_from_masks(&k, &h, &[mask1, mask2], 1, 0.125, &SolverOptions::default())
                .unwrap();
        assert_eq!(data.domain_eigenvalues.len(), 2);
        assert_eq!(data.intersections.len(), 1);
        assert!(data.domain_eigenvalues.iter().all(|m| *m > 0.0));
        // The overlap is two disjoint bands, each a cylinder: two degree-1
        // harmonic classes in total.
        assert_eq!(data.intersections[0].harmonic_dim, 2);
        let b = mcgowan_bound(&data, 1, 1.0, 1.0).unwrap();
        assert_eq!(b.k_q, 3);
        assert!(b.bound > 0.0);
    }

    #[test]
    fn comparison_trials_contained_on_torus() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(4), ComplexSpec::cycle(4)]);
        let k = spec.build().unwrap();
        let trials =
            comparison_trials(&k, 0, 1.5, 5, 7, &SolverOptions::default()).unwrap();
        assert_eq!(trials.len(), 5);
        for t in &trials {
            assert!(t.tau <= 1.5 + 1e-12);
            assert!(t.contained, "ratios {:?} outside [{}, {}]", t.ratios, t.lo_factor, t.hi_factor);
        }
    }

    #[test]
    fn comparison_at_tau_one_gives_unit_ratios() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(4), ComplexSpec::path(3)]);
        let k = spec.build().unwrap();
        let trials =
            comparison_trials(&k, 1, 1.0, 3, 11, &SolverOptions::default()).unwrap();
        for t in &trials {
            assert_eq!(t.tau, 1.0);
            assert!(t.contained);
            for r in &t.ratios {
                assert_eq!(*r, 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn cover_bound_monotone_in_domain_eigenvalue(
            mu in 0.01f64..100.0,
            bump in 1.0f64..10.0,
            other in 0.01f64..100.0,
            inter in 0.01f64..100.0,
            grad in 0.0f64..50.0,
        ) {
            let mk = |m1: f64| CoverData {
                domain_eigenvalues: vec![m1, other],
                intersections: vec![IntersectionData {
                    domains: (0, 1),
                    eigenvalue: inter,
                    harmonic_dim: 0,
                }],
                gradient_bound: grad,
            };
            let b1 = mcgowan_bound(&mk(mu), 1, 1.0, 1.0).unwrap().bound;
            let b2 = mcgowan_bound(&mk(mu * bump), 1, 1.0, 1.0).unwrap().bound;
            prop_assert!(b2 >= b1);
        }

        #[test]
        fn cover_bound_monotone_in_gradient(
            mu in 0.01f64..100.0,
            inter in 0.01f64..100.0,
            grad in 0.0f64..50.0,
            bump in 1.0f64..10.0,
        ) {
            let mk = |g: f64| CoverData {
                domain_eigenvalues: vec![mu, mu],
                intersections: vec![IntersectionData {
                    domains: (0, 1),
                    eigenvalue: inter,
                    harmonic_dim: 0,
                }],
                gradient_bound: g,
            };
            let b1 = mcgowan_bound(&mk(grad), 1, 1.0, 1.0).unwrap().bound;
            let b2 = mcgowan_bound(&mk(grad * bump), 1, 1.0, 1.0).unwrap().bound;
            prop_assert!(b2 <= b1);
        }

        #[test]
        fn glue_bound_monotonicity(
            mu1 in 0.01f64..100.0,
            mu2 in 0.01f64..100.0,
            mu12 in 0.01f64..100.0,
            grad in 0.0f64..50.0,
            ratio in 0.1f64..50.0,
            bump in 1.0f64..10.0,
        ) {
            let base = GlueData { mu1, mu2, mu12, gradient_bound: grad, volume_ratio: ratio };
            let b0 = gluing_bound(&base).unwrap();
            for better in [
                GlueData { mu1: mu1 * bump, ..base },
                GlueData { mu2: mu2 * bump, ..base },
                GlueData { mu12: mu12 * bump, ..base },
            ] {
                prop_assert!(gluing_bound(&better).unwrap() >= b0);
            }
            for worse in [
                GlueData { gradient_bound: grad * bump, ..base },
                GlueData { volume_ratio: ratio * bump, ..base },
            ] {
                prop_assert!(gluing_bound(&worse).unwrap() <= b0);
            }
        }
    }
}

//! Prescribing coexact eigenvalues and volume inside a conformal class.
//!
//! The model manifold is a connected sum: a coarse base sphere surrogate
//! whose own spectrum sits far above the targets, plus one pinched-sphere
//! surrogate per target, attached by thin tube handles.  Each pinched piece
//! contributes exactly one small coexact eigenvalue at its degree; a
//! homothety factor c places it, and the base absorbs the remaining volume.
//! The driver iterates the evaluation map
//!
//! ```text
//! Phi: (V, xi) -> (achieved volume, achieved mu)
//! ```
//!
//! by damped fixed point (xi <- xi + (nu - achieved)/2), refining the handle
//! radius on a schedule, with a coordinate bisection fallback for the
//! single-target case.  Phi is deterministic for fixed inputs, and scaling
//! every homothety factor by s (with volume by s^n) scales achieved
//! eigenvalues by exactly s^-2, which the tests pin down to machine
//! precision.
//!
//! Continuity of the discrete map in (eta, c) is an empirical assumption of
//! the solver; the iteration reports its best point with a failure flag
//! when the evaluation budget runs out instead of relying on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{CellComplex, ComplexSpec};
use crate::conformal::{conformal_volume, ConformalProfile};
use crate::eigen::{coexact_spectrum, SolverOptions};
use crate::error::{Error, Result};
use crate::handle::{glue_complexes, Attachment, HandleSpec};
use crate::pinch::degree_limit;

/// Requested invariants: volume and per-degree strictly increasing
/// coexact eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrescriptionTarget {
    /// Model dimension n >= 5.
    #[serde(rename = "n")]
    pub dimension: usize,
    /// Targets per degree.
    #[serde(rename = "N")]
    pub per_degree: usize,
    /// nu[p - 1][i]: targets for degree p = 1..=k where k = nu.len().
    pub nu: Vec<Vec<f64>>,
    /// Requested total volume.
    #[serde(rename = "V0")]
    pub total_volume: f64,
    /// Box half-width for the parameter domain; must stay below half the
    /// smallest target gap, below the smallest target, and below V0.
    pub delta: f64,
}

impl PrescriptionTarget {
    /// Number of prescribed degrees k.
    pub fn degrees(&self) -> usize {
        self.nu.len()
    }

    pub fn max_target(&self) -> f64 {
        self.nu.iter().flatten().cloned().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        let k = self.degrees();
        if n < 5 {
            return Err(Error::InvalidSpec("prescription needs dimension >= 5".into()));
        }
        if k == 0 || self.per_degree == 0 {
            return Err(Error::InvalidSpec("no targets requested".into()));
        }
        if k > degree_limit(n) {
            return Err(Error::InvalidSpec(format!(
                "cannot prescribe degrees above {} in dimension {n}",
                degree_limit(n)
            )));
        }
        if !(self.total_volume.is_finite() && self.total_volume > 0.0) {
            return Err(Error::InvalidSpec("target volume must be positive".into()));
        }
        let mut min_gap = f64::INFINITY;
        let mut min_target = f64::INFINITY;
        for row in &self.nu {
            if row.len() != self.per_degree {
                return Err(Error::InvalidSpec(format!(
                    "expected {} targets per degree, got {}",
                    self.per_degree,
                    row.len()
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidSpec("targets must be positive".into()));
                }
                min_target = min_target.min(v);
                if i > 0 {
                    if v <= row[i - 1] {
                        return Err(Error::Infeasible(
                            "targets must increase strictly within each degree".into(),
                        ));
                    }
                    min_gap = min_gap.min(v - row[i - 1]);
                }
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidSpec("margin must be positive".into()));
        }
        if self.delta >= min_gap / 2.0 {
            return Err(Error::Infeasible(format!(
                "margin {} must stay below half the smallest target gap {}",
                self.delta,
                min_gap / 2.0
            )));
        }
        if self.delta >= min_target || self.delta >= self.total_volume {
            return Err(Error::Infeasible(
                "margin must stay below every target and the volume".into(),
            ));
        }
        Ok(())
    }
}

/// A point in the parameter box of the evaluation map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterPoint {
    /// Volume coordinate in [V0 - delta, V0 + delta].
    pub volume: f64,
    /// Eigenvalue coordinates xi[p - 1][i] in [nu - delta, nu + delta].
    pub xi: Vec<Vec<f64>>,
    /// Pinch strength per target.
    pub eta: Vec<Vec<f64>>,
    /// Homothety factor per target.
    pub c: Vec<Vec<f64>>,
}

/// One evaluation of the map: achieved invariants plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiValue {
    pub volume: f64,
    /// Achieved mu[p - 1][i]: the per_degree smallest coexact values at
    /// each prescribed degree.
    pub mu: Vec<Vec<f64>>,
    /// The next coexact value above the targeted ones, per degree.
    pub next: Vec<f64>,
    /// Homothety applied to the base piece by the volume closure.
    pub base_scale: f64,
    /// True when achieved values are closer than the grouping threshold,
    /// making their ordering against the targets ambiguous.
    pub grouping_ambiguous: bool,
}

/// One pinched-sphere surrogate shared by all targets of one degree.
#[derive(Debug, Clone)]
struct PieceModel {
    complex: CellComplex,
    /// Cyclic distance of each vertex from the pinched fiber.
    dist: Vec<f64>,
    /// Half-circumference of the distance coordinate.
    r_eff: f64,
    /// Attachment loop on the far (pure homothety) side.
    loop_verts: Vec<usize>,
    /// Calibrated pinch strength.
    eta0: f64,
    /// Smallest coexact value of the pinched piece at its degree.
    mu_bar: f64,
}

fn pinch_value(d: f64, r_eff: f64, eta: f64) -> f64 {
    let a = r_eff / 4.0;
    if d <= a {
        1.0
    } else if d < 2.0 * a {
        let t = (d - a) / a;
        1.0 + (eta - 1.0) * (3.0 * t * t - 2.0 * t * t * t)
    } else {
        eta
    }
}

impl PieceModel {
    fn pinch_profile(&self, eta: f64) -> Result<ConformalProfile> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidProfile(format!("pinch strength {eta} outside (0, 1]")));
        }
        ConformalProfile::from_values(
            self.dist.iter().map(|&d| pinch_value(d, self.r_eff, eta)).collect(),
        )
    }
}

/// The evaluation model: base complex, per-degree pieces, and everything
/// the map needs that does not change between evaluations.
#[derive(Debug, Clone)]
pub struct PrescriptionModel {
    target: PrescriptionTarget,
    opts: SolverOptions,
    base: CellComplex,
    base_vol: f64,
    /// Edge-disjoint attachment loops on the base, one per target slot.
    base_loops: Vec<Vec<usize>>,
    pieces: Vec<PieceModel>,
    /// Handle length.
    pub length: f64,
    /// Longitudinal handle resolution.
    pub resolution: usize,
}

/// The glued complex at one handle radius; parameter points only change
/// the conformal profile on top of it, so boundary ranks are shared
/// between evaluations.
#[derive(Debug)]
pub struct GluedStage {
    pub epsilon: f64,
    pub complex: CellComplex,
    base_n0: usize,
    /// Final vertex ids of each target slot's piece, in piece-local order.
    piece_vertices: Vec<Vec<usize>>,
    /// Handle vertices per slot with their longitudinal coordinate.
    handle_regions: Vec<Vec<(usize, f64)>>,
    /// Handle bump factor per final vertex, 1 outside the handles.
    axis: Vec<f64>,
}

/// Ratio below which the second pinched eigenvalue endangers the spectral
/// gap after homothety; calibration shrinks eta until it is exceeded.
const CALIBRATION_RATIO: f64 = 8.0;

impl PrescriptionModel {
    pub fn new(target: &PrescriptionTarget, opts: &SolverOptions) -> Result<Self> {
        target.validate()?;
        let n = target.dimension;
        let k = target.degrees();
        let base = ComplexSpec::simplex_boundary(n + 1).build()?;
        let unit = ConformalProfile::uniform(base.n_cells(0), 1.0)?;
        let base_vol = conformal_volume(&base, &unit)?;
        let base_loops = disjoint_four_loops(base.n_cells(0), k * target.per_degree)?;
        let pieces: Result<Vec<PieceModel>> = (1..=k).map(|p| build_piece(n, p, opts)).collect();
        Ok(PrescriptionModel {
            target: target.clone(),
            opts: opts.clone(),
            base,
            base_vol,
            base_loops,
            pieces: pieces?,
            length: 0.1,
            resolution: 4,
        })
    }

    pub fn target(&self) -> &PrescriptionTarget {
        &self.target
    }

    /// Calibrated pinch strength per degree.
    pub fn eta0(&self, degree: usize) -> f64 {
        self.pieces[degree - 1].eta0
    }

    /// Reference small eigenvalue of the pinched piece per degree.
    pub fn mu_bar(&self, degree: usize) -> f64 {
        self.pieces[degree - 1].mu_bar
    }

    /// The parameter point the driver uses: homothety factors are derived
    /// from the eigenvalue coordinates by c = sqrt(mu_bar / xi).
    pub fn point_from_xi(&self, volume: f64, xi: &[Vec<f64>]) -> Result<ParameterPoint> {
        if xi.len() != self.target.degrees() {
            return Err(Error::DimensionMismatch("one xi row per degree required".into()));
        }
        let mut eta = Vec::with_capacity(xi.len());
        let mut c = Vec::with_capacity(xi.len());
        for (p_idx, row) in xi.iter().enumerate() {
            if row.len() != self.target.per_degree {
                return Err(Error::DimensionMismatch("xi row length mismatch".into()));
            }
            let piece = &self.pieces[p_idx];
            let mut eta_row = Vec::with_capacity(row.len());
            let mut c_row = Vec::with_capacity(row.len());
            for &x in row {
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::InvalidSpec("xi coordinates must be positive".into()));
                }
                eta_row.push(piece.eta0);
                c_row.push((piece.mu_bar / x).sqrt());
            }
            eta.push(eta_row);
            c.push(c_row);
        }
        Ok(ParameterPoint { volume, xi: xi.to_vec(), eta, c })
    }

    /// Builds the glued complex at one handle radius.  Evaluations at the
    /// same radius share it, so the integer rank cache is computed once.
    pub fn build_stage(&self, epsilon: f64) -> Result<GluedStage> {
        let nslots = self.target.degrees() * self.target.per_degree;
        let mut complex = self.base.clone();
        let mut axis = vec![1.0f64; self.base.n_cells(0)];
        let mut piece_vertices = Vec::with_capacity(nslots);
        let mut handle_regions = Vec::with_capacity(nslots);
        for slot in 0..nslots {
            let piece = &self.pieces[slot / self.target.per_degree];
            let spec = HandleSpec {
                epsilon,
                length: self.length,
                resolution: self.resolution,
                left: Attachment::Circle(self.base_loops[slot].clone()),
                right: Attachment::Circle(piece.loop_verts.clone()),
            };
            let glued = glue_complexes(&complex, &piece.complex, &spec)?;
            debug_assert!(glued.left_vertex_map.iter().enumerate().all(|(i, &v)| i == v));
            let n_new = glued.complex.n_cells(0);
            let bump = glued.profile.values();
            axis.extend((axis.len()..n_new).map(|v| bump[v]));
            piece_vertices.push(glued.right_vertex_map);
            handle_regions.push(glued.handle_vertices);
            complex = glued.complex;
        }
        Ok(GluedStage {
            epsilon,
            complex,
            base_n0: self.base.n_cells(0),
            piece_vertices,
            handle_regions,
            axis,
        })
    }

    /// Homothety for the base piece closing the volume budget.
    fn base_scale(&self, point: &ParameterPoint) -> Result<f64> {
        let n = self.target.dimension as i32;
        let mut rest = point.volume;
        for p_idx in 0..self.target.degrees() {
            let piece = &self.pieces[p_idx];
            for i in 0..self.target.per_degree {
                let prof = piece.pinch_profile(point.eta[p_idx][i])?;
                let vol = conformal_volume(&piece.complex, &prof)?;
                rest -= point.c[p_idx][i].powi(n) * vol;
            }
        }
        if rest <= 0.0 {
            return Err(Error::Infeasible(format!(
                "pieces use the whole volume budget (left {rest:.3e})"
            )));
        }
        Ok((rest / self.base_vol).powf(1.0 / n as f64))
    }

    /// The conformal profile realizing a parameter point on a stage:
    /// pinch times homothety on the pieces, the closing homothety on the
    /// base, and the handle bump bridging the two end scales geometrically.
    pub fn compose_profile(
        &self,
        stage: &GluedStage,
        point: &ParameterPoint,
    ) -> Result<ConformalProfile> {
        let c_base = self.base_scale(point)?;
        let mut values = vec![0.0f64; stage.complex.n_cells(0)];
        for v in values.iter_mut().take(stage.base_n0) {
            *v = c_base;
        }
        let per = self.target.per_degree;
        for (slot, ids) in stage.piece_vertices.iter().enumerate() {
            let piece = &self.pieces[slot / per];
            let c = point.c[slot / per][slot % per];
            let pinch = piece.pinch_profile(point.eta[slot / per][slot % per])?;
            for (orig, &id) in ids.iter().enumerate() {
                values[id] = pinch.values()[orig] * c;
            }
        }
        for (slot, region) in stage.handle_regions.iter().enumerate() {
            let c = point.c[slot / per][slot % per];
            let eta = point.eta[slot / per][slot % per];
            let end_left = c_base;
            let end_right = eta * c;
            for &(id, t) in region {
                values[id] = stage.axis[id] * end_left.powf(1.0 - t) * end_right.powf(t);
            }
        }
        ConformalProfile::from_values(values)
    }

    /// Evaluates the map on a prebuilt stage.
    pub fn phi_stage(&self, stage: &GluedStage, point: &ParameterPoint) -> Result<PhiValue> {
        let profile = self.compose_profile(stage, point)?;
        let c_base = self.base_scale(point)?;
        let per = self.target.per_degree;
        let mut opts = self.opts.clone();
        opts.n_eigenvalues = opts.n_eigenvalues.max(per + 1);
        let degrees: Vec<usize> = (1..=self.target.degrees()).collect();
        let slices: Result<Vec<_>> = degrees
            .par_iter()
            .map(|&p| coexact_spectrum(&stage.complex, &profile, p, &opts))
            .collect();
        let slices = slices?;
        let mut mu = Vec::with_capacity(slices.len());
        let mut next = Vec::with_capacity(slices.len());
        let mut ambiguous = false;
        for s in &slices {
            if s.eigenvalues.len() < per + 1 {
                return Err(Error::NonConvergence {
                    context: format!("degree {} returned too few eigenvalues", s.degree),
                    residual: f64::NAN,
                });
            }
            let head: Vec<f64> = s.eigenvalues[..per].to_vec();
            let above = s.eigenvalues[per];
            for w in head.windows(2) {
                if (w[1] - w[0]).abs() <= 1e-9 * w[1].abs() {
                    ambiguous = true;
                }
            }
            if (above - head[per - 1]) <= 1e-6 * above {
                ambiguous = true;
            }
            mu.push(head);
            next.push(above);
        }
        let volume = conformal_volume(&stage.complex, &profile)?;
        Ok(PhiValue { volume, mu, next, base_scale: c_base, grouping_ambiguous: ambiguous })
    }

    /// The evaluation map at an explicit handle radius.
    pub fn phi_map(&self, point: &ParameterPoint, epsilon: f64) -> Result<PhiValue> {
        let stage = self.build_stage(epsilon)?;
        self.phi_stage(&stage, point)
    }

    /// First coexact value one degree above the prescribed range; the
    /// spectral-gap guard requires it to exceed every target.
    pub fn guard_value(&self, stage: &GluedStage, point: &ParameterPoint) -> Result<f64> {
        let profile = self.compose_profile(stage, point)?;
        let s = coexact_spectrum(&stage.complex, &profile, self.target.degrees() + 1, &self.opts)?;
        s.eigenvalues.first().copied().ok_or_else(|| Error::NonConvergence {
            context: "guard degree returned no eigenvalues".into(),
            residual: f64::NAN,
        })
    }
}

/// Greedy edge-disjoint 4-vertex loops in the base 1-skeleton (complete
/// graph): enough attachment sites for every target slot.
fn disjoint_four_loops(n_vertices: usize, count: usize) -> Result<Vec<Vec<usize>>> {
    let mut used: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
    let mut loops = Vec::with_capacity(count);
    let combos = four_subsets(n_vertices);
    for quad in combos {
        if loops.len() == count {
            break;
        }
        let ring = [quad[0], quad[1], quad[2], quad[3]];
        let edges: Vec<(usize, usize)> = (0..4)
            .map(|i| {
                let a = ring[i];
                let b = ring[(i + 1) % 4];
                (a.min(b), a.max(b))
            })
            .collect();
        if edges.iter().any(|e| used.contains(e)) {
            continue;
        }
        used.extend(edges);
        loops.push(ring.to_vec());
    }
    if loops.len() < count {
        return Err(Error::Infeasible(format!(
            "base complex offers only {} disjoint attachment loops, need {count}",
            loops.len()
        )));
    }
    Ok(loops)
}

fn four_subsets(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    out.push(vec![a, b, c, d]);
                }
            }
        }
    }
    out
}

/// Latitude rows of the pinch sphere.
const SPHERE_ROWS: usize = 7;
/// Vertices per latitude circle; matches the 4-loop attachment sites.
const SPHERE_SEGMENTS: usize = 4;

/// A two-sphere as a latitude grid capped by two polygonal cells.  The
/// equator is a genuine circle of edges, and the latitude coordinate gives
/// the pinch profile several stations between equator and poles.
fn build_two_sphere(rows: usize, segments: usize) -> Result<CellComplex> {
    let grid = crate::complex::product(
        &ComplexSpec::path(rows).build()?,
        &ComplexSpec::cycle(segments).build()?,
    )?;
    let mut boundary: Vec<Vec<Vec<(usize, i8)>>> =
        (0..=2).map(|k| grid.boundary_entries(k).to_vec()).collect();
    let mut star: Vec<Vec<f64>> = (0..=2).map(|k| grid.star_weights(k).to_vec()).collect();
    let mut volume: Vec<Vec<f64>> = (0..=2).map(|k| grid.volume_weights(k).to_vec()).collect();
    // Theta edges sit in the leading product block, contiguous per row.
    let ell_theta = 1.0 / segments as f64;
    let ell_lat = 1.0 / (rows - 1) as f64;
    let cap_area = segments as f64 * ell_theta * ell_lat / 4.0;
    for row in [0, rows - 1] {
        let edges: Vec<(usize, i8)> = (0..segments).map(|j| (row * segments + j, 1i8)).collect();
        boundary[2].push(edges);
        star[2].push(1.0 / cap_area);
        volume[2].push(cap_area);
    }
    CellComplex::from_parts(2, boundary, star, volume, grid.vertex_coords().to_vec())
}

/// Builds the degree-1 piece: the capped sphere times a sphere surrogate
/// filling the dimension, pinched around the equator circle, then
/// calibrates the pinch strength so the piece keeps a wide spectral gap
/// above its one small eigenvalue.
fn build_piece(n: usize, p: usize, opts: &SolverOptions) -> Result<PieceModel> {
    if p != 1 {
        return Err(Error::Infeasible(
            "prescription pieces are implemented for degree-1 targets only".into(),
        ));
    }
    let sphere = build_two_sphere(SPHERE_ROWS, SPHERE_SEGMENTS)?;
    let filler = ComplexSpec::simplex_boundary(n - 1).build()?;
    let complex = crate::complex::product(&sphere, &filler)?;
    debug_assert_eq!(complex.dimension(), n);
    // Latitude runs over [0, 1]; the pinched circle is the equator.
    let dist: Vec<f64> = complex.vertex_coords().iter().map(|c| (c[0] - 0.5).abs()).collect();
    let r_eff = 0.5;
    // Attachment loop: the top latitude circle, deep in the homothety
    // region on both the sphere and the filler factor.
    let filler_cells = n;
    let loop_verts: Vec<usize> = (0..SPHERE_SEGMENTS)
        .map(|j| ((SPHERE_ROWS - 1) * SPHERE_SEGMENTS + j) * filler_cells)
        .collect();
    let mut model = PieceModel { complex, dist, r_eff, loop_verts, eta0: 1.0, mu_bar: 0.0 };
    for &eta in &[0.2, 0.12, 0.07, 0.04, 0.02] {
        let prof = model.pinch_profile(eta)?;
        let spectrum = coexact_spectrum(&model.complex, &prof, p, opts)?;
        if spectrum.eigenvalues.len() < 2 {
            continue;
        }
        let mu1 = spectrum.eigenvalues[0];
        let mu2 = spectrum.eigenvalues[1];
        if mu2 / mu1 >= CALIBRATION_RATIO {
            model.eta0 = eta;
            model.mu_bar = mu1;
            return Ok(model);
        }
    }
    Err(Error::Infeasible(format!(
        "could not calibrate a pinch with spectral gap {CALIBRATION_RATIO} at degree {p}"
    )))
}

/// Result of a prescription run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrescriptionOutcome {
    pub point: ParameterPoint,
    pub achieved_volume: f64,
    pub achieved_mu: Vec<Vec<f64>>,
    /// Next coexact value above the targets, per prescribed degree.
    pub next_values: Vec<f64>,
    /// First coexact value at degree k + 1.
    pub guard_value: f64,
    /// Whether the guard and the per-degree next values all exceed the
    /// largest target.
    pub guard_ok: bool,
    /// Worst relative error over volume and all targets.
    pub residual: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Handle radius of the accepted evaluation.
    pub epsilon: f64,
}

fn residual_of(target: &PrescriptionTarget, val: &PhiValue) -> f64 {
    let mut r = (val.volume - target.total_volume).abs() / target.total_volume;
    for (row, nrow) in val.mu.iter().zip(&target.nu) {
        for (m, nu) in row.iter().zip(nrow) {
            r = r.max((m - nu).abs() / nu);
        }
    }
    r
}

/// Runs the damped fixed-point driver over the handle-radius schedule.
pub fn prescribe(
    target: &PrescriptionTarget,
    tol: f64,
    eps_schedule: &[f64],
    max_evals: usize,
    opts: &SolverOptions,
) -> Result<PrescriptionOutcome> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidSpec("tolerance must be positive".into()));
    }
    if eps_schedule.is_empty() || eps_schedule.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidSpec("radius schedule must be strictly decreasing".into()));
    }
    let model = PrescriptionModel::new(target, opts)?;
    let k = target.degrees();
    let per = target.per_degree;
    let mut xi = target.nu.clone();
    let mut volume = target.total_volume;
    let mut evals = 0usize;
    let mut best: Option<(f64, ParameterPoint, PhiValue, f64)> = None;
    let clamp = |x: f64, mid: f64| x.clamp(mid - target.delta, mid + target.delta);
    let mut converged = false;
    let mut last_stage: Option<GluedStage> = None;
    'schedule: for (si, &eps) in eps_schedule.iter().enumerate() {
        let stage = model.build_stage(eps)?;
        let mut prev = f64::INFINITY;
        let mut stalls = 0usize;
        for _ in 0..max_evals {
            if evals >= max_evals {
                last_stage = Some(stage);
                break 'schedule;
            }
            let point = model.point_from_xi(volume, &xi)?;
            let val = model.phi_stage(&stage, &point)?;
            evals += 1;
            let resid = residual_of(target, &val);
            if best.as_ref().map_or(true, |b| resid < b.0) {
                best = Some((resid, point, val.clone(), eps));
            }
            if resid <= tol {
                converged = true;
                last_stage = Some(stage);
                break 'schedule;
            }
            if resid > 0.9 * prev {
                stalls += 1;
            } else {
                stalls = 0;
            }
            if stalls >= 2 && si + 1 < eps_schedule.len() {
                break;
            }
            prev = resid;
            for p_idx in 0..k {
                for i in 0..per {
                    let step = 0.5 * (target.nu[p_idx][i] - val.mu[p_idx][i]);
                    xi[p_idx][i] = clamp(xi[p_idx][i] + step, target.nu[p_idx][i]);
                }
            }
            volume = clamp(volume + 0.5 * (target.total_volume - val.volume), target.total_volume);
        }
        if si + 1 == eps_schedule.len() {
            last_stage = Some(stage);
        }
    }
    // Coordinate bisection fallback for the single-target case.
    if !converged && k == 1 && per == 1 && evals < max_evals {
        let stage = match last_stage.take() {
            Some(s) => s,
            None => model.build_stage(*eps_schedule.last().expect("nonempty schedule"))?,
        };
        let nu = target.nu[0][0];
        for _round in 0..2 {
            let (mut lo, mut hi) = (nu - target.delta, nu + target.delta);
            while hi - lo > tol * nu / 4.0 && evals < max_evals {
                let mid = (lo + hi) / 2.0;
                let point = model.point_from_xi(volume, &[vec![mid]])?;
                let val = model.phi_stage(&stage, &point)?;
                evals += 1;
                let resid = residual_of(target, &val);
                if best.as_ref().map_or(true, |b| resid < b.0) {
                    best = Some((resid, point, val.clone(), stage.epsilon));
                }
                if resid <= tol {
                    converged = true;
                    break;
                }
                if val.mu[0][0] < nu {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            xi[0][0] = (lo + hi) / 2.0;
            if converged || evals >= max_evals {
                break;
            }
            let (mut vlo, mut vhi) =
                (target.total_volume - target.delta, target.total_volume + target.delta);
            while vhi - vlo > tol * target.total_volume / 4.0 && evals < max_evals {
                let mid = (vlo + vhi) / 2.0;
                let point = model.point_from_xi(mid, &xi)?;
                let val = model.phi_stage(&stage, &point)?;
                evals += 1;
                let resid = residual_of(target, &val);
                if best.as_ref().map_or(true, |b| resid < b.0) {
                    best = Some((resid, point, val.clone(), stage.epsilon));
                }
                if resid <= tol {
                    converged = true;
                    break;
                }
                if val.volume < target.total_volume {
                    vlo = mid;
                } else {
                    vhi = mid;
                }
            }
            volume = (vlo + vhi) / 2.0;
            if converged || evals >= max_evals {
                break;
            }
        }
        last_stage = Some(stage);
    }
    let (residual, point, val, eps) =
        best.ok_or_else(|| Error::Infeasible("no evaluation completed within budget".into()))?;
    let stage = match last_stage {
        Some(s) if s.epsilon == eps => s,
        _ => model.build_stage(eps)?,
    };
    let guard_value = model.guard_value(&stage, &point)?;
    let max_nu = target.max_target();
    let guard_ok = guard_value > max_nu && val.next.iter().all(|&v| v > max_nu);
    Ok(PrescriptionOutcome {
        point,
        achieved_volume: val.volume,
        achieved_mu: val.mu,
        next_values: val.next,
        guard_value,
        guard_ok,
        residual,
        evaluations: evals,
        converged,
        epsilon: eps,
    })
}

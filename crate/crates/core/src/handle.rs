//! Thin conformal handles joining two complexes.
//!
//! A handle of length L and radius eps is realized on a flat annulus
//! r in (0, eps] by the conformal factor
//!
//! ```text
//! h(r) = eps / r          for eps e^(-L/eps) <= r <= eps
//! h(r) = e^(L/eps)        for 0 <= r <= eps e^(-L/eps)
//! ```
//!
//! whose deformed arc length across the annulus is exactly L.  The glued
//! complex inserts a chain (or a tube, for circle attachments) between the
//! two pieces; its cells are parameterized by uniform conformal arc, carry
//! the sampled handle profile, and have every weight scaled by the
//! cross-section factor eps^max(n-1, 1), so the neck thins out as eps
//! shrinks while keeping its deformed length.  Weights of shared attachment
//! cells blend additively over one cell width, the discrete counterpart of
//! smoothing the metric across the handle boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::CellComplex;
use crate::conformal::ConformalProfile;
use crate::eigen::{full_spectrum, SolverOptions};
use crate::error::{Error, Result};

/// Where a handle end meets a piece.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attachment {
    /// A single vertex; the handle is a chain of 1-cells.
    Vertex(usize),
    /// An ordered vertex loop bounding existing edges; the handle is a
    /// tube (loop x interval) whose end rings are identified with the
    /// loop's cells.
    Circle(Vec<usize>),
}

/// Geometry of one handle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandleSpec {
    /// Cross-section radius eps.
    pub epsilon: f64,
    /// Deformed handle length L.
    pub length: f64,
    /// Longitudinal vertex count including both attachment ends (>= 3).
    pub resolution: usize,
    pub left: Attachment,
    pub right: Attachment,
}

impl HandleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidSpec("handle radius must be positive".into()));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidSpec("handle length must be positive".into()));
        }
        if self.resolution < 3 {
            return Err(Error::InvalidSpec("handle needs at least 3 longitudinal points".into()));
        }
        match (&self.left, &self.right) {
            (Attachment::Vertex(_), Attachment::Vertex(_)) => Ok(()),
            (Attachment::Circle(a), Attachment::Circle(b)) => {
                if a.len() < 3 || b.len() < 3 {
                    return Err(Error::InvalidSpec("attachment loops need >= 3 vertices".into()));
                }
                if a.len() != b.len() {
                    return Err(Error::InvalidSpec(
                        "attachment loops must have equal vertex counts".into(),
                    ));
                }
                Ok(())
            }
            _ => Err(Error::InvalidSpec("handle ends must be the same attachment kind".into())),
        }
    }
}

/// The conformal factor of the handle annulus at radius r in (0, eps].
pub fn handle_profile(epsilon: f64, length: f64, r: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0 && length.is_finite() && length > 0.0) {
        return Err(Error::InvalidSpec("handle radius and length must be positive".into()));
    }
    if !(r > 0.0 && r <= epsilon) {
        return Err(Error::InvalidSpec(format!(
            "handle radius coordinate {r} outside (0, {epsilon}]"
        )));
    }
    let r_break = epsilon * (-length / epsilon).exp();
    if r >= r_break {
        Ok(epsilon / r)
    } else {
        Ok((length / epsilon).exp())
    }
}

/// A glued pair: the joined complex, the handle's conformal profile
/// (1 away from the handle), and vertex index maps of both pieces.
#[derive(Debug, Clone)]
pub struct GluedComplex {
    pub complex: CellComplex,
    pub profile: ConformalProfile,
    pub left_vertex_map: Vec<usize>,
    pub right_vertex_map: Vec<usize>,
    /// New handle vertices with their longitudinal coordinate in [0, 1]
    /// (0 at the left attachment, 1 at the right).
    pub handle_vertices: Vec<(usize, f64)>,
}

/// Joins two complexes of the same dimension by one handle.
pub fn glue_complexes(
    k1: &CellComplex,
    k2: &CellComplex,
    spec: &HandleSpec,
) -> Result<GluedComplex> {
    spec.validate()?;
    if k1.dimension() != k2.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "pieces have dimensions {} and {}",
            k1.dimension(),
            k2.dimension()
        )));
    }
    let n = k1.dimension();
    match (&spec.left, &spec.right) {
        (Attachment::Vertex(a), Attachment::Vertex(b)) => glue_by_vertices(k1, k2, spec, *a, *b),
        (Attachment::Circle(a), Attachment::Circle(b)) => {
            if n < 2 {
                return Err(Error::InvalidSpec(
                    "circle attachments need pieces of dimension >= 2".into(),
                ));
            }
            glue_by_circles(k1, k2, spec, a, b)
        }
        _ => unreachable!("validated attachment kinds"),
    }
}

/// Longitudinal parameterization shared by both handle kinds: uniform
/// conformal arc, symmetric profile peaking mid-handle.
struct HandleAxis {
    /// Profile at each longitudinal station.
    h: Vec<f64>,
    /// Reference length of each longitudinal segment.
    ell: Vec<f64>,
}

fn handle_axis(spec: &HandleSpec) -> HandleAxis {
    let m = spec.resolution;
    let ratio = spec.length / spec.epsilon;
    let h_of = |s: f64| (ratio * s.min(1.0 - s)).exp();
    let h = (0..m).map(|i| h_of(i as f64 / (m - 1) as f64)).collect();
    let seg = spec.length / (m - 1) as f64;
    let ell = (0..m - 1)
        .map(|i| {
            let s_mid = (i as f64 + 0.5) / (m - 1) as f64;
            seg / h_of(s_mid)
        })
        .collect();
    HandleAxis { h, ell }
}

fn cross_section_weight(epsilon: f64, n: usize) -> f64 {
    epsilon.powi(n.saturating_sub(1).max(1) as i32)
}

/// Mutable cell arrays of a complex under construction.
struct Builder {
    boundary: Vec<Vec<Vec<(usize, i8)>>>,
    star: Vec<Vec<f64>>,
    volume: Vec<Vec<f64>>,
}

impl Builder {
    fn from_pieces(k1: &CellComplex, k2: &CellComplex, dim: usize) -> Self {
        let mut boundary = Vec::with_capacity(dim + 1);
        let mut star = Vec::with_capacity(dim + 1);
        let mut volume = Vec::with_capacity(dim + 1);
        for k in 0..=dim {
            let mut bnd: Vec<Vec<(usize, i8)>> = Vec::new();
            let mut st: Vec<f64> = Vec::new();
            let mut vo: Vec<f64> = Vec::new();
            if k <= k1.dimension() {
                bnd.extend(k1.boundary_entries(k).iter().cloned());
                st.extend_from_slice(k1.star_weights(k));
                vo.extend_from_slice(k1.volume_weights(k));
            }
            if k <= k2.dimension() {
                let off = if k > 0 { k1.n_cells(k - 1) } else { 0 };
                for entries in k2.boundary_entries(k) {
                    bnd.push(entries.iter().map(|&(f, s)| (f + off, s)).collect());
                }
                st.extend_from_slice(k2.star_weights(k));
                vo.extend_from_slice(k2.volume_weights(k));
            }
            boundary.push(bnd);
            star.push(st);
            volume.push(vo);
        }
        Builder { boundary, star, volume }
    }

    fn push(&mut self, k: usize, bnd: Vec<(usize, i8)>, star: f64, volume: f64) -> usize {
        self.boundary[k].push(bnd);
        self.star[k].push(star);
        self.volume[k].push(volume);
        self.star[k].len() - 1
    }

    fn finish(
        self,
        dim: usize,
        n_vertices: usize,
        coord_width: usize,
        piece_coords: Vec<Vec<f64>>,
    ) -> Result<CellComplex> {
        let mut coords = piece_coords;
        coords.resize(n_vertices, Vec::new());
        for c in &mut coords {
            c.resize(coord_width, 0.0);
        }
        CellComplex::from_parts(dim, self.boundary, self.star, self.volume, coords)
    }
}

fn piece_coords(k1: &CellComplex, k2: &CellComplex) -> (usize, Vec<Vec<f64>>) {
    let width = k1
        .vertex_coords()
        .iter()
        .chain(k2.vertex_coords().iter())
        .map(|c| c.len())
        .max()
        .unwrap_or(0);
    let coords = k1.vertex_coords().iter().chain(k2.vertex_coords().iter()).cloned().collect();
    (width, coords)
}

fn glue_by_vertices(
    k1: &CellComplex,
    k2: &CellComplex,
    spec: &HandleSpec,
    left: usize,
    right: usize,
) -> Result<GluedComplex> {
    if left >= k1.n_cells(0) || right >= k2.n_cells(0) {
        return Err(Error::InvalidSpec("attachment vertex out of range".into()));
    }
    let n = k1.dimension();
    let dim = n;
    let w = cross_section_weight(spec.epsilon, n);
    let axis = handle_axis(spec);
    let m = spec.resolution;
    let mut b = Builder::from_pieces(k1, k2, dim);
    let n0_1 = k1.n_cells(0);
    let left_glued = left;
    let right_glued = n0_1 + right;
    let mut profile = vec![1.0f64; n0_1 + k2.n_cells(0)];
    let mut handle_vertices = Vec::with_capacity(m - 2);
    // Longitudinal stations: 0 and m-1 are the attachment vertices.
    let mut station: Vec<usize> = Vec::with_capacity(m);
    station.push(left_glued);
    for i in 1..m - 1 {
        let star = w * (axis.ell[i - 1] + axis.ell[i]) / 2.0;
        let id = b.push(0, Vec::new(), star, w);
        station.push(id);
        profile.push(axis.h[i]);
        handle_vertices.push((id, i as f64 / (m - 1) as f64));
    }
    station.push(right_glued);
    b.star[0][left_glued] += w * axis.ell[0] / 2.0;
    b.star[0][right_glued] += w * axis.ell[m - 2] / 2.0;
    for (i, &ell) in axis.ell.iter().enumerate() {
        b.push(1, vec![(station[i], -1), (station[i + 1], 1)], w / ell, w * ell);
    }
    let n_vertices = b.star[0].len();
    let (width, coords) = piece_coords(k1, k2);
    let complex = b.finish(dim, n_vertices, width, coords)?;
    Ok(GluedComplex {
        complex,
        profile: ConformalProfile::from_values(profile)?,
        left_vertex_map: (0..n0_1).collect(),
        right_vertex_map: (0..k2.n_cells(0)).map(|v| v + n0_1).collect(),
        handle_vertices,
    })
}

/// Looks up the ordered loop's edges in a piece: (edge id, orientation sign
/// relative to the loop direction, reference length).
fn loop_edges(k: &CellComplex, verts: &[usize]) -> Result<Vec<(usize, i8, f64)>> {
    for &v in verts {
        if v >= k.n_cells(0) {
            return Err(Error::InvalidSpec(format!("attachment vertex {v} out of range")));
        }
    }
    {
        let mut sorted: Vec<usize> = verts.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != verts.len() {
            return Err(Error::InvalidSpec("attachment loop repeats a vertex".into()));
        }
    }
    let lookup = k.edge_lookup();
    let mut out = Vec::with_capacity(verts.len());
    for i in 0..verts.len() {
        let a = verts[i];
        let bb = verts[(i + 1) % verts.len()];
        let (e, sign) = lookup.get(&(a, bb)).copied().ok_or_else(|| {
            Error::InvalidSpec(format!("attachment loop needs an edge between {a} and {bb}"))
        })?;
        out.push((e, sign, k.volume_weights(1)[e]));
    }
    Ok(out)
}

fn glue_by_circles(
    k1: &CellComplex,
    k2: &CellComplex,
    spec: &HandleSpec,
    left: &[usize],
    right: &[usize],
) -> Result<GluedComplex> {
    let n = k1.dimension();
    let dim = n.max(2);
    let w = cross_section_weight(spec.epsilon, n);
    let axis = handle_axis(spec);
    let q = spec.resolution;
    let c = left.len();
    let le = loop_edges(k1, left)?;
    let re = loop_edges(k2, right)?;
    let mut b = Builder::from_pieces(k1, k2, dim);
    let n0_1 = k1.n_cells(0);
    let n1_1 = k1.n_cells(1);
    let mut profile = vec![1.0f64; n0_1 + k2.n_cells(0)];
    let mut handle_vertices = Vec::with_capacity((q - 2) * c);
    // Ring theta-lengths interpolate geometrically between the two loops
    // along the longitudinal coordinate.
    let theta_len = |i: usize, j: usize| -> f64 {
        let t = j as f64 / (q - 1) as f64;
        le[i].2.powf(1.0 - t) * re[i].2.powf(t)
    };
    let theta_dual = |i: usize, j: usize| -> f64 {
        (theta_len((i + c - 1) % c, j) + theta_len(i, j)) / 2.0
    };
    // Vertices: ring 0 and ring q-1 are the attachment loops.
    let mut ring_vertex = vec![vec![0usize; c]; q];
    for i in 0..c {
        ring_vertex[0][i] = left[i];
        ring_vertex[q - 1][i] = n0_1 + right[i];
    }
    for j in 1..q - 1 {
        let s_dual = (axis.ell[j - 1] + axis.ell[j]) / 2.0;
        for i in 0..c {
            let id = b.push(0, Vec::new(), w * theta_dual(i, j) * s_dual, w);
            ring_vertex[j][i] = id;
            profile.push(axis.h[j]);
            handle_vertices.push((id, j as f64 / (q - 1) as f64));
        }
    }
    // Ring edges: ring 0 and q-1 are the loop edges of the pieces, interior
    // rings are new cells oriented i -> i+1.
    let mut ring_edge = vec![vec![(0usize, 1i8); c]; q];
    for i in 0..c {
        ring_edge[0][i] = (le[i].0, le[i].1);
        ring_edge[q - 1][i] = (n1_1 + re[i].0, re[i].1);
    }
    for j in 1..q - 1 {
        let s_dual = (axis.ell[j - 1] + axis.ell[j]) / 2.0;
        for i in 0..c {
            let lt = theta_len(i, j);
            let id = b.push(
                1,
                vec![(ring_vertex[j][i], -1), (ring_vertex[j][(i + 1) % c], 1)],
                w * s_dual / lt,
                w * lt,
            );
            ring_edge[j][i] = (id, 1);
        }
    }
    // Longitudinal edges between consecutive rings, oriented j -> j+1.
    let mut long_edge = vec![vec![0usize; c]; q - 1];
    for (j, &ell) in axis.ell.iter().enumerate() {
        for i in 0..c {
            let dual = (theta_dual(i, j) + theta_dual(i, j + 1)) / 2.0;
            let id = b.push(
                1,
                vec![(ring_vertex[j][i], -1), (ring_vertex[j + 1][i], 1)],
                w * dual / ell,
                w * ell,
            );
            long_edge[j][i] = id;
        }
    }
    // Tube faces: theta-edge i times segment j, with the product boundary
    // long(i+1) - long(i) - ring(j+1) + ring(j).
    for (j, &ell) in axis.ell.iter().enumerate() {
        for i in 0..c {
            let lt = (theta_len(i, j) * theta_len(i, j + 1)).sqrt();
            let (r0, s0) = ring_edge[j][i];
            let (r1, s1) = ring_edge[j + 1][i];
            b.push(
                2,
                vec![
                    (long_edge[j][(i + 1) % c], 1),
                    (long_edge[j][i], -1),
                    (r1, -s1),
                    (r0, s0),
                ],
                w / (lt * ell),
                w * lt * ell,
            );
        }
    }
    // Blend the shared attachment cells with the adjacent tube weights.
    for i in 0..c {
        b.star[0][left[i]] += w * theta_dual(i, 0) * axis.ell[0] / 2.0;
        b.star[0][n0_1 + right[i]] += w * theta_dual(i, q - 1) * axis.ell[q - 2] / 2.0;
        b.star[1][le[i].0] += w * axis.ell[0] / (2.0 * theta_len(i, 0));
        b.star[1][n1_1 + re[i].0] += w * axis.ell[q - 2] / (2.0 * theta_len(i, q - 1));
    }
    let n_vertices = b.star[0].len();
    let (width, coords) = piece_coords(k1, k2);
    let complex = b.finish(dim, n_vertices, width, coords)?;
    Ok(GluedComplex {
        complex,
        profile: ConformalProfile::from_values(profile)?,
        left_vertex_map: (0..n0_1).collect(),
        right_vertex_map: (0..k2.n_cells(0)).map(|v| v + n0_1).collect(),
        handle_vertices,
    })
}

/// One row of a handle-radius sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandleSweepRow {
    pub epsilon: f64,
    pub degree: usize,
    /// Leading full-pencil eigenvalues of the glued complex.
    pub glued: Vec<f64>,
    /// Sorted union of the two pieces' full spectra, same length.
    pub reference: Vec<f64>,
    /// Max relative deviation over positions where the reference is
    /// nonzero.
    pub max_relative_deviation: f64,
}

/// Sweeps the handle radius and compares glued spectra against the union
/// of the separate pieces' spectra, per degree.
pub fn handle_sweep(
    k1: &CellComplex,
    k2: &CellComplex,
    base: &HandleSpec,
    eps_list: &[f64],
    degrees: &[usize],
    m: usize,
    opts: &SolverOptions,
) -> Result<Vec<HandleSweepRow>> {
    base.validate()?;
    if eps_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidSpec("radius list must be strictly decreasing".into()));
    }
    let unit1 = ConformalProfile::uniform(k1.n_cells(0), 1.0)?;
    let unit2 = ConformalProfile::uniform(k2.n_cells(0), 1.0)?;
    let mut references: Vec<Vec<f64>> = Vec::with_capacity(degrees.len());
    for &deg in degrees {
        let s1 = full_spectrum(k1, &unit1, deg, opts)?;
        let s2 = full_spectrum(k2, &unit2, deg, opts)?;
        let mut merged: Vec<f64> =
            s1.eigenvalues.iter().chain(&s2.eigenvalues).copied().collect();
        merged.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        merged.truncate(m);
        references.push(merged);
    }
    let rows: Result<Vec<Vec<HandleSweepRow>>> = eps_list
        .par_iter()
        .map(|&eps| {
            let spec = HandleSpec { epsilon: eps, ..base.clone() };
            let glued = glue_complexes(k1, k2, &spec)?;
            let mut out = Vec::with_capacity(degrees.len());
            for (d_idx, &deg) in degrees.iter().enumerate() {
                let s = full_spectrum(&glued.complex, &glued.profile, deg, opts)?;
                let mut vals = s.eigenvalues.clone();
                vals.truncate(m);
                let reference = references[d_idx].clone();
                let scale = reference.iter().cloned().fold(0.0f64, f64::max);
                let mut dev = 0.0f64;
                for (g, r) in vals.iter().zip(&reference) {
                    if *r > 1e-8 * scale.max(1.0) {
                        dev = dev.max((g - r).abs() / r);
                    }
                }
                out.push(HandleSweepRow {
                    epsilon: eps,
                    degree: deg,
                    glued: vals,
                    reference,
                    max_relative_deviation: dev,
                });
            }
            Ok(out)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{parse_complex_str, ComplexSpec};
    use crate::cover::dodziuk_interval;
    use crate::eigen::coexact_spectrum;
    use approx::assert_relative_eq;

    #[test]
    fn profile_endpoint_and_breakpoint() {
        let eps = 0.3f64;
        let l = 0.7f64;
        assert_relative_eq!(handle_profile(eps, l, eps).unwrap(), 1.0, max_relative = 1e-15);
        let r_break = eps * (-l / eps).exp();
        let from_outer = handle_profile(eps, l, r_break * (1.0 + 1e-12)).unwrap();
        let from_inner = handle_profile(eps, l, r_break * (1.0 - 1e-12)).unwrap();
        assert_relative_eq!(from_outer, (l / eps).exp(), max_relative = 1e-9);
        assert_relative_eq!(from_inner, (l / eps).exp(), max_relative = 1e-9);
        assert!(handle_profile(eps, l, 0.0).is_err());
        assert!(handle_profile(eps, l, eps * 1.01).is_err());
    }

    #[test]
    fn profile_arc_length_is_handle_length() {
        let eps = 0.2f64;
        let l = 0.9f64;
        let r_break = eps * (-l / eps).exp();
        let steps = 200_000;
        let dt = (eps - r_break) / steps as f64;
        let mut arc = 0.0;
        for i in 0..steps {
            let r = r_break + (i as f64 + 0.5) * dt;
            arc += handle_profile(eps, l, r).unwrap() * dt;
        }
        assert_relative_eq!(arc, l, max_relative = 1e-6);
    }

    #[test]
    fn vertex_glue_connects_components() {
        let a = ComplexSpec::cycle(8).build().unwrap();
        let bsp = ComplexSpec::cycle(6).build().unwrap();
        let spec = HandleSpec {
            epsilon: 0.1,
            length: 0.1,
            resolution: 5,
            left: Attachment::Vertex(0),
            right: Attachment::Vertex(2),
        };
        let glued = glue_complexes(&a, &bsp, &spec).unwrap();
        assert_eq!(glued.complex.betti_numbers()[0], 1);
        assert_eq!(glued.complex.n_cells(0), 8 + 6 + 3);
        assert_eq!(glued.complex.n_cells(1), 8 + 6 + 4);
        assert_eq!(glued.profile.len(), glued.complex.n_cells(0));
    }

    #[test]
    fn wide_short_handle_approaches_wedge() {
        // With unit radius and a very short handle the glued pair of
        // circles behaves like the two circles joined at a point.
        let a = ComplexSpec::cycle(4).build().unwrap();
        let spec = HandleSpec {
            epsilon: 1.0,
            length: 1e-4,
            resolution: 3,
            left: Attachment::Vertex(0),
            right: Attachment::Vertex(0),
        };
        let glued = glue_complexes(&a, &a, &spec).unwrap();
        let opts = SolverOptions::default();
        let got = coexact_spectrum(&glued.complex, &glued.profile, 0, &opts).unwrap();
        // Two unit circles sharing one vertex, built by hand.
        let mut text = String::new();
        for v in 0..7 {
            let star = if v == 0 { 0.5 } else { 0.25 };
            text.push_str(&format!("0 v{v} : : {star}\n"));
        }
        let loops: [[usize; 4]; 2] = [[0, 1, 2, 3], [0, 4, 5, 6]];
        let mut e = 0;
        for ring in loops {
            for i in 0..4 {
                text.push_str(&format!("1 e{e} : -v{} +v{} : 4.0\n", ring[i], ring[(i + 1) % 4]));
                e += 1;
            }
        }
        let wedge = parse_complex_str(&text).unwrap();
        let h = ConformalProfile::uniform(7, 1.0).unwrap();
        let want = coexact_spectrum(&wedge, &h, 0, &opts).unwrap();
        for (g, r) in got.eigenvalues.iter().zip(&want.eigenvalues).take(4) {
            assert_relative_eq!(g, r, max_relative = 2e-2);
        }
    }

    #[test]
    fn circle_glue_is_exact_and_connected() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(6), ComplexSpec::cycle(4)]);
        let torus = spec.build().unwrap();
        // The theta-loop at second-coordinate 0: vertices 0, 4, 8, ..., 20.
        let loop_verts: Vec<usize> = (0..6).map(|i| i * 4).collect();
        let hspec = HandleSpec {
            epsilon: 0.3,
            length: 0.2,
            resolution: 4,
            left: Attachment::Circle(loop_verts.clone()),
            right: Attachment::Circle(loop_verts),
        };
        let glued = glue_complexes(&torus, &torus, &hspec).unwrap();
        assert_eq!(glued.complex.dimension(), 2);
        assert_eq!(glued.complex.betti_numbers()[0], 1);
        // Boundary exactness was checked by the constructor; the pencil
        // must be solvable and have the connected-sum harmonic count.
        let s = full_spectrum(&glued.complex, &glued.profile, 0, &SolverOptions::default())
            .unwrap();
        assert_eq!(s.kernel_dim, 1);
    }

    #[test]
    fn sweep_deviation_shrinks_with_radius() {
        let a = ComplexSpec::cycle(12).build().unwrap();
        let b = ComplexSpec::Cycle { points: 10, circumference: 1.4 }.build().unwrap();
        let base = HandleSpec {
            epsilon: 0.2,
            length: 0.1,
            resolution: 5,
            left: Attachment::Vertex(0),
            right: Attachment::Vertex(0),
        };
        let rows = handle_sweep(
            &a,
            &b,
            &base,
            &[0.2, 0.05, 0.02],
            &[0],
            6,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        let first = rows.first().unwrap().max_relative_deviation;
        let last = rows.last().unwrap().max_relative_deviation;
        assert!(last < first, "deviation did not shrink: {first} -> {last}");
    }

    #[test]
    fn rejects_mismatched_attachments() {
        let a = ComplexSpec::cycle(4).build().unwrap();
        let spec = HandleSpec {
            epsilon: 0.1,
            length: 0.1,
            resolution: 3,
            left: Attachment::Vertex(0),
            right: Attachment::Circle(vec![0, 1, 2]),
        };
        assert!(glue_complexes(&a, &a, &spec).is_err());
        let spec2 = HandleSpec {
            epsilon: 0.1,
            length: 0.1,
            resolution: 3,
            left: Attachment::Vertex(99),
            right: Attachment::Vertex(0),
        };
        assert!(glue_complexes(&a, &a, &spec2).is_err());
    }

    #[test]
    fn smoothing_perturbation_stays_in_comparison_interval() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let a = ComplexSpec::cycle(8).build().unwrap();
        let spec = HandleSpec {
            epsilon: 0.15,
            length: 0.12,
            resolution: 4,
            left: Attachment::Vertex(0),
            right: Attachment::Vertex(4),
        };
        let glued = glue_complexes(&a, &a, &spec).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        let eps_smooth = 0.1f64;
        let factors: Vec<f64> = (0..glued.profile.len())
            .map(|_| rng.gen_range(-eps_smooth..eps_smooth).exp())
            .collect();
        let perturbed = glued
            .profile
            .pointwise_mul(&ConformalProfile::from_values(factors).unwrap())
            .unwrap();
        let tau = glued.profile.metric_ratio(&perturbed).unwrap();
        let opts = SolverOptions::default();
        let s0 = coexact_spectrum(&glued.complex, &glued.profile, 0, &opts).unwrap();
        let s1 = coexact_spectrum(&glued.complex, &perturbed, 0, &opts).unwrap();
        let n = glued.complex.dimension();
        for (a0, a1) in s0.eigenvalues.iter().zip(&s1.eigenvalues) {
            let (lo, hi) = dodziuk_interval(*a0, tau, n).unwrap();
            assert!(*a1 >= lo * (1.0 - 1e-9) && *a1 <= hi * (1.0 + 1e-9));
        }
    }
}

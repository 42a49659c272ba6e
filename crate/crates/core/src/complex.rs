//! Weighted cell complexes and their boundary operators.
//!
//! A `CellComplex` stores, per degree k, the signed incidence of k-cells on
//! (k-1)-cells together with two positive weight families:
//!
//! * `star[k]`: the diagonal inner-product weight of a k-cochain coefficient
//!   (the discrete Hodge star).  For the 1-D builders this is the classical
//!   choice dual/primal (vertices carry their dual length, edges 1/length),
//!   which makes the degree-0 pencil converge to the Neumann Laplacian.
//! * `volume[k]`: the reference k-volume of the cell.  Only the top degree
//!   enters volume computations, lower degrees are kept for bookkeeping.
//!
//! Product complexes multiply both weight families factor-wise, matching the
//! product metric.  Combinatorial surrogates (simplex boundaries, imported
//! files) default to unit weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::homology;

/// Signed incidence of k-cells (columns) on (k-1)-cells (rows).
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    pub rows: usize,
    pub cols: usize,
    /// (row, col, sign) with sign in {-1, +1}; at most one entry per pair.
    pub triplets: Vec<(usize, usize, i8)>,
}

impl IncidenceMatrix {
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for &(i, j, s) in &self.triplets {
            m[(i, j)] += s as f64;
        }
        m
    }

    /// Plain-text triplet export: a `rows cols nnz` header line followed by
    /// one `row col value` line per entry, zero-based indices.
    pub fn to_triplet_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.rows, self.cols, self.triplets.len());
        for &(i, j, s) in &self.triplets {
            let _ = writeln!(out, "{} {} {}", i, j, s);
        }
        out
    }
}

/// Construction recipe for a complex.
#[derive(Debug, Clone, PartialEq)]
pub enum ComplexSpec {
    /// Chain of `points` vertices on a segment of the given length.
    Path { points: usize, length: f64 },
    /// Closed chain of `points` vertices with the given circumference.
    Cycle { points: usize, circumference: f64 },
    /// All proper faces of the standard simplex of dimension `simplex_dim`,
    /// a combinatorial sphere of dimension `simplex_dim - 1`.
    SimplexBoundary { simplex_dim: usize },
    /// Cartesian product of the factors, in order.
    Product(Vec<ComplexSpec>),
    /// Complex read from the plain-text cell format (see `parse_complex_str`).
    Imported { path: PathBuf },
}

impl ComplexSpec {
    pub fn path(points: usize) -> Self {
        ComplexSpec::Path { points, length: 1.0 }
    }

    pub fn cycle(points: usize) -> Self {
        ComplexSpec::Cycle { points, circumference: 1.0 }
    }

    pub fn simplex_boundary(simplex_dim: usize) -> Self {
        ComplexSpec::SimplexBoundary { simplex_dim }
    }

    pub fn product(factors: Vec<ComplexSpec>) -> Self {
        ComplexSpec::Product(factors)
    }

    pub fn build(&self) -> Result<CellComplex> {
        build_complex(self)
    }

    /// Parses the CLI grammar: `path:N[@LEN]`, `cycle:N[@LEN]`,
    /// `simplex-boundary:Q`, `file:PATH`, factors joined with `*`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('*').map(str::trim).collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::InvalidSpec(format!("empty factor in complex spec `{s}`")));
        }
        let mut factors = Vec::with_capacity(parts.len());
        for part in &parts {
            factors.push(Self::parse_factor(part)?);
        }
        if factors.len() == 1 {
            Ok(factors.pop().unwrap())
        } else {
            Ok(ComplexSpec::Product(factors))
        }
    }

    fn parse_factor(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidSpec(format!("`{s}`: {msg}"));
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| bad("expected `kind:arg`"))?;
        match kind {
            "path" | "cycle" => {
                let (count_str, len_str) = match rest.split_once('@') {
                    Some((c, l)) => (c, Some(l)),
                    None => (rest, None),
                };
                let points: usize = count_str
                    .parse()
                    .map_err(|_| bad("point count must be an integer"))?;
                let len: f64 = match len_str {
                    Some(l) => l.parse().map_err(|_| bad("length must be a number"))?,
                    None => 1.0,
                };
                if kind == "path" {
                    Ok(ComplexSpec::Path { points, length: len })
                } else {
                    Ok(ComplexSpec::Cycle { points, circumference: len })
                }
            }
            "simplex-boundary" => {
                let q: usize = rest
                    .parse()
                    .map_err(|_| bad("simplex dimension must be an integer"))?;
                Ok(ComplexSpec::SimplexBoundary { simplex_dim: q })
            }
            "file" => Ok(ComplexSpec::Imported { path: PathBuf::from(rest) }),
            _ => Err(bad("unknown kind (expected path, cycle, simplex-boundary, file)")),
        }
    }
}

impl std::fmt::Display for ComplexSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ComplexSpec::Path { points, length } => {
                if (length - 1.0).abs() < 1e-15 {
                    write!(f, "path:{points}")
                } else {
                    write!(f, "path:{points}@{length}")
                }
            }
            ComplexSpec::Cycle { points, circumference } => {
                if (circumference - 1.0).abs() < 1e-15 {
                    write!(f, "cycle:{points}")
                } else {
                    write!(f, "cycle:{points}@{circumference}")
                }
            }
            ComplexSpec::SimplexBoundary { simplex_dim } => {
                write!(f, "simplex-boundary:{simplex_dim}")
            }
            ComplexSpec::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join("*"))
            }
            ComplexSpec::Imported { path } => write!(f, "file:{}", path.display()),
        }
    }
}

/// A finite weighted cell complex.
#[derive(Debug, Clone)]
pub struct CellComplex {
    dimension: usize,
    /// boundary[k][c] lists ((k-1)-cell, sign); boundary[0][v] is empty.
    boundary: Vec<Vec<Vec<(usize, i8)>>>,
    star: Vec<Vec<f64>>,
    volume: Vec<Vec<f64>>,
    /// Sorted vertex ids incident to each cell.
    vertices_of: Vec<Vec<Vec<usize>>>,
    /// Per-vertex coordinates in the 1-D factors that carry them (may be
    /// empty for combinatorial builders; width is uniform per complex).
    vertex_coords: Vec<Vec<f64>>,
    /// Exact boundary ranks, one cell per degree, filled on demand.
    ranks: Vec<OnceLock<usize>>,
}

impl CellComplex {
    /// Low-level constructor.  Checks weight positivity and exactness of the
    /// boundary (d . d = 0 over the integers) and precomputes vertex
    /// incidence.  All builders funnel through here.
    pub fn from_parts(
        dimension: usize,
        boundary: Vec<Vec<Vec<(usize, i8)>>>,
        star: Vec<Vec<f64>>,
        volume: Vec<Vec<f64>>,
        vertex_coords: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidSpec("complex must have dimension >= 1".into()));
        }
        if boundary.len() != dimension + 1
            || star.len() != dimension + 1
            || volume.len() != dimension + 1
        {
            return Err(Error::DimensionMismatch(format!(
                "expected {} degrees of cell data",
                dimension + 1
            )));
        }
        for k in 0..=dimension {
            let n = boundary[k].len();
            if n == 0 {
                return Err(Error::InvalidSpec(format!("no cells of degree {k}")));
            }
            if star[k].len() != n || volume[k].len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "degree {k}: weight arrays do not match cell count {n}"
                )));
            }
            for (c, w) in star[k].iter().chain(volume[k].iter()).enumerate() {
                if !(w.is_finite() && *w > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "degree {k}: nonpositive weight at cell {}",
                        c % n
                    )));
                }
            }
        }
        if vertex_coords.len() != boundary[0].len() {
            return Err(Error::DimensionMismatch(
                "vertex coordinate array does not match vertex count".into(),
            ));
        }
        for k in 1..=dimension {
            let lower = boundary[k - 1].len();
            for (c, entries) in boundary[k].iter().enumerate() {
                if entries.is_empty() {
                    return Err(Error::InvalidSpec(format!(
                        "degree {k}: cell {c} has empty boundary"
                    )));
                }
                for &(f, s) in entries {
                    if f >= lower {
                        return Err(Error::InvalidSpec(format!(
                            "degree {k}: cell {c} references missing face {f}"
                        )));
                    }
                    if s != 1 && s != -1 {
                        return Err(Error::InvalidSpec(format!(
                            "degree {k}: cell {c} has sign {s}, expected +-1"
                        )));
                    }
                }
            }
        }
        let n0 = boundary[0].len();
        let mut vertices_of: Vec<Vec<Vec<usize>>> = Vec::with_capacity(dimension + 1);
        vertices_of.push((0..n0).map(|v| vec![v]).collect());
        for k in 1..=dimension {
            let mut level = Vec::with_capacity(boundary[k].len());
            for entries in &boundary[k] {
                let mut verts: Vec<usize> = entries
                    .iter()
                    .flat_map(|&(f, _)| vertices_of[k - 1][f].iter().copied())
                    .collect();
                verts.sort_unstable();
                verts.dedup();
                level.push(verts);
            }
            vertices_of.push(level);
        }
        let complex = CellComplex {
            dimension,
            boundary,
            star,
            volume,
            vertices_of,
            vertex_coords,
            ranks: (0..=dimension).map(|_| OnceLock::new()).collect(),
        };
        complex.check_exactness()?;
        Ok(complex)
    }

    fn check_exactness(&self) -> Result<()> {
        for k in 2..=self.dimension {
            let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
            for (c, entries) in self.boundary[k].iter().enumerate() {
                acc.clear();
                for &(f, s) in entries {
                    for &(g, t) in &self.boundary[k - 1][f] {
                        *acc.entry(g).or_insert(0) += (s as i64) * (t as i64);
                    }
                }
                if acc.values().any(|&v| v != 0) {
                    return Err(Error::InvalidSpec(format!(
                        "boundary of boundary is nonzero at degree {k}, cell {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_cells(&self, k: usize) -> usize {
        if k <= self.dimension {
            self.boundary[k].len()
        } else {
            0
        }
    }

    pub fn cell_counts(&self) -> Vec<usize> {
        (0..=self.dimension).map(|k| self.n_cells(k)).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.cell_counts().iter().sum()
    }

    pub fn star_weights(&self, k: usize) -> &[f64] {
        &self.star[k]
    }

    pub fn volume_weights(&self, k: usize) -> &[f64] {
        &self.volume[k]
    }

    pub fn boundary_entries(&self, k: usize) -> &[Vec<(usize, i8)>] {
        &self.boundary[k]
    }

    pub fn cell_vertices(&self, k: usize, c: usize) -> &[usize] {
        &self.vertices_of[k][c]
    }

    pub fn vertex_coords(&self) -> &[Vec<f64>] {
        &self.vertex_coords
    }

    /// Signed incidence matrix of degree k (rows: (k-1)-cells, cols: k-cells).
    pub fn boundary_matrix(&self, k: usize) -> Result<IncidenceMatrix> {
        if k == 0 || k > self.dimension {
            return Err(Error::InvalidSpec(format!(
                "boundary degree {k} out of range 1..={}",
                self.dimension
            )));
        }
        let mut triplets = Vec::new();
        for (c, entries) in self.boundary[k].iter().enumerate() {
            for &(f, s) in entries {
                triplets.push((f, c, s));
            }
        }
        Ok(IncidenceMatrix { rows: self.n_cells(k - 1), cols: self.n_cells(k), triplets })
    }

    /// Exact rank of the degree-k boundary matrix, computed on first use;
    /// 0 for k = 0 and above the top degree.
    pub fn boundary_rank(&self, k: usize) -> usize {
        if k == 0 || k > self.dimension {
            return 0;
        }
        *self.ranks[k].get_or_init(|| {
            let m = self.boundary_matrix(k).expect("degree in range");
            homology::rank_exact(m.rows, m.cols, &m.triplets)
        })
    }

    /// Exact ranks of all boundary matrices, degree-indexed with
    /// `ranks[0] = 0`.
    pub fn boundary_ranks(&self) -> Vec<usize> {
        (0..=self.dimension).map(|k| self.boundary_rank(k)).collect()
    }

    /// Betti numbers b_0..b_n from exact ranks over the rationals.
    pub fn betti_numbers(&self) -> Vec<usize> {
        (0..=self.dimension)
            .map(|k| {
                self.n_cells(k)
                    .checked_sub(self.boundary_rank(k) + self.boundary_rank(k + 1))
                    .expect("rank bound violated")
            })
            .collect()
    }

    /// Map (tail, head) -> (edge index, sign): sign +1 when the edge is
    /// oriented tail -> head.  Edges without a clean head/tail pair (which
    /// the builders never produce) are skipped.
    pub fn edge_lookup(&self) -> BTreeMap<(usize, usize), (usize, i8)> {
        let mut map = BTreeMap::new();
        for (e, entries) in self.boundary[1].iter().enumerate() {
            if entries.len() != 2 {
                continue;
            }
            let (a, sa) = entries[0];
            let (b, sb) = entries[1];
            if sa == -1 && sb == 1 {
                map.insert((a, b), (e, 1i8));
                map.insert((b, a), (e, -1i8));
            } else if sa == 1 && sb == -1 {
                map.insert((b, a), (e, 1i8));
                map.insert((a, b), (e, -1i8));
            }
        }
        map
    }

    /// Full subcomplex on the vertices with `keep[v] = true`: a cell survives
    /// iff all its vertices do.  Returns the subcomplex together with the
    /// old index of every kept cell, per degree.  Trailing degrees that lose
    /// all cells are trimmed from the dimension.
    pub fn subcomplex_by_vertices(&self, keep: &[bool]) -> Result<(CellComplex, Vec<Vec<usize>>)> {
        if keep.len() != self.n_cells(0) {
            return Err(Error::DimensionMismatch(
                "vertex mask does not match vertex count".into(),
            ));
        }
        let mut kept: Vec<Vec<usize>> = Vec::with_capacity(self.dimension + 1);
        let mut new_index: Vec<Vec<Option<usize>>> = Vec::with_capacity(self.dimension + 1);
        for k in 0..=self.dimension {
            let mut old_ids = Vec::new();
            let mut index = vec![None; self.n_cells(k)];
            for c in 0..self.n_cells(k) {
                if self.vertices_of[k][c].iter().all(|&v| keep[v]) {
                    index[c] = Some(old_ids.len());
                    old_ids.push(c);
                }
            }
            kept.push(old_ids);
            new_index.push(index);
        }
        if kept[0].is_empty() {
            return Err(Error::InvalidSpec("vertex mask keeps no vertices".into()));
        }
        let mut dim = 0;
        for k in (0..=self.dimension).rev() {
            if !kept[k].is_empty() {
                dim = k;
                break;
            }
        }
        if dim == 0 {
            return Err(Error::InvalidSpec("subcomplex has no cells above degree 0".into()));
        }
        let mut boundary = Vec::with_capacity(dim + 1);
        let mut star = Vec::with_capacity(dim + 1);
        let mut volume = Vec::with_capacity(dim + 1);
        for k in 0..=dim {
            let mut bnd_k = Vec::with_capacity(kept[k].len());
            let mut star_k = Vec::with_capacity(kept[k].len());
            let mut vol_k = Vec::with_capacity(kept[k].len());
            for &old in &kept[k] {
                let entries = if k == 0 {
                    Vec::new()
                } else {
                    self.boundary[k][old]
                        .iter()
                        .map(|&(f, s)| {
                            let nf = new_index[k - 1][f]
                                .expect("faces of kept cells are kept (vertex-closed)");
                            (nf, s)
                        })
                        .collect()
                };
                bnd_k.push(entries);
                star_k.push(self.star[k][old]);
                vol_k.push(self.volume[k][old]);
            }
            boundary.push(bnd_k);
            star.push(star_k);
            volume.push(vol_k);
        }
        let coords = kept[0].iter().map(|&v| self.vertex_coords[v].clone()).collect();
        let sub = CellComplex::from_parts(dim, boundary, star, volume, coords)?;
        kept.truncate(dim + 1);
        Ok((sub, kept))
    }

    /// Serializes to the plain-text cell format accepted by
    /// `parse_complex_str`.  Star weights are written; the format carries a
    /// single weight column used for both weight families on import.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in 0..=self.dimension {
            for c in 0..self.n_cells(k) {
                let mut bnd = String::new();
                for &(f, s) in &self.boundary[k][c] {
                    if !bnd.is_empty() {
                        bnd.push(' ');
                    }
                    let sign = if s > 0 { '+' } else { '-' };
                    let _ = write!(bnd, "{sign}c{}_{f}", k - 1);
                }
                let _ = writeln!(out, "{k} c{k}_{c} : {bnd} : {:.17e}", self.star[k][c]);
            }
        }
        out
    }
}

/// Builds a complex from its specification.
pub fn build_complex(spec: &ComplexSpec) -> Result<CellComplex> {
    match spec {
        ComplexSpec::Path { points, length } => build_path(*points, *length),
        ComplexSpec::Cycle { points, circumference } => build_cycle(*points, *circumference),
        ComplexSpec::SimplexBoundary { simplex_dim } => build_simplex_boundary(*simplex_dim),
        ComplexSpec::Product(factors) => {
            if factors.is_empty() {
                return Err(Error::InvalidSpec("product of zero factors".into()));
            }
            let mut acc = build_complex(&factors[0])?;
            for f in &factors[1..] {
                let next = build_complex(f)?;
                acc = product(&acc, &next)?;
            }
            Ok(acc)
        }
        ComplexSpec::Imported { path } => parse_complex_file(path),
    }
}

fn build_path(points: usize, length: f64) -> Result<CellComplex> {
    if points < 3 {
        return Err(Error::InvalidSpec(format!(
            "path needs at least 3 points, got {points}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidSpec("path length must be positive".into()));
    }
    let m = points;
    let ell = length / (m - 1) as f64;
    let boundary0 = vec![Vec::new(); m];
    let mut boundary1 = Vec::with_capacity(m - 1);
    for i in 0..m - 1 {
        boundary1.push(vec![(i, -1i8), (i + 1, 1i8)]);
    }
    let mut star0 = vec![ell; m];
    star0[0] = ell / 2.0;
    star0[m - 1] = ell / 2.0;
    let star1 = vec![1.0 / ell; m - 1];
    let vol0 = vec![1.0; m];
    let vol1 = vec![ell; m - 1];
    let coords = (0..m).map(|i| vec![i as f64 * ell]).collect();
    CellComplex::from_parts(
        1,
        vec![boundary0, boundary1],
        vec![star0, star1],
        vec![vol0, vol1],
        coords,
    )
}

fn build_cycle(points: usize, circumference: f64) -> Result<CellComplex> {
    if points < 3 {
        return Err(Error::InvalidSpec(format!(
            "cycle needs at least 3 points, got {points}"
        )));
    }
    if !(circumference.is_finite() && circumference > 0.0) {
        return Err(Error::InvalidSpec("cycle circumference must be positive".into()));
    }
    let m = points;
    let ell = circumference / m as f64;
    let boundary0 = vec![Vec::new(); m];
    let mut boundary1 = Vec::with_capacity(m);
    for i in 0..m {
        boundary1.push(vec![(i, -1i8), ((i + 1) % m, 1i8)]);
    }
    let star0 = vec![ell; m];
    let star1 = vec![1.0 / ell; m];
    let vol0 = vec![1.0; m];
    let vol1 = vec![ell; m];
    let coords = (0..m).map(|i| vec![i as f64 * ell]).collect();
    CellComplex::from_parts(
        1,
        vec![boundary0, boundary1],
        vec![star0, star1],
        vec![vol0, vol1],
        coords,
    )
}

fn build_simplex_boundary(q: usize) -> Result<CellComplex> {
    if q < 2 {
        return Err(Error::InvalidSpec(format!(
            "simplex boundary needs simplex dimension >= 2, got {q}"
        )));
    }
    let n_vertices = q + 1;
    let dim = q - 1;
    // Faces of each degree in lexicographic order, with their index.
    let mut faces: Vec<Vec<Vec<usize>>> = Vec::with_capacity(dim + 1);
    let mut index: Vec<BTreeMap<Vec<usize>, usize>> = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let combos = combinations(n_vertices, k + 1);
        let mut map = BTreeMap::new();
        for (i, c) in combos.iter().enumerate() {
            map.insert(c.clone(), i);
        }
        faces.push(combos);
        index.push(map);
    }
    let mut boundary: Vec<Vec<Vec<(usize, i8)>>> = Vec::with_capacity(dim + 1);
    boundary.push(vec![Vec::new(); n_vertices]);
    for k in 1..=dim {
        let mut level = Vec::with_capacity(faces[k].len());
        for face in &faces[k] {
            let mut entries = Vec::with_capacity(face.len());
            for (j, _) in face.iter().enumerate() {
                let mut sub = face.clone();
                sub.remove(j);
                let idx = index[k - 1][&sub];
                let sign = if j % 2 == 0 { 1i8 } else { -1i8 };
                entries.push((idx, sign));
            }
            level.push(entries);
        }
        boundary.push(level);
    }
    let star: Vec<Vec<f64>> = (0..=dim).map(|k| vec![1.0; faces[k].len()]).collect();
    let volume = star.clone();
    let coords = vec![Vec::new(); n_vertices];
    CellComplex::from_parts(dim, boundary, star, volume, coords)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for v in start..n {
            current.push(v);
            rec(v + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

/// Cartesian product with the Leibniz boundary
/// d(x * y) = dx * y + (-1)^dim(x) x * dy and factor-wise weights.
pub fn product(a: &CellComplex, b: &CellComplex) -> Result<CellComplex> {
    let dim = a.dimension + b.dimension;
    // Cell layout per product degree k: blocks of fixed (ka, kb = k - ka),
    // ka ascending; inside a block, index = i * b.n_cells(kb) + j.
    let block_range = |k: usize| -> (usize, usize) {
        let lo = k.saturating_sub(b.dimension);
        let hi = k.min(a.dimension);
        (lo, hi)
    };
    let mut offsets: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(dim + 1);
    let mut counts: Vec<usize> = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let (lo, hi) = block_range(k);
        let mut map = BTreeMap::new();
        let mut total = 0usize;
        for ka in lo..=hi {
            map.insert(ka, total);
            total += a.n_cells(ka) * b.n_cells(k - ka);
        }
        offsets.push(map);
        counts.push(total);
    }
    let mut boundary: Vec<Vec<Vec<(usize, i8)>>> = Vec::with_capacity(dim + 1);
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut volume: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let mut bnd_k = Vec::with_capacity(counts[k]);
        let mut star_k = Vec::with_capacity(counts[k]);
        let mut vol_k = Vec::with_capacity(counts[k]);
        let (lo, hi) = block_range(k);
        for ka in lo..=hi {
            let kb = k - ka;
            let nb = b.n_cells(kb);
            for i in 0..a.n_cells(ka) {
                for j in 0..nb {
                    let mut entries = Vec::new();
                    if ka > 0 {
                        let off = offsets[k - 1][&(ka - 1)];
                        let nb_low = b.n_cells(kb);
                        for &(fi, s) in &a.boundary[ka][i] {
                            entries.push((off + fi * nb_low + j, s));
                        }
                    }
                    if kb > 0 {
                        let off = offsets[k - 1][&ka];
                        let nb_low = b.n_cells(kb - 1);
                        let parity = if ka % 2 == 0 { 1i8 } else { -1i8 };
                        for &(fj, s) in &b.boundary[kb][j] {
                            entries.push((off + i * nb_low + fj, parity * s));
                        }
                    }
                    bnd_k.push(entries);
                    star_k.push(a.star[ka][i] * b.star[kb][j]);
                    vol_k.push(a.volume[ka][i] * b.volume[kb][j]);
                }
            }
        }
        boundary.push(bnd_k);
        star.push(star_k);
        volume.push(vol_k);
    }
    let mut coords = Vec::with_capacity(counts[0]);
    for i in 0..a.n_cells(0) {
        for j in 0..b.n_cells(0) {
            let mut c = a.vertex_coords[i].clone();
            c.extend_from_slice(&b.vertex_coords[j]);
            coords.push(c);
        }
    }
    CellComplex::from_parts(dim, boundary, star, volume, coords)
}

/// Disjoint union: cells of `a` keep their indices, cells of `b` are shifted
/// by the per-degree cell counts of `a`.  Vertex coordinates are padded with
/// zeros to a common width.
pub fn disjoint_union(a: &CellComplex, b: &CellComplex) -> Result<CellComplex> {
    let dim = a.dimension.max(b.dimension);
    let mut boundary: Vec<Vec<Vec<(usize, i8)>>> = Vec::with_capacity(dim + 1);
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut volume: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    for k in 0..=dim {
        let na = a.n_cells(k);
        let mut bnd_k: Vec<Vec<(usize, i8)>> = Vec::with_capacity(na + b.n_cells(k));
        let mut star_k = Vec::with_capacity(na + b.n_cells(k));
        let mut vol_k = Vec::with_capacity(na + b.n_cells(k));
        if k <= a.dimension {
            bnd_k.extend(a.boundary[k].iter().cloned());
            star_k.extend_from_slice(&a.star[k]);
            vol_k.extend_from_slice(&a.volume[k]);
        }
        if k <= b.dimension {
            let off = if k > 0 { a.n_cells(k - 1) } else { 0 };
            for entries in &b.boundary[k] {
                bnd_k.push(entries.iter().map(|&(f, s)| (f + off, s)).collect());
            }
            star_k.extend_from_slice(&b.star[k]);
            vol_k.extend_from_slice(&b.volume[k]);
        }
        boundary.push(bnd_k);
        star.push(star_k);
        volume.push(vol_k);
    }
    let width = a
        .vertex_coords
        .iter()
        .chain(b.vertex_coords.iter())
        .map(|c| c.len())
        .max()
        .unwrap_or(0);
    let mut coords = Vec::with_capacity(a.n_cells(0) + b.n_cells(0));
    for c in a.vertex_coords.iter().chain(b.vertex_coords.iter()) {
        let mut padded = c.clone();
        padded.resize(width, 0.0);
        coords.push(padded);
    }
    CellComplex::from_parts(dim, boundary, star, volume, coords)
}

/// Parses the plain-text cell format:
///
/// ```text
/// # comment
/// <dim> <id> : <signed face ids> : <weight>
/// 0 v0 :            : 1.0
/// 1 e0 : +v1 -v0    : 0.25
/// ```
///
/// Faces are referenced by id with a mandatory sign prefix.  Cells may appear
/// in any order; indices are assigned per dimension in order of appearance.
/// The weight column is used for both the inner-product and the volume
/// weight of the cell.
pub fn parse_complex_str(text: &str) -> Result<CellComplex> {
    struct RawCell {
        dim: usize,
        faces: Vec<(i8, String)>,
        weight: f64,
        line: usize,
    }
    let mut cells: Vec<RawCell> = Vec::new();
    let mut ids: BTreeMap<(usize, String), usize> = BTreeMap::new();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: "expected `dim id : faces : weight`".into(),
            });
        }
        let head: Vec<&str> = parts[0].split_whitespace().collect();
        if head.len() != 2 {
            return Err(Error::Parse { line, msg: "expected `<dim> <id>` before first `:`".into() });
        }
        let dim: usize = head[0]
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad dimension `{}`", head[0]) })?;
        let id = head[1].to_string();
        let mut faces = Vec::new();
        for tok in parts[1].split_whitespace() {
            let (sign, name) = match tok.as_bytes()[0] {
                b'+' => (1i8, &tok[1..]),
                b'-' => (-1i8, &tok[1..]),
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("face reference `{tok}` must start with + or -"),
                    })
                }
            };
            if name.is_empty() {
                return Err(Error::Parse { line, msg: "empty face id".into() });
            }
            faces.push((sign, name.to_string()));
        }
        let weight: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad weight `{}`", parts[2].trim()) })?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Parse { line, msg: "weight must be positive".into() });
        }
        if dim == 0 && !faces.is_empty() {
            return Err(Error::Parse { line, msg: "vertices cannot have faces".into() });
        }
        if dim > 0 && faces.is_empty() {
            return Err(Error::Parse { line, msg: format!("{dim}-cell needs faces") });
        }
        let count = counts.entry(dim).or_insert(0);
        if ids.insert((dim, id.clone()), *count).is_some() {
            return Err(Error::Parse { line, msg: format!("duplicate id `{id}` in dimension {dim}") });
        }
        *count += 1;
        cells.push(RawCell { dim, faces, weight, line });
    }
    if cells.is_empty() {
        return Err(Error::Parse { line: 0, msg: "no cells in input".into() });
    }
    let dim = *counts.keys().max().unwrap();
    for k in 0..=dim {
        if counts.get(&k).copied().unwrap_or(0) == 0 {
            return Err(Error::Parse { line: 0, msg: format!("no cells of dimension {k}") });
        }
    }
    let mut boundary: Vec<Vec<Vec<(usize, i8)>>> =
        (0..=dim).map(|k| vec![Vec::new(); counts[&k]]).collect();
    let mut weights: Vec<Vec<f64>> = (0..=dim).map(|k| vec![0.0; counts[&k]]).collect();
    let mut seen: Vec<usize> = vec![0; dim + 1];
    for cell in &cells {
        let idx = seen[cell.dim];
        seen[cell.dim] += 1;
        weights[cell.dim][idx] = cell.weight;
        if cell.dim == 0 {
            continue;
        }
        let mut entries = Vec::with_capacity(cell.faces.len());
        for (sign, name) in &cell.faces {
            let face_idx = ids.get(&(cell.dim - 1, name.clone())).ok_or_else(|| Error::Parse {
                line: cell.line,
                msg: format!("unknown face `{name}` of dimension {}", cell.dim - 1),
            })?;
            entries.push((*face_idx, *sign));
        }
        boundary[cell.dim][idx] = entries;
    }
    let coords = vec![Vec::new(); counts[&0]];
    CellComplex::from_parts(dim, boundary, weights.clone(), weights, coords)
}

pub fn parse_complex_file(path: &Path) -> Result<CellComplex> {
    let text = std::fs::read_to_string(path)?;
    parse_complex_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_counts_and_weights() {
        let k = ComplexSpec::path(3).build().unwrap();
        assert_eq!(k.cell_counts(), vec![3, 2]);
        assert_eq!(k.star_weights(0), &[0.25, 0.5, 0.25]);
        assert_eq!(k.star_weights(1), &[2.0, 2.0]);
        assert_eq!(k.volume_weights(1), &[0.5, 0.5]);
        assert_eq!(k.boundary_entries(1)[0], vec![(0, -1), (1, 1)]);
    }

    #[test]
    fn resolution_below_three_rejected() {
        assert!(ComplexSpec::path(2).build().is_err());
        assert!(ComplexSpec::cycle(2).build().is_err());
    }

    #[test]
    fn empty_product_rejected() {
        assert!(ComplexSpec::Product(vec![]).build().is_err());
    }

    #[test]
    fn torus_product_counts() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(4), ComplexSpec::cycle(4)]);
        let k = spec.build().unwrap();
        assert_eq!(k.cell_counts(), vec![16, 32, 16]);
    }

    #[test]
    fn simplex_boundary_counts() {
        let k = ComplexSpec::simplex_boundary(4).build().unwrap();
        assert_eq!(k.cell_counts(), vec![5, 10, 10, 5]);
    }

    #[test]
    fn boundary_composition_vanishes_on_torus() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(4), ComplexSpec::cycle(4)]);
        let k = spec.build().unwrap();
        let d1 = k.boundary_matrix(1).unwrap().to_dense();
        let d2 = k.boundary_matrix(2).unwrap().to_dense();
        let prod = d1 * d2;
        assert!(prod.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn boundary_degree_out_of_range() {
        let k = ComplexSpec::cycle(4).build().unwrap();
        assert!(k.boundary_matrix(0).is_err());
        assert!(k.boundary_matrix(2).is_err());
    }

    #[test]
    fn betti_circle() {
        let k = ComplexSpec::cycle(8).build().unwrap();
        assert_eq!(k.betti_numbers(), vec![1, 1]);
    }

    #[test]
    fn betti_two_sphere() {
        let k = ComplexSpec::simplex_boundary(3).build().unwrap();
        assert_eq!(k.betti_numbers(), vec![1, 0, 1]);
    }

    #[test]
    fn betti_three_sphere() {
        let k = ComplexSpec::simplex_boundary(4).build().unwrap();
        assert_eq!(k.betti_numbers(), vec![1, 0, 0, 1]);
    }

    #[test]
    fn betti_torus() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(4), ComplexSpec::cycle(4)]);
        let k = spec.build().unwrap();
        assert_eq!(k.betti_numbers(), vec![1, 2, 1]);
    }

    #[test]
    fn betti_three_torus() {
        let spec = ComplexSpec::product(vec![
            ComplexSpec::cycle(3),
            ComplexSpec::cycle(3),
            ComplexSpec::cycle(3),
        ]);
        let k = spec.build().unwrap();
        assert_eq!(k.betti_numbers(), vec![1, 3, 3, 1]);
    }

    #[test]
    fn product_mixed_factors_is_exact() {
        let spec = ComplexSpec::product(vec![
            ComplexSpec::cycle(4),
            ComplexSpec::path(4),
            ComplexSpec::simplex_boundary(3),
        ]);
        let k = spec.build().unwrap();
        assert_eq!(k.dimension(), 4);
        // Cylinder times 2-sphere: betti (1,1,1,1,0) by Kunneth.
        assert_eq!(k.betti_numbers(), vec![1, 1, 1, 1, 0]);
    }

    #[test]
    fn text_round_trip() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(3), ComplexSpec::path(3)]);
        let k = spec.build().unwrap();
        let text = k.to_text();
        let back = parse_complex_str(&text).unwrap();
        assert_eq!(back.cell_counts(), k.cell_counts());
        assert_eq!(back.betti_numbers(), k.betti_numbers());
        for deg in 0..=1 {
            for c in 0..k.n_cells(deg) {
                assert!((back.star_weights(deg)[c] - k.star_weights(deg)[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "0 v0 : : 1.0\n1 e0 : +v0 -v1 : 1.0\n";
        let err = parse_complex_str(text).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_weight() {
        let text = "0 v0 : : 0.0\n";
        assert!(matches!(parse_complex_str(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn spec_grammar() {
        let s = ComplexSpec::parse("cycle:4*path:5@2.0*simplex-boundary:3").unwrap();
        match &s {
            ComplexSpec::Product(fs) => {
                assert_eq!(fs.len(), 3);
                assert_eq!(fs[0], ComplexSpec::cycle(4));
                assert_eq!(fs[1], ComplexSpec::Path { points: 5, length: 2.0 });
                assert_eq!(fs[2], ComplexSpec::simplex_boundary(3));
            }
            other => panic!("expected product, got {other:?}"),
        }
        assert_eq!(ComplexSpec::parse(&s.to_string()).unwrap(), s);
        assert!(ComplexSpec::parse("blob:4").is_err());
        assert!(ComplexSpec::parse("cycle:x").is_err());
    }

    #[test]
    fn subcomplex_of_path_is_path() {
        let k = ComplexSpec::path(10).build().unwrap();
        let keep: Vec<bool> = (0..10).map(|v| v < 6).collect();
        let (sub, map) = k.subcomplex_by_vertices(&keep).unwrap();
        assert_eq!(sub.cell_counts(), vec![6, 5]);
        assert_eq!(map[0], vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(sub.betti_numbers(), vec![1, 0]);
    }

    #[test]
    fn subcomplex_strip_of_torus_is_cylinder() {
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(6), ComplexSpec::cycle(6)]);
        let k = spec.build().unwrap();
        // Keep vertices whose second-factor coordinate is in the lower half.
        let keep: Vec<bool> = k.vertex_coords().iter().map(|c| c[1] < 0.5).collect();
        let (sub, _) = k.subcomplex_by_vertices(&keep).unwrap();
        assert_eq!(sub.betti_numbers(), vec![1, 1, 0]);
    }

    #[test]
    fn disjoint_union_counts_and_betti() {
        let a = ComplexSpec::cycle(5).build().unwrap();
        let b = ComplexSpec::simplex_boundary(3).build().unwrap();
        let u = disjoint_union(&a, &b).unwrap();
        assert_eq!(u.cell_counts(), vec![9, 11, 4]);
        assert_eq!(u.betti_numbers(), vec![2, 1, 1]);
    }

    #[test]
    fn betti_invariant_under_relabeling_and_flips() {
        use rand::rngs::StdRng;
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(42);
        let spec = ComplexSpec::product(vec![ComplexSpec::cycle(4), ComplexSpec::cycle(3)]);
        let k = spec.build().unwrap();
        let expected = k.betti_numbers();
        for _ in 0..5 {
            // Random permutation per degree and random orientation flips.
            let dim = k.dimension();
            let mut perm: Vec<Vec<usize>> = Vec::new();
            let mut flip: Vec<Vec<bool>> = Vec::new();
            for deg in 0..=dim {
                let mut p: Vec<usize> = (0..k.n_cells(deg)).collect();
                p.shuffle(&mut rng);
                perm.push(p);
                flip.push((0..k.n_cells(deg)).map(|_| rng.gen_bool(0.5)).collect());
            }
            // perm[deg][old] = new position; orientation flip negates the
            // cell's boundary column and its occurrences above.
            let mut boundary = Vec::new();
            let mut star = Vec::new();
            let mut volume = Vec::new();
            for deg in 0..=dim {
                let n = k.n_cells(deg);
                let mut bnd = vec![Vec::new(); n];
                let mut st = vec![0.0; n];
                let mut vo = vec![0.0; n];
                for old in 0..n {
                    let new = perm[deg][old];
                    st[new] = k.star_weights(deg)[old];
                    vo[new] = k.volume_weights(deg)[old];
                    if deg > 0 {
                        let self_sign = if flip[deg][old] { -1i8 } else { 1 };
                        bnd[new] = k.boundary_entries(deg)[old]
                            .iter()
                            .map(|&(f, s)| {
                                let face_sign = if flip[deg - 1][f] { -1i8 } else { 1 };
                                (perm[deg - 1][f], s * self_sign * face_sign)
                            })
                            .collect();
                    }
                }
                boundary.push(bnd);
                star.push(st);
                volume.push(vo);
            }
            let coords = {
                let mut c = vec![Vec::new(); k.n_cells(0)];
                for old in 0..k.n_cells(0) {
                    c[perm[0][old]] = k.vertex_coords()[old].clone();
                }
                c
            };
            let relabeled = CellComplex::from_parts(dim, boundary, star, volume, coords).unwrap();
            assert_eq!(relabeled.betti_numbers(), expected);
        }
    }
}

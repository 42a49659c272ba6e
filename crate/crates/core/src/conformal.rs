//! Conformal weight profiles and pencil assembly.
//!
//! A conformal factor is sampled at vertices as positive values h_v.  On an
//! n-dimensional complex the degree-k mass of a cell c is
//!
//! ```text
//! M_k[c] = star_k[c] * mean_{v in c} h_v^(n - 2k)
//! ```
//!
//! and the stiffness of the degree-p pencil is S_p = B M_{p+1} B^T with
//! B the signed incidence of (p+1)-cells on p-cells.  The stiffness weight
//! of degree p is therefore literally the mass weight of degree p+1, which
//! keeps disjoint unions exactly block diagonal and makes a constant factor
//! c rescale eigenvalues by c^-2 and volumes by c^n with no further error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complex::{CellComplex, IncidenceMatrix};
use crate::error::{Error, Result};

/// Positive conformal factor sampled at the vertices of a complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalProfile {
    values: Vec<f64>,
}

impl ConformalProfile {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProfile("profile has no vertices".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "profile values must be positive and finite, got {v}"
            )));
        }
        Ok(ConformalProfile { values })
    }

    pub fn uniform(n_vertices: usize, value: f64) -> Result<Self> {
        Self::from_values(vec![value; n_vertices])
    }

    /// Samples a function of the vertex coordinates.
    pub fn from_fn(
        complex: &CellComplex,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        Self::from_values(complex.vertex_coords().iter().map(|c| f(c)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multiplies the profile by a constant factor.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_values(self.values.iter().map(|v| v * c).collect())
    }

    /// Pointwise product with another profile on the same vertex set.
    pub fn pointwise_mul(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(
                "profiles live on different vertex sets".into(),
            ));
        }
        Self::from_values(
            self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        )
    }

    /// Restriction along a vertex map (new index -> old index), as produced
    /// by `CellComplex::subcomplex_by_vertices`.
    pub fn restrict(&self, vertex_map: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(vertex_map.len());
        for &old in vertex_map {
            let v = self.values.get(old).ok_or_else(|| {
                Error::DimensionMismatch(format!("vertex map entry {old} out of range"))
            })?;
            values.push(*v);
        }
        Self::from_values(values)
    }

    /// Concatenation, matching the vertex order of a disjoint union.
    pub fn concat(parts: &[&ConformalProfile]) -> Result<Self> {
        let mut values = Vec::new();
        for p in parts {
            values.extend_from_slice(&p.values);
        }
        Self::from_values(values)
    }

    /// Largest pointwise metric ratio between h^2 g and h'^2 g: the smallest
    /// tau >= 1 with g/tau <= g' <= tau g.
    pub fn metric_ratio(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(
                "profiles live on different vertex sets".into(),
            ));
        }
        let mut tau: f64 = 1.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            let r = (a / b).max(b / a);
            tau = tau.max(r * r);
        }
        Ok(tau)
    }
}

/// Diagonal mass of degree k: star weight times the cell average of
/// h^(n - 2k) over incident vertices.
pub fn mass_diagonal(
    complex: &CellComplex,
    profile: &ConformalProfile,
    k: usize,
) -> Result<Vec<f64>> {
    if profile.len() != complex.n_cells(0) {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} values for {} vertices",
            profile.len(),
            complex.n_cells(0)
        )));
    }
    if k > complex.dimension() {
        return Err(Error::InvalidSpec(format!(
            "degree {k} exceeds complex dimension {}",
            complex.dimension()
        )));
    }
    let n = complex.dimension() as i32;
    let e = n - 2 * k as i32;
    let h = profile.values();
    let star = complex.star_weights(k);
    let mut out = Vec::with_capacity(complex.n_cells(k));
    for c in 0..complex.n_cells(k) {
        let verts = complex.cell_vertices(k, c);
        let mut sum = 0.0;
        for &v in verts {
            sum += h[v].powi(e);
        }
        out.push(star[c] * sum / verts.len() as f64);
    }
    Ok(out)
}

/// Total conformal volume: reference top-cell volumes weighted by the cell
/// average of h^n.
pub fn conformal_volume(complex: &CellComplex, profile: &ConformalProfile) -> Result<f64> {
    if profile.len() != complex.n_cells(0) {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} values for {} vertices",
            profile.len(),
            complex.n_cells(0)
        )));
    }
    let n = complex.dimension();
    let h = profile.values();
    let vol = complex.volume_weights(n);
    let mut total = 0.0;
    for c in 0..complex.n_cells(n) {
        let verts = complex.cell_vertices(n, c);
        let mut sum = 0.0;
        for &v in verts {
            sum += h[v].powi(n as i32);
        }
        total += vol[c] * sum / verts.len() as f64;
    }
    Ok(total)
}

/// Assembled generalized pencil at one degree: the diagonal mass M_p plus
/// the incidence/mass pairs one degree up and down, from which the stiffness
/// and the full-form operator are built.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    pub degree: usize,
    pub ambient_dim: usize,
    /// Diagonal of M_p.
    pub mass: Vec<f64>,
    /// (incidence of (p+1)-cells on p-cells, diagonal of M_{p+1}).
    pub up: Option<(IncidenceMatrix, Vec<f64>)>,
    /// (incidence of p-cells on (p-1)-cells, diagonal of M_{p-1}).
    pub down: Option<(IncidenceMatrix, Vec<f64>)>,
}

/// Assembles the degree-p pencil data for a profile.
pub fn assemble(
    complex: &CellComplex,
    profile: &ConformalProfile,
    degree: usize,
) -> Result<DiscreteLaplacian> {
    let n = complex.dimension();
    if degree > n {
        return Err(Error::InvalidSpec(format!(
            "form degree {degree} exceeds complex dimension {n}"
        )));
    }
    let mass = mass_diagonal(complex, profile, degree)?;
    let up = if degree < n {
        Some((
            complex.boundary_matrix(degree + 1)?,
            mass_diagonal(complex, profile, degree + 1)?,
        ))
    } else {
        None
    };
    let down = if degree > 0 {
        Some((
            complex.boundary_matrix(degree)?,
            mass_diagonal(complex, profile, degree - 1)?,
        ))
    } else {
        None
    };
    Ok(DiscreteLaplacian { degree, ambient_dim: n, mass, up, down })
}

impl DiscreteLaplacian {
    pub fn size(&self) -> usize {
        self.mass.len()
    }

    /// Stiffness of the coexact (up) part: S_p = B M_{p+1} B^T.
    pub fn up_stiffness_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut s = DMatrix::zeros(n, n);
        if let Some((b, m_up)) = &self.up {
            // Accumulate column-by-column outer products of B rows scaled by
            // the (p+1)-mass: S[i][j] += sum_c B[i,c] m[c] B[j,c].
            let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); b.cols];
            for &(i, c, sg) in &b.triplets {
                cols[c].push((i, sg as f64));
            }
            for (c, entries) in cols.iter().enumerate() {
                let w = m_up[c];
                for &(i, si) in entries {
                    for &(j, sj) in entries {
                        s[(i, j)] += si * w * sj;
                    }
                }
            }
        }
        s
    }

    /// Exact (down) part of the full operator:
    /// C_p = M_p A^T M_{p-1}^{-1} A M_p with A the incidence of p-cells.
    pub fn down_stiffness_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut c_mat = DMatrix::zeros(n, n);
        if let Some((a, m_down)) = &self.down {
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); a.rows];
            for &(f, c, sg) in &a.triplets {
                rows[f].push((c, sg as f64));
            }
            for (f, entries) in rows.iter().enumerate() {
                let w = 1.0 / m_down[f];
                for &(i, si) in entries {
                    for &(j, sj) in entries {
                        c_mat[(i, j)] += self.mass[i] * si * w * sj * self.mass[j];
                    }
                }
            }
        }
        c_mat
    }

    /// Full-form operator S_p + C_p.
    pub fn full_dense(&self) -> DMatrix<f64> {
        self.up_stiffness_dense() + self.down_stiffness_dense()
    }

    /// Half-transformed up factor L = M_p^{-1/2} B M_{p+1}^{1/2}; the
    /// coexact spectrum is the nonzero squared singular values of L.
    pub fn half_up_factor(&self) -> Option<DMatrix<f64>> {
        let (b, m_up) = self.up.as_ref()?;
        let mut l = DMatrix::zeros(b.rows, b.cols);
        for &(i, c, sg) in &b.triplets {
            l[(i, c)] += sg as f64 * m_up[c].sqrt() / self.mass[i].sqrt();
        }
        Some(l)
    }

    /// Half-transformed down factor R = M_{p-1}^{-1/2} A M_p^{1/2}; the
    /// exact part of the half-transformed operator is R^T R.
    pub fn half_down_factor(&self) -> Option<DMatrix<f64>> {
        let (a, m_down) = self.down.as_ref()?;
        let mut r = DMatrix::zeros(a.rows, a.cols);
        for &(f, c, sg) in &a.triplets {
            r[(f, c)] += sg as f64 * self.mass[c].sqrt() / m_down[f].sqrt();
        }
        Some(r)
    }
}

/// Components of a cochain under the discrete Hodge decomposition at its
/// degree: image of the coboundary, image of the codifferential, and the
/// M-orthogonal complement of both.
#[derive(Debug, Clone)]
pub struct HodgeParts {
    pub exact: DVector<f64>,
    pub coexact: DVector<f64>,
    pub harmonic: DVector<f64>,
}

/// Splits a degree-p cochain into exact, coexact, and harmonic parts,
/// orthogonal in the M_p inner product.  Projections are computed from
/// singular vector bases of the half-transformed factors, with subspace
/// dimensions fixed by exact integer ranks of the incidence matrices.
pub fn hodge_decompose(
    complex: &CellComplex,
    profile: &ConformalProfile,
    degree: usize,
    x: &DVector<f64>,
) -> Result<HodgeParts> {
    let lap = assemble(complex, profile, degree)?;
    if x.len() != lap.size() {
        return Err(Error::DimensionMismatch(format!(
            "cochain has {} entries for {} cells",
            x.len(),
            lap.size()
        )));
    }
    let half = DVector::from_iterator(
        lap.size(),
        x.iter().zip(&lap.mass).map(|(xi, m)| xi * m.sqrt()),
    );
    let unhalf = |u: DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(u.len(), u.iter().zip(&lap.mass).map(|(ui, m)| ui / m.sqrt()))
    };
    // Exact directions: columns of M^{1/2} A^T, i.e. rows of the half down
    // factor; coexact directions: columns of the half up factor.
    let exact_half = match lap.half_down_factor() {
        Some(r) => project_onto_columns(&r.transpose(), complex.boundary_rank(degree), &half),
        None => DVector::zeros(lap.size()),
    };
    let coexact_half = match lap.half_up_factor() {
        Some(l) => project_onto_columns(&l, complex.boundary_rank(degree + 1), &half),
        None => DVector::zeros(lap.size()),
    };
    let harmonic_half = &half - &exact_half - &coexact_half;
    Ok(HodgeParts {
        exact: unhalf(exact_half),
        coexact: unhalf(coexact_half),
        harmonic: unhalf(harmonic_half),
    })
}

/// Orthogonal projection of u onto the column space of m, whose dimension is
/// known to be `rank`.  Uses the `rank` left singular vectors with largest
/// singular values.
fn project_onto_columns(m: &DMatrix<f64>, rank: usize, u: &DVector<f64>) -> DVector<f64> {
    if rank == 0 {
        return DVector::zeros(u.len());
    }
    let svd = m.clone().svd(true, false);
    let left = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
    });
    let mut proj = DVector::zeros(u.len());
    for &idx in order.iter().take(rank) {
        let col = left.column(idx);
        let coef = col.dot(u);
        proj.axpy(coef, &col, 1.0);
    }
    proj
}

/// M-weighted inner product of two cochains.
pub fn mass_inner(mass: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    mass.iter().zip(a.iter().zip(b.iter())).map(|(m, (x, y))| m * x * y).sum()
}

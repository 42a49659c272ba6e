//! Spectral geometry of weighted cell complexes under conformal deformation.
//!
//! The library discretizes the Hodge Laplacian on p-cochains of a weighted
//! cell complex.  A conformal factor h > 0 sampled at vertices enters the
//! inner products through the weight law of an n-manifold: the stiffness of a
//! p-cochain is weighted by h^(n-2p-2) on (p+1)-cells and its mass by
//! h^(n-2p) on p-cells, so the generalized eigenproblem S x = lambda M x
//! reproduces the conformal scaling of coexact p-form eigenvalues.
//!
//! On top of that core sit the experiment drivers: pinched profiles that
//! shrink a chosen coexact eigenvalue like eta^(n-2p-2), quasi-isometry and
//! covering lower bounds, thin-handle gluing with spectral convergence to the
//! disjoint union, and a fixed-point driver that prescribes finite spectrum
//! and volume simultaneously.

pub mod complex;
pub mod conformal;
pub mod cover;
pub mod eigen;
pub mod error;
pub mod handle;
pub mod homology;
pub mod pinch;
pub mod prescribe;
pub mod radial;
pub mod report;

pub use complex::{CellComplex, ComplexSpec, IncidenceMatrix};
pub use conformal::{ConformalProfile, DiscreteLaplacian};
pub use cover::{CoverData, GlueData};
pub use eigen::{SolverOptions, SpectrumSlice};
pub use error::{Error, Result};
pub use handle::{Attachment, HandleSpec};
pub use pinch::PinchParams;
pub use prescribe::PrescriptionTarget;
pub use radial::RadialProblem;

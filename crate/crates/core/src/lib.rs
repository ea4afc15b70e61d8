//! Numerical laboratory for moments of cubic exponential sums
//! `S(x) = Σ a_k e(k x1 + k² x2 + k³ x3)` over anisotropic boxes, and for the
//! small-cap / canonical-cap geometry of the moment curve `(t, t², t³)`.
//!
//! Modules:
//! - [`expsum`]: pointwise, band-restricted and grid evaluation of the sums.
//! - [`moment`]: exact even moments via grouped tuple enumeration, plus a
//!   brute-force pair oracle and exact Vinogradov counts.
//! - [`quadrature`]: tensor quadrature of `|S|^p` for real `p`, including local
//!   averages over r-cubes with continuous frequencies.
//! - [`geometry`]: neighborhoods, small caps, canonical blocks, the cone map and
//!   rescaling map, and sampled overlap/containment checks.
//! - [`sharpness`]: extremal coefficient families, exponent fits, sweeps and the
//!   broad/narrow pointwise check.
//! - [`harness`]: configuration, manifests and output used by the `smallcap` CLI.

pub mod error;
pub mod expsum;
pub mod geometry;
pub mod harness;
pub mod moment;
pub mod quadrature;
pub mod sharpness;

pub use error::{LabError, Limits, Result};
pub use expsum::{eval_grid, eval_partial_sum, eval_sum, Box3, ExpSumSpec, FreqInterval, Point3};
pub use moment::{
    build_group_table, kernel_h, moment_brute, moment_exact, vinogradov_count, Method,
    MomentResult, TupleGroupTable,
};
pub use num_complex::Complex64;
pub use quadrature::{
    local_moment_exact, local_moment_quadrature, moment_quadrature, periodicity_identity_check,
    AxisRule, FreqSet, LocalOptions, QuadratureGrid,
};
pub use sharpness::{
    broad_narrow_check, exponent_fit, interference_lower_bound, verify_maincor,
    verify_mainexp_bound, CoeffFamily, ExponentFit, LocalMethod, MaincorConfig, SweepConfig,
    SweepReport,
};

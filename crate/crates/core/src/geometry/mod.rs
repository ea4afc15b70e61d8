//! Frequency-space geometry around the moment curve `γ(t) = (t, t², t³)`.

mod affine;
mod checks;

pub use affine::{cone_map, rescale_map, AffineMap3};
pub use checks::{
    check_cone_containment_geo2, check_cone_containment_geo3, check_overlap_geo1, check_partition,
    check_rescale, geo1_suite, geo2_grid, geo2_suite, geo3_grid, geo3_suite, ray_angle,
    scale_pairs, ConeCase, GeoReport, CAP_DILATION, THIN_CAP,
};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expsum::Point3;

/// Multiplicative slack applied to every bound in sampled containment tests.
pub const BOUND_SLACK: f64 = 1e-9;

/// `⌈x⌉`, treating values within `1e-9` (relative) of an integer as that integer.
pub fn robust_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub fn gamma(t: f64) -> Point3 {
    Point3::new(t, t * t, t * t * t)
}

/// `(ξ₂ − ξ₁², ξ₃ − 3ξ₁ξ₂ + 2ξ₁³)`: vanishes exactly on the curve.
pub fn curve_defects(xi: Point3) -> (f64, f64) {
    let Point3 { x1, x2, x3 } = xi;
    (x2 - x1 * x1, x3 - 3.0 * x1 * x2 + 2.0 * x1 * x1 * x1)
}

/// Anisotropic neighbourhood `{ξ₁ ∈ [0,1], |ξ₂−ξ₁²| ≤ w2, |ξ₃−3ξ₁ξ₂+2ξ₁³| ≤ w3}`.
pub fn in_neighborhood(xi: Point3, w2: f64, w3: f64) -> bool {
    let (d2, d3) = curve_defects(xi);
    (0.0..=1.0).contains(&xi.x1) && d2.abs() <= w2 && d3.abs() <= w3
}

/// Scale `R` and cap exponent `β` of a small-cap family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingParams {
    r: f64,
    beta: f64,
}

impl DecouplingParams {
    pub fn new(r: f64, beta: f64) -> Result<Self> {
        if !(r >= 2.0 && r.is_finite()) {
            return Err(LabError::invalid(format!("R = {r} must be >= 2")));
        }
        if !(1.0 / 3.0 - 1e-12..=1.0).contains(&beta) {
            return Err(LabError::invalid(format!("beta = {beta} outside [1/3, 1]")));
        }
        Ok(DecouplingParams { r, beta })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cap_count(&self) -> usize {
        robust_ceil(self.r.powf(self.beta))
    }

    /// Cap dimensions `R^{-β} × R^{-2β} × R^{-1}`.
    pub fn cap_dims(&self) -> [f64; 3] {
        [
            self.r.powf(-self.beta),
            self.r.powf(-2.0 * self.beta),
            1.0 / self.r,
        ]
    }

    /// Exponent of the admissible cube side, `max(2β, 1)`; reports which regime applies.
    pub fn cube_exponent(&self) -> f64 {
        (2.0 * self.beta).max(1.0)
    }
}

pub fn neighborhood_membership(params: &DecouplingParams, xi: Point3) -> bool {
    let [_, w2, w3] = params.cap_dims();
    in_neighborhood(xi, w2, w3)
}

/// Index of the small cap holding `xi`, if `xi` is in the neighbourhood.
pub fn cap_index_of(params: &DecouplingParams, xi: Point3) -> Option<usize> {
    if !neighborhood_membership(params, xi) {
        return None;
    }
    let l = (xi.x1 * params.r.powf(params.beta)).floor() as usize;
    Some(l.min(params.cap_count() - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallCap {
    pub params: DecouplingParams,
    pub l: usize,
}

impl SmallCap {
    pub fn new(params: DecouplingParams, l: usize) -> Result<Self> {
        if l >= params.cap_count() {
            return Err(LabError::invalid(format!(
                "cap index {l} >= {}",
                params.cap_count()
            )));
        }
        Ok(SmallCap { params, l })
    }

    /// Half-open `ξ₁` range; the last cap also keeps `ξ₁ = 1`.
    pub fn xi1_range(&self) -> (f64, f64) {
        let w = self.params.cap_dims()[0];
        (self.l as f64 * w, ((self.l + 1) as f64 * w).min(1.0))
    }

    pub fn contains(&self, xi: Point3) -> bool {
        cap_index_of(&self.params, xi) == Some(self.l)
    }
}

/// Arc of the curve at scale `S` with widths `S⁻¹ × S⁻² × S⁻³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalBlock {
    pub scale: f64,
    pub l: usize,
}

impl CanonicalBlock {
    pub fn new(scale: f64, l: usize) -> Result<Self> {
        if scale.is_nan() || scale < 1.0 || (l as f64) >= scale * (1.0 - 1e-12) {
            return Err(LabError::invalid(format!(
                "block {l} invalid at scale {scale}"
            )));
        }
        Ok(CanonicalBlock { scale, l })
    }

    pub fn contains(&self, xi: Point3) -> bool {
        let w = 1.0 / self.scale;
        let lo = self.l as f64 * w;
        let hi = lo + w;
        let in_range = xi.x1 >= lo && (xi.x1 < hi || (hi >= 1.0 && xi.x1 <= 1.0));
        in_range && in_neighborhood(xi, w * w, w * w * w)
    }
}

/// `(γ′(t), γ″(t), γ‴(t))`.
pub fn frenet_frame(t: f64) -> [[f64; 3]; 3] {
    [
        [1.0, 2.0 * t, 3.0 * t * t],
        [0.0, 2.0, 6.0 * t],
        [0.0, 0.0, 6.0],
    ]
}

/// `{Aγ′(t₀) + Bγ″(t₀) + Cγ‴(t₀)}` with `|A| ∈ [a_min, a_max]`, `|B| ≤ b_max`, `|C| ≤ c_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub t0: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub c_max: f64,
}

impl ParamBox {
    pub fn point(&self, a: f64, b: f64, c: f64) -> Point3 {
        frame_point(self.t0, [a, b, c])
    }

    /// Frame coordinates of `xi` at `t₀` (the frame is triangular with determinant 12).
    pub fn coords(&self, xi: Point3) -> [f64; 3] {
        frame_coords(self.t0, xi)
    }

    pub fn contains_coords(&self, [a, b, c]: [f64; 3]) -> bool {
        let k = 1.0 + BOUND_SLACK;
        a.abs() * k >= self.a_min
            && a.abs() <= self.a_max * k
            && b.abs() <= self.b_max * k
            && c.abs() <= self.c_max * k
    }

    pub fn contains(&self, xi: Point3) -> bool {
        self.contains_coords(self.coords(xi))
    }
}

pub(crate) fn frame_point(t: f64, [a, b, c]: [f64; 3]) -> Point3 {
    Point3::new(
        a,
        2.0 * t * a + 2.0 * b,
        3.0 * t * t * a + 6.0 * t * b + 6.0 * c,
    )
}

pub(crate) fn frame_coords(t: f64, xi: Point3) -> [f64; 3] {
    let a = xi.x1;
    let b = (xi.x2 - 2.0 * t * a) / 2.0;
    let c = (xi.x3 - 3.0 * t * t * a - 6.0 * t * b) / 6.0;
    [a, b, c]
}

/// High-frequency difference set of the `l`-th cap at scale `r_k`:
/// `|A| ∈ [r_next⁻¹/2, C r_k⁻¹]`, `|B| ≤ C r_k⁻²`, `|C| ≤ C R⁻¹`, framed at `t₀ = l/r_k`.
pub fn gamma_tilde(r_k: f64, r_next: f64, r_big: f64, l: usize, c_eps: f64) -> Result<ParamBox> {
    if !(r_k >= 1.0 && r_next >= r_k && r_big >= r_next) {
        return Err(LabError::invalid(format!(
            "need 1 <= r_k <= r_next <= R, got {r_k}, {r_next}, {r_big}"
        )));
    }
    if c_eps.is_nan() || c_eps <= 0.0 {
        return Err(LabError::invalid("C_eps must be positive"));
    }
    if l as f64 >= r_k {
        return Err(LabError::invalid(format!(
            "l = {l} must be below r_k = {r_k}"
        )));
    }
    Ok(ParamBox {
        t0: l as f64 / r_k,
        a_min: 0.5 / r_next,
        a_max: c_eps / r_k,
        b_max: c_eps / (r_k * r_k),
        c_max: c_eps / r_big,
    })
}

//! Sampled verification of the overlap, cone-containment, partition and rescaling statements.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    cap_index_of, curve_defects, frame_point, gamma, gamma_tilde, in_neighborhood, rescale_map,
    robust_ceil, DecouplingParams, SmallCap, BOUND_SLACK,
};
use crate::error::{check_budget, LabError, Result};
use crate::expsum::Point3;

/// Conical caps are "approximate" boxes: a sample is inside when each frame
/// offset is within this multiple of the nominal cap dimension.
pub const CAP_DILATION: f64 = 4.0;

/// Cone caps wider than this in any direction are not thin, and the
/// containment statements say nothing about them.
pub const THIN_CAP: f64 = 0.5;

const MAX_SAMPLES: u128 = 10_000_000;
const MAX_TRIES: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoReport {
    pub check: String,
    pub configurations: u64,
    pub samples: u64,
    pub violations: u64,
    /// Largest number of sets found to contain one sample.
    pub max_multiplicity: u64,
    /// Largest index distance between two sets sharing a sample.
    pub max_index_gap: u64,
    pub index_threshold: f64,
    /// Largest offset over its allowance, across all frame directions.
    pub max_ratio: f64,
    pub sectors_used: u64,
    pub sector_count: u64,
    pub subsets: u64,
    pub max_residual: f64,
    pub first_violation: Option<String>,
}

impl GeoReport {
    fn new(check: &str) -> Self {
        GeoReport {
            check: check.to_string(),
            ..Default::default()
        }
    }

    fn violation(&mut self, what: impl FnOnce() -> String) {
        self.violations += 1;
        if self.first_violation.is_none() {
            self.first_violation = Some(what());
        }
    }

    /// Folds another report of the same check into this one.
    pub fn merge(&mut self, other: &GeoReport) {
        self.configurations += other.configurations;
        self.samples += other.samples;
        self.violations += other.violations;
        self.max_multiplicity = self.max_multiplicity.max(other.max_multiplicity);
        self.max_index_gap = self.max_index_gap.max(other.max_index_gap);
        self.index_threshold = self.index_threshold.max(other.index_threshold);
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        self.sectors_used = self.sectors_used.max(other.sectors_used);
        self.sector_count = self.sector_count.max(other.sector_count);
        self.subsets = self.subsets.max(other.subsets);
        self.max_residual = self.max_residual.max(other.max_residual);
        if self.first_violation.is_none() {
            self.first_violation.clone_from(&other.first_violation);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn sym(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    rng.random_range(-1.0..=1.0) * half
}

/// Samples the difference sets of caps `l` and counts which other caps' sets
/// contain them. A shared sample between caps more than
/// `10·C_eps·r_next/r_k` apart is a violation.
pub fn check_overlap_geo1(
    r_k: f64,
    r_next: f64,
    r_big: f64,
    c_eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GeoReport> {
    check_budget("geometry samples", samples as u128, MAX_SAMPLES as u64)?;
    gamma_tilde(r_k, r_next, r_big, 0, c_eps)?;
    let caps = robust_ceil(r_k);
    let mut rep = GeoReport::new("geo1");
    rep.configurations = 1;
    rep.index_threshold = 10.0 * c_eps * r_next / r_k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let l = rng.random_range(0..caps);
        let bx = gamma_tilde(r_k, r_next, r_big, l, c_eps)?;
        let a =
            rng.random_range(bx.a_min..=bx.a_max) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = sym(&mut rng, bx.b_max);
        let c = sym(&mut rng, bx.c_max);
        let p = bx.point(a, b, c);
        // Only caps whose second frame coordinate stays in range can hold p.
        let reach =
            ((bx.b_max * (1.0 + BOUND_SLACK) + b.abs()) * r_k / a.abs()).floor() as usize + 1;
        let mut holders = 0;
        for l2 in l.saturating_sub(reach)..(l + reach + 1).min(caps) {
            if gamma_tilde(r_k, r_next, r_big, l2, c_eps)?.contains(p) {
                holders += 1;
                let gap = l.abs_diff(l2) as u64;
                rep.max_index_gap = rep.max_index_gap.max(gap);
                if gap as f64 > rep.index_threshold {
                    rep.violation(|| format!("caps {l} and {l2} share {:?}", p.to_array()));
                }
            }
        }
        if holders == 0 {
            rep.violation(|| format!("cap {l} misses its own sample {:?}", p.to_array()));
        }
        rep.max_multiplicity = rep.max_multiplicity.max(holders);
        rep.samples += 1;
    }
    Ok(rep)
}

/// Which cone-cap shape applies to scale `r_k` at `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeCase {
    /// `r_k⁻¹ ≤ R^{-1/2}`: caps `1 × C r/R × C r/R`.
    Flat,
    /// `R^{-1/2} ≤ r_k⁻¹ ≤ R^{-1/3}` with `(R/r_k)^{-β₁} = r_k⁻¹`:
    /// caps `1 × C (r/R)^{β₁} × C^{1/β₁} r/R`.
    Angular { beta1: f64 },
}

impl ConeCase {
    pub fn classify(r_k: f64, r_big: f64) -> Result<Self> {
        let tol = 1e-12;
        if 1.0 / r_k <= r_big.powf(-0.5) * (1.0 + tol) {
            return Ok(ConeCase::Flat);
        }
        if 1.0 / r_k <= r_big.powf(-1.0 / 3.0) * (1.0 + tol) {
            let beta1 = r_k.ln() / (r_big / r_k).ln();
            return Ok(ConeCase::Angular {
                beta1: beta1.clamp(0.5, 1.0),
            });
        }
        Err(LabError::invalid(format!(
            "r_k = {r_k} is below R^(1/3); no cone case applies"
        )))
    }

    /// (angular, radial) cap widths at dilation scale `r`.
    pub fn widths(&self, r: f64, r_big: f64, c_eps: f64) -> (f64, f64) {
        match *self {
            ConeCase::Flat => (c_eps * r / r_big, c_eps * r / r_big),
            ConeCase::Angular { beta1 } => (
                c_eps * (r / r_big).powf(beta1),
                c_eps.powf(1.0 / beta1) * r / r_big,
            ),
        }
    }
}

/// Angle of the light ray through `Tγ′(t)`.
pub fn ray_angle(t: f64) -> f64 {
    (2.0 - t * t).atan2(2.0 * 2f64.sqrt() * t)
}

struct ConeSetup {
    /// Frame-coordinate half-widths for `B` and `C`, and the cap on `|A|`.
    a_range: (f64, f64),
    b_max: f64,
    c_max: f64,
    /// Target slab `{ξ₃ ∼ r⁻¹}` and dilation.
    r: f64,
    w_ang: f64,
    w_rad: f64,
    /// Points closer to the origin than this are discarded.
    exclude: f64,
}

fn thin(w_ang: f64, w_rad: f64) -> Result<()> {
    if w_ang.max(w_rad) > THIN_CAP {
        return Err(LabError::invalid(format!(
            "cone caps {w_ang} x {w_rad} are not thin (limit {THIN_CAP})"
        )));
    }
    Ok(())
}

/// Smallest power of two `S` with `2π/S ≤ width`.
fn sector_count(width: f64) -> u64 {
    let mut s = 1u64;
    while 2.0 * PI / s as f64 > width && s < (1 << 62) {
        s *= 2;
    }
    s
}

/// Samples `r·T(set) ∩ {ξ₃ ∼ r⁻¹}` for blocks based at `t₀ = l/blocks` and tests
/// each point against the conical cap of its block's sector.
fn cone_sampling(
    check: &str,
    blocks: usize,
    setup: &ConeSetup,
    samples: usize,
    seed: u64,
) -> Result<GeoReport> {
    check_budget("geometry samples", samples as u128, MAX_SAMPLES as u64)?;
    let tmap = super::cone_map();
    let sectors = sector_count(setup.w_ang);
    let mut rep = GeoReport::new(check);
    rep.configurations = 1;
    rep.sector_count = sectors;
    rep.subsets = 1;
    let mut used = BTreeSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a_lo, a_hi) = setup.a_range;
    let k = CAP_DILATION * (1.0 + BOUND_SLACK);
    'outer: for _ in 0..samples {
        let l = rng.random_range(0..blocks);
        let t = l as f64 / blocks as f64;
        let lambda = (1.0 + t * t / 2.0) * FRAC_1_SQRT_2;
        // pick (B, C) and a height in the slab, then solve for A
        let mut found = None;
        for _ in 0..MAX_TRIES {
            let b = sym(&mut rng, setup.b_max);
            let c = sym(&mut rng, setup.c_max);
            let z = rng.random_range(0.5..=1.0) / setup.r;
            let a = (z - (t * b + c) * FRAC_1_SQRT_2) / lambda;
            if a.abs() < a_lo || a.abs() > a_hi {
                continue;
            }
            let p = frame_point(t, [a, b, c]);
            if p.x1.hypot(p.x2).hypot(p.x3) < setup.exclude {
                continue;
            }
            found = Some(p);
            break;
        }
        let Some(p) = found else {
            continue 'outer;
        };
        let q = tmap.apply(p);
        let q = Point3::new(q.x1 * setup.r, q.x2 * setup.r, q.x3 * setup.r);
        let omega = ray_angle(t);
        let j = ((omega * sectors as f64 / (2.0 * PI)).floor() as u64).min(sectors - 1);
        used.insert(j);
        let centre = (j as f64 + 0.5) * 2.0 * PI / sectors as f64;
        let (cs, sn) = (centre.cos(), centre.sin());
        let along = (q.x1 * cs + q.x2 * sn + q.x3) / 2.0;
        let across = q.x1 * sn - q.x2 * cs;
        let radial = (q.x1 * cs + q.x2 * sn - q.x3) / 2.0;
        let ratio = (across.abs() / (CAP_DILATION * setup.w_ang))
            .max(radial.abs() / (CAP_DILATION * setup.w_rad));
        rep.max_ratio = rep.max_ratio.max(ratio);
        rep.samples += 1;
        let inside = along * k >= 0.5 / CAP_DILATION
            && along <= CAP_DILATION * (1.0 + BOUND_SLACK)
            && across.abs() <= k * setup.w_ang
            && radial.abs() <= k * setup.w_rad;
        if !inside {
            rep.violation(|| {
                format!(
                    "block {l}: sample {:?} has cap offsets ({along}, {across}, {radial})",
                    p.to_array()
                )
            });
        }
    }
    rep.sectors_used = used.len() as u64;
    Ok(rep)
}

/// Difference sets of the caps at scale `r_k`, mapped by `T`, cut to
/// `{ξ₃ ∼ r⁻¹}` and dilated by `r`, must sit in the conical cap of their sector.
pub fn check_cone_containment_geo2(
    r_k: f64,
    r_next: f64,
    r_big: f64,
    r: f64,
    c_eps: f64,
    samples: usize,
    seed: u64,
) -> Result<(ConeCase, GeoReport)> {
    let bx = gamma_tilde(r_k, r_next, r_big, 0, c_eps)?;
    let case = ConeCase::classify(r_k, r_big)?;
    let tol: f64 = 1.0 + 1e-12;
    if 1.0 / r < tol.recip() / r_next || 1.0 / r > 20.0 * c_eps / r_k * tol {
        return Err(LabError::invalid(format!(
            "r = {r} outside [r_k/(20 C), r_next]"
        )));
    }
    let (w_ang, w_rad) = case.widths(r, r_big, c_eps);
    thin(w_ang, w_rad)?;
    let setup = ConeSetup {
        a_range: (bx.a_min, bx.a_max),
        b_max: bx.b_max,
        c_max: bx.c_max,
        r,
        w_ang,
        w_rad,
        exclude: 0.0,
    };
    let rep = cone_sampling("geo2", robust_ceil(r_k), &setup, samples, seed)?;
    Ok((case, rep))
}

/// Difference sets of canonical blocks at scale `R_k^{1/3}`, outside the ball
/// of radius `R_next^{-1/3}`, must land in canonical cone blocks of
/// dimensions `1 × C r R_k^{-2/3} × C² r² R_k^{-4/3}`.
pub fn check_cone_containment_geo3(
    r_k: f64,
    r_next: f64,
    r: f64,
    c_eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GeoReport> {
    if !(r_k >= 1.0 && r_next >= r_k && c_eps > 0.0) {
        return Err(LabError::invalid("need 1 <= R_k <= R_next and C_eps > 0"));
    }
    let tol: f64 = 1.0 + 1e-12;
    let side = r_k.cbrt();
    if 1.0 / r < r_next.cbrt().recip() / tol || 1.0 / r > c_eps / side * tol {
        return Err(LabError::invalid(format!(
            "r = {r} outside [R_k^(1/3)/C, R_next^(1/3)]"
        )));
    }
    thin(
        c_eps * r / (side * side),
        (c_eps * r / (side * side)).powi(2),
    )?;
    let setup = ConeSetup {
        a_range: (0.0, 2.0 * c_eps / side),
        b_max: 2.0 * c_eps / (side * side),
        c_max: 2.0 * c_eps / r_k,
        r,
        w_ang: c_eps * r / (side * side),
        w_rad: (c_eps * r / (side * side)).powi(2),
        exclude: 1.0 / r_next.cbrt(),
    };
    cone_sampling("geo3", robust_ceil(side), &setup, samples, seed)
}

/// Random members of the neighbourhood must fall in exactly one small cap.
pub fn check_partition(params: &DecouplingParams, samples: usize, seed: u64) -> Result<GeoReport> {
    check_budget("geometry samples", samples as u128, MAX_SAMPLES as u64)?;
    let [_, w2, w3] = params.cap_dims();
    let count = params.cap_count();
    let mut rep = GeoReport::new("partition");
    rep.configurations = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x1: f64 = rng.random_range(0.0..=1.0);
        let x2 = x1 * x1 + sym(&mut rng, w2);
        let x3 = 3.0 * x1 * x2 - 2.0 * x1.powi(3) + sym(&mut rng, w3);
        let xi = Point3::new(x1, x2, x3);
        // roundoff in the defect may push a boundary sample out; skip those
        if !in_neighborhood(xi, w2, w3) {
            continue;
        }
        rep.samples += 1;
        let Some(l) = cap_index_of(params, xi) else {
            rep.violation(|| format!("member {:?} has no cap", xi.to_array()));
            continue;
        };
        // caps further away have disjoint ξ₁ ranges
        let holders = (l.saturating_sub(2)..(l + 3).min(count))
            .filter(|&j| {
                SmallCap {
                    params: *params,
                    l: j,
                }
                .contains(xi)
            })
            .count() as u64;
        let (lo, hi) = SmallCap { params: *params, l }.xi1_range();
        let in_range = x1 >= lo && (x1 < hi || (hi >= 1.0 && x1 <= 1.0));
        rep.max_multiplicity = rep.max_multiplicity.max(holders);
        if holders != 1 || !in_range {
            rep.violation(|| format!("member {:?} lies in {holders} caps", xi.to_array()));
        }
    }
    Ok(rep)
}

/// Checks `L(γ((l+u)/R_prev^{1/3})) = γ(u)`, `L∘L⁻¹ = id`, and that `L` carries
/// members of the `l`-th block of `M³(R^β, R)` into `M³(R^β/R_prev^{1/3}, R/R_prev)`.
pub fn check_rescale(
    r_prev: f64,
    l: usize,
    params: &DecouplingParams,
    samples: usize,
    seed: u64,
) -> Result<GeoReport> {
    check_budget("geometry samples", samples as u128, MAX_SAMPLES as u64)?;
    let map = rescale_map(r_prev, l)?;
    let inv = map.inverse()?;
    let s = r_prev.cbrt();
    let [_, w2, w3] = params.cap_dims();
    if params.r().powf(params.beta()) < s * (1.0 - 1e-12) || params.r() < r_prev {
        return Err(LabError::invalid(
            "rescaling needs R^beta >= R_prev^(1/3) and R >= R_prev",
        ));
    }
    let (v2, v3) = (w2.min(s.powi(-2)), w3.min(1.0 / r_prev));
    let (t2, t3) = (w2 * s * s, w3 * r_prev);
    let mut rep = GeoReport::new("rescale");
    rep.configurations = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let u: f64 = rng.random_range(0.0..=1.0);
        let img = map.apply(gamma((l as f64 + u) / s));
        let g = gamma(u);
        let res = (img.x1 - g.x1)
            .abs()
            .max((img.x2 - g.x2).abs())
            .max((img.x3 - g.x3).abs());
        rep.max_residual = rep.max_residual.max(res);

        let x: Point3 = Point3::from_array([0, 1, 2].map(|_| rng.random_range(-1.0..1.0)));
        let back = map.apply(inv.apply(x));
        let id_res = (back.x1 - x.x1)
            .abs()
            .max((back.x2 - x.x2).abs())
            .max((back.x3 - x.x3).abs());
        if id_res > 1e-12 {
            rep.violation(|| format!("L∘L⁻¹ moves {:?} by {id_res:e}", x.to_array()));
        }

        let x1 = (l as f64 + rng.random_range(0.0..1.0)) / s;
        let x2 = x1 * x1 + sym(&mut rng, v2);
        let x3 = 3.0 * x1 * x2 - 2.0 * x1.powi(3) + sym(&mut rng, v3);
        let y = map.apply(Point3::new(x1, x2, x3));
        let (d2, d3) = curve_defects(y);
        let k = 1.0 + BOUND_SLACK;
        if !(y.x1 >= -1e-12 && y.x1 <= 1.0 + 1e-12 && d2.abs() <= t2 * k && d3.abs() <= t3 * k) {
            rep.violation(|| format!("image {:?} leaves the rescaled neighbourhood", y.to_array()));
        }
        rep.samples += 1;
    }
    if rep.max_residual > 1e-9 {
        let res = rep.max_residual;
        rep.violation(|| format!("curve residual {res:e}"));
    }
    Ok(rep)
}

fn dyadic_between(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = 2f64.powi(lo.log2().ceil() as i32);
    while v <= hi * (1.0 + 1e-12) {
        if v >= lo * (1.0 - 1e-12) {
            out.push(v);
        }
        v *= 2.0;
    }
    out
}

/// Consecutive dyadic scale pairs `(r_k, 2 r_k)` with `2^7 ≤ r_k` and `2 r_k ≤ R^β`.
pub fn scale_pairs(params: &DecouplingParams) -> Vec<(f64, f64)> {
    let top = params.r().powf(params.beta());
    dyadic_between(128.0, top / 2.0)
        .into_iter()
        .map(|r| (r, 2.0 * r))
        .collect()
}

/// `(r_k, r_next, r)` triples for the cone check: every scale pair with a
/// cone case, and every dyadic `r` with `r_k/(20 C) ≤ r ≤ r_next` whose caps are thin.
pub fn geo2_grid(params: &DecouplingParams, c_eps: f64) -> Vec<(f64, f64, f64)> {
    scale_pairs(params)
        .into_iter()
        .filter_map(|(r_k, r_next)| {
            ConeCase::classify(r_k, params.r())
                .ok()
                .map(|c| (r_k, r_next, c))
        })
        .flat_map(|(r_k, r_next, case)| {
            dyadic_between(r_k / (20.0 * c_eps), r_next)
                .into_iter()
                .filter_map(move |r| {
                    let (a, b) = case.widths(r, params.r(), c_eps);
                    (a.max(b) <= THIN_CAP).then_some((r_k, r_next, r))
                })
        })
        .collect()
}

/// `(R_k, R_next, r)` triples for the canonical-block check: `R_k = 8^j`
/// with `R_next = 8 R_k ≤ top`, and every dyadic `r` with
/// `max(1, R_k^{1/3}/C) ≤ r ≤ R_next^{1/3}` whose blocks are thin.
pub fn geo3_grid(top: f64, c_eps: f64) -> Vec<(f64, f64, f64)> {
    let mut pairs = Vec::new();
    let mut rk = 8.0;
    while 8.0 * rk <= top * (1.0 + 1e-12) {
        pairs.push((rk, 8.0 * rk));
        rk *= 8.0;
    }
    pairs
        .into_iter()
        .flat_map(|(rk, rn): (f64, f64)| {
            let side = rk.cbrt();
            dyadic_between((side / c_eps).max(1.0), rn.cbrt())
                .into_iter()
                .filter(move |r| c_eps * r / (side * side) <= THIN_CAP)
                .map(move |r| (rk, rn, r))
        })
        .collect()
}

fn config_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// `check_overlap_geo1` over every pair in [`scale_pairs`], `samples` each.
pub fn geo1_suite(
    params: &DecouplingParams,
    c_eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GeoReport> {
    let mut rep = GeoReport::new("geo1");
    for (i, (r_k, r_next)) in scale_pairs(params).into_iter().enumerate() {
        rep.merge(&check_overlap_geo1(
            r_k,
            r_next,
            params.r(),
            c_eps,
            samples,
            config_seed(seed, i),
        )?);
    }
    Ok(rep)
}

/// `check_cone_containment_geo2` over [`geo2_grid`]; also returns the cases met.
pub fn geo2_suite(
    params: &DecouplingParams,
    c_eps: f64,
    samples: usize,
    seed: u64,
) -> Result<(Vec<ConeCase>, GeoReport)> {
    let mut rep = GeoReport::new("geo2");
    let mut cases: Vec<ConeCase> = Vec::new();
    for (i, (r_k, r_next, r)) in geo2_grid(params, c_eps).into_iter().enumerate() {
        let (case, one) = check_cone_containment_geo2(
            r_k,
            r_next,
            params.r(),
            r,
            c_eps,
            samples,
            config_seed(seed, i),
        )?;
        if !cases.contains(&case) {
            cases.push(case);
        }
        rep.merge(&one);
    }
    Ok((cases, rep))
}

/// `check_cone_containment_geo3` over [`geo3_grid`] plus any `extra` `(R_k, R_next, r)`.
pub fn geo3_suite(
    top: f64,
    c_eps: f64,
    extra: &[(f64, f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<GeoReport> {
    let mut rep = GeoReport::new("geo3");
    let grid = geo3_grid(top, c_eps);
    for (i, &(r_k, r_next, r)) in grid.iter().chain(extra).enumerate() {
        rep.merge(&check_cone_containment_geo3(
            r_k,
            r_next,
            r,
            c_eps,
            samples,
            config_seed(seed, i),
        )?);
    }
    Ok(rep)
}

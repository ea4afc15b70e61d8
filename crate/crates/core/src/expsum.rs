//! Cubic exponential sums `S(x) = Σ_{k=1}^N a_k e(k x1 + k² x2 + k³ x3)`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, LabError, Limits, Result};

/// Coefficient moduli may exceed one by this much before a spec is rejected.
pub const COEFF_SLACK: f64 = 1e-12;

/// Phase recurrences are resynchronised with a direct evaluation this often.
pub const RENORMALIZE_EVERY: usize = 4096;

/// `e(t) = exp(2πit)`, with `t` reduced modulo one first.
#[inline]
pub fn unit(t: f64) -> Complex64 {
    let (s, c) = (TAU * t.rem_euclid(1.0)).sin_cos();
    Complex64::new(c, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x1: 0.0,
        x2: 0.0,
        x3: 0.0,
    };

    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Point3 { x1, x2, x3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }
}

/// Half-open band `[lo, hi)` of the normalised frequency `k/N`.
///
/// A band whose upper end is exactly 1 also takes `k/N = 1`, so a partition
/// of `[0, 1)` into bands covers every `k ∈ 1..=N` exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqInterval {
    lo: f64,
    hi: f64,
}

impl FreqInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
            return Err(LabError::invalid(format!(
                "bad frequency band [{lo}, {hi})"
            )));
        }
        Ok(FreqInterval { lo, hi })
    }

    pub fn full() -> Self {
        FreqInterval { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && (u < self.hi || (self.hi == 1.0 && u == 1.0))
    }

    /// Splits `[0, 1)` into `count` equal bands.
    pub fn partition(count: usize) -> Vec<FreqInterval> {
        (0..count)
            .map(|b| FreqInterval {
                lo: b as f64 / count as f64,
                hi: if b + 1 == count {
                    1.0
                } else {
                    (b + 1) as f64 / count as f64
                },
            })
            .collect()
    }
}

/// An exponential sum instance together with its integration domain
/// `[0,1]² × H`, `H = [h0, h0 + N^{-σ}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSumSpec {
    coeffs: Vec<Complex64>,
    sigma: f64,
    h0: f64,
}

impl ExpSumSpec {
    pub fn new(coeffs: Vec<Complex64>, sigma: f64, h0: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(LabError::invalid("N must be at least 1"));
        }
        if !(0.0..=2.0).contains(&sigma) {
            return Err(LabError::invalid(format!("sigma {sigma} outside [0, 2]")));
        }
        if !h0.is_finite() {
            return Err(LabError::invalid("h0 must be finite"));
        }
        if let Some((k, a)) = coeffs
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || a.norm() > 1.0 + COEFF_SLACK)
        {
            return Err(LabError::invalid(format!(
                "|a_{}| = {} exceeds 1",
                k + 1,
                a.norm()
            )));
        }
        Ok(ExpSumSpec { coeffs, sigma, h0 })
    }

    /// All-ones coefficients.
    pub fn constant(n: usize, sigma: f64, h0: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(1.0, 0.0); n], sigma, h0)
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    /// Length of `H`, `N^{-σ}`.
    pub fn h_len(&self) -> f64 {
        (self.n() as f64).powf(-self.sigma)
    }

    /// Same coefficients, different domain.
    pub fn with_domain(&self, sigma: f64, h0: f64) -> Result<Self> {
        Self::new(self.coeffs.clone(), sigma, h0)
    }

    /// Every coefficient multiplied by `lambda`; rejected if that leaves the unit disc.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.coeffs.iter().map(|a| a * lambda).collect(),
            self.sigma,
            self.h0,
        )
    }

    pub fn l1_mass(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm()).sum()
    }

    pub fn l2_mass(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    /// The integration box `[0,1]² × H`.
    pub fn domain(&self) -> Box3 {
        Box3 {
            lower: Point3::new(0.0, 0.0, self.h0),
            sides: [1.0, 1.0, self.h_len()],
        }
    }

    pub(crate) fn wave(&self) -> WaveSum {
        WaveSum::integer(self.coeffs.clone())
    }
}

/// Axis-aligned box given by its lower corner and side lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub lower: Point3,
    pub sides: [f64; 3],
}

impl Box3 {
    pub fn new(lower: Point3, sides: [f64; 3]) -> Result<Self> {
        if !lower.is_finite() || sides.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(LabError::invalid("box sides must be positive and finite"));
        }
        Ok(Box3 { lower, sides })
    }

    pub fn cube(lower: Point3, side: f64) -> Result<Self> {
        Self::new(lower, [side; 3])
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    pub fn center(&self) -> Point3 {
        let l = self.lower.to_array();
        Point3::from_array([0, 1, 2].map(|d| l[d] + 0.5 * self.sides[d]))
    }
}

/// Σ a_k e(k x1 + k² x2 + k³ x3).
pub fn eval_sum(spec: &ExpSumSpec, x: Point3) -> Complex64 {
    let [x1, x2, x3] = x.to_array().map(|v| v.rem_euclid(1.0));
    spec.coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| a * unit(integer_phase((i + 1) as f64, x1, x2, x3)))
        .sum()
}

/// The sum restricted to `k` with `k/N` in `band`.
pub fn eval_partial_sum(spec: &ExpSumSpec, band: FreqInterval, x: Point3) -> Complex64 {
    let n = spec.n() as f64;
    let [x1, x2, x3] = x.to_array().map(|v| v.rem_euclid(1.0));
    spec.coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| band.contains((i + 1) as f64 / n))
        .map(|(i, a)| a * unit(integer_phase((i + 1) as f64, x1, x2, x3)))
        .sum()
}

#[inline]
fn integer_phase(k: f64, x1: f64, x2: f64, x3: f64) -> f64 {
    let k2 = k * k;
    (k * x1).rem_euclid(1.0) + (k2 * x2).rem_euclid(1.0) + (k2 * k * x3).rem_euclid(1.0)
}

/// Values of [`eval_sum`] at the cell centres of a uniform `m1 × m2 × m3`
/// grid over `bx`, indexed `[i][j][l]` and flattened row-major.
pub fn eval_grid(
    spec: &ExpSumSpec,
    bx: &Box3,
    counts: [usize; 3],
    limits: &Limits,
) -> Result<Vec<Complex64>> {
    if counts.contains(&0) {
        return Err(LabError::invalid("grid counts must be at least 1"));
    }
    let cells = counts.iter().map(|&m| m as u128).product::<u128>();
    check_budget("grid values", cells, limits.grid_values)?;
    let axes: [Axis; 3] =
        [0, 1, 2].map(|d| Axis::midpoint(bx.lower.to_array()[d], bx.sides[d], counts[d]));
    let tables = PhaseTables::new(&spec.wave(), &axes);
    let [_, m2, m3] = counts;
    let slabs: Vec<Vec<Complex64>> = (0..counts[0])
        .into_par_iter()
        .map(|i| {
            let mut slab = vec![Complex64::default(); m2 * m3];
            let mut scratch = Vec::new();
            for (j, row) in slab.chunks_mut(m3).enumerate() {
                tables.row(i, j, row, &mut scratch);
            }
            slab
        })
        .collect();
    Ok(slabs.concat())
}

/// Quadrature nodes and weights along one axis.
#[derive(Debug, Clone)]
pub(crate) struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `(first node, spacing)` when the nodes are equally spaced.
    uniform: Option<(f64, f64)>,
}

impl Axis {
    /// Cell centres of `m` equal cells on `[lo, lo + len]`.
    pub fn midpoint(lo: f64, len: f64, m: usize) -> Self {
        let h = len / m as f64;
        Axis {
            nodes: (0..m).map(|i| lo + (i as f64 + 0.5) * h).collect(),
            weights: vec![h; m],
            uniform: Some((lo + 0.5 * h, h)),
        }
    }

    /// Composite Gauss-Legendre rule with `panels` equal panels of `order` nodes.
    pub fn gauss_panels(lo: f64, len: f64, panels: usize, order: usize) -> Self {
        let (x, w) = crate::quadrature::gauss_legendre(order);
        let h = len / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(a + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Axis {
            nodes,
            weights,
            uniform: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// A moment-curve sum `Σ_j c_j e(x·(ξ_j, ξ_j², ξ_j³))` with real nodes `ξ_j`.
#[derive(Debug, Clone)]
pub(crate) struct WaveSum {
    pub xi: Vec<f64>,
    pub coeffs: Vec<Complex64>,
    /// Nodes are the integers `1..=N`; coordinates may be reduced modulo one.
    pub integer: bool,
}

impl WaveSum {
    pub fn integer(coeffs: Vec<Complex64>) -> Self {
        WaveSum {
            xi: (1..=coeffs.len()).map(|k| k as f64).collect(),
            coeffs,
            integer: true,
        }
    }

    pub fn real(xi: Vec<f64>, coeffs: Vec<Complex64>) -> Self {
        WaveSum {
            xi,
            coeffs,
            integer: false,
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    /// Largest |ξ^d| over the nodes, for d = 1, 2, 3.
    pub fn max_freq(&self) -> [f64; 3] {
        let m = self.xi.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        [m, m * m, m * m * m]
    }

    #[cfg(test)]
    pub fn eval(&self, x: Point3) -> Complex64 {
        let x = if self.integer {
            x.to_array().map(|v| v.rem_euclid(1.0))
        } else {
            x.to_array()
        };
        self.xi
            .iter()
            .zip(&self.coeffs)
            .map(|(&xi, a)| {
                let f = [xi, xi * xi, xi * xi * xi];
                let ph: f64 = (0..3).map(|d| (f[d] * x[d]).rem_euclid(1.0)).sum();
                a * unit(ph)
            })
            .sum()
    }
}

/// Per-frequency phase factors `e(ξ^d · node)` along each axis.
pub(crate) struct PhaseTables {
    n: usize,
    coeffs: Vec<Complex64>,
    /// `[k * m1 + i]`
    t1: Vec<Complex64>,
    /// `[k * m2 + j]`
    t2: Vec<Complex64>,
    /// `[l * n + k]`, transposed so the innermost sum over `k` is contiguous.
    t3: Vec<Complex64>,
    pub m: [usize; 3],
}

impl PhaseTables {
    pub fn new(wave: &WaveSum, axes: &[Axis; 3]) -> Self {
        let n = wave.len();
        let tables: Vec<Vec<Complex64>> = (0..3)
            .map(|d| {
                let m = axes[d].len();
                let mut t = vec![Complex64::default(); n * m];
                for (k, &xi) in wave.xi.iter().enumerate() {
                    let f = xi.powi(d as i32 + 1);
                    fill_phases(f, &axes[d], wave.integer, &mut t[k * m..(k + 1) * m]);
                }
                t
            })
            .collect();
        let m = [0, 1, 2].map(|d| axes[d].len());
        let mut t3 = vec![Complex64::default(); n * m[2]];
        for k in 0..n {
            for l in 0..m[2] {
                t3[l * n + k] = tables[2][k * m[2] + l];
            }
        }
        let mut it = tables.into_iter();
        PhaseTables {
            n,
            coeffs: wave.coeffs.clone(),
            t1: it.next().unwrap(),
            t2: it.next().unwrap(),
            t3,
            m,
        }
    }

    /// Fills `out[l] = S(x1_i, x2_j, x3_l)`.
    pub fn row(&self, i: usize, j: usize, out: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let [m1, m2, _] = self.m;
        scratch.clear();
        scratch.extend(
            (0..self.n).map(|k| self.coeffs[k] * self.t1[k * m1 + i] * self.t2[k * m2 + j]),
        );
        for (l, o) in out.iter_mut().enumerate() {
            let col = &self.t3[l * self.n..(l + 1) * self.n];
            let mut re = 0.0;
            let mut im = 0.0;
            for (b, t) in scratch.iter().zip(col) {
                re += b.re * t.re - b.im * t.im;
                im += b.re * t.im + b.im * t.re;
            }
            *o = Complex64::new(re, im);
        }
    }
}

fn fill_phases(f: f64, axis: &Axis, integer: bool, out: &mut [Complex64]) {
    let direct = |x: f64| {
        let x = if integer { x.rem_euclid(1.0) } else { x };
        unit((f * x).rem_euclid(1.0))
    };
    match axis.uniform {
        Some((start, step)) => {
            let (s0, ds) = if integer {
                (
                    (f * start.rem_euclid(1.0)).rem_euclid(1.0),
                    (f * step.rem_euclid(1.0)).rem_euclid(1.0),
                )
            } else {
                ((f * start).rem_euclid(1.0), (f * step).rem_euclid(1.0))
            };
            let mul = unit(ds);
            let mut z = Complex64::default();
            for (i, o) in out.iter_mut().enumerate() {
                if i % RENORMALIZE_EVERY == 0 {
                    z = unit(s0 + ds * i as f64);
                } else {
                    z *= mul;
                }
                *o = z;
            }
        }
        None => {
            for (o, &x) in out.iter_mut().zip(&axis.nodes) {
                *o = direct(x);
            }
        }
    }
}

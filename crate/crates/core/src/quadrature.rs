//! Tensor-product quadrature of `|S|^p` for real `p ≥ 1`.
//!
//! Axes that span whole periods of the integrand use the midpoint rule, which
//! is exact for trigonometric polynomials below the Nyquist limit. Other axes
//! use composite Gauss-Legendre panels.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, LabError, Limits, Result};
use crate::expsum::{Axis, Box3, ExpSumSpec, PhaseTables, Point3, WaveSum};
use crate::moment::{Method, MomentResult};

pub const DEFAULT_OVERSAMPLE: f64 = 4.0;

/// Nodes per Gauss-Legendre panel.
pub const GAUSS_ORDER: usize = 16;

/// Cubes with side above this are estimated from sampled unit cells.
pub const FULL_CUBE_MAX_SIDE: f64 = 64.0;

pub const DEFAULT_TRANSLATES: usize = 32;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// How one axis of an integration box is discretised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisRule {
    /// Uniform cell centres; used when the axis spans whole periods.
    Midpoint,
    /// Composite Gauss-Legendre with [`GAUSS_ORDER`] nodes per panel.
    Gauss,
}

/// Resolution policy for an oscillatory integrand on a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub counts: [usize; 3],
    pub bx: Box3,
    pub oversample: f64,
    /// Effective top frequency per axis (integrand bandwidth per unit length).
    pub bandwidth: [f64; 3],
    pub rules: [AxisRule; 3],
}

impl QuadratureGrid {
    /// Grid for `[0,1]² × H` with counts `⌈oversample · max(1, p/2) · N^j · side_j⌉`.
    pub fn for_spec(spec: &ExpSumSpec, p: f64, oversample: f64) -> Result<Self> {
        let n = spec.n() as f64;
        let b = (p / 2.0).max(1.0);
        let full_period = spec.sigma() == 0.0;
        Self::new(
            spec.domain(),
            [b * n, b * n * n, b * n * n * n],
            [
                AxisRule::Midpoint,
                AxisRule::Midpoint,
                if full_period {
                    AxisRule::Midpoint
                } else {
                    AxisRule::Gauss
                },
            ],
            oversample,
        )
    }

    pub fn new(
        bx: Box3,
        bandwidth: [f64; 3],
        rules: [AxisRule; 3],
        oversample: f64,
    ) -> Result<Self> {
        if !(oversample >= 1.0 && oversample.is_finite()) {
            return Err(LabError::invalid(format!(
                "oversample {oversample} must be >= 1"
            )));
        }
        let counts =
            [0, 1, 2].map(|d| axis_count(bandwidth[d] * bx.sides[d] * oversample, rules[d]));
        Ok(QuadratureGrid {
            counts,
            bx,
            oversample,
            bandwidth,
            rules,
        })
    }

    /// The same policy at half the oversampling, used for the error estimate.
    pub fn coarsened(&self) -> Self {
        let oversample = self.oversample / 2.0;
        let counts = [0, 1, 2].map(|d| {
            axis_count(
                self.bandwidth[d] * self.bx.sides[d] * oversample,
                self.rules[d],
            )
        });
        QuadratureGrid {
            counts,
            oversample,
            ..*self
        }
    }

    pub fn cells(&self) -> u128 {
        self.counts.iter().map(|&m| m as u128).product()
    }

    fn axes(&self) -> [Axis; 3] {
        let lo = self.bx.lower.to_array();
        [0, 1, 2].map(|d| match self.rules[d] {
            AxisRule::Midpoint => Axis::midpoint(lo[d], self.bx.sides[d], self.counts[d]),
            AxisRule::Gauss => Axis::gauss_panels(
                lo[d],
                self.bx.sides[d],
                self.counts[d] / GAUSS_ORDER,
                GAUSS_ORDER,
            ),
        })
    }
}

fn axis_count(target: f64, rule: AxisRule) -> usize {
    let m = target.ceil().max(1.0) as usize;
    match rule {
        AxisRule::Midpoint => m,
        AxisRule::Gauss => m.div_ceil(GAUSS_ORDER).max(1) * GAUSS_ORDER,
    }
}

/// Σ w |S|^p over the grid.
pub(crate) fn integrate_power(
    wave: &WaveSum,
    p: f64,
    grid: &QuadratureGrid,
    limits: &Limits,
) -> Result<f64> {
    check_budget(
        "quadrature cell operations",
        grid.cells() * wave.len() as u128,
        limits.cell_ops,
    )?;
    let axes = grid.axes();
    let tables = PhaseTables::new(wave, &axes);
    let [_, m2, m3] = tables.m;
    let half = p / 2.0;
    let even = half.fract() == 0.0 && half <= i32::MAX as f64;
    let power = move |z: Complex64| {
        let q = z.norm_sqr();
        if even {
            q.powi(half as i32)
        } else {
            q.powf(half)
        }
    };
    let partial: Vec<f64> = (0..axes[0].len())
        .into_par_iter()
        .map(|i| {
            let mut row = vec![Complex64::default(); m3];
            let mut scratch = Vec::new();
            let mut acc = 0.0;
            for j in 0..m2 {
                tables.row(i, j, &mut row, &mut scratch);
                let line: f64 = row
                    .iter()
                    .zip(&axes[2].weights)
                    .map(|(z, w)| w * power(*z))
                    .sum();
                acc += axes[1].weights[j] * line;
            }
            axes[0].weights[i] * acc
        })
        .collect();
    Ok(partial.iter().sum())
}

/// Midpoint/Gauss estimate of `∫_{[0,1]²×H} |S|^p`.
pub fn moment_quadrature(
    spec: &ExpSumSpec,
    p: f64,
    grid: &QuadratureGrid,
    limits: &Limits,
) -> Result<MomentResult> {
    let t0 = Instant::now();
    if !(p >= 1.0 && p.is_finite()) {
        return Err(LabError::invalid(format!("exponent p = {p} must be >= 1")));
    }
    let dom = spec.domain();
    let covers = (0..3).all(|d| {
        (dom.lower.to_array()[d] - grid.bx.lower.to_array()[d]).abs() <= 1e-15
            && (dom.sides[d] - grid.bx.sides[d]).abs() <= 1e-15 * dom.sides[d]
    });
    if !covers {
        return Err(LabError::invalid(
            "quadrature grid must cover [0,1]² × H exactly",
        ));
    }
    let n = spec.n() as f64;
    for d in 0..3 {
        let need = grid.oversample * n.powi(d as i32 + 1) * grid.bx.sides[d];
        if (grid.counts[d] as f64) < need.floor() {
            return Err(LabError::invalid(format!(
                "axis {} has {} nodes, need {need}",
                d + 1,
                grid.counts[d]
            )));
        }
    }
    let wave = spec.wave();
    let fine = integrate_power(&wave, p, grid, limits)?;
    let coarse = integrate_power(&wave, p, &grid.coarsened(), limits)?;
    Ok(MomentResult {
        value: fine,
        method: Method::Quadrature,
        err_estimate: (fine - coarse).abs(),
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Frequencies `ξ ∈ [0,1]` with coefficients, for local moments on r-cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqSet {
    xi: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl FreqSet {
    /// Checks `ξ ∈ [0,1]` and `|a| ≤ 1`; separation is checked against `(R, β)` later.
    pub fn new(xi: Vec<f64>, coeffs: Vec<Complex64>) -> Result<Self> {
        if xi.is_empty() || xi.len() != coeffs.len() {
            return Err(LabError::invalid(
                "need matching, nonempty frequencies and coefficients",
            ));
        }
        if xi.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(LabError::invalid("frequencies must lie in [0, 1]"));
        }
        if coeffs
            .iter()
            .any(|a| a.norm() > 1.0 + crate::expsum::COEFF_SLACK)
        {
            return Err(LabError::invalid("coefficients must satisfy |a| <= 1"));
        }
        Ok(FreqSet { xi, coeffs })
    }

    /// `⌈R^β⌉` points `j R^{-β}`, the tightest admissible packing of `[0, 1]`.
    pub fn lattice(r_big: f64, beta: f64, coeffs: impl Fn(usize) -> Complex64) -> Result<Self> {
        let count = crate::geometry::robust_ceil(r_big.powf(beta));
        let step = r_big.powf(-beta);
        Self::new(
            (0..count).map(|j| (j as f64 * step).min(1.0)).collect(),
            (0..count).map(coeffs).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn min_separation(&self) -> f64 {
        let mut v = self.xi.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    fn wave(&self) -> WaveSum {
        WaveSum::real(self.xi.clone(), self.coeffs.clone())
    }
}

/// Options for [`local_moment_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub oversample: f64,
    /// Unit-cell translates drawn when the cube side exceeds [`FULL_CUBE_MAX_SIDE`].
    pub translates: usize,
    pub seed: u64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            oversample: DEFAULT_OVERSAMPLE,
            translates: DEFAULT_TRANSLATES,
            seed: 0,
        }
    }
}

fn check_local(freqs: &FreqSet, cube: &Box3, r_big: f64, beta: f64) -> Result<()> {
    if !(r_big >= 1.0 && (1.0 / 3.0..=1.0).contains(&beta)) {
        return Err(LabError::invalid("need R >= 1 and beta in [1/3, 1]"));
    }
    let sep = r_big.powf(-beta);
    if freqs.len() > 1 && freqs.min_separation() < sep * (1.0 - 1e-9) {
        return Err(LabError::invalid(format!(
            "frequencies are {}-separated, need {sep}",
            freqs.min_separation()
        )));
    }
    let side = cube.sides[0];
    if cube.sides.iter().any(|&s| (s - side).abs() > 1e-12 * side) {
        return Err(LabError::invalid("Q_r must be a cube"));
    }
    let need = r_big.powf((2.0 * beta).max(1.0));
    if side < need * (1.0 - 1e-9) {
        return Err(LabError::invalid(format!(
            "cube side {side} below R^max(2β,1) = {need}"
        )));
    }
    Ok(())
}

fn box_grid(freqs: &FreqSet, p: f64, bx: Box3, oversample: f64) -> Result<QuadratureGrid> {
    let b = (p / 2.0).max(1.0);
    let f = freqs.wave().max_freq().map(|m| (b * m).max(0.25));
    QuadratureGrid::new(bx, f, [AxisRule::Gauss; 3], oversample)
}

/// `|Q_r|^{-1} ∫_{Q_r} |Σ a_ξ e(x·(ξ,ξ²,ξ³))|^p dx`.
///
/// Cubes with side at most [`FULL_CUBE_MAX_SIDE`] are integrated in full and
/// `err_estimate` is a step-halving difference. Larger cubes are split into
/// equal cells of side at most one, `opts.translates` of which are drawn
/// uniformly; the value is the sample mean and `err_estimate` its standard error.
pub fn local_moment_quadrature(
    freqs: &FreqSet,
    p: f64,
    cube: &Box3,
    r_big: f64,
    beta: f64,
    opts: &LocalOptions,
    limits: &Limits,
) -> Result<MomentResult> {
    let t0 = Instant::now();
    if !(p >= 1.0 && p.is_finite()) {
        return Err(LabError::invalid(format!("exponent p = {p} must be >= 1")));
    }
    check_local(freqs, cube, r_big, beta)?;
    let wave = freqs.wave();
    let side = cube.sides[0];
    let (value, err) = if side <= FULL_CUBE_MAX_SIDE {
        let grid = box_grid(freqs, p, *cube, opts.oversample)?;
        let vol = cube.volume();
        let fine = integrate_power(&wave, p, &grid, limits)? / vol;
        let coarse = integrate_power(&wave, p, &grid.coarsened(), limits)? / vol;
        (fine, (fine - coarse).abs())
    } else {
        if opts.translates < 2 {
            return Err(LabError::invalid("need at least two translates"));
        }
        let cells_per_side = side.ceil() as u64;
        let cell = side / cells_per_side as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let lo = cube.lower.to_array();
        let mut samples = Vec::with_capacity(opts.translates);
        for _ in 0..opts.translates {
            let corner =
                [0, 1, 2].map(|d| lo[d] + rng.random_range(0..cells_per_side) as f64 * cell);
            let bx = Box3::cube(Point3::from_array(corner), cell)?;
            let grid = box_grid(freqs, p, bx, opts.oversample)?;
            samples.push(integrate_power(&wave, p, &grid, limits)? / bx.volume());
        }
        let k = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / k;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (mean, (var / k).sqrt())
    };
    Ok(MomentResult {
        value,
        method: Method::Quadrature,
        err_estimate: err,
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Closed-form cube average of `|Σ a_ξ e(x·(ξ,ξ²,ξ³))|^{2s}`.
///
/// Expands the power into pairs of s-multisets; each pair contributes a
/// product of three one-dimensional averages `|I|^{-1}∫_I e(Δx)dx`.
pub fn local_moment_exact(
    freqs: &FreqSet,
    s: usize,
    cube: &Box3,
    r_big: f64,
    beta: f64,
    limits: &Limits,
) -> Result<MomentResult> {
    let t0 = Instant::now();
    if s == 0 {
        return Err(LabError::invalid("s must be at least 1"));
    }
    check_local(freqs, cube, r_big, beta)?;
    let m = freqs.len();
    let multisets = binomial(m + s - 1, s);
    check_budget(
        "local multiset pairs",
        multisets.saturating_mul(multisets),
        limits.brute_pairs,
    )?;
    let mut terms: Vec<([f64; 3], Complex64)> = Vec::with_capacity(multisets as usize);
    let mut idx = vec![0usize; s];
    loop {
        let mut sums = [0.0; 3];
        let mut c = Complex64::new(1.0, 0.0);
        let mut denom = 1u64;
        let mut run = 0u64;
        for (pos, &j) in idx.iter().enumerate() {
            let x = freqs.xi[j];
            sums[0] += x;
            sums[1] += x * x;
            sums[2] += x * x * x;
            c *= freqs.coeffs[j];
            run = if pos > 0 && idx[pos - 1] == j {
                run + 1
            } else {
                1
            };
            denom *= run;
        }
        let orderings = (1..=s as u64).product::<u64>() / denom;
        terms.push((sums, c * orderings as f64));
        // next nondecreasing index vector
        let mut pos = s;
        while pos > 0 && idx[pos - 1] == m - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        let v = idx[pos - 1];
        for slot in idx.iter_mut().skip(pos) {
            *slot = v;
        }
    }
    let lo = cube.lower.to_array();
    let r = cube.sides[0];
    let avg = |delta: f64, d: usize| -> Complex64 {
        let x = PI * delta * r;
        let sinc = if x.abs() < 1e-8 {
            1.0 - x * x / 6.0
        } else {
            x.sin() / x
        };
        crate::expsum::unit(delta * (lo[d] + 0.5 * r)) * sinc
    };
    let total: Complex64 = terms
        .par_iter()
        .map(|(su, cu)| {
            let mut acc = Complex64::default();
            for (sv, cv) in &terms {
                acc += cu
                    * cv.conj()
                    * avg(su[0] - sv[0], 0)
                    * avg(su[1] - sv[1], 1)
                    * avg(su[2] - sv[2], 2);
            }
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(MomentResult {
        value: total.re,
        method: Method::Exact,
        err_estimate: total.im.abs(),
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Relative gap between the two sides of the periodicity identity
/// `∫_{[0,N]×[0,N²]×N³H} |S̃|^{2s} = N^{-3} ∫_{[0,N³]²×N³H} |S̃|^{2s}`
/// for the rescaled sum `S̃(y) = Σ a_k e(y·(k/N, k²/N², k³/N³))`.
pub fn periodicity_identity_check(
    spec: &ExpSumSpec,
    s: usize,
    oversample: f64,
    limits: &Limits,
) -> Result<f64> {
    let n = spec.n();
    if n > 4 {
        return Err(LabError::invalid(
            "periodicity identity check is limited to N <= 4",
        ));
    }
    if s == 0 {
        return Err(LabError::invalid("s must be at least 1"));
    }
    let nf = n as f64;
    let wave = WaveSum::real(
        (1..=n).map(|k| k as f64 / nf).collect(),
        spec.coeffs().to_vec(),
    );
    let p = 2.0 * s as f64;
    let b = s as f64;
    let band = [b, b, b];
    let x3_rule = if spec.sigma() == 0.0 {
        AxisRule::Midpoint
    } else {
        AxisRule::Gauss
    };
    let h_lo = nf.powi(3) * spec.h0();
    let h_len = nf.powi(3) * spec.h_len();
    let rules = [AxisRule::Midpoint, AxisRule::Midpoint, x3_rule];
    let left_box = Box3::new(Point3::new(0.0, 0.0, h_lo), [nf, nf * nf, h_len])?;
    let right_box = Box3::new(Point3::new(0.0, 0.0, h_lo), [nf.powi(3), nf.powi(3), h_len])?;
    let left = integrate_power(
        &wave,
        p,
        &QuadratureGrid::new(left_box, band, rules, oversample)?,
        limits,
    )?;
    let right = integrate_power(
        &wave,
        p,
        &QuadratureGrid::new(right_box, band, rules, oversample)?,
        limits,
    )? / nf.powi(3);
    Ok((left - right).abs() / left.abs().max(f64::MIN_POSITIVE))
}

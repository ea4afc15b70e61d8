//! Extremal coefficient families, exponent sweeps and the broad/narrow check.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Limits, Result};
use crate::expsum::{eval_partial_sum, eval_sum, Box3, ExpSumSpec, FreqInterval, Point3};
use crate::moment::{moment_exact, Method};
use crate::quadrature::{
    integrate_power, local_moment_exact, local_moment_quadrature, AxisRule, FreqSet, LocalOptions,
    QuadratureGrid, DEFAULT_OVERSAMPLE, DEFAULT_TRANSLATES,
};

/// Side of the small box near the origin, in units of `(1/N, 1/N², 1/N³)`.
pub const INTERFERENCE_BOX: f64 = 0.05;

pub const DEFAULT_TOLERANCE: f64 = 0.3;

/// Random families aggregate over at least this many seeds.
pub const MIN_RANDOM_SEEDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffFamily {
    Constant,
    RandomSign,
    RandomPhase,
}

impl CoeffFamily {
    pub fn coeffs(&self, n: usize, seed: u64) -> Vec<Complex64> {
        match self {
            CoeffFamily::Constant => constant_coeffs(n),
            CoeffFamily::RandomSign => random_sign_coeffs(n, seed),
            CoeffFamily::RandomPhase => random_phase_coeffs(n, seed),
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, CoeffFamily::Constant)
    }
}

impl std::fmt::Display for CoeffFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoeffFamily::Constant => "constant",
            CoeffFamily::RandomSign => "random_sign",
            CoeffFamily::RandomPhase => "random_phase",
        })
    }
}

impl std::str::FromStr for CoeffFamily {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(CoeffFamily::Constant),
            "random_sign" | "random-sign" => Ok(CoeffFamily::RandomSign),
            "random_phase" | "random-phase" => Ok(CoeffFamily::RandomPhase),
            _ => Err(LabError::invalid(format!(
                "unknown coefficient family '{s}'"
            ))),
        }
    }
}

pub fn constant_coeffs(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(1.0, 0.0); n]
}

/// `±1` from a seeded ChaCha8 stream; identical on every platform.
pub fn random_sign_coeffs(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

pub fn random_phase_coeffs(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| crate::expsum::unit(rng.random_range(0.0..1.0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceBound {
    /// `∫ |S|^{2s}` over the small box at the origin.
    pub value: f64,
    /// `value / N^{2s-6}`.
    pub ratio: f64,
    /// Guaranteed lower bound for `ratio`: `cos(6πc)^{2s} c³`.
    pub floor: f64,
}

/// Lower bound for `ratio` from `Re e(θ) ≥ cos(6πc)` on the box.
pub fn interference_floor(s: usize) -> f64 {
    let c = INTERFERENCE_BOX;
    (6.0 * std::f64::consts::PI * c).cos().powi(2 * s as i32) * c.powi(3)
}

/// Integral of `|S|^{2s}` over `[0,c/N]×[0,c/N²]×[0,c/N³]` for all-ones coefficients.
pub fn interference_lower_bound(
    spec: &ExpSumSpec,
    s: usize,
    limits: &Limits,
) -> Result<InterferenceBound> {
    if s == 0 {
        return Err(LabError::invalid("s must be at least 1"));
    }
    if spec.coeffs().iter().any(|a| *a != Complex64::new(1.0, 0.0)) {
        return Err(LabError::invalid(
            "constructive interference needs all coefficients equal to 1",
        ));
    }
    let n = spec.n() as f64;
    let c = INTERFERENCE_BOX;
    if spec.h0() != 0.0 || spec.h_len() < c / n.powi(3) {
        return Err(LabError::invalid("H must start at 0 and contain [0, c/N³]"));
    }
    let bx = Box3::new(Point3::ORIGIN, [c / n, c / (n * n), c / n.powi(3)])?;
    let b = s as f64;
    let grid = QuadratureGrid::new(
        bx,
        [b * n, b * n * n, b * n.powi(3)],
        [AxisRule::Gauss; 3],
        DEFAULT_OVERSAMPLE,
    )?;
    let value = integrate_power(&spec.wave(), 2.0 * b, &grid, limits)?;
    let ratio = value / n.powf(2.0 * b - 6.0);
    Ok(InterferenceBound {
        value,
        ratio,
        floor: interference_floor(s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log-log coordinates.
    pub max_residual: f64,
    pub n_points: usize,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn exponent_fit(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(LabError::invalid(format!(
            "exponent fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(LabError::invalid(format!(
            "exponent fit needs positive data, got ({x}, {y})"
        )));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(LabError::invalid("exponent fit needs distinct abscissae"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        slope,
        intercept,
        max_residual,
        n_points: points.len(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn check_seeds(family: CoeffFamily, seeds: &[u64]) -> Result<Vec<u64>> {
    if !family.is_random() {
        return Ok(vec![seeds.first().copied().unwrap_or(0)]);
    }
    if seeds.len() < MIN_RANDOM_SEEDS {
        return Err(LabError::invalid(format!(
            "random families need >= {MIN_RANDOM_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    Ok(seeds.to_vec())
}

/// A sweep of exact moments over `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub sigma: f64,
    pub s: usize,
    pub family: CoeffFamily,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Left end of `H`, unless `random_h0` draws it per seed from `[0, 1)`.
    #[serde(default)]
    pub h0: f64,
    #[serde(default)]
    pub random_h0: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let mut ns = self.n_values.clone();
        ns.sort_unstable();
        ns.dedup();
        if ns.len() < 3 {
            return Err(LabError::invalid(
                "a sweep needs at least 3 distinct N values",
            ));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::invalid("N values must be strictly increasing"));
        }
        if self.s == 0 {
            return Err(LabError::invalid("s must be at least 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(LabError::invalid("tolerance must be positive"));
        }
        check_seeds(self.family, &self.seeds)?;
        Ok(())
    }

    fn h0_for(&self, n: usize, seed: u64) -> f64 {
        if !self.random_h0 {
            return self.h0;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        rng.random_range(0.0..1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `N` for moment sweeps, `R` for local sweeps.
    pub x: f64,
    pub value: f64,
    pub envelope: f64,
    pub seed_count: usize,
    pub method: Method,
    pub err_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fit: ExponentFit,
    pub target: f64,
    /// Smallest `C` with `value ≤ C · envelope` on every row.
    pub envelope_constant: f64,
    pub pass: bool,
}

/// One sweep point: the (median) exact moment at `n`.
pub fn mainexp_row(cfg: &SweepConfig, n: usize, limits: &Limits) -> Result<SweepRow> {
    let seeds = check_seeds(cfg.family, &cfg.seeds)?;
    let s = cfg.s as f64;
    let mut values = Vec::with_capacity(seeds.len());
    let mut err: f64 = 0.0;
    for &seed in &seeds {
        let spec = ExpSumSpec::new(cfg.family.coeffs(n, seed), cfg.sigma, cfg.h0_for(n, seed))?;
        let m = moment_exact(&spec, cfg.s, limits)?;
        err = err.max(m.err_estimate);
        values.push(m.value);
    }
    let nf = n as f64;
    Ok(SweepRow {
        x: nf,
        value: median(&mut values),
        envelope: nf.powf(s - cfg.sigma) + nf.powf(2.0 * s - 6.0),
        seed_count: seeds.len(),
        method: Method::Exact,
        err_estimate: err,
    })
}

/// Fit and verdict for completed rows: `|slope − max(s−σ, 2s−6)| ≤ tolerance`.
pub fn summarize_mainexp(cfg: &SweepConfig, rows: Vec<SweepRow>) -> Result<SweepReport> {
    let s = cfg.s as f64;
    let fit = exponent_fit(&rows.iter().map(|r| (r.x, r.value)).collect::<Vec<_>>())?;
    let target = (s - cfg.sigma).max(2.0 * s - 6.0);
    let envelope_constant = rows
        .iter()
        .map(|r| r.value / r.envelope)
        .fold(0.0, f64::max);
    Ok(SweepReport {
        pass: (fit.slope - target).abs() <= cfg.tolerance,
        rows,
        fit,
        target,
        envelope_constant,
    })
}

/// Exact moments across `N`, compared with `N^{s−σ} + N^{2s−6}`.
pub fn verify_mainexp_bound(cfg: &SweepConfig, limits: &Limits) -> Result<SweepReport> {
    cfg.validate()?;
    let rows = cfg
        .n_values
        .iter()
        .map(|&n| mainexp_row(cfg, n, limits))
        .collect::<Result<Vec<_>>>()?;
    summarize_mainexp(cfg, rows)
}

/// How local moments are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalMethod {
    /// Closed form for even integer `p`, quadrature otherwise.
    #[default]
    Auto,
    Exact,
    /// Quadrature (full cube or sampled unit cells).
    Sampled,
}

/// A sweep of cube-averaged local moments over `R` at fixed `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaincorConfig {
    pub r_values: Vec<f64>,
    pub beta: f64,
    pub p: f64,
    pub family: CoeffFamily,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub method: LocalMethod,
    #[serde(default = "default_oversample")]
    pub oversample: f64,
    #[serde(default = "default_translates")]
    pub translates: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_oversample() -> f64 {
    DEFAULT_OVERSAMPLE
}

fn default_translates() -> usize {
    DEFAULT_TRANSLATES
}

impl MaincorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_values.len() < 3 || self.r_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::invalid(
                "a local sweep needs >= 3 strictly increasing R values",
            ));
        }
        if !(1.0 / 3.0..=1.0).contains(&self.beta) {
            return Err(LabError::invalid("beta must lie in [1/3, 1]"));
        }
        let top = 6.0 + 2.0 / self.beta;
        if !(self.p >= 2.0 && self.p <= top + 1e-12) {
            return Err(LabError::invalid(format!("p must lie in [2, {top}]")));
        }
        if self.method == LocalMethod::Exact && !is_even(self.p) {
            return Err(LabError::invalid("the closed form needs an even integer p"));
        }
        check_seeds(self.family, &self.seeds)?;
        Ok(())
    }
}

fn is_even(p: f64) -> bool {
    p.fract() == 0.0 && (p as u64).is_multiple_of(2)
}

/// One local sweep point: the (median) cube average at `r_big`.
pub fn maincor_row(cfg: &MaincorConfig, r_big: f64, limits: &Limits) -> Result<SweepRow> {
    let seeds = check_seeds(cfg.family, &cfg.seeds)?;
    let exact = match cfg.method {
        LocalMethod::Exact => true,
        LocalMethod::Auto => is_even(cfg.p),
        LocalMethod::Sampled => false,
    };
    let side = r_big.powf((2.0 * cfg.beta).max(1.0));
    let cube = Box3::cube(Point3::ORIGIN, side)?;
    let count = crate::geometry::robust_ceil(r_big.powf(cfg.beta));
    let mut values = Vec::with_capacity(seeds.len());
    let mut err: f64 = 0.0;
    let mut method = Method::Exact;
    for &seed in &seeds {
        let coeffs = cfg.family.coeffs(count, seed);
        let freqs = FreqSet::lattice(r_big, cfg.beta, |j| coeffs[j])?;
        let m = if exact {
            local_moment_exact(
                &freqs,
                (cfg.p / 2.0) as usize,
                &cube,
                r_big,
                cfg.beta,
                limits,
            )?
        } else {
            let opts = LocalOptions {
                oversample: cfg.oversample,
                translates: cfg.translates,
                seed,
            };
            local_moment_quadrature(&freqs, cfg.p, &cube, r_big, cfg.beta, &opts, limits)?
        };
        method = m.method;
        err = err.max(m.err_estimate);
        values.push(m.value);
    }
    Ok(SweepRow {
        x: r_big,
        value: median(&mut values),
        envelope: r_big.powf(cfg.beta * cfg.p / 2.0),
        seed_count: seeds.len(),
        method,
        err_estimate: err,
    })
}

/// Fit and verdict for completed rows: `slope ≤ βp/2 + tolerance`.
pub fn summarize_maincor(cfg: &MaincorConfig, rows: Vec<SweepRow>) -> Result<SweepReport> {
    let fit = exponent_fit(&rows.iter().map(|r| (r.x, r.value)).collect::<Vec<_>>())?;
    let target = cfg.beta * cfg.p / 2.0;
    let envelope_constant = rows
        .iter()
        .map(|r| r.value / r.envelope)
        .fold(0.0, f64::max);
    Ok(SweepReport {
        pass: fit.slope <= target + cfg.tolerance,
        rows,
        fit,
        target,
        envelope_constant,
    })
}

/// Local moments on `Q_r`, `r = R^{max(2β,1)}`, for the lattice of `⌈R^β⌉`
/// frequencies spaced `R^{-β}`.
pub fn verify_maincor(cfg: &MaincorConfig, limits: &Limits) -> Result<SweepReport> {
    cfg.validate()?;
    let rows = cfg
        .r_values
        .iter()
        .map(|&r| maincor_row(cfg, r, limits))
        .collect::<Result<Vec<_>>>()?;
    summarize_maincor(cfg, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadNarrowReport {
    pub samples: usize,
    /// Largest `|S(x)| / RHS(x)` over the samples.
    pub max_ratio: f64,
    /// Samples where the separated-triple term exceeds `4E·max`.
    pub trilinear_dominant: usize,
    pub worst_point: Option<[f64; 3]>,
}

/// Right-hand side of the pointwise inequality at one point:
/// `4E·max_j |S_j| + K²·max_{separated i,j,k} (|S_i||S_j||S_k|)^{1/3}`,
/// where bands are separated when their indices differ by at least `E`.
pub fn broad_narrow_terms(band_values: &[f64], e: f64) -> (f64, f64) {
    let k = band_values.len();
    let narrow = 4.0 * e * band_values.iter().copied().fold(0.0, f64::max);
    let sep = |a: usize, b: usize| a.abs_diff(b) as f64 >= e;
    let mut best: f64 = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            if !sep(i, j) {
                continue;
            }
            for l in (j + 1)..k {
                if sep(j, l) && sep(i, l) {
                    best = best.max(band_values[i] * band_values[j] * band_values[l]);
                }
            }
        }
    }
    (narrow, (k * k) as f64 * best.cbrt())
}

/// Maximum of `|S(x)| / RHS(x)` over `points`.
pub fn broad_narrow_check(
    spec: &ExpSumSpec,
    bands: usize,
    e: f64,
    points: &[Point3],
) -> Result<BroadNarrowReport> {
    if e.is_nan() || e < 1.0 {
        return Err(LabError::invalid("E must be at least 1"));
    }
    if (bands as f64) < 3.0 * e {
        return Err(LabError::invalid(format!(
            "need at least 3E = {} bands, got {bands}",
            3.0 * e
        )));
    }
    let parts = FreqInterval::partition(bands);
    let mut rep = BroadNarrowReport {
        samples: points.len(),
        max_ratio: 0.0,
        trilinear_dominant: 0,
        worst_point: None,
    };
    for &x in points {
        let lhs = eval_sum(spec, x).norm();
        let vals: Vec<f64> = parts
            .iter()
            .map(|b| eval_partial_sum(spec, *b, x).norm())
            .collect();
        let (narrow, broad) = broad_narrow_terms(&vals, e);
        if broad > narrow {
            rep.trilinear_dominant += 1;
        }
        let rhs = narrow + broad;
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > rep.max_ratio {
            rep.max_ratio = ratio;
            rep.worst_point = Some(x.to_array());
        }
    }
    Ok(rep)
}

/// Uniform points in `[0,1)³` from a seeded stream.
pub fn sample_points(count: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Point3::new(
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            )
        })
        .collect()
}

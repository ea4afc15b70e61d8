//! Exact moments `∫_{[0,1]²×H} |S|^{2s}` for integer `s`.
//!
//! Expanding `|S|^{2s}` and integrating `x1`, `x2` over full periods leaves
//! only tuple pairs with equal `Σk` and `Σk²`. Tuples are grouped by that key;
//! within a group the `x3`-integral over `H` pairs cube sums through
//! [`kernel_h`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, LabError, Limits, Result};
use crate::expsum::{unit, ExpSumSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Brute,
    Quadrature,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Brute => "brute",
            Method::Quadrature => "quadrature",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub value: f64,
    pub method: Method,
    /// Imaginary residue for `exact`/`brute`, a step-halving difference or a
    /// standard error for `quadrature`.
    pub err_estimate: f64,
    pub wall_time: f64,
}

/// `∫_H e(d x3) dx3` for `H = [h0, h0 + N^{-σ}]`.
pub fn kernel_h(d: i64, sigma: f64, h0: f64, n: usize) -> Complex64 {
    let len = (n as f64).powf(-sigma);
    if d == 0 {
        return Complex64::new(len, 0.0);
    }
    if sigma == 0.0 {
        // Full period: e(d) - 1 vanishes exactly for integer d.
        return Complex64::default();
    }
    let theta = frac_of_product(d, sigma, n);
    let start = unit((d as f64 * h0.rem_euclid(1.0)).rem_euclid(1.0));
    start * (unit(theta) - 1.0) / Complex64::new(0.0, 2.0 * PI * d as f64)
}

/// `d · N^{-σ} mod 1`, exact in integers when `N^σ` is an integer.
fn frac_of_product(d: i64, sigma: f64, n: usize) -> f64 {
    if sigma.fract() == 0.0 {
        let q = (n as u128).checked_pow(sigma as u32);
        if let Some(q) = q.filter(|&q| q < (1u128 << 53)) {
            let q = q as i128;
            return (d as i128).rem_euclid(q) as f64 / q as f64;
        }
    }
    (d as f64 * (n as f64).powf(-sigma)).rem_euclid(1.0)
}

/// Grouped s-tuple sums: `(Σk, Σk²) → (Σk³ → Σ Π a_{k_i})` over ordered tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleGroupTable {
    pub s: usize,
    pub groups: BTreeMap<(i64, i64), BTreeMap<i64, Complex64>>,
    /// Ordered tuples represented (`N^s`).
    pub tuple_count: u128,
    /// Distinct multisets visited by the enumeration.
    pub multiset_count: u64,
}

impl TupleGroupTable {
    pub fn total_mass(&self) -> Complex64 {
        self.groups.values().flat_map(|g| g.values()).sum()
    }

    pub fn entry_count(&self) -> usize {
        self.groups.values().map(|g| g.len()).sum()
    }
}

/// One multiset `k_1 ≤ … ≤ k_s` with its power sums, coefficient product and
/// the number of orderings.
#[derive(Debug, Clone, Copy)]
struct Leaf {
    p2: i64,
    p3: i64,
    coeff: Complex64,
    orderings: u64,
}

fn validate_sizes(n: usize, s: usize, budget: u64, what: &'static str) -> Result<u128> {
    if s == 0 {
        return Err(LabError::invalid("s must be at least 1"));
    }
    let n3 = (n as u128).pow(3);
    if (s as u128) * n3 > i64::MAX as u128 {
        return Err(LabError::invalid("s·N³ overflows 64-bit keys"));
    }
    let tuples = (n as u128).checked_pow(s as u32).unwrap_or(u128::MAX);
    check_budget(what, tuples, budget)?;
    Ok(tuples)
}

/// Enumerates multisets of size `s` from `1..=n` with `Σk = p1`.
fn for_each_multiset(n: usize, s: usize, p1: i64, coeffs: &[Complex64], mut f: impl FnMut(Leaf)) {
    // factorials up to s for ordering counts
    let fact: Vec<u64> = (0..=s as u64)
        .scan(1u64, |acc, i| {
            if i > 0 {
                *acc *= i;
            }
            Some(*acc)
        })
        .collect();
    struct Walk<'a, F: FnMut(Leaf)> {
        n: i64,
        coeffs: &'a [Complex64],
        fact: &'a [u64],
        f: F,
    }
    impl<F: FnMut(Leaf)> Walk<'_, F> {
        #[allow(clippy::too_many_arguments)]
        fn go(
            &mut self,
            left: usize,
            rem: i64,
            lo: i64,
            p2: i64,
            p3: i64,
            c: Complex64,
            denom: u64,
            run: u64,
            prev: i64,
        ) {
            if left == 0 {
                if rem == 0 {
                    let orderings = self.fact[self.fact.len() - 1] / denom;
                    (self.f)(Leaf {
                        p2,
                        p3,
                        coeff: c * orderings as f64,
                        orderings,
                    });
                }
                return;
            }
            let left_i = left as i64;
            // lo ≤ k ≤ n, and the remaining left-1 values lie in [k, n]
            let hi = self.n.min(rem - (left_i - 1) * lo).min(rem / left_i);
            let k_min = lo.max(rem - (left_i - 1) * self.n);
            let mut k = k_min;
            while k <= hi {
                let (new_run, new_denom) = if k == prev {
                    (run + 1, denom * (run + 1))
                } else {
                    (1, denom)
                };
                self.go(
                    left - 1,
                    rem - k,
                    k,
                    p2 + k * k,
                    p3 + k * k * k,
                    c * self.coeffs[(k - 1) as usize],
                    new_denom,
                    new_run,
                    k,
                );
                k += 1;
            }
        }
    }
    let mut w = Walk {
        n: n as i64,
        coeffs,
        fact: &fact,
        f: &mut f,
    };
    w.go(s, p1, 1, 0, 0, Complex64::new(1.0, 0.0), 1, 0, 0);
}

/// Sorted `(p2, p3)` leaves for one value of `p1`, with duplicates merged.
fn slice_leaves(n: usize, s: usize, p1: i64, coeffs: &[Complex64]) -> (Vec<Leaf>, u64) {
    let mut leaves = Vec::new();
    for_each_multiset(n, s, p1, coeffs, |l| leaves.push(l));
    let visited = leaves.len() as u64;
    leaves.sort_unstable_by_key(|l| (l.p2, l.p3));
    let mut merged: Vec<Leaf> = Vec::with_capacity(leaves.len());
    for l in leaves {
        match merged.last_mut() {
            Some(m) if m.p2 == l.p2 && m.p3 == l.p3 => {
                m.coeff += l.coeff;
                m.orderings += l.orderings;
            }
            _ => merged.push(l),
        }
    }
    (merged, visited)
}

fn p1_range(n: usize, s: usize) -> std::ops::RangeInclusive<i64> {
    s as i64..=(s * n) as i64
}

/// Builds the full grouping table. Intended for inspection and small cases;
/// [`moment_exact`] streams the same groups one `Σk` slice at a time.
pub fn build_group_table(spec: &ExpSumSpec, s: usize, limits: &Limits) -> Result<TupleGroupTable> {
    let n = spec.n();
    let tuple_count = validate_sizes(n, s, limits.tuples, "tuple enumeration")?;
    let mut groups: BTreeMap<(i64, i64), BTreeMap<i64, Complex64>> = BTreeMap::new();
    let mut multiset_count = 0;
    for p1 in p1_range(n, s) {
        let (leaves, visited) = slice_leaves(n, s, p1, spec.coeffs());
        multiset_count += visited;
        for l in leaves {
            *groups
                .entry((p1, l.p2))
                .or_default()
                .entry(l.p3)
                .or_default() += l.coeff;
        }
    }
    Ok(TupleGroupTable {
        s,
        groups,
        tuple_count,
        multiset_count,
    })
}

/// Σ_{d,d'} c(d) conj(c(d')) K(d - d') over one `(p1, p2)` group.
fn group_pair_sum(group: &[Leaf], spec: &ExpSumSpec) -> Complex64 {
    let (sigma, h0, n) = (spec.sigma(), spec.h0(), spec.n());
    if sigma == 0.0 {
        let len = kernel_h(0, sigma, h0, n);
        return group.iter().map(|l| len * l.coeff.norm_sqr()).sum();
    }
    let mut acc = Complex64::default();
    for a in group {
        for b in group {
            acc += a.coeff * b.coeff.conj() * kernel_h(a.p3 - b.p3, sigma, h0, n);
        }
    }
    acc
}

fn for_each_group(leaves: &[Leaf], mut f: impl FnMut(&[Leaf])) {
    let mut start = 0;
    while start < leaves.len() {
        let mut end = start + 1;
        while end < leaves.len() && leaves[end].p2 == leaves[start].p2 {
            end += 1;
        }
        f(&leaves[start..end]);
        start = end;
    }
}

/// Exact `∫_{[0,1]²×H} |S|^{2s}` by grouped enumeration.
pub fn moment_exact(spec: &ExpSumSpec, s: usize, limits: &Limits) -> Result<MomentResult> {
    let t0 = Instant::now();
    let n = spec.n();
    validate_sizes(n, s, limits.tuples, "tuple enumeration")?;
    let total: Complex64 = p1_range(n, s)
        .into_par_iter()
        .map(|p1| {
            let (leaves, _) = slice_leaves(n, s, p1, spec.coeffs());
            let mut acc = Complex64::default();
            for_each_group(&leaves, |g| acc += group_pair_sum(g, spec));
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(MomentResult {
        value: total.re,
        method: Method::Exact,
        err_estimate: total.im.abs(),
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

/// Number of `2s`-tuples in `[1,N]^{2s}` solving the degree-3 Vinogradov system.
pub fn vinogradov_count(n: usize, s: usize, limits: &Limits) -> Result<u128> {
    validate_sizes(n, s, limits.tuples, "tuple enumeration")?;
    let ones = vec![Complex64::new(1.0, 0.0); n];
    let count = p1_range(n, s)
        .into_par_iter()
        .map(|p1| {
            let (leaves, _) = slice_leaves(n, s, p1, &ones);
            leaves
                .iter()
                .map(|l| (l.orderings as u128).pow(2))
                .sum::<u128>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(count)
}

/// Direct summation over every pair of ordered s-tuples; no grouping.
pub fn moment_brute(spec: &ExpSumSpec, s: usize, limits: &Limits) -> Result<MomentResult> {
    let t0 = Instant::now();
    let n = spec.n();
    let tuples = validate_sizes(n, s, limits.tuples, "tuple enumeration")?;
    check_budget(
        "brute-force pairs",
        tuples.saturating_mul(tuples),
        limits.brute_pairs,
    )?;
    let mut rows: Vec<(i64, i64, i64, Complex64)> = Vec::with_capacity(tuples as usize);
    let mut idx = vec![1i64; s];
    loop {
        let (mut p1, mut p2, mut p3, mut c) = (0, 0, 0, Complex64::new(1.0, 0.0));
        for &k in &idx {
            p1 += k;
            p2 += k * k;
            p3 += k * k * k;
            c *= spec.coeffs()[(k - 1) as usize];
        }
        rows.push((p1, p2, p3, c));
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == s {
                break;
            }
            idx[pos] += 1;
            if idx[pos] <= n as i64 {
                break;
            }
            idx[pos] = 1;
            pos += 1;
        }
        if pos == s {
            break;
        }
    }
    let mut total = Complex64::default();
    for a in &rows {
        for b in &rows {
            if a.0 == b.0 && a.1 == b.1 {
                total += a.3 * b.3.conj() * kernel_h(a.2 - b.2, spec.sigma(), spec.h0(), n);
            }
        }
    }
    Ok(MomentResult {
        value: total.re,
        method: Method::Brute,
        err_estimate: total.im.abs(),
        wall_time: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lim() -> Limits {
        Limits::default()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    /// Test oracle: direct count of solutions over all 2s-tuples.
    fn brute_count(n: i64, s: usize) -> u64 {
        let total = (n as u64).pow(2 * s as u32);
        let mut count = 0;
        for code in 0..total {
            let mut c = code;
            let mut sums = [0i64; 3];
            for i in 0..2 * s {
                let k = (c % n as u64) as i64 + 1;
                c /= n as u64;
                let sign = if i < s { 1 } else { -1 };
                sums[0] += sign * k;
                sums[1] += sign * k * k;
                sums[2] += sign * k * k * k;
            }
            if sums == [0, 0, 0] {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn kernel_cases() {
        assert!((kernel_h(0, 1.3, 0.2, 7) - Complex64::new(7f64.powf(-1.3), 0.0)).norm() < 1e-15);
        for d in [-5, -1, 1, 3, 100] {
            assert_eq!(kernel_h(d, 0.0, 0.0, 9), Complex64::default());
        }
        // (e(1/2) - 1) / (2πi) = -2 / (2πi) = i/π
        let k = kernel_h(1, 1.0, 0.0, 2);
        assert!((k - Complex64::new(0.0, 1.0 / PI)).norm() < 1e-15);
        for d in [1, 2, 17, 1000] {
            let (a, b) = (kernel_h(d, 0.7, 0.31, 5), kernel_h(-d, 0.7, 0.31, 5));
            assert!((a - b.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn kernel_matches_numeric_integral() {
        let (d, sigma, h0, n) = (7i64, 1.5, 0.123, 3usize);
        let len = (n as f64).powf(-sigma);
        let m = 200_000;
        let h = len / m as f64;
        let num: Complex64 = (0..m)
            .map(|i| unit(d as f64 * (h0 + (i as f64 + 0.5) * h)) * h)
            .sum();
        assert!((num - kernel_h(d, sigma, h0, n)).norm() < 1e-9);
    }

    #[test]
    fn table_small_cases() {
        let t = build_group_table(&ExpSumSpec::constant(1, 0.0, 0.0).unwrap(), 1, &lim()).unwrap();
        assert_eq!(t.groups.len(), 1);
        assert_eq!(t.groups[&(1, 1)][&1], Complex64::new(1.0, 0.0));

        let t = build_group_table(&ExpSumSpec::constant(2, 0.0, 0.0).unwrap(), 1, &lim()).unwrap();
        assert_eq!(t.groups.len(), 2);
        assert_eq!(t.groups[&(1, 1)][&1], Complex64::new(1.0, 0.0));
        assert_eq!(t.groups[&(2, 4)][&8], Complex64::new(1.0, 0.0));

        let t = build_group_table(&ExpSumSpec::constant(3, 0.0, 0.0).unwrap(), 2, &lim()).unwrap();
        assert!((t.total_mass() - Complex64::new(9.0, 0.0)).norm() < 1e-12);
        assert_eq!(t.tuple_count, 9);
        assert_eq!(t.multiset_count, 6);
    }

    #[test]
    fn table_mass_and_key_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, s) in [(5, 3), (7, 2), (4, 4)] {
            let coeffs: Vec<Complex64> = (0..n)
                .map(|_| {
                    Complex64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..6.3))
                })
                .collect();
            let sum: Complex64 = coeffs.iter().sum();
            let spec = ExpSumSpec::new(coeffs, 0.5, 0.0).unwrap();
            let t = build_group_table(&spec, s, &lim()).unwrap();
            let expect = sum.powu(s as u32);
            assert!((t.total_mass() - expect).norm() <= 1e-9 * expect.norm().max(1.0));
            let (n, s) = (n as i64, s as i64);
            for (&(p1, p2), inner) in &t.groups {
                assert!((s..=s * n).contains(&p1) && (s..=s * n * n).contains(&p2));
                assert!(inner.keys().all(|&p3| (s..=s * n * n * n).contains(&p3)));
            }
        }
    }

    #[test]
    fn exact_moment_examples() {
        let m = moment_exact(&ExpSumSpec::constant(5, 0.0, 0.0).unwrap(), 2, &lim()).unwrap();
        assert!(close(m.value, brute_count(5, 2) as f64, 1e-12));
        assert!(close(m.value, 45.0, 1e-12));
        for sigma in [0.0, 0.4, 1.0, 2.0] {
            for s in 1..4 {
                let m =
                    moment_exact(&ExpSumSpec::constant(1, sigma, 0.3).unwrap(), s, &lim()).unwrap();
                assert!(close(m.value, 1.0, 1e-12), "{sigma} {s}");
            }
        }
    }

    #[test]
    fn second_moment_is_l2_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..40);
            let sigma = rng.random_range(0.0..2.0);
            let coeffs: Vec<Complex64> = (0..n)
                .map(|_| {
                    Complex64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..6.3))
                })
                .collect();
            let spec = ExpSumSpec::new(coeffs, sigma, rng.random_range(-1.0..1.0)).unwrap();
            let m = moment_exact(&spec, 1, &lim()).unwrap();
            assert!(close(m.value, spec.h_len() * spec.l2_mass(), 1e-10));
        }
    }

    #[test]
    fn vinogradov_small() {
        for n in 1..8 {
            assert_eq!(vinogradov_count(n, 1, &lim()).unwrap(), n as u128);
            assert_eq!(
                vinogradov_count(n, 2, &lim()).unwrap(),
                brute_count(n as i64, 2) as u128
            );
        }
        assert_eq!(vinogradov_count(10, 2, &lim()).unwrap(), 190);
        assert_eq!(vinogradov_count(1, 2, &lim()).unwrap(), 1);
        assert_eq!(
            vinogradov_count(5, 3, &lim()).unwrap(),
            brute_count(5, 3) as u128
        );
    }

    #[test]
    fn brute_agrees_with_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..=8);
            let s = rng.random_range(1..=2);
            let coeffs: Vec<Complex64> = (0..n)
                .map(|_| {
                    Complex64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..6.3))
                })
                .collect();
            let spec = ExpSumSpec::new(
                coeffs,
                rng.random_range(0.0..2.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap();
            let a = moment_exact(&spec, s, &lim()).unwrap();
            let b = moment_brute(&spec, s, &lim()).unwrap();
            assert!(close(a.value, b.value, 1e-10), "{} vs {}", a.value, b.value);
            assert!(a.err_estimate <= 1e-9 * a.value.max(1.0));
        }
    }

    #[test]
    fn budgets_enforced() {
        let small = Limits {
            tuples: 100,
            brute_pairs: 1000,
            ..Limits::default()
        };
        let spec = ExpSumSpec::constant(11, 0.0, 0.0).unwrap();
        assert!(matches!(
            moment_exact(&spec, 2, &small),
            Err(LabError::Budget { requested: 121, .. })
        ));
        assert!(matches!(
            moment_brute(&ExpSumSpec::constant(6, 0.0, 0.0).unwrap(), 2, &small),
            Err(LabError::Budget { .. })
        ));
        assert!(vinogradov_count(5, 0, &lim()).is_err());
    }

    #[test]
    fn rescaling_coefficients() {
        let spec = ExpSumSpec::new(
            (0..6)
                .map(|k| Complex64::from_polar(0.9, k as f64 * 0.7))
                .collect(),
            1.0,
            0.2,
        )
        .unwrap();
        let lambda: f64 = 0.5;
        for s in 1..4 {
            let a = moment_exact(&spec, s, &lim()).unwrap().value;
            let b = moment_exact(&spec.scaled(lambda).unwrap(), s, &lim())
                .unwrap()
                .value;
            assert!(close(b, a * lambda.powi(2 * s as i32), 1e-12));
        }
    }
}

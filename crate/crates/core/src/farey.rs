//! Exact counts of rationals with bounded denominator.
//!
//! `|F_n| = 1 + Σ φ(k)` comes from a totient sieve. Counts inside an
//! interval go denominator by denominator: the numerators admitted by `q`
//! form an integer range, and the ones coprime to `q` are counted by
//! inclusion–exclusion over the prime factors of `q`.

use std::fmt;

use num_integer::Integer;
pub use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

/// Lower end of the range used to extract `c₁`.
pub const DEFAULT_N1: u64 = 10;
/// Safety factor applied to the sampled minimum of `|F_n| / n²`.
pub const C1_SAFETY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FareyError {
    #[error("n must be at least 1")]
    ZeroOrder,
    #[error("interval [{lo}, {hi}] has no interior")]
    Degenerate { lo: String, hi: String },
    #[error("endpoint {0} is not finite")]
    NonFinite(f64),
}

/// `φ(k)` by trial division.
pub fn totient(k: u64) -> u64 {
    assert!(k >= 1, "totient of 0");
    let mut n = k;
    let mut out = k;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            while n.is_multiple_of(p) {
                n /= p;
            }
            out -= out / p;
        }
        p += 1;
    }
    if n > 1 {
        out -= out / n;
    }
    out
}

/// `φ(0..=n)` by a sieve; entry 0 is 0.
pub fn totient_table(n: usize) -> Vec<u64> {
    let mut phi: Vec<u64> = (0..=n as u64).collect();
    for p in 2..=n {
        if phi[p] == p as u64 {
            for m in (p..=n).step_by(p) {
                phi[m] -= phi[m] / p as u64;
            }
        }
    }
    phi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FareyCount {
    pub n: u64,
    pub cardinality: u64,
    /// `cardinality / n²`
    pub ratio: f64,
}

pub fn farey_cardinality(n: u64) -> Result<FareyCount, FareyError> {
    if n == 0 {
        return Err(FareyError::ZeroOrder);
    }
    let cardinality = 1 + totient_table(n as usize).iter().sum::<u64>();
    Ok(FareyCount { n, cardinality, ratio: cardinality as f64 / (n as f64 * n as f64) })
}

/// `|F_m|` for every `m ≤ n`; entry 0 is 1.
fn farey_cumulative(n: usize) -> Vec<u64> {
    let mut acc = 1;
    totient_table(n)
        .into_iter()
        .map(|phi| {
            acc += phi;
            acc
        })
        .collect()
}

/// An interval endpoint, exact when given as a fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Rational(Ratio<i64>),
    Real(f64),
}

impl Endpoint {
    pub fn to_f64(self) -> f64 {
        match self {
            Endpoint::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Endpoint::Real(x) => x,
        }
    }

    /// Smallest integer `p` with `p / q ≥ self` (`> self` when `strict`).
    fn ceil_times(self, q: i64, strict: bool) -> i64 {
        match self {
            Endpoint::Rational(r) => {
                let num = *r.numer() as i128 * q as i128;
                let den = *r.denom() as i128;
                let p = Integer::div_floor(&num, &den) + 1;
                let exact = num.mod_floor(&den) == 0;
                (if exact && !strict { p - 1 } else { p }) as i64
            }
            Endpoint::Real(x) => {
                // membership of p/q is decided on the rounded quotient, so
                // that decimal endpoints such as 0.6 admit 3/5
                let inside = |p: i64| {
                    let v = p as f64 / q as f64;
                    if strict { v > x } else { v >= x }
                };
                let mut p = (x * q as f64).ceil() as i64;
                while inside(p - 1) {
                    p -= 1;
                }
                while !inside(p) {
                    p += 1;
                }
                p
            }
        }
    }

    /// Largest integer `p` with `p / q ≤ self` (`< self` when `strict`).
    fn floor_times(self, q: i64, strict: bool) -> i64 {
        match self {
            Endpoint::Rational(r) => -Endpoint::Rational(-r).ceil_times(q, strict),
            Endpoint::Real(x) => -Endpoint::Real(-x).ceil_times(q, strict),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Rational(r) => write!(f, "{r}"),
            Endpoint::Real(x) => write!(f, "{x}"),
        }
    }
}

impl From<f64> for Endpoint {
    fn from(x: f64) -> Self {
        Endpoint::Real(x)
    }
}

impl From<Ratio<i64>> for Endpoint {
    fn from(r: Ratio<i64>) -> Self {
        Endpoint::Rational(r)
    }
}

/// A real interval; both ends are included unless marked open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: Endpoint,
    pub hi: Endpoint,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn closed(lo: impl Into<Endpoint>, hi: impl Into<Endpoint>) -> Result<Interval, FareyError> {
        let iv = Interval { lo: lo.into(), hi: hi.into(), lo_open: false, hi_open: false };
        for e in [iv.lo, iv.hi] {
            if let Endpoint::Real(x) = e {
                if !x.is_finite() {
                    return Err(FareyError::NonFinite(x));
                }
            }
        }
        let wide = match (iv.lo, iv.hi) {
            (Endpoint::Rational(a), Endpoint::Rational(b)) => a < b,
            (a, b) => a.to_f64() < b.to_f64(),
        };
        if wide {
            Ok(iv)
        } else {
            Err(FareyError::Degenerate { lo: iv.lo.to_string(), hi: iv.hi.to_string() })
        }
    }

    pub fn open(lo: impl Into<Endpoint>, hi: impl Into<Endpoint>) -> Result<Interval, FareyError> {
        Interval::closed(lo, hi).map(|iv| Interval { lo_open: true, hi_open: true, ..iv })
    }

    pub fn width(&self) -> f64 {
        self.hi.to_f64() - self.lo.to_f64()
    }

    /// Numerators `p` with `p / q` in the interval.
    fn numerator_range(&self, q: i64) -> (i64, i64) {
        (self.lo.ceil_times(q, self.lo_open), self.hi.floor_times(q, self.hi_open))
    }

    fn shifted(&self, k: i64) -> Interval {
        let shift = |e: Endpoint| match e {
            Endpoint::Rational(r) => Endpoint::Rational(r + k),
            Endpoint::Real(x) => Endpoint::Real(x + k as f64),
        };
        Interval { lo: shift(self.lo), hi: shift(self.hi), ..*self }
    }
}

/// Distinct prime factors of every `q ≤ n`, via a smallest-prime-factor sieve.
struct PrimeFactors {
    spf: Vec<u32>,
}

impl PrimeFactors {
    fn new(n: usize) -> Self {
        let mut spf = vec![0u32; n + 1];
        for p in 2..=n {
            if spf[p] == 0 {
                for m in (p..=n).step_by(p) {
                    if spf[m] == 0 {
                        spf[m] = p as u32;
                    }
                }
            }
        }
        PrimeFactors { spf }
    }

    fn distinct(&self, mut q: usize) -> Vec<i64> {
        let mut out = Vec::new();
        while q > 1 {
            let p = self.spf[q] as usize;
            out.push(p as i64);
            while q.is_multiple_of(p) {
                q /= p;
            }
        }
        out
    }
}

/// Integers in `[lo, hi]` coprime to the product of `primes`.
fn coprime_in_range(lo: i64, hi: i64, primes: &[i64]) -> u64 {
    if hi < lo {
        return 0;
    }
    let mut total: i64 = 0;
    for mask in 0u32..(1 << primes.len()) {
        let mut d = 1;
        for (i, p) in primes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                d *= p;
            }
        }
        let multiples = Integer::div_floor(&hi, &d) - Integer::div_floor(&(lo - 1), &d);
        if mask.count_ones() % 2 == 0 {
            total += multiples;
        } else {
            total -= multiples;
        }
    }
    total as u64
}

/// Number of distinct rationals in `interval` whose reduced denominator is
/// at most `n`.
pub fn count_rationals_in_interval(interval: &Interval, n: u64) -> Result<u64, FareyError> {
    Ok(count_by_denominator(interval, n)?.into_iter().sum())
}

/// Entry `q − 1` holds the number of reduced fractions with denominator `q`
/// in `interval`, for `q = 1..=n`.
pub fn count_by_denominator(interval: &Interval, n: u64) -> Result<Vec<u64>, FareyError> {
    if n == 0 {
        return Err(FareyError::ZeroOrder);
    }
    let factors = PrimeFactors::new(n as usize);
    Ok((1..=n as usize)
        .map(|q| {
            let (lo, hi) = interval.numerator_range(q as i64);
            coprime_in_range(lo, hi, &factors.distinct(q))
        })
        .collect())
}

/// Explicit constants for the quadratic lower bound
/// `#{p/q ∈ I : q ≤ n} ≥ c·n²` for all `n ≥ n₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaConstants {
    /// `[a/b, (a+1)/b] ⊆ I` with `b` minimal
    pub a: i64,
    pub b: u64,
    /// lower bound for `|F_m| / m²` on `m ≥ n1`
    pub c1: f64,
    pub n1: u64,
    pub c: f64,
    pub n0: u64,
}

/// `c₁ = C1_SAFETY · min |F_m| / m²` over `m ∈ [n₁, 10 n₁]`.
pub fn cardinality_constant(n1: u64) -> f64 {
    let n1 = n1.max(1);
    let cum = farey_cumulative(10 * n1 as usize);
    let min = (n1..=10 * n1)
        .map(|m| cum[m as usize] as f64 / (m as f64 * m as f64))
        .fold(f64::INFINITY, f64::min);
    C1_SAFETY * min
}

/// The rationals in `[a/b, (a+1)/b]` include `(a + x)/b` for every `x ∈ F_m`,
/// which have denominator at most `b·m`. With `m = ⌊n/b⌋ ≥ n₁` this gives
/// at least `c₁ (n/b − 1)²` of them, and `c₁ (n/b − 1)² > c n²` for
/// `c = c₁ / (2b²)` as soon as `n > b / (1 − 1/√2)`.
pub fn lemma_constants(interval: &Interval) -> Result<LemmaConstants, FareyError> {
    lemma_constants_with(interval, DEFAULT_N1)
}

pub fn lemma_constants_with(interval: &Interval, n1: u64) -> Result<LemmaConstants, FareyError> {
    if !(interval.width() > 0.0) {
        return Err(FareyError::Degenerate { lo: interval.lo.to_string(), hi: interval.hi.to_string() });
    }
    let mut b: i64 = 1;
    let a = loop {
        let (lo, hi) = interval.numerator_range(b);
        if hi - lo >= 1 {
            break lo;
        }
        b += 1;
    };
    let b = b as u64;
    let c1 = cardinality_constant(n1);
    let c = c1 / (2.0 * (b * b) as f64);
    let slack = (b as f64 / (1.0 - std::f64::consts::FRAC_1_SQRT_2)).floor() as u64 + 1;
    Ok(LemmaConstants { a, b, c1, n1, c, n0: slack.max(n1 * b) })
}

/// Checks `count(I, n) ≥ c n²` for every `n ∈ [n₀, n_max]`; returns the
/// first failing `n`.
pub fn certify(interval: &Interval, k: &LemmaConstants, n_max: u64) -> Result<Option<u64>, FareyError> {
    if n_max < k.n0 {
        return Ok(None);
    }
    let per_q = count_by_denominator(interval, n_max)?;
    let mut total = 0;
    for (i, count) in per_q.iter().enumerate() {
        total += count;
        let n = i as u64 + 1;
        if n >= k.n0 && (total as f64) < k.c * (n as f64).powi(2) {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Integer translate of `interval` with lower end in `[0, 1)`.
pub fn normalized(interval: &Interval) -> Interval {
    let k = interval.lo.to_f64().floor() as i64;
    interval.shifted(-k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(lo: f64, hi: f64, n: i64) -> u64 {
        let mut count = 0;
        for q in 1..=n {
            for p in (lo * q as f64).floor() as i64 - 1..=(hi * q as f64).ceil() as i64 + 1 {
                let x = p as f64 / q as f64;
                if p.gcd(&q) == 1 && x >= lo && x <= hi {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn totients() {
        assert_eq!(totient(1), 1);
        assert_eq!(totient(10), 4);
        for p in [2, 3, 5, 7, 11] {
            assert_eq!(totient(p), p - 1);
        }
        let table = totient_table(2000);
        for k in 1..=2000u64 {
            let by_gcd = (1..=k).filter(|i| i.gcd(&k) == 1).count() as u64;
            assert_eq!(table[k as usize], by_gcd);
            assert_eq!(totient(k), by_gcd);
        }
    }

    #[test]
    fn farey_five() {
        assert_eq!(farey_cardinality(1).unwrap().cardinality, 2);
        let f5 = farey_cardinality(5).unwrap();
        assert_eq!(f5.cardinality, 11);
        assert!((f5.ratio - 11.0 / 25.0).abs() < 1e-15);
        assert_eq!(farey_cardinality(0), Err(FareyError::ZeroOrder));
    }

    #[test]
    fn unit_interval_matches_cardinality() {
        let unit = Interval::closed(0.0, 1.0).unwrap();
        let cum = farey_cumulative(500);
        let per_q = count_by_denominator(&unit, 500).unwrap();
        let mut total = 0;
        for (i, c) in per_q.iter().enumerate() {
            total += c;
            assert_eq!(total, cum[i + 1]);
        }
    }

    #[test]
    fn small_interval_by_hand() {
        // q ≤ 4 in [1/3, 1/2]: 1/3, 1/2, and nothing with q = 4
        let iv = Interval::closed(Ratio::new(1, 3), Ratio::new(1, 2)).unwrap();
        assert_eq!(count_rationals_in_interval(&iv, 4).unwrap(), 2);
        let open = Interval::open(Ratio::new(1, 3), Ratio::new(1, 2)).unwrap();
        assert_eq!(count_rationals_in_interval(&open, 4).unwrap(), 0);
        assert_eq!(count_rationals_in_interval(&open, 5).unwrap(), 1);
    }

    #[test]
    fn float_endpoints_on_fractions_are_exact() {
        // 0.3 is slightly below 3/10 and 0.6 slightly below 3/5
        let iv = Interval::closed(0.3, 0.6).unwrap();
        let n = 30;
        let want = brute(0.3, 0.6, n);
        assert_eq!(count_rationals_in_interval(&iv, n as u64).unwrap(), want);
    }

    #[test]
    fn lemma_constants_examples() {
        let k = lemma_constants(&Interval::closed(0.0, 1.0).unwrap()).unwrap();
        assert_eq!((k.a, k.b), (0, 1));
        assert!((k.c - k.c1 / 2.0).abs() < 1e-15);
        let k = lemma_constants(&Interval::closed(0.3, 0.6).unwrap()).unwrap();
        // b = 2: [1/2, 1] ⊄ I; b = 3: [1/3, 2/3] ⊄ I; b = 4: [2/4, 3/4] ⊄ I;
        // b = 5: [2/5, 3/5] ⊆ I
        assert_eq!((k.a, k.b), (2, 5));
        assert_eq!(certify(&Interval::closed(0.3, 0.6).unwrap(), &k, 2000).unwrap(), None);
    }

    #[test]
    fn ratio_tends_to_three_over_pi_squared() {
        let f = farey_cardinality(10_000).unwrap();
        let limit = 3.0 / std::f64::consts::PI.powi(2);
        assert!((f.ratio / limit - 1.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn counts_match_brute_force(lo in -3.0f64..3.0, w in 0.001f64..2.0, n in 1i64..40) {
            let iv = Interval::closed(lo, lo + w).unwrap();
            prop_assert_eq!(count_rationals_in_interval(&iv, n as u64).unwrap(), brute(lo, lo + w, n));
        }

        #[test]
        fn integer_shift_invariance(num in -50i64..50, den in 1i64..20, w in 1i64..30, k in -5i64..5, n in 1u64..60) {
            let lo = Ratio::new(num, den);
            let hi = lo + Ratio::new(w, 17);
            let iv = Interval::closed(lo, hi).unwrap();
            let moved = Interval::closed(lo + k, hi + k).unwrap();
            prop_assert_eq!(count_rationals_in_interval(&iv, n).unwrap(), count_rationals_in_interval(&moved, n).unwrap());
        }

        #[test]
        fn monotone_in_n_and_interval(lo in 0.0f64..1.0, w in 0.01f64..1.0, grow in 0.0f64..0.5, n in 1u64..80) {
            let inner = Interval::closed(lo, lo + w).unwrap();
            let outer = Interval::closed(lo - grow, lo + w + grow).unwrap();
            let a = count_rationals_in_interval(&inner, n).unwrap();
            prop_assert!(a <= count_rationals_in_interval(&inner, n + 1).unwrap());
            prop_assert!(a <= count_rationals_in_interval(&outer, n).unwrap());
        }
    }
}

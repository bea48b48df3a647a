//! The classical sieve on `Γ = Z` and almost-prime bounds for values of `f`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::arith::primes_up_to;
use crate::error::{Error, Result};
use crate::matrix::IntegerMatrix;
use crate::poly::PolynomialFunction;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BaselineReport {
    pub n_max: u64,
    pub q: u64,
    pub shifts: Vec<i64>,
    pub count: usize,
    pub survivors: Vec<u64>,
}

/// Survivors `n ∈ [1, N]` such that no `n + s` has a prime factor `<= Q`.
///
/// Works through residues: `Γ_p = Z/p`, `Ω_p = {-s mod p}`.
pub fn classical_integer_sieve(n_max: u64, q: u64, shifts: &[i64]) -> Result<BaselineReport> {
    if n_max < 1 || q < 2 {
        return Err(Error::Config("classical sieve needs N >= 1 and Q >= 2".into()));
    }
    let mut alive = vec![true; n_max as usize + 1];
    alive[0] = false;
    for p in primes_up_to(q) {
        let pi = p as i64;
        for &s in shifts {
            // n ≡ -s (mod p)
            let start = (-s).rem_euclid(pi) as u64;
            let mut n = if start == 0 { p } else { start };
            while n <= n_max {
                alive[n as usize] = false;
                n += p;
            }
        }
    }
    let survivors: Vec<u64> = (1..=n_max).filter(|&n| alive[n as usize]).collect();
    Ok(BaselineReport {
        n_max,
        q,
        shifts: shifts.to_vec(),
        count: survivors.len(),
        survivors,
    })
}

fn has_factor_up_to(v: i64, q: u64) -> bool {
    let v = v.unsigned_abs();
    if v == 0 {
        return true;
    }
    let mut d = 2u64;
    while d <= q && d <= v {
        if v % d == 0 {
            return true;
        }
        d += 1;
    }
    false
}

/// Direct trial division over every `n` and shift.
pub fn trial_division_survivors(n_max: u64, q: u64, shifts: &[i64]) -> Vec<u64> {
    (1..=n_max)
        .filter(|&n| shifts.iter().all(|&s| !has_factor_up_to(n as i64 + s, q)))
        .collect()
}

/// Survivors against the square-root rule: a value `v <= Q²` with no prime
/// factor `<= Q` is 1 or prime; above `Q²` it has at most
/// `⌊log v / log Q⌋` prime factors, all `> Q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SquareRootCheck {
    pub boundary: u64,
    /// Survivors whose shifted values are all `<= Q²`.
    pub below: usize,
    pub below_all_prime: bool,
    pub above: usize,
    pub above_within_bound: bool,
}

fn big_omega(mut v: u64) -> u32 {
    let mut count = 0;
    let mut d = 2;
    while d * d <= v {
        while v % d == 0 {
            v /= d;
            count += 1;
        }
        d += 1;
    }
    count + u32::from(v > 1)
}

pub fn square_root_check(report: &BaselineReport) -> SquareRootCheck {
    let q = report.q;
    let boundary = q.saturating_mul(q);
    let values = |n: u64| report.shifts.iter().map(move |&s| (n as i64 + s).unsigned_abs());
    let (mut below, mut above) = (0, 0);
    let (mut below_ok, mut above_ok) = (true, true);
    for &n in &report.survivors {
        if values(n).all(|v| v <= boundary) {
            below += 1;
            below_ok &= values(n).all(|v| v == 1 || crate::arith::is_prime(v));
        } else {
            above += 1;
            above_ok &= values(n).all(|v| f64::from(big_omega(v)) <= ((v as f64).ln() / (q as f64).ln()).floor() + 1e-9);
        }
    }
    SquareRootCheck {
        boundary,
        below,
        below_all_prime: below_ok,
        above,
        above_within_bound: above_ok,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlmostPrimeBound {
    pub value: String,
    /// Prime factors `<= Q` outside the sieve, with multiplicity.
    pub small_factors: u32,
    /// `⌊log|m| / log Q⌋` for the cofactor `m` free of primes `<= Q`.
    pub large_factor_bound: u32,
    pub bound: u32,
    pub unit: bool,
}

/// Upper bound on `Ω(f(g))` for a `g` sifted by `sieve_primes`: primes
/// `<= Q` outside the sieve are removed exactly, every remaining prime
/// factor exceeds `Q`.
pub fn almost_prime_bound(
    g: &IntegerMatrix,
    f: &PolynomialFunction,
    q: u64,
    sieve_primes: &[u64],
) -> Result<AlmostPrimeBound> {
    let value = f.evaluate(g)?;
    if value.is_zero() {
        return Err(Error::ZeroValue);
    }
    let mut m = value.abs();
    let mut small_factors = 0u32;
    for p in primes_up_to(q) {
        let bp = BigInt::from(p);
        if !m.is_multiple_of(&bp) {
            continue;
        }
        if sieve_primes.contains(&p) {
            return Err(Error::NotSifted(p));
        }
        while m.is_multiple_of(&bp) {
            m /= &bp;
            small_factors += 1;
        }
    }
    let big_q = BigInt::from(q);
    let mut large = 0u32;
    let mut power = big_q.clone();
    while power <= m {
        large += 1;
        power *= &big_q;
    }
    Ok(AlmostPrimeBound {
        value: value.to_string(),
        small_factors,
        large_factor_bound: large,
        bound: small_factors + large,
        unit: m.is_one() && small_factors == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::is_prime;

    #[test]
    fn odd_numbers_example() {
        let r = classical_integer_sieve(10, 2, &[0]).unwrap();
        assert_eq!(r.survivors, vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn twins_match_trial_division() {
        let r = classical_integer_sieve(2000, 47, &[0, 2]).unwrap();
        assert_eq!(r.survivors, trial_division_survivors(2000, 47, &[0, 2]));
        let r = classical_integer_sieve(500, 23, &[0, 2]).unwrap();
        for &n in &r.survivors {
            assert!(is_prime(n) && is_prime(n + 2));
        }
    }

    #[test]
    fn square_root_rule() {
        let r = classical_integer_sieve(10_000, 101, &[0, 2]).unwrap();
        let c = square_root_check(&r);
        assert_eq!((c.below, c.above), (r.count, 0));
        assert!(c.below_all_prime);
        let r = classical_integer_sieve(2_000, 7, &[0]).unwrap();
        let c = square_root_check(&r);
        assert!(c.above > 0 && c.below_all_prime && c.above_within_bound);
        assert_eq!(big_omega(2 * 2 * 3 * 97), 4);
    }

    #[test]
    fn negative_and_empty() {
        assert_eq!(
            classical_integer_sieve(300, 7, &[-5, 4]).unwrap().survivors,
            trial_division_survivors(300, 7, &[-5, 4])
        );
        assert!(classical_integer_sieve(1, 2, &[1]).unwrap().survivors.is_empty());
    }

    fn m(a: i64, b: i64, c: i64, d: i64) -> IntegerMatrix {
        IntegerMatrix::from_rows(&[[a, b], [c, d]]).unwrap()
    }

    #[test]
    fn almost_prime_bounds() {
        let f = PolynomialFunction::parse("b", 2).unwrap();
        // b = 2 · 3 · 53 · 59; sieve only 5
        let r = almost_prime_bound(&m(1, 18_762, 0, 1), &f, 50, &[5]).unwrap();
        assert_eq!(r.small_factors, 2);
        assert_eq!(r.large_factor_bound, 2);
        // Q^3 (1 + ε) with all factors large
        let v = 53i64 * 59 * 61;
        let r = almost_prime_bound(&m(1, v, 0, 1), &f, 50, &[2, 3, 5, 7]).unwrap();
        assert_eq!(r.large_factor_bound, 3);
        let unit = almost_prime_bound(&m(1, 1, 0, 1), &f, 50, &[2, 3]).unwrap();
        assert!(unit.unit);
        assert_eq!(unit.bound, 0);
        assert!(matches!(almost_prime_bound(&m(1, 0, 0, 1), &f, 50, &[]), Err(Error::ZeroValue)));
        assert!(matches!(almost_prime_bound(&m(1, 10, 0, 1), &f, 50, &[5]), Err(Error::NotSifted(5))));
    }
}

//! Word-sized modular arithmetic and deterministic primality.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest modulus accepted for residue tracking. Products of two residues
/// plus a short accumulation must fit in a `u64`.
pub const MAX_MODULUS: u64 = 1 << 31;

// Witnesses {2, 3, ..., 37} make the strong-pseudoprime test exact below 2^64.
const MR_WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[inline]
fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &MR_WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &MR_WITNESSES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Miller–Rabin with the witnesses 2..37: exact below `3.3·10^24`, a
/// strong probable-prime test above.
pub fn is_probable_prime_big(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime(small);
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    for &p in &MR_WITNESSES {
        if (n % p).is_zero() {
            return false;
        }
    }
    let s = n_minus_one.trailing_zeros().expect("n > 1");
    let d = &n_minus_one >> s;
    'witness: for &a in &MR_WITNESSES {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Validates a modulus for residue tracking.
pub fn check_prime(p: u64) -> Result<()> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if p >= MAX_MODULUS {
        return Err(Error::ModulusTooLarge(p));
    }
    Ok(())
}

/// All primes `<= limit`, by the sieve of Eratosthenes.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j <= n {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// Primes in the closed interval `[lo, hi]`.
pub fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect()
}

/// Arithmetic in `Z/pZ` for a prime `p < 2^31`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fp {
    p: u64,
}

impl Fp {
    pub fn new(p: u64) -> Result<Self> {
        check_prime(p)?;
        Ok(Fp { p })
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.p
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        a * b % self.p
    }

    pub fn pow(self, a: u64, e: u64) -> u64 {
        pow_mod_u64(a, e, self.p)
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self, a: u64) -> Option<u64> {
        let a = a % self.p;
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.p - 2))
        }
    }

    /// Reduces a signed value into `[0, p)`.
    #[inline]
    pub fn reduce_i64(self, x: i64) -> u64 {
        x.rem_euclid(self.p as i64) as u64
    }

    /// True iff `a` is a square in `F_p`, counting 0 as a square.
    pub fn is_square(self, a: u64) -> bool {
        let a = a % self.p;
        if a == 0 || self.p == 2 {
            return true;
        }
        self.pow(a, (self.p - 1) / 2) == 1
    }

    /// Table of inverses for `1..p` (index 0 holds 0).
    pub fn inverse_table(self) -> Vec<u64> {
        let p = self.p as usize;
        let mut inv = vec![0u64; p];
        if p > 1 {
            inv[1] = 1;
        }
        for i in 2..p {
            // inv[i] = -(p / i) * inv[p mod i]
            let q = (p / i) as u64;
            inv[i] = self.mul(self.neg(q % self.p), inv[p % i]);
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn big_primality() {
        let m61 = BigUint::from((1u128 << 61) - 1);
        assert!(is_probable_prime_big(&m61));
        // 2^89 - 1 is a Mersenne prime, 2^67 - 1 is not
        assert!(is_probable_prime_big(&((BigUint::one() << 89usize) - 1u32)));
        assert!(!is_probable_prime_big(&((BigUint::one() << 67usize) - 1u32)));
        let p = BigUint::from(1_000_000_007u64);
        assert!(!is_probable_prime_big(&(&p * &p)));
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
    }

    #[test]
    fn miller_rabin_matches_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
    }

    #[test]
    fn strong_pseudoprimes_rejected() {
        // strong pseudoprimes to several small bases
        for n in [2047u64, 1_373_653, 25_326_001, 3_215_031_751, 3_825_123_056_546_413_051] {
            assert!(!is_prime(n), "{n}");
        }
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn sieve_agrees_with_test() {
        let ps = primes_up_to(1000);
        assert_eq!(ps.len(), 168);
        assert!(ps.iter().all(|&p| is_prime(p)));
        assert_eq!(primes_in(5, 20), vec![5, 7, 11, 13, 17, 19]);
    }

    #[test]
    fn inverses() {
        let f = Fp::new(101).unwrap();
        let table = f.inverse_table();
        for a in 1..101 {
            assert_eq!(f.mul(a, table[a as usize]), 1);
            assert_eq!(f.inv(a), Some(table[a as usize]));
        }
        assert_eq!(f.inv(0), None);
    }

    #[test]
    fn squares_include_zero() {
        let f = Fp::new(7).unwrap();
        let squares: Vec<u64> = (0..7).filter(|&a| f.is_square(a)).collect();
        assert_eq!(squares, vec![0, 1, 2, 4]);
    }

    #[test]
    fn rejects_non_primes() {
        assert!(matches!(Fp::new(9), Err(Error::NotPrime(9))));
        assert!(matches!(check_prime(1), Err(Error::NotPrime(1))));
    }
}

//! Univariate polynomials over `F_p`, coefficients lowest degree first.

use crate::arith::Fp;

fn trim(mut a: Vec<u64>) -> Vec<u64> {
    while a.last() == Some(&0) {
        a.pop();
    }
    a
}

fn rem(a: &[u64], m: &[u64], f: Fp) -> Vec<u64> {
    let mut r = trim(a.to_vec());
    let dm = m.len() - 1;
    let lead_inv = f.inv(m[dm]).expect("non-zero leading coefficient");
    while r.len() > dm {
        let shift = r.len() - 1 - dm;
        let c = f.mul(*r.last().expect("non-empty"), lead_inv);
        for (i, &mi) in m.iter().enumerate() {
            r[shift + i] = f.sub(r[shift + i], f.mul(c, mi));
        }
        r = trim(r);
    }
    r
}

fn mul_mod(a: &[u64], b: &[u64], m: &[u64], f: Fp) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = f.add(out[i + j], f.mul(x, y));
        }
    }
    rem(&out, m, f)
}

fn pow_mod(base: &[u64], mut e: u64, m: &[u64], f: Fp) -> Vec<u64> {
    let mut result = rem(&[1], m, f);
    let mut b = rem(base, m, f);
    while e > 0 {
        if e & 1 == 1 {
            result = mul_mod(&result, &b, m, f);
        }
        b = mul_mod(&b, &b, m, f);
        e >>= 1;
    }
    result
}

fn gcd(a: &[u64], b: &[u64], f: Fp) -> Vec<u64> {
    let mut a = trim(a.to_vec());
    let mut b = trim(b.to_vec());
    while !b.is_empty() {
        let r = rem(&a, &b, f);
        a = b;
        b = r;
    }
    a
}

fn sub(a: &[u64], b: &[u64], f: Fp) -> Vec<u64> {
    let n = a.len().max(b.len());
    trim(
        (0..n)
            .map(|i| f.sub(a.get(i).copied().unwrap_or(0), b.get(i).copied().unwrap_or(0)))
            .collect(),
    )
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's test for a monic polynomial of positive degree.
pub fn is_irreducible(poly: &[u64], f: Fp) -> bool {
    let poly = trim(poly.to_vec());
    let n = poly.len().saturating_sub(1);
    if n == 0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    let p = f.modulus();
    let x = vec![0, 1];
    // frob[k] = x^(p^k) mod poly
    let mut frob = vec![rem(&x, &poly, f)];
    for k in 1..=n {
        let next = pow_mod(&frob[k - 1], p, &poly, f);
        frob.push(next);
    }
    if sub(&frob[n], &x, f) != Vec::<u64>::new() {
        return false;
    }
    prime_factors(n).into_iter().all(|q| {
        let g = gcd(&poly, &sub(&frob[n / q], &x, f), f);
        g.len() == 1
    })
}

/// Characteristic polynomial `det(xI - A)` by Berkowitz's division-free
/// recurrence; returned lowest degree first, monic.
pub fn char_poly(entries: &[u64], dim: usize, f: Fp) -> Vec<u64> {
    let a = |i: usize, j: usize| entries[i * dim + j];
    // highest degree first while building
    let mut poly = vec![1u64];
    for k in 1..=dim {
        let m = k - 1;
        let mut t = vec![0u64; k + 1];
        t[0] = 1;
        t[1] = f.neg(a(m, m));
        // v = A_{m} ^ j C, with C the column above the new diagonal entry
        let mut v: Vec<u64> = (0..m).map(|i| a(i, m)).collect();
        for slot in t.iter_mut().skip(2) {
            let rc = (0..m).fold(0, |acc, i| f.add(acc, f.mul(a(m, i), v[i])));
            *slot = f.neg(rc);
            v = (0..m)
                .map(|i| (0..m).fold(0, |acc, j| f.add(acc, f.mul(a(i, j), v[j]))))
                .collect();
        }
        let mut next = vec![0u64; k + 1];
        for (i, slot) in next.iter_mut().enumerate() {
            for (j, &pj) in poly.iter().enumerate().take(i + 1) {
                *slot = f.add(*slot, f.mul(t[i - j], pj));
            }
        }
        poly = next;
    }
    poly.reverse();
    poly
}

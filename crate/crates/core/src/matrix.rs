//! Exact integer matrices and their reductions modulo primes.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::arith::{check_prime, Fp};
use crate::error::{Error, Result};

/// Square matrix with arbitrary-precision integer entries, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntegerMatrix {
    dim: usize,
    entries: Vec<BigInt>,
}

impl IntegerMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![BigInt::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = BigInt::one();
        }
        IntegerMatrix { dim, entries }
    }

    /// Builds a matrix from rows of machine integers.
    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch(dim, row.len()));
            }
            entries.extend(row.iter().map(|&x| BigInt::from(x)));
        }
        Ok(IntegerMatrix { dim, entries })
    }

    /// Builds a matrix from a flat row-major list whose length is a perfect square.
    pub fn from_flat(flat: &[i64]) -> Result<Self> {
        let dim = (flat.len() as f64).sqrt().round() as usize;
        if dim * dim != flat.len() || dim == 0 {
            return Err(Error::InvalidGroup(format!(
                "matrix with {} entries is not square",
                flat.len()
            )));
        }
        Ok(IntegerMatrix {
            dim,
            entries: flat.iter().map(|&x| BigInt::from(x)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.dim + j]
    }

    pub fn is_identity(&self) -> bool {
        *self == IntegerMatrix::identity(self.dim)
    }

    pub fn mul(&self, other: &IntegerMatrix) -> Result<IntegerMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let n = self.dim;
        let mut entries = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = &self.entries[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += a * &other.entries[k * n + j];
                }
            }
        }
        Ok(IntegerMatrix { dim: n, entries })
    }

    pub fn transpose(&self) -> IntegerMatrix {
        let n = self.dim;
        let mut entries = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                entries.push(self.entries[i * n + j].clone());
            }
        }
        IntegerMatrix { dim: n, entries }
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> BigInt {
        let n = self.dim;
        if n == 0 {
            return BigInt::one();
        }
        let mut a = self.entries.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if a[k * n + k].is_zero() {
                let Some(swap) = (k + 1..n).find(|&r| !a[r * n + k].is_zero()) else {
                    return BigInt::zero();
                };
                for j in 0..n {
                    a.swap(k * n + j, swap * n + j);
                }
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = &a[i * n + j] * &a[k * n + k] - &a[i * n + k] * &a[k * n + j];
                    a[i * n + j] = v.div_floor(&prev);
                }
            }
            prev = a[k * n + k].clone();
        }
        sign * &a[n * n - 1]
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> BigInt {
        self.entries
            .iter()
            .map(|x| x.abs())
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    /// Maximum absolute row sum (the operator norm induced by the sup norm).
    pub fn row_sum_norm(&self) -> BigInt {
        (0..self.dim)
            .map(|i| {
                self.entries[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .map(|x| x.abs())
                    .sum::<BigInt>()
            })
            .max()
            .unwrap_or_else(BigInt::zero)
    }

    /// Entrywise reduction into `[0, p)`.
    pub fn reduce_mod(&self, p: u64) -> Result<ModMatrix> {
        check_prime(p)?;
        let big_p = BigInt::from(p);
        let entries = self
            .entries
            .iter()
            .map(|x| x.mod_floor(&big_p).to_u64().expect("residue fits"))
            .collect();
        Ok(ModMatrix {
            dim: self.dim,
            p,
            entries,
        })
    }

    /// Standard symplectic form `[[0, I], [-I, 0]]` of size `2g`.
    pub fn symplectic_form(genus: usize) -> IntegerMatrix {
        let n = 2 * genus;
        let mut m = IntegerMatrix {
            dim: n,
            entries: vec![BigInt::zero(); n * n],
        };
        for i in 0..genus {
            m.entries[i * n + genus + i] = BigInt::one();
            m.entries[(genus + i) * n + i] = -BigInt::one();
        }
        m
    }

    /// True iff `gᵀ Ω g = Ω` for the standard form.
    pub fn is_symplectic(&self) -> bool {
        if self.dim % 2 != 0 {
            return false;
        }
        let omega = IntegerMatrix::symplectic_form(self.dim / 2);
        let lhs = self
            .transpose()
            .mul(&omega)
            .and_then(|m| m.mul(self))
            .expect("square");
        lhs == omega
    }
}

impl fmt::Debug for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.entries[i * self.dim + j])?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

// Row-major integer lists; entries beyond i64 are written as decimal strings.
impl Serialize for IntegerMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for x in &self.entries {
            match x.to_i64() {
                Some(v) => seq.serialize_element(&v)?,
                None => seq.serialize_element(&x.to_string())?,
            }
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for IntegerMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let flat = Vec::<i64>::deserialize(deserializer)?;
        IntegerMatrix::from_flat(&flat).map_err(serde::de::Error::custom)
    }
}

/// Square matrix over `F_p`, row-major residues in `[0, p)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModMatrix {
    dim: usize,
    p: u64,
    entries: Vec<u64>,
}

impl ModMatrix {
    pub fn identity(dim: usize, p: u64) -> Self {
        let mut entries = vec![0u64; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1 % p;
        }
        ModMatrix { dim, p, entries }
    }

    /// Entries are reduced; `p` must already be validated.
    pub fn from_entries(dim: usize, p: u64, entries: Vec<u64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        let entries = entries.into_iter().map(|x| x % p).collect();
        ModMatrix { dim, p, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.dim + j]
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| self.entries[i * self.dim + j] == u64::from(i == j))
        })
    }

    pub fn mul(&self, other: &ModMatrix) -> Result<ModMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        if self.p != other.p {
            return Err(Error::InvalidGroup(format!(
                "moduli differ: {} vs {}",
                self.p, other.p
            )));
        }
        let mut out = ModMatrix::identity(self.dim, self.p);
        self.mul_into(other, &mut out);
        Ok(out)
    }

    /// `out = self * other` without allocating. Dimensions and moduli must agree.
    #[inline]
    pub fn mul_into(&self, other: &ModMatrix, out: &mut ModMatrix) {
        let n = self.dim;
        let p = self.p;
        out.dim = n;
        out.p = p;
        out.entries.resize(n * n, 0);
        for i in 0..n {
            let row = &self.entries[i * n..(i + 1) * n];
            for j in 0..n {
                let mut acc = 0u64;
                for k in 0..n {
                    acc += row[k] * other.entries[k * n + j] % p;
                }
                out.entries[i * n + j] = acc % p;
            }
        }
    }

    pub fn determinant(&self) -> u64 {
        let f = Fp::new(self.p).expect("validated modulus");
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut det = 1u64;
        for k in 0..n {
            let Some(piv) = (k..n).find(|&r| a[r * n + k] != 0) else {
                return 0;
            };
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                det = f.neg(det);
            }
            let pv = a[k * n + k];
            det = f.mul(det, pv);
            let inv = f.inv(pv).expect("non-zero pivot");
            for i in k + 1..n {
                let factor = f.mul(a[i * n + k], inv);
                if factor == 0 {
                    continue;
                }
                for j in k..n {
                    a[i * n + j] = f.sub(a[i * n + j], f.mul(factor, a[k * n + j]));
                }
            }
        }
        det
    }

    /// Row-major base-`p` digits, most significant first.
    pub fn encode(&self) -> u64 {
        self.entries.iter().fold(0u64, |acc, &e| acc * self.p + e)
    }

    /// Inverse of [`ModMatrix::encode`].
    pub fn decode(code: u64, dim: usize, p: u64) -> ModMatrix {
        let mut entries = vec![0u64; dim * dim];
        let mut c = code;
        for slot in entries.iter_mut().rev() {
            *slot = c % p;
            c /= p;
        }
        ModMatrix { dim, p, entries }
    }

    /// Overwrites `self` with the decoding of `code`, reusing storage.
    #[inline]
    pub fn decode_into(&mut self, code: u64) {
        let p = self.p;
        let mut c = code;
        for slot in self.entries.iter_mut().rev() {
            *slot = c % p;
            c /= p;
        }
    }

    /// Trace in `[0, p)`.
    pub fn trace(&self) -> u64 {
        (0..self.dim).fold(0, |acc, i| (acc + self.entries[i * self.dim + i]) % self.p)
    }
}

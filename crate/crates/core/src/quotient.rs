//! Congruence quotients `Γ_I` enumerated by breadth-first closure.
//!
//! An element of `Γ_I` is a tuple of residue matrices, one per prime in `I`,
//! keyed by a mixed-radix integer: the row-major base-`p` digits of each
//! residue matrix, concatenated across the primes in increasing order.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_bigint::BigUint;
use num_traits::One;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::arith::{check_prime, Fp};
use crate::error::{Error, Result};
use crate::group::{Ambient, GroupSpec};
use crate::matrix::ModMatrix;

/// Default ceiling on enumerated quotient orders.
pub const DEFAULT_CAP: usize = 50_000_000;

#[derive(Clone, Debug)]
pub struct FiniteQuotient {
    spec_digest: String,
    rank: usize,
    primes: Vec<u64>,
    /// `p^(r²)` for each prime.
    radices: Vec<u64>,
    generator_count: usize,
    includes_identity: bool,
    elements: Vec<u64>,
    index: FxHashMap<u64, u32>,
    /// Right translate of element `i` by generator `s` at `i * generator_count + s`.
    action: Vec<u32>,
}

fn radices_for(rank: usize, primes: &[u64]) -> Result<Vec<u64>> {
    let digits = (rank * rank) as u32;
    let mut total: u64 = 1;
    let mut out = Vec::with_capacity(primes.len());
    for &p in primes {
        let radix = p
            .checked_pow(digits)
            .ok_or_else(|| Error::EncodingOverflow(primes.to_vec()))?;
        total = total
            .checked_mul(radix)
            .ok_or_else(|| Error::EncodingOverflow(primes.to_vec()))?;
        out.push(radix);
    }
    Ok(out)
}

fn normalize_primes(primes: &[u64]) -> Result<Vec<u64>> {
    let mut sorted = primes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != primes.len() {
        return Err(Error::DuplicatePrimes(primes.to_vec()));
    }
    for &p in &sorted {
        check_prime(p)?;
    }
    Ok(sorted)
}

/// Residue tuple for one element, with reusable storage.
struct TupleCodec {
    rank: usize,
    primes: Vec<u64>,
    radices: Vec<u64>,
}

impl TupleCodec {
    fn scratch(&self) -> Vec<ModMatrix> {
        self.primes
            .iter()
            .map(|&p| ModMatrix::identity(self.rank, p))
            .collect()
    }

    fn decode_into(&self, code: u64, out: &mut [ModMatrix]) {
        let mut c = code;
        for (k, m) in out.iter_mut().enumerate().rev() {
            m.decode_into(c % self.radices[k]);
            c /= self.radices[k];
        }
    }

    fn encode(&self, tuple: &[ModMatrix]) -> u64 {
        tuple
            .iter()
            .zip(&self.radices)
            .fold(0u64, |acc, (m, &r)| acc * r + m.encode())
    }
}

impl FiniteQuotient {
    /// BFS closure of the identity under right multiplication by every
    /// generator, simultaneously modulo each prime in `primes`.
    pub fn enumerate(spec: &GroupSpec, primes: &[u64], cap: usize) -> Result<Self> {
        if spec.generator_count() == 0 {
            return Err(Error::EmptyGenerators);
        }
        let primes = normalize_primes(primes)?;
        let rank = spec.rank();
        let radices = radices_for(rank, &primes)?;
        let codec = TupleCodec {
            rank,
            primes: primes.clone(),
            radices: radices.clone(),
        };
        // generator s reduced mod each prime
        let gens: Vec<Vec<ModMatrix>> = (0..spec.generator_count())
            .map(|s| {
                primes
                    .iter()
                    .map(|&p| spec.generators()[s].reduce_mod(p))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let ngen = spec.generator_count();

        let identity: Vec<ModMatrix> = codec.scratch();
        let id_code = codec.encode(&identity);
        let mut elements = vec![id_code];
        let mut index = FxHashMap::default();
        index.insert(id_code, 0u32);
        let mut action: Vec<u32> = Vec::new();

        let mut current = codec.scratch();
        let mut product = codec.scratch();
        let mut head = 0;
        while head < elements.len() {
            codec.decode_into(elements[head], &mut current);
            for gen in &gens {
                for k in 0..primes.len() {
                    current[k].mul_into(&gen[k], &mut product[k]);
                }
                let code = codec.encode(&product);
                let next = match index.get(&code) {
                    Some(&j) => j,
                    None => {
                        if elements.len() >= cap {
                            return Err(Error::CapExceeded { cap });
                        }
                        let j = elements.len() as u32;
                        elements.push(code);
                        index.insert(code, j);
                        j
                    }
                };
                action.push(next);
            }
            head += 1;
        }
        debug_assert_eq!(action.len(), elements.len() * ngen);
        Ok(FiniteQuotient {
            spec_digest: spec.digest(),
            rank,
            primes,
            radices,
            generator_count: ngen,
            includes_identity: spec.includes_identity(),
            elements,
            index,
            action,
        })
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `q_I`, the product of the primes.
    pub fn modulus(&self) -> u128 {
        self.primes.iter().map(|&p| p as u128).product()
    }

    pub fn spec_digest(&self) -> &str {
        &self.spec_digest
    }

    pub fn generator_count(&self) -> usize {
        self.generator_count
    }

    pub fn includes_identity(&self) -> bool {
        self.includes_identity
    }

    /// Element index of the identity (always 0: BFS starts there).
    pub fn identity(&self) -> usize {
        0
    }

    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    pub fn code(&self, i: usize) -> u64 {
        self.elements[i]
    }

    pub fn index_of(&self, code: u64) -> Option<usize> {
        self.index.get(&code).map(|&i| i as usize)
    }

    #[inline]
    pub fn act(&self, i: usize, s: usize) -> usize {
        self.action[i * self.generator_count + s] as usize
    }

    pub fn action_table(&self) -> &[u32] {
        &self.action
    }

    /// Per-prime encodings of element `i`, in prime order.
    pub fn component_codes(&self, i: usize) -> Vec<u64> {
        let mut c = self.elements[i];
        let mut out = vec![0; self.primes.len()];
        for k in (0..self.primes.len()).rev() {
            out[k] = c % self.radices[k];
            c /= self.radices[k];
        }
        out
    }

    /// Encoding of the component of element `i` at prime position `k`.
    pub fn component_code(&self, i: usize, k: usize) -> u64 {
        let tail: u64 = self.radices[k + 1..].iter().product();
        (self.elements[i] / tail) % self.radices[k]
    }

    pub fn residues(&self, i: usize) -> Vec<ModMatrix> {
        self.component_codes(i)
            .into_iter()
            .zip(&self.primes)
            .map(|(c, &p)| ModMatrix::decode(c, self.rank, p))
            .collect()
    }

    /// Encodes a residue tuple (one matrix per prime, in prime order).
    pub fn encode_residues(&self, tuple: &[ModMatrix]) -> u64 {
        tuple
            .iter()
            .zip(&self.radices)
            .fold(0u64, |acc, (m, &r)| acc * r + m.encode())
    }

    // Cache layout (all integers little-endian):
    //   magic "GSQC" | version u32 = 1 | digest length u32 | digest bytes (ASCII hex)
    //   | prime count u32 | primes u64... | rank u32 | generator count u32
    //   | includes_identity u8 | order u64 | encodings u64 × order
    //   | action u32 × (order × generator count)

    /// Writes the quotient to `path` (via a temporary file and rename).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(b"GSQC")?;
            w.write_all(&1u32.to_le_bytes())?;
            w.write_all(&(self.spec_digest.len() as u32).to_le_bytes())?;
            w.write_all(self.spec_digest.as_bytes())?;
            w.write_all(&(self.primes.len() as u32).to_le_bytes())?;
            for &p in &self.primes {
                w.write_all(&p.to_le_bytes())?;
            }
            w.write_all(&(self.rank as u32).to_le_bytes())?;
            w.write_all(&(self.generator_count as u32).to_le_bytes())?;
            w.write_all(&[u8::from(self.includes_identity)])?;
            w.write_all(&(self.elements.len() as u64).to_le_bytes())?;
            for &e in &self.elements {
                w.write_all(&e.to_le_bytes())?;
            }
            for &a in &self.action {
                w.write_all(&a.to_le_bytes())?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads a cached quotient; fails if it was built for a different group.
    pub fn read_cache(path: &Path, spec: &GroupSpec) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"GSQC" {
            return Err(Error::Cache("bad magic".into()));
        }
        if read_u32(&mut r)? != 1 {
            return Err(Error::Cache("unsupported version".into()));
        }
        let dlen = read_u32(&mut r)? as usize;
        let mut digest = vec![0u8; dlen];
        r.read_exact(&mut digest)?;
        let digest = String::from_utf8(digest).map_err(|_| Error::Cache("bad digest".into()))?;
        if digest != spec.digest() {
            return Err(Error::Cache("spec digest mismatch".into()));
        }
        let nprimes = read_u32(&mut r)? as usize;
        let primes = (0..nprimes)
            .map(|_| read_u64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let rank = read_u32(&mut r)? as usize;
        let generator_count = read_u32(&mut r)? as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let order = read_u64(&mut r)? as usize;
        let elements = (0..order)
            .map(|_| read_u64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let action = (0..order * generator_count)
            .map(|_| read_u32(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let index = elements
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        Ok(FiniteQuotient {
            spec_digest: digest,
            rank,
            radices: radices_for(rank, &primes)?,
            primes,
            generator_count,
            includes_identity: flag[0] != 0,
            elements,
            index,
            action,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// The full classical group containing `Γ_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ClassicalGroup {
    SpecialLinear(usize),
    Symplectic(usize),
}

impl ClassicalGroup {
    pub fn of(spec: &GroupSpec) -> Self {
        match spec.ambient() {
            Ambient::SpecialLinear => ClassicalGroup::SpecialLinear(spec.rank()),
            Ambient::Symplectic => ClassicalGroup::Symplectic(spec.rank() / 2),
        }
    }
}

/// `|SL_r(F_p)| = p^(r(r-1)/2) ∏_{k=2..r} (p^k - 1)`,
/// `|Sp_2g(F_p)| = p^(g²) ∏_{k=1..g} (p^(2k) - 1)`.
pub fn classical_group_order(group: ClassicalGroup, p: u64) -> BigUint {
    let p = BigUint::from(p);
    match group {
        ClassicalGroup::SpecialLinear(r) => {
            let mut n = p.pow((r * r.saturating_sub(1) / 2) as u32);
            for k in 2..=r {
                n *= p.pow(k as u32) - BigUint::one();
            }
            n
        }
        ClassicalGroup::Symplectic(g) => {
            let mut n = p.pow((g * g) as u32);
            for k in 1..=g {
                n *= p.pow(2 * k as u32) - BigUint::one();
            }
            n
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SurjectivityRow {
    pub prime: u64,
    pub order: u64,
    pub ambient_order: String,
    pub surjective: bool,
}

/// Compares `|Γ_p|` with the order of the ambient classical group for each prime.
pub fn surjectivity_report(
    spec: &GroupSpec,
    primes: &[u64],
    cap: usize,
) -> Result<Vec<SurjectivityRow>> {
    let group = ClassicalGroup::of(spec);
    primes
        .iter()
        .map(|&p| {
            let q = FiniteQuotient::enumerate(spec, &[p], cap)?;
            let ambient = classical_group_order(group, p);
            Ok(SurjectivityRow {
                prime: p,
                order: q.order() as u64,
                surjective: BigUint::from(q.order()) == ambient,
                ambient_order: ambient.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndependenceReport {
    pub p: u64,
    pub q: u64,
    pub order_p: u64,
    pub order_q: u64,
    pub order_pair: u64,
    pub independent: bool,
}

/// Order of `Γ_{p,q}` from `|Γ_p|` times the order of the kernel of
/// `Γ_{p,q} → Γ_p`, the latter generated inside `Γ_q` by Schreier generators.
/// Never materializes the pair quotient.
pub fn independence_check(spec: &GroupSpec, p: u64, q: u64, cap: usize) -> Result<IndependenceReport> {
    if p == q {
        return Err(Error::DuplicatePrimes(vec![p, q]));
    }
    let gp = FiniteQuotient::enumerate(spec, &[p], cap)?;
    let gq = FiniteQuotient::enumerate(spec, &[q], cap)?;
    let kernel = pair_kernel_order(spec, &gp, q)?;
    let order_pair = gp.order() as u64 * kernel as u64;
    Ok(IndependenceReport {
        p,
        q,
        order_p: gp.order() as u64,
        order_q: gq.order() as u64,
        order_pair,
        independent: order_pair == gp.order() as u64 * gq.order() as u64,
    })
}

fn pair_kernel_order(spec: &GroupSpec, gp: &FiniteQuotient, q: u64) -> Result<usize> {
    let rank = spec.rank();
    let gens_q = spec.reduced_generators(q)?;
    let ngen = spec.generator_count();
    // Transversal images: for each element x of Γ_p, the mod-q value of the
    // BFS-tree word reaching x.
    let mut tau: Vec<Option<ModMatrix>> = vec![None; gp.order()];
    tau[0] = Some(ModMatrix::identity(rank, q));
    let mut queue = VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        let tx = tau[x].clone().expect("visited");
        for (s, g) in gens_q.iter().enumerate() {
            let y = gp.act(x, s);
            if tau[y].is_none() {
                tau[y] = Some(tx.mul(g)?);
                queue.push_back(y);
            }
        }
    }
    let tau: Vec<ModMatrix> = tau.into_iter().map(|t| t.expect("connected")).collect();
    let tau_inv: Vec<ModMatrix> = tau.iter().map(inverse_mod).collect::<Result<_>>()?;

    let mut subgroup: FxHashSet<u64> = FxHashSet::default();
    subgroup.insert(ModMatrix::identity(rank, q).encode());
    let mut kernel_gens: Vec<ModMatrix> = Vec::new();
    for x in 0..gp.order() {
        for s in 0..ngen {
            let y = gp.act(x, s);
            let h = tau[x].mul(&gens_q[s])?.mul(&tau_inv[y])?;
            if !subgroup.contains(&h.encode()) {
                kernel_gens.push(h);
                subgroup = closure(rank, q, &kernel_gens);
            }
        }
    }
    Ok(subgroup.len())
}

/// Subgroup generated by `gens` (finite group: right-multiplication closure).
fn closure(rank: usize, q: u64, gens: &[ModMatrix]) -> FxHashSet<u64> {
    let id = ModMatrix::identity(rank, q);
    let mut seen = FxHashSet::default();
    seen.insert(id.encode());
    let mut frontier = vec![id];
    let mut scratch = ModMatrix::identity(rank, q);
    while let Some(x) = frontier.pop() {
        for g in gens {
            x.mul_into(g, &mut scratch);
            if seen.insert(scratch.encode()) {
                frontier.push(scratch.clone());
            }
        }
    }
    seen
}

/// Inverse over `F_p` by Gauss–Jordan elimination.
pub fn inverse_mod(m: &ModMatrix) -> Result<ModMatrix> {
    let n = m.dim();
    let f = Fp::new(m.modulus())?;
    let mut a = m.entries().to_vec();
    let mut inv = ModMatrix::identity(n, m.modulus()).entries().to_vec();
    for col in 0..n {
        let piv = (col..n)
            .find(|&r| a[r * n + col] != 0)
            .ok_or_else(|| Error::InvalidGroup("singular matrix".into()))?;
        for j in 0..n {
            a.swap(col * n + j, piv * n + j);
            inv.swap(col * n + j, piv * n + j);
        }
        let scale = f.inv(a[col * n + col]).expect("non-zero pivot");
        for j in 0..n {
            a[col * n + j] = f.mul(a[col * n + j], scale);
            inv[col * n + j] = f.mul(inv[col * n + j], scale);
        }
        for r in 0..n {
            if r == col || a[r * n + col] == 0 {
                continue;
            }
            let factor = a[r * n + col];
            for j in 0..n {
                a[r * n + j] = f.sub(a[r * n + j], f.mul(factor, a[col * n + j]));
                inv[r * n + j] = f.sub(inv[r * n + j], f.mul(factor, inv[col * n + j]));
            }
        }
    }
    Ok(ModMatrix::from_entries(n, m.modulus(), inv))
}

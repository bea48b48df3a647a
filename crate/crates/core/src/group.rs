//! Finitely generated matrix groups given by symmetric generating sets.

use std::collections::BTreeSet;

use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::check_prime;
use crate::error::{Error, Result};
use crate::matrix::{IntegerMatrix, ModMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ambient {
    SpecialLinear,
    Symplectic,
}

/// A subgroup of `SL_r(Z)` or `Sp_2g(Z)` with an ordered, inverse-closed
/// generating list. Random walks step uniformly over this list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    name: String,
    rank: usize,
    generators: Vec<IntegerMatrix>,
    includes_identity: bool,
    ambient: Ambient,
    exceptional_primes: BTreeSet<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// `<[[1,±k],[0,1]], [[1,0],[±k,1]]>`; `k = 3` is the Lubotzky group.
    Lubotzky(i64),
    /// The elementary generators of `SL_2(Z)`.
    Sl2Standard,
    /// Symplectic transvections generating `Sp_2g(Z)`, `g ∈ {1, 2}`.
    SymplecticElementary(usize),
}

impl GroupSpec {
    pub fn new(
        name: impl Into<String>,
        generators: Vec<IntegerMatrix>,
        includes_identity: bool,
        ambient: Ambient,
        exceptional_primes: BTreeSet<u64>,
    ) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::EmptyGenerators);
        };
        let rank = first.dim();
        if rank == 0 {
            return Err(Error::InvalidGroup("rank must be positive".into()));
        }
        for g in &generators {
            if g.dim() != rank {
                return Err(Error::DimensionMismatch(rank, g.dim()));
            }
            match ambient {
                Ambient::SpecialLinear => {
                    if !g.determinant().is_one() {
                        return Err(Error::InvalidGroup(format!(
                            "generator {g:?} has determinant {}",
                            g.determinant()
                        )));
                    }
                }
                Ambient::Symplectic => {
                    if !g.is_symplectic() {
                        return Err(Error::InvalidGroup(format!(
                            "generator {g:?} does not preserve the symplectic form"
                        )));
                    }
                }
            }
        }
        // Inverse-closed as a multiset: count(g) == count(g^-1).
        for (i, g) in generators.iter().enumerate() {
            let count = generators.iter().filter(|h| *h == g).count();
            let inverse_count = generators
                .iter()
                .filter(|h| g.mul(h).map(|p| p.is_identity()).unwrap_or(false))
                .count();
            if count != inverse_count {
                return Err(Error::InvalidGroup(format!(
                    "generating set is not symmetric: generator {i} {g:?} lacks a matching inverse"
                )));
            }
        }
        if includes_identity && !generators.iter().any(|g| g.is_identity()) {
            return Err(Error::InvalidGroup(
                "includes_identity is set but the identity is not a generator".into(),
            ));
        }
        for &p in &exceptional_primes {
            check_prime(p)?;
        }
        Ok(GroupSpec {
            name: name.into(),
            rank,
            generators,
            includes_identity,
            ambient,
            exceptional_primes,
        })
    }

    pub fn preset(preset: Preset, with_identity: bool) -> Result<Self> {
        let (name, mut generators, ambient, exceptional) = match preset {
            Preset::Lubotzky(k) => {
                if k < 1 {
                    return Err(Error::InvalidGroup(format!("lubotzky parameter k = {k} < 1")));
                }
                let gens = elementary_sl2(k);
                let exceptional = prime_divisors(k as u64);
                (format!("lubotzky({k})"), gens, Ambient::SpecialLinear, exceptional)
            }
            Preset::Sl2Standard => (
                "sl2-standard".to_string(),
                elementary_sl2(1),
                Ambient::SpecialLinear,
                BTreeSet::new(),
            ),
            Preset::SymplecticElementary(genus) => {
                let gens = symplectic_transvections(genus)?;
                (format!("symplectic({genus})"), gens, Ambient::Symplectic, BTreeSet::new())
            }
        };
        if with_identity {
            generators.push(IntegerMatrix::identity(generators[0].dim()));
        }
        GroupSpec::new(name, generators, with_identity, ambient, exceptional)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn generators(&self) -> &[IntegerMatrix] {
        &self.generators
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn includes_identity(&self) -> bool {
        self.includes_identity
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn exceptional_primes(&self) -> &BTreeSet<u64> {
        &self.exceptional_primes
    }

    pub fn is_exceptional(&self, p: u64) -> bool {
        self.exceptional_primes.contains(&p)
    }

    /// Genus `g` for a symplectic group of rank `2g`.
    pub fn genus(&self) -> Option<usize> {
        (self.ambient == Ambient::Symplectic).then_some(self.rank / 2)
    }

    /// SHA-256 over the defining data; keys quotient caches and reports.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("rank={};ambient={:?};identity={};", self.rank, self.ambient, self.includes_identity));
        for g in &self.generators {
            h.update(format!("{g:?};"));
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Generator reductions modulo `p`, in generator order.
    pub fn reduced_generators(&self, p: u64) -> Result<Vec<ModMatrix>> {
        self.generators.iter().map(|g| g.reduce_mod(p)).collect()
    }

    /// A constant `C` with `max |entry(γ)| <= C^n` for every product of `n`
    /// generators: the largest row-sum norm among generators.
    pub fn growth_constant(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.row_sum_norm().to_f64().unwrap_or(f64::INFINITY))
            .fold(1.0, f64::max)
    }

    /// Index of the inverse of each generator (first match).
    pub fn inverse_indices(&self) -> Vec<usize> {
        self.generators
            .iter()
            .map(|g| {
                self.generators
                    .iter()
                    .position(|h| g.mul(h).map(|p| p.is_identity()).unwrap_or(false))
                    .expect("validated symmetric")
            })
            .collect()
    }

    /// True when `Γ mod p` is provably all of `SL_2(F_p)`: the generators
    /// include upper and lower unipotents with off-diagonal entries that are
    /// units mod `p`, and those generate `SL_2` over a prime field.
    pub fn certifies_full_sl2(&self, p: u64) -> bool {
        if self.rank != 2 {
            return false;
        }
        let Ok(gens) = self.reduced_generators(p) else {
            return false;
        };
        let upper = gens
            .iter()
            .any(|g| g.get(0, 0) == 1 && g.get(1, 1) == 1 && g.get(1, 0) == 0 && g.get(0, 1) != 0);
        let lower = gens
            .iter()
            .any(|g| g.get(0, 0) == 1 && g.get(1, 1) == 1 && g.get(0, 1) == 0 && g.get(1, 0) != 0);
        upper && lower
    }
}

fn elementary_sl2(k: i64) -> Vec<IntegerMatrix> {
    [[[1, k], [0, 1]], [[1, -k], [0, 1]], [[1, 0], [k, 1]], [[1, 0], [-k, 1]]]
        .iter()
        .map(|rows| IntegerMatrix::from_rows(rows).expect("2x2"))
        .collect()
}

/// Transvections `x ↦ x + <x, v> v` and their inverses for
/// `v ∈ {e_i, f_i}` plus `e_i - e_{i+1}`.
fn symplectic_transvections(genus: usize) -> Result<Vec<IntegerMatrix>> {
    if !(1..=2).contains(&genus) {
        return Err(Error::InvalidGroup(format!(
            "symplectic preset supports genus 1 or 2, got {genus}"
        )));
    }
    let n = 2 * genus;
    let mut vectors: Vec<Vec<i64>> = Vec::new();
    for i in 0..n {
        let mut v = vec![0; n];
        v[i] = 1;
        vectors.push(v);
    }
    for i in 0..genus - 1 {
        let mut v = vec![0; n];
        v[i] = 1;
        v[i + 1] = -1;
        vectors.push(v);
    }
    let omega = symplectic_form_i64(genus);
    let mut out = Vec::new();
    for v in vectors {
        // T = I - v vᵀ Ω, T⁻¹ = I + v vᵀ Ω
        let mut w = vec![0i64; n];
        for j in 0..n {
            w[j] = (0..n).map(|k| v[k] * omega[k][j]).sum();
        }
        for sign in [-1i64, 1] {
            let mut flat = vec![0i64; n * n];
            for i in 0..n {
                for j in 0..n {
                    flat[i * n + j] = i64::from(i == j) + sign * v[i] * w[j];
                }
            }
            out.push(IntegerMatrix::from_flat(&flat)?);
        }
    }
    Ok(out)
}

fn symplectic_form_i64(genus: usize) -> Vec<Vec<i64>> {
    let n = 2 * genus;
    let mut m = vec![vec![0; n]; n];
    for i in 0..genus {
        m[i][genus + i] = 1;
        m[genus + i][i] = -1;
    }
    m
}

fn prime_divisors(mut k: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    let mut d = 2;
    while d * d <= k {
        while k % d == 0 {
            out.insert(d);
            k /= d;
        }
        d += 1;
    }
    if k > 1 {
        out.insert(k);
    }
    out
}

/// A sequence of generator indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    letters: Vec<usize>,
}

impl Word {
    pub fn new(letters: Vec<usize>) -> Self {
        Word { letters }
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn validate(&self, spec: &GroupSpec) -> Result<()> {
        let count = spec.generator_count();
        match self.letters.iter().find(|&&l| l >= count) {
            Some(&index) => Err(Error::BadLetter { index, count }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalMode {
    ExactInteger,
    ModuloPrimes(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Evaluated {
    Exact(IntegerMatrix),
    Residues(Vec<ModMatrix>),
}

/// Left-to-right product `s_1 ⋯ s_n`; the empty word is the identity.
/// Residue tracks are multiplied step by step and never see a big integer.
pub fn evaluate_word(spec: &GroupSpec, word: &Word, mode: &EvalMode) -> Result<Evaluated> {
    word.validate(spec)?;
    match mode {
        EvalMode::ExactInteger => {
            let mut acc = IntegerMatrix::identity(spec.rank());
            for &l in word.letters() {
                acc = acc.mul(&spec.generators()[l])?;
            }
            Ok(Evaluated::Exact(acc))
        }
        EvalMode::ModuloPrimes(primes) => {
            let mut out = Vec::with_capacity(primes.len());
            for &p in primes {
                let gens = spec.reduced_generators(p)?;
                let mut acc = ModMatrix::identity(spec.rank(), p);
                let mut scratch = acc.clone();
                for &l in word.letters() {
                    acc.mul_into(&gens[l], &mut scratch);
                    std::mem::swap(&mut acc, &mut scratch);
                }
                out.push(acc);
            }
            Ok(Evaluated::Residues(out))
        }
    }
}

//! Random walks `γ_{n+1} = γ_n ξ_{n+1}` with ξ uniform on the generating
//! list, tracked modulo a set of primes (and optionally exactly), plus
//! word-ball enumeration.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::arith::check_prime;
use crate::error::{Error, Result};
use crate::group::{GroupSpec, Word};
use crate::matrix::{IntegerMatrix, ModMatrix};
use crate::par;
use crate::stats::{wilson_interval, Z95};

pub const DEFAULT_WORD_BUDGET: u128 = 100_000_000;

/// SplitMix64 mix of a master seed and a tag, for independent sub-seeds.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct WalkConfig {
    pub spec: GroupSpec,
    pub length: usize,
    pub primes: Vec<u64>,
    pub track_exact: bool,
    pub samples: usize,
    pub seed: u64,
    /// 0 uses the ambient pool.
    pub workers: usize,
    pub retain_words: bool,
}

impl WalkConfig {
    pub fn new(spec: GroupSpec, length: usize, primes: Vec<u64>, samples: usize, seed: u64) -> Self {
        WalkConfig {
            spec,
            length,
            primes,
            track_exact: false,
            samples,
            seed,
            workers: 0,
            retain_words: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkSample {
    pub index: u64,
    pub word: Option<Word>,
    /// One residue per tracked prime, in the config's prime order.
    pub residues: Vec<ModMatrix>,
    pub exact: Option<IntegerMatrix>,
}

/// A validated walk configuration with generators reduced once per prime.
pub struct Walker {
    cfg: WalkConfig,
    reduced: Vec<Vec<ModMatrix>>,
}

impl Walker {
    pub fn new(cfg: WalkConfig) -> Result<Self> {
        if cfg.samples == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let mut sorted = cfg.primes.clone();
        sorted.sort_unstable();
        let before = sorted.len();
        sorted.dedup();
        if sorted.len() != before {
            return Err(Error::DuplicatePrimes(cfg.primes.clone()));
        }
        let reduced = cfg
            .primes
            .iter()
            .map(|&p| {
                check_prime(p)?;
                cfg.spec.reduced_generators(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Walker { cfg, reduced })
    }

    pub fn config(&self) -> &WalkConfig {
        &self.cfg
    }

    pub fn primes(&self) -> &[u64] {
        &self.cfg.primes
    }

    /// Position of `p` among the tracked residues.
    pub fn track_index(&self, p: u64) -> Result<usize> {
        self.cfg
            .primes
            .iter()
            .position(|&q| q == p)
            .ok_or(Error::UntrackedPrime(p))
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        rng
    }

    /// Sample `index`, a deterministic function of `(seed, index)`.
    pub fn sample(&self, index: u64) -> WalkSample {
        let spec = &self.cfg.spec;
        let rank = spec.rank();
        let ngen = spec.generator_count();
        let mut rng = self.rng(index);
        let mut residues: Vec<ModMatrix> = self
            .cfg
            .primes
            .iter()
            .map(|&p| ModMatrix::identity(rank, p))
            .collect();
        let mut scratch = residues.clone();
        let mut exact = self.cfg.track_exact.then(|| IntegerMatrix::identity(rank));
        let mut letters = Vec::with_capacity(if self.cfg.retain_words { self.cfg.length } else { 0 });
        for _ in 0..self.cfg.length {
            let s = rng.gen_range(0..ngen);
            for (k, r) in residues.iter_mut().enumerate() {
                r.mul_into(&self.reduced[k][s], &mut scratch[k]);
                std::mem::swap(r, &mut scratch[k]);
            }
            if let Some(g) = exact.as_mut() {
                *g = g.mul(&spec.generators()[s]).expect("generator ranks agree");
            }
            if self.cfg.retain_words {
                letters.push(s);
            }
        }
        WalkSample {
            index,
            word: self.cfg.retain_words.then(|| Word::new(letters)),
            residues,
            exact,
        }
    }

    /// `f(sample(i))` for every sample index, in index order.
    pub fn map_samples<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&WalkSample) -> T + Sync + Send,
    {
        par::with_workers(self.cfg.workers, || {
            par::map_range(self.cfg.samples, |i| f(&self.sample(i as u64)))
        })
    }

    pub fn count_samples<F>(&self, predicate: F) -> u64
    where
        F: Fn(&WalkSample) -> bool + Sync + Send,
    {
        par::with_workers(self.cfg.workers, || {
            par::map_chunks(self.cfg.samples, par::REDUCE_CHUNK, |r| {
                r.filter(|&i| predicate(&self.sample(i as u64))).count() as u64
            })
            .into_iter()
            .sum()
        })
    }
}

pub fn sample_walk_batch(cfg: &WalkConfig) -> Result<Vec<WalkSample>> {
    let walker = Walker::new(cfg.clone())?;
    Ok(walker.map_samples(|s| s.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
}

impl DensityEstimate {
    pub fn from_counts(hits: u64, trials: u64, seed: u64) -> Self {
        let (lower, upper) = wilson_interval(hits, trials, Z95);
        DensityEstimate {
            hits,
            trials,
            estimate: hits as f64 / trials as f64,
            lower,
            upper,
            seed,
        }
    }

    pub fn standard_error(&self) -> f64 {
        crate::stats::proportion_se(self.hits, self.trials)
    }
}

/// Monte Carlo estimate of `P(γ_n ∈ X)`.
pub fn estimate_density<F>(walker: &Walker, predicate: F) -> DensityEstimate
where
    F: Fn(&WalkSample) -> bool + Sync + Send,
{
    let hits = walker.count_samples(predicate);
    DensityEstimate::from_counts(hits, walker.config().samples as u64, walker.config().seed)
}

/// Writes `sample,p<prime>...` rows with element encodings.
pub fn write_samples_csv<W: Write>(out: &mut W, primes: &[u64], samples: &[WalkSample]) -> Result<()> {
    write!(out, "sample")?;
    for p in primes {
        write!(out, ",p{p}")?;
    }
    writeln!(out)?;
    for s in samples {
        write!(out, "{}", s.index)?;
        for r in &s.residues {
            write!(out, ",{}", r.encode())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallMode {
    /// Words of length exactly `T`, counted with multiplicity.
    WithMultiplicity,
    /// Distinct elements with `ℓ_S(g) <= T`.
    Deduplicated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BallTracking {
    Exact,
    Residues(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BallKey {
    /// Flattened exact entries.
    Exact(Vec<num_bigint::BigInt>),
    /// One encoding per tracked prime.
    Residues(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallEntry {
    pub key: BallKey,
    pub multiplicity: u64,
}

#[derive(Clone, Debug)]
pub struct BallTable {
    pub mode: BallMode,
    pub radius: usize,
    /// Sorted by key.
    pub entries: Vec<BallEntry>,
}

impl BallTable {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum BallState {
    Exact(IntegerMatrix),
    Residues(Vec<ModMatrix>),
}

impl BallState {
    fn key(&self) -> BallKey {
        match self {
            BallState::Exact(m) => BallKey::Exact(m.entries().to_vec()),
            BallState::Residues(rs) => BallKey::Residues(rs.iter().map(ModMatrix::encode).collect()),
        }
    }
}

pub fn ball_enumerate(
    spec: &GroupSpec,
    radius: usize,
    mode: BallMode,
    tracking: &BallTracking,
    budget: u128,
) -> Result<BallTable> {
    let ngen = spec.generator_count() as u128;
    let words = (0..radius).try_fold(1u128, |acc, _| acc.checked_mul(ngen)).unwrap_or(u128::MAX);
    if words > budget {
        return Err(Error::BudgetExceeded { words, budget });
    }
    if mode == BallMode::Deduplicated && *tracking != BallTracking::Exact {
        return Err(Error::Config("deduplicated balls need exact tracking".into()));
    }
    let rank = spec.rank();
    let step: Box<dyn Fn(&BallState, usize) -> Result<BallState>> = match tracking {
        BallTracking::Exact => Box::new(|st, s| match st {
            BallState::Exact(m) => Ok(BallState::Exact(m.mul(&spec.generators()[s])?)),
            BallState::Residues(_) => unreachable!(),
        }),
        BallTracking::Residues(primes) => {
            let reduced = primes
                .iter()
                .map(|&p| spec.reduced_generators(p))
                .collect::<Result<Vec<_>>>()?;
            Box::new(move |st, s| match st {
                BallState::Residues(rs) => Ok(BallState::Residues(
                    rs.iter()
                        .enumerate()
                        .map(|(k, r)| r.mul(&reduced[k][s]))
                        .collect::<Result<_>>()?,
                )),
                BallState::Exact(_) => unreachable!(),
            })
        }
    };
    let start = match tracking {
        BallTracking::Exact => BallState::Exact(IntegerMatrix::identity(rank)),
        BallTracking::Residues(primes) => {
            for &p in primes {
                check_prime(p)?;
            }
            BallState::Residues(primes.iter().map(|&p| ModMatrix::identity(rank, p)).collect())
        }
    };
    let mut entries: Vec<BallEntry> = match mode {
        BallMode::WithMultiplicity => {
            let mut layer: FxHashMap<BallState, u64> = FxHashMap::default();
            layer.insert(start, 1);
            for _ in 0..radius {
                let mut next: FxHashMap<BallState, u64> = FxHashMap::default();
                for (st, count) in &layer {
                    for s in 0..spec.generator_count() {
                        *next.entry(step(st, s)?).or_insert(0) += count;
                    }
                }
                layer = next;
            }
            layer
                .into_iter()
                .map(|(st, multiplicity)| BallEntry {
                    key: st.key(),
                    multiplicity,
                })
                .collect()
        }
        BallMode::Deduplicated => {
            let mut seen: FxHashMap<BallState, ()> = FxHashMap::default();
            let mut frontier = vec![start.clone()];
            seen.insert(start, ());
            for _ in 0..radius {
                let mut next = Vec::new();
                for st in &frontier {
                    for s in 0..spec.generator_count() {
                        let t = step(st, s)?;
                        if !seen.contains_key(&t) {
                            seen.insert(t.clone(), ());
                            next.push(t);
                        }
                    }
                }
                frontier = next;
            }
            seen.into_keys()
                .map(|st| BallEntry {
                    key: st.key(),
                    multiplicity: 1,
                })
                .collect()
        }
    };
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(BallTable {
        mode,
        radius,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{evaluate_word, EvalMode, Evaluated, Preset};
    use crate::quotient::{FiniteQuotient, DEFAULT_CAP};
    use crate::spectra::exact_walk_distribution;

    fn lub(id: bool) -> GroupSpec {
        GroupSpec::preset(Preset::Lubotzky(3), id).unwrap()
    }

    #[test]
    fn zero_length_walk_is_identity() {
        let mut cfg = WalkConfig::new(lub(true), 0, vec![5, 7], 20, 1);
        cfg.track_exact = true;
        for s in sample_walk_batch(&cfg).unwrap() {
            assert!(s.residues.iter().all(ModMatrix::is_identity));
            assert!(s.exact.unwrap().is_identity());
        }
    }

    #[test]
    fn residues_agree_with_exact_and_word() {
        let mut cfg = WalkConfig::new(lub(true), 25, vec![5, 7, 101], 50, 9);
        cfg.track_exact = true;
        cfg.retain_words = true;
        for s in sample_walk_batch(&cfg).unwrap() {
            let exact = s.exact.as_ref().unwrap();
            for (r, &p) in s.residues.iter().zip(&cfg.primes) {
                assert_eq!(&exact.reduce_mod(p).unwrap(), r);
            }
            let word = s.word.as_ref().unwrap();
            assert_eq!(word.len(), 25);
            let Evaluated::Exact(e) = evaluate_word(&cfg.spec, word, &EvalMode::ExactInteger).unwrap() else {
                panic!()
            };
            assert_eq!(&e, exact);
        }
    }

    #[test]
    fn streams_ignore_worker_count() {
        let mut cfg = WalkConfig::new(lub(true), 30, vec![5, 11], 3000, 77);
        cfg.workers = 1;
        let one = sample_walk_batch(&cfg).unwrap();
        cfg.workers = 3;
        let three = sample_walk_batch(&cfg).unwrap();
        assert_eq!(one, three);
        cfg.seed = 78;
        assert_ne!(one, sample_walk_batch(&cfg).unwrap());
        let w = Walker::new(cfg).unwrap();
        assert_eq!(w.sample(17), w.sample(17));
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            Walker::new(WalkConfig::new(lub(true), 3, vec![5, 5], 1, 0)),
            Err(Error::DuplicatePrimes(_))
        ));
        assert!(Walker::new(WalkConfig::new(lub(true), 3, vec![6], 1, 0)).is_err());
        assert!(Walker::new(WalkConfig::new(lub(true), 3, vec![5], 0, 0)).is_err());
        let w = Walker::new(WalkConfig::new(lub(true), 3, vec![5], 1, 0)).unwrap();
        assert!(matches!(w.track_index(7), Err(Error::UntrackedPrime(7))));
    }

    #[test]
    fn always_true_density() {
        let w = Walker::new(WalkConfig::new(lub(true), 5, vec![5], 1000, 3)).unwrap();
        let d = estimate_density(&w, |_| true);
        assert_eq!(d.estimate, 1.0);
        assert_eq!(d.upper, 1.0);
        assert!(d.lower < 1.0 && d.lower > 0.99);
    }

    #[test]
    fn density_matches_exact_distribution() {
        let spec = lub(true);
        let q = FiniteQuotient::enumerate(&spec, &[5], DEFAULT_CAP).unwrap();
        let n = 12;
        let mu = exact_walk_distribution(&q, n).unwrap();
        let w = Walker::new(WalkConfig::new(spec, n, vec![5], 200_000, 11)).unwrap();
        let k = w.track_index(5).unwrap();
        let d = estimate_density(&w, |s| s.residues[k].is_identity());
        let exact = mu.values()[q.identity()];
        assert!((d.estimate - exact).abs() <= 4.0 * (exact * (1.0 - exact) / 200_000.0).sqrt());
    }

    #[test]
    fn ball_examples() {
        let spec = lub(false);
        let t0 = ball_enumerate(&spec, 0, BallMode::Deduplicated, &BallTracking::Exact, DEFAULT_WORD_BUDGET).unwrap();
        assert_eq!(t0.entries.len(), 1);
        assert_eq!(t0.total(), 1);
        let t1 = ball_enumerate(&spec, 1, BallMode::Deduplicated, &BallTracking::Exact, DEFAULT_WORD_BUDGET).unwrap();
        assert_eq!(t1.entries.len(), 5);
        let t2 = ball_enumerate(&spec, 2, BallMode::WithMultiplicity, &BallTracking::Exact, DEFAULT_WORD_BUDGET).unwrap();
        assert_eq!(t2.total(), 16);
        // s·s⁻¹ = 1 four times; the other 12 words give distinct matrices
        assert_eq!(t2.entries.len(), 13);
        assert!(matches!(
            ball_enumerate(&spec, 20, BallMode::WithMultiplicity, &BallTracking::Exact, DEFAULT_WORD_BUDGET),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(ball_enumerate(&spec, 2, BallMode::Deduplicated, &BallTracking::Residues(vec![5]), 100).is_err());
    }

    #[test]
    fn ball_counts_match_walk_law() {
        let spec = lub(true);
        let q = FiniteQuotient::enumerate(&spec, &[5], DEFAULT_CAP).unwrap();
        for n in [1usize, 4, 8] {
            let table = ball_enumerate(&spec, n, BallMode::WithMultiplicity, &BallTracking::Residues(vec![5]), DEFAULT_WORD_BUDGET).unwrap();
            let mu = exact_walk_distribution(&q, n).unwrap();
            let words = 5f64.powi(n as i32);
            for e in &table.entries {
                let BallKey::Residues(codes) = &e.key else { panic!() };
                let i = q.index_of(codes[0]).unwrap();
                assert!((e.multiplicity as f64 / words - mu.values()[i]).abs() < 1e-12);
            }
            let support = mu.values().iter().filter(|&&x| x > 0.0).count();
            assert_eq!(support, table.entries.len());
        }
    }

    #[test]
    fn csv_dump() {
        let cfg = WalkConfig::new(lub(true), 3, vec![5, 7], 2, 0);
        let samples = sample_walk_batch(&cfg).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &cfg.primes, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sample,p5,p7\n0,"));
        assert_eq!(text.lines().count(), 3);
    }
}

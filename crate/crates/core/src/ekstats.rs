//! Erdős–Kac statistics along the walk: truncated prime-divisor counts of
//! `f(γ_n)`, their comparison with the independent Bernoulli model, and the
//! `A₂`/`A₃` diagnostics of the moment argument.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arith::{is_probable_prime_big, primes_up_to};
use crate::error::{Error, Result};
use crate::group::GroupSpec;
use crate::par;
use crate::poly::{ModPoly, PolynomialFunction};
use crate::quotient::DEFAULT_CAP;
use crate::sieve::{density_count, FamilyKind};
use crate::stats::{ks_distance, mean, raw_moment, variance};
use crate::walker::{WalkConfig, WalkSample, Walker};

/// Moments of the standard normal law, `E[Z^k]` for `k = 1..4`.
pub const NORMAL_MOMENTS: [f64; 4] = [0.0, 1.0, 0.0, 3.0];

fn normal_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        (1..k).step_by(2).map(f64::from).product()
    }
}

/// `#{p <= Q non-exceptional : f(π_p(γ)) ≡ 0 mod p}` from residues alone.
pub struct TruncatedOmega {
    primes: Vec<u64>,
    slots: Vec<(usize, ModPoly)>,
}

impl TruncatedOmega {
    pub fn new(spec: &GroupSpec, f: &PolynomialFunction, q: u64, tracked: &[u64]) -> Result<Self> {
        if f.rank() != spec.rank() {
            return Err(Error::DimensionMismatch(f.rank(), spec.rank()));
        }
        let primes: Vec<u64> = primes_up_to(q).into_iter().filter(|&p| !spec.is_exceptional(p)).collect();
        let slots = primes
            .iter()
            .map(|&p| {
                let k = tracked.iter().position(|&t| t == p).ok_or(Error::UntrackedPrime(p))?;
                Ok((k, f.compile(p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TruncatedOmega { primes, slots })
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn count(&self, sample: &WalkSample) -> u32 {
        self.slots
            .iter()
            .filter(|(k, poly)| poly.eval(sample.residues[*k].entries()) == 0)
            .count() as u32
    }
}

pub fn truncated_omega(
    sample: &WalkSample,
    spec: &GroupSpec,
    f: &PolynomialFunction,
    q: u64,
    tracked: &[u64],
) -> Result<u32> {
    Ok(TruncatedOmega::new(spec, f, q, tracked)?.count(sample))
}

/// `m` draws of `Σ_p Y_p` with independent `Y_p ~ Bernoulli(δ_p)`.
pub fn bernoulli_oracle_batch(deltas: &[f64], samples: usize, seed: u64) -> Result<Vec<u32>> {
    if let Some(d) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::Config(format!("density {d} outside [0, 1]")));
    }
    Ok(par::map_range(samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        deltas.iter().filter(|&&d| rng.gen::<f64>() < d).count() as u32
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub order: u32,
    pub walk: f64,
    pub walk_se: f64,
    pub oracle: f64,
    pub oracle_se: f64,
    pub delta: f64,
    pub joint_se: f64,
    pub normal_target: f64,
}

/// A difference of two independent estimates with its joint standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub walk: f64,
    pub oracle: f64,
    pub delta: f64,
    pub joint_se: f64,
}

impl Comparison {
    fn new(walk: f64, walk_se: f64, oracle: f64, oracle_se: f64) -> Self {
        Comparison {
            walk,
            oracle,
            delta: walk - oracle,
            joint_se: (walk_se * walk_se + oracle_se * oracle_se).sqrt(),
        }
    }

    /// `|delta| <= z · joint_se`.
    pub fn within(&self, z: f64) -> bool {
        self.delta.abs() <= z * self.joint_se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub walk_count: usize,
    pub oracle_count: usize,
    pub rows: Vec<MomentRow>,
    pub mean: Comparison,
    pub variance: Comparison,
    pub ks_distance: f64,
}

/// Standard error of the unbiased sample variance, `sqrt((μ₄ - σ⁴)/m)`.
fn variance_se(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2).max(0.0) / n).sqrt()
}

pub fn distribution_compare(walk: &[f64], oracle: &[f64], orders: &[u32]) -> Result<MomentReport> {
    if walk.is_empty() || oracle.is_empty() {
        return Err(Error::Config("moment comparison needs two non-empty streams".into()));
    }
    let rows = orders
        .iter()
        .map(|&k| {
            let (w, wse) = raw_moment(walk, k);
            let (o, ose) = raw_moment(oracle, k);
            let c = Comparison::new(w, wse, o, ose);
            MomentRow {
                order: k,
                walk: w,
                walk_se: wse,
                oracle: o,
                oracle_se: ose,
                delta: c.delta,
                joint_se: c.joint_se,
                normal_target: normal_moment(k),
            }
        })
        .collect();
    let se_mean = |x: &[f64]| (variance(x) / x.len() as f64).sqrt();
    Ok(MomentReport {
        walk_count: walk.len(),
        oracle_count: oracle.len(),
        rows,
        mean: Comparison::new(mean(walk), se_mean(walk), mean(oracle), se_mean(oracle)),
        variance: Comparison::new(variance(walk), variance_se(walk), variance(oracle), variance_se(oracle)),
        ks_distance: ks_distance(walk, oracle),
    })
}

#[derive(Clone, Debug)]
pub struct EkConfig {
    pub spec: GroupSpec,
    pub polynomial: PolynomialFunction,
    pub n: usize,
    /// Truncation point `Q`; `A = Q^{1/n}`.
    pub q: u64,
    pub kappa: f64,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub track_exact: bool,
    pub moment_orders: Vec<u32>,
    pub cap: usize,
}

impl EkConfig {
    pub fn new(spec: GroupSpec, polynomial: PolynomialFunction, n: usize, q: u64, kappa: f64, samples: usize, seed: u64) -> Self {
        EkConfig {
            spec,
            polynomial,
            n,
            q,
            kappa,
            samples,
            seed,
            workers: 0,
            track_exact: true,
            moment_orders: vec![1, 2, 3, 4],
            cap: DEFAULT_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("Erdős–Kac statistics need n >= 2".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.q < 2 {
            return Err(Error::Config("truncation Q must be at least 2".into()));
        }
        Ok(())
    }

    /// Truncation base `A = Q^{1/n}`.
    pub fn growth_base(&self) -> f64 {
        (self.q as f64).powf(1.0 / self.n as f64)
    }
}

/// Per-sample record for exact-tracked walks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactDiagnostics {
    pub truncated: u32,
    pub zero: bool,
    /// `⌊log|m| / log Q⌋` for the part `m` of `f(γ_n)` free of primes `<= Q`.
    pub a2_upper: u32,
    /// Exact count of prime factors `> Q` when `m` is 1 or a (probable) prime.
    pub a2_exact: Option<u32>,
}

/// Trial division of `|v|` by every prime `<= Q`; returns the cofactor.
fn strip_small(v: &BigInt, q: u64) -> BigUint {
    let mut m = v.abs().to_biguint().expect("non-negative");
    for p in primes_up_to(q) {
        let bp = BigUint::from(p);
        while !m.is_zero() && m.is_multiple_of(&bp) {
            m /= &bp;
        }
    }
    m
}

pub fn exact_diagnostics(value: &BigInt, truncated: u32, q: u64) -> ExactDiagnostics {
    if value.is_zero() {
        return ExactDiagnostics {
            truncated: 0,
            zero: true,
            a2_upper: 0,
            a2_exact: Some(0),
        };
    }
    let m = strip_small(value, q);
    let big_q = BigUint::from(q);
    let mut a2_upper = 0;
    let mut power = big_q.clone();
    while power <= m {
        a2_upper += 1;
        power *= &big_q;
    }
    let a2_exact = if m.is_one() {
        Some(0)
    } else if is_probable_prime_big(&m) {
        Some(1)
    } else {
        None
    };
    ExactDiagnostics {
        truncated,
        zero: false,
        a2_upper,
        a2_exact,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct A3Diagnostic {
    /// `Σ_{p <= Q} δ_p - κ log n`.
    pub a3: f64,
    /// `max_X |Σ_{p <= X} δ_p - κ log log X| + κ |log log A|`.
    pub bound: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EkReport {
    pub n: usize,
    pub q: u64,
    pub growth_base: f64,
    pub kappa: f64,
    pub primes: Vec<u64>,
    pub deltas: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Mean and variance of the truncated count under the walk and under
    /// the independent model.
    pub counts: MomentReport,
    /// Moments of `(ω - κ log n)/sqrt(κ log n)` next to the normal targets.
    pub statistics: MomentReport,
    pub zero_values: u64,
    pub exact_tracked: bool,
    /// `log C / log A` with `|f(γ_n)| <= C^n`.
    pub a2_limit: f64,
    pub a2_max_upper: Option<u32>,
    pub a2_within: bool,
    /// Samples whose `A₂` is known exactly, and how many of those have `A₂ = 0, 1`.
    pub a2_exact_samples: u64,
    pub a3: A3Diagnostic,
}

/// The constant `C` with `|f(γ_n)| <= C^n`: `‖f‖₁^{1/n} · c^{deg f}` for
/// the generator growth constant `c`.
pub fn value_growth_constant(spec: &GroupSpec, f: &PolynomialFunction, n: usize) -> f64 {
    (f.coefficient_norm() as f64).powf(1.0 / n as f64) * spec.growth_constant().powi(f.degree() as i32)
}

pub fn ek_experiment(cfg: &EkConfig) -> Result<EkReport> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let primes: Vec<u64> = primes_up_to(cfg.q).into_iter().filter(|&p| !spec.is_exceptional(p)).collect();
    let kind = FamilyKind::PolyZero {
        polynomial: cfg.polynomial.clone(),
    };
    let deltas = primes
        .iter()
        .map(|&p| density_count(&kind, spec, p, cfg.cap).map(|c| c.density()))
        .collect::<Result<Vec<f64>>>()?;

    let mut wcfg = WalkConfig::new(spec.clone(), cfg.n, primes.clone(), cfg.samples, cfg.seed);
    wcfg.track_exact = cfg.track_exact;
    wcfg.workers = cfg.workers;
    let walker = Walker::new(wcfg)?;
    let omega = TruncatedOmega::new(spec, &cfg.polynomial, cfg.q, &primes)?;
    let f = &cfg.polynomial;
    let q = cfg.q;
    let records: Vec<(u32, Option<ExactDiagnostics>, bool)> = walker.map_samples(|s| {
        let t = omega.count(s);
        match &s.exact {
            Some(g) => {
                let value = f.evaluate(g).expect("rank checked");
                let d = exact_diagnostics(&value, t, q);
                (d.truncated, Some(d), false)
            }
            None => (t, None, t as usize == primes.len() && !primes.is_empty()),
        }
    });
    if let Some(i) = records.iter().position(|r| r.2) {
        return Err(Error::ZeroAmbiguity { sample: i as u64 });
    }

    let log_n = (cfg.n as f64).ln();
    let centre = cfg.kappa * log_n;
    let scale = centre.sqrt();
    let walk_counts: Vec<f64> = records.iter().map(|r| f64::from(r.0)).collect();
    let oracle_counts: Vec<f64> = bernoulli_oracle_batch(&deltas, cfg.samples, crate::walker::derive_seed(cfg.seed, 0xbe11))?
        .into_iter()
        .map(f64::from)
        .collect();
    let counts = distribution_compare(&walk_counts, &oracle_counts, &cfg.moment_orders)?;
    let normalize = |x: &Vec<f64>| x.iter().map(|c| (c - centre) / scale).collect::<Vec<f64>>();
    let statistics = distribution_compare(&normalize(&walk_counts), &normalize(&oracle_counts), &cfg.moment_orders)?;

    let a = cfg.growth_base();
    let a2_limit = value_growth_constant(spec, f, cfg.n).ln() / a.ln();
    let exact: Vec<&ExactDiagnostics> = records.iter().filter_map(|r| r.1.as_ref()).collect();
    let a2_max_upper = exact.iter().map(|d| d.a2_upper).max();
    let a2_within = exact.iter().all(|d| f64::from(d.a2_upper) <= a2_limit + 1e-9);

    // A₃ and its bound from the δ table
    let sum_delta: f64 = deltas.iter().sum();
    let mut partial = 0.0;
    let mut worst: f64 = 0.0;
    for (&p, &d) in primes.iter().zip(&deltas) {
        partial += d;
        worst = worst.max((partial - cfg.kappa * (p as f64).ln().ln()).abs());
    }
    let a3 = sum_delta - cfg.kappa * log_n;
    let bound = worst + cfg.kappa * a.ln().ln().abs();

    Ok(EkReport {
        n: cfg.n,
        q: cfg.q,
        growth_base: a,
        kappa: cfg.kappa,
        primes,
        deltas,
        samples: cfg.samples,
        seed: cfg.seed,
        counts,
        statistics,
        zero_values: exact.iter().filter(|d| d.zero).count() as u64,
        exact_tracked: cfg.track_exact,
        a2_limit,
        a2_max_upper,
        a2_within,
        a2_exact_samples: exact.iter().filter(|d| d.a2_exact.is_some()).count() as u64,
        a3: A3Diagnostic {
            a3,
            bound,
            within: a3.abs() <= bound + 1e-12,
        },
    })
}

/// Tracked primes for an Erdős–Kac run: all non-exceptional `p <= Q`.
pub fn ek_primes(spec: &GroupSpec, q: u64) -> BTreeSet<u64> {
    primes_up_to(q).into_iter().filter(|&p| !spec.is_exceptional(p)).collect()
}

//! Bounded, small and large sieve experiments along the walk.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::arith::primes_in;
use crate::error::{Error, Result};
use crate::group::GroupSpec;
use crate::par;
use crate::quotient::{classical_group_order, independence_check, ClassicalGroup, FiniteQuotient, IndependenceReport};
use crate::spectra::{
    for_each_walk_distribution, spectral_radius, PowerIteration, ProductAction, SpectrumReport, AUDIT_SLACK,
};
use crate::stats::{linear_fit, proportion_se, LinearFit};
use crate::walker::{derive_seed, estimate_density, WalkConfig, Walker};

use super::family::{build_omega, DensityCount, FamilyKind, SieveFamily};
use super::sifted::{SiftedSetSpec, Sifter};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundedRow {
    pub n: usize,
    pub sifted_mass: f64,
    pub deviation: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundedSieveReport {
    pub experiment: &'static str,
    pub family: String,
    pub primes: Vec<u64>,
    pub quotient_order: usize,
    pub densities: Vec<DensityCount>,
    /// `Π (1 - δ_p)`.
    pub limit: f64,
    /// Haar measure of the sifted set in `Γ_I`; equals `limit` when the
    /// reductions are independent.
    pub haar_mass: f64,
    pub spectrum: SpectrumReport,
    pub rows: Vec<BoundedRow>,
    pub all_pass: bool,
}

/// Exact `μ_n(S)` for `n <= n_max` on `Γ_I`, checked against
/// `|μ_n(S) - Π(1 - δ_p)| <= |Γ_I| ρ_I^n`.
pub fn bounded_sieve_experiment(
    spec: &GroupSpec,
    kind: &FamilyKind,
    primes: &[u64],
    n_max: usize,
    power: &PowerIteration,
    cap: usize,
) -> Result<BoundedSieveReport> {
    kind.check(spec)?;
    let q = FiniteQuotient::enumerate(spec, primes, cap)?;
    let family = SieveFamily::build(kind.clone(), spec, q.primes(), cap)?;
    let omegas: Vec<_> = q.primes().iter().map(|&p| family.omega(p).expect("built")).collect();
    let sifted: Vec<bool> = par::map_range(q.order(), |i| {
        omegas
            .iter()
            .enumerate()
            .all(|(k, o)| !o.contains_code(q.component_code(i, k)))
    });
    let limit: f64 = omegas.iter().map(|o| 1.0 - o.density()).product();
    let haar_mass = sifted.iter().filter(|&&b| b).count() as f64 / q.order() as f64;
    let spectrum = spectral_radius(&q, power)?;
    let rho = spectrum.spectral_radius;
    let order = q.order() as f64;
    let mut rows = Vec::with_capacity(n_max + 1);
    for_each_walk_distribution(&q, n_max, |n, mu| {
        let mass = par::sum_by(mu.len(), |i| if sifted[i] { mu[i] } else { 0.0 });
        let deviation = (mass - limit).abs();
        let bound = order * rho.powi(n as i32) * (1.0 + 10.0 * power.tol);
        rows.push(BoundedRow {
            n,
            sifted_mass: mass,
            deviation,
            bound,
            pass: deviation <= bound + AUDIT_SLACK,
        });
        Ok(())
    })?;
    Ok(BoundedSieveReport {
        experiment: "bounded",
        family: kind.label(),
        primes: q.primes().to_vec(),
        quotient_order: q.order(),
        densities: family.densities(),
        limit,
        haar_mass,
        spectrum,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// Walk sampling parameters shared by the Monte Carlo experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SieveSampling {
    pub n_grid: Vec<usize>,
    /// `Q = A^n`.
    pub growth_base: f64,
    /// Sieve primes lie in `(lower, Q]`.
    pub lower: u64,
    pub excluded: BTreeSet<u64>,
    pub samples: usize,
    pub seed: u64,
    /// Not part of the output: results do not depend on it.
    #[serde(skip)]
    pub workers: usize,
    pub cap: usize,
}

impl SieveSampling {
    fn q(&self, n: usize) -> f64 {
        self.growth_base.powi(n as i32)
    }

    fn q_max(&self) -> f64 {
        self.n_grid.iter().map(|&n| self.q(n)).fold(0.0, f64::max)
    }

    fn walker(&self, spec: &GroupSpec, n: usize, primes: Vec<u64>) -> Result<Walker> {
        let mut cfg = WalkConfig::new(spec.clone(), n, primes, self.samples, derive_seed(self.seed, n as u64));
        cfg.workers = self.workers;
        Walker::new(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n-grid is empty".into()));
        }
        if !(self.growth_base > 1.0) || !self.growth_base.is_finite() {
            return Err(Error::Config(format!("growth base A must exceed 1, got {}", self.growth_base)));
        }
        Ok(())
    }
}

fn primes_below(primes: &[u64], q: f64) -> Vec<u64> {
    primes.iter().copied().filter(|&p| p as f64 <= q).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallSieveRow {
    pub n: usize,
    pub q: f64,
    pub primes: usize,
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// `Π_{p <= Q} (1 - δ_p)`.
    pub heuristic_product: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallSieveReport {
    pub experiment: &'static str,
    pub family: String,
    pub sampling: SieveSampling,
    pub densities: Vec<DensityCount>,
    pub kappa: f64,
    /// Slope of `log P(γ_n ∈ S)` against `log n` over rows with hits.
    pub fit: Option<LinearFit>,
    pub fitted_exponent: Option<f64>,
    pub expected_exponent: f64,
    pub rows: Vec<SmallSieveRow>,
}

pub fn small_sieve_experiment(
    spec: &GroupSpec,
    kind: &FamilyKind,
    sampling: &SieveSampling,
    kappa: f64,
) -> Result<SmallSieveReport> {
    sampling.validate()?;
    kind.check(spec)?;
    let sifted = SiftedSetSpec::new(
        kind.clone(),
        spec,
        sampling.lower,
        sampling.q_max().floor() as u64,
        &sampling.excluded,
        sampling.cap,
    )
    .map_err(|e| match e {
        Error::CapExceeded { .. } => Error::Infeasible(format!("Q = {:.1} needs quotients beyond the cap: {e}", sampling.q_max())),
        other => other,
    })?;
    let mut rows = Vec::new();
    for &n in &sampling.n_grid {
        let q = sampling.q(n);
        let active = primes_below(sifted.primes(), q);
        let walker = sampling.walker(spec, n, active.clone())?;
        let sifter = Sifter::new(sifted.family(), &active, &active)?;
        let est = estimate_density(&walker, |s| sifter.passes(s));
        let heuristic_product = active
            .iter()
            .map(|&p| 1.0 - sifted.family().omega(p).expect("built").density())
            .product();
        rows.push(SmallSieveRow {
            n,
            q,
            primes: active.len(),
            hits: est.hits,
            trials: est.trials,
            estimate: est.estimate,
            lower: est.lower,
            upper: est.upper,
            heuristic_product,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.hits > 0)
        .map(|r| ((r.n as f64).ln(), r.estimate.ln()))
        .unzip();
    let fit = linear_fit(&xs, &ys);
    Ok(SmallSieveReport {
        experiment: "small",
        family: kind.label(),
        sampling: sampling.clone(),
        densities: sifted.family().densities(),
        kappa,
        fitted_exponent: fit.map(|f| f.slope),
        fit,
        expected_exponent: -kappa,
        rows,
    })
}

/// The largest `A` such that every prime and every pair of primes up to
/// `A^{n_max}` has a quotient within `cap`, judged by the order of the
/// ambient finite group.
pub fn default_growth_base(spec: &GroupSpec, lower: u64, excluded: &BTreeSet<u64>, n_max: usize, cap: usize) -> Result<f64> {
    let group = ClassicalGroup::of(spec);
    let order = |p: u64| -> f64 {
        let o = classical_group_order(group, p);
        o.to_string().parse::<f64>().unwrap_or(f64::INFINITY)
    };
    let mut largest: f64 = 0.0;
    let mut p = lower + 1;
    let mut found_any = false;
    loop {
        if p > 1 << 20 {
            return Err(Error::Infeasible("no prime bound found below 2^20".into()));
        }
        if !crate::arith::is_prime(p) || excluded.contains(&p) || spec.is_exceptional(p) {
            p += 1;
            continue;
        }
        let o = order(p);
        if o > cap as f64 || o * largest > cap as f64 {
            if !found_any {
                return Err(Error::Infeasible(format!("the first sieve prime {p} already exceeds the cap")));
            }
            let q_max = p as f64 - 0.5;
            return Ok(q_max.powf(1.0 / n_max.max(1) as f64));
        }
        largest = largest.max(o);
        found_any = true;
        p += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LargeSieveRow {
    pub n: usize,
    pub q: f64,
    pub primes: usize,
    pub hits: u64,
    pub trials: u64,
    /// Empirical `P(X = 0)`.
    pub estimate: f64,
    pub std_error: f64,
    pub sum_delta: f64,
    /// Exact `E[X]` from the laws of `π_p(γ_n)`.
    pub mean_exact: f64,
    /// Exact `Var(X)` from the pair laws.
    pub variance_exact: f64,
    /// `max_{p≠q} |E[(X_p - δ_p)(X_q - δ_q)]|`.
    pub max_abs_w: f64,
    /// `Var(X)/E[X]²`; absent when `E[X] = 0`.
    pub bound_exact: Option<f64>,
    /// `(Q + Q² max|W|) / (Σ δ_p)²`; absent when there are no primes.
    pub bound_proof: Option<f64>,
    /// Exact `P(X = 0)` when at most two primes are active.
    pub exact_sifted: Option<f64>,
    /// `(2 + 2B) log Q + n log ρ̄`; negative when the proof's constraint holds.
    pub proof_constraint_log: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LargeSieveReport {
    pub experiment: &'static str,
    pub family: String,
    pub sampling: SieveSampling,
    pub delta_floor: f64,
    pub densities: Vec<DensityCount>,
    pub independence: Vec<IndependenceReport>,
    pub spectral_radii: Vec<(u64, f64)>,
    /// Largest measured single-prime `ρ_p`; an empirical stand-in for the
    /// uniform constant.
    pub empirical_rho_bar: f64,
    /// Largest `log|Γ_p| / log p`.
    pub order_exponent: f64,
    /// Slope of `log P(X = 0)` against `n` over rows with hits.
    pub fit: Option<LinearFit>,
    pub rows: Vec<LargeSieveRow>,
    pub all_pass: bool,
}

/// Monte Carlo `P(X = 0)` next to the Chebyshev bound assembled from exact
/// single and pair laws.
pub fn large_sieve_experiment(
    spec: &GroupSpec,
    kind: &FamilyKind,
    sampling: &SieveSampling,
    delta_floor: f64,
    power: &PowerIteration,
) -> Result<LargeSieveReport> {
    sampling.validate()?;
    kind.check(spec)?;
    let n_max = *sampling.n_grid.iter().max().expect("validated");
    let q_max = sampling.q_max();
    let primes: Vec<u64> = primes_in(sampling.lower + 1, q_max.floor() as u64)
        .into_iter()
        .filter(|p| !sampling.excluded.contains(p))
        .collect();
    if let Some(p) = primes.iter().find(|&&p| spec.is_exceptional(p)) {
        return Err(Error::Config(format!("prime {p} is exceptional for {} and lies in the sieve window", spec.name())));
    }
    let infeasible = |e: Error| match e {
        Error::CapExceeded { .. } => Error::Infeasible(format!("Q = {q_max:.1}: {e}")),
        other => other,
    };
    let quotients = primes
        .iter()
        .map(|&p| FiniteQuotient::enumerate(spec, &[p], sampling.cap))
        .collect::<Result<Vec<_>>>()
        .map_err(infeasible)?;
    let omegas = quotients.iter().map(|q| build_omega(kind, q)).collect::<Result<Vec<_>>>()?;
    for o in &omegas {
        if o.density() < delta_floor {
            return Err(Error::NotLarge {
                prime: o.prime,
                density: o.density(),
                floor: delta_floor,
            });
        }
    }
    let mut independence = Vec::new();
    for i in 0..primes.len() {
        for j in i + 1..primes.len() {
            let rep = independence_check(spec, primes[i], primes[j], sampling.cap).map_err(infeasible)?;
            if !rep.independent {
                return Err(Error::Infeasible(format!(
                    "reductions mod {} and {} are not independent",
                    primes[i], primes[j]
                )));
            }
            independence.push(rep);
        }
    }
    let mut spectral_radii = Vec::new();
    for q in &quotients {
        spectral_radii.push((q.primes()[0], spectral_radius(q, power)?.spectral_radius));
    }
    let rho_bar = spectral_radii.iter().map(|r| r.1).fold(0.0, f64::max);
    let order_exponent = quotients
        .iter()
        .map(|q| (q.order() as f64).ln() / (q.primes()[0] as f64).ln())
        .fold(0.0, f64::max);

    let indicators: Vec<Vec<bool>> = omegas.iter().zip(&quotients).map(|(o, q)| o.indicator(q)).collect();
    // single[k][n] = P(π_p(γ_n) ∈ Ω_p)
    let mut single = vec![vec![0.0; n_max + 1]; primes.len()];
    for (k, q) in quotients.iter().enumerate() {
        let ind = &indicators[k];
        for_each_walk_distribution(q, n_max, |n, mu| {
            single[k][n] = par::sum_by(mu.len(), |i| if ind[i] { mu[i] } else { 0.0 });
            Ok(())
        })?;
    }
    // pair[i][j][n] = P(both in Ω), i < j
    let mut pair = vec![vec![Vec::new(); primes.len()]; primes.len()];
    for i in 0..primes.len() {
        for j in i + 1..primes.len() {
            let prod = ProductAction::new(&quotients[i], &quotients[j])?;
            let (a, b) = (&indicators[i], &indicators[j]);
            let nb = quotients[j].order();
            let mut law = vec![0.0; n_max + 1];
            for_each_walk_distribution(&prod, n_max, |n, mu| {
                law[n] = par::sum_by(mu.len(), |x| if a[x / nb] && b[x % nb] { mu[x] } else { 0.0 });
                Ok(())
            })?;
            pair[i][j] = law;
        }
    }

    let deltas: Vec<f64> = omegas.iter().map(|o| o.density()).collect();
    let mut rows = Vec::new();
    for &n in &sampling.n_grid {
        let q = sampling.q(n);
        let active: Vec<usize> = (0..primes.len()).filter(|&k| primes[k] as f64 <= q).collect();
        let sum_delta: f64 = active.iter().map(|&k| deltas[k]).sum();
        let mean: f64 = active.iter().map(|&k| single[k][n]).sum();
        let mut variance: f64 = active.iter().map(|&k| single[k][n] * (1.0 - single[k][n])).sum();
        let mut max_abs_w: f64 = 0.0;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let both = pair[i][j][n];
                variance += 2.0 * (both - single[i][n] * single[j][n]);
                let w = both - deltas[j] * single[i][n] - deltas[i] * single[j][n] + deltas[i] * deltas[j];
                max_abs_w = max_abs_w.max(w.abs());
            }
        }
        let exact_sifted = match active.as_slice() {
            [] => Some(1.0),
            [k] => Some(1.0 - single[*k][n]),
            [i, j] => Some(1.0 - single[*i][n] - single[*j][n] + pair[*i][*j][n]),
            _ => None,
        };
        let active_primes: Vec<u64> = active.iter().map(|&k| primes[k]).collect();
        let walker = sampling.walker(spec, n, active_primes.clone())?;
        let hits = walker.count_samples(|s| {
            active
                .iter()
                .enumerate()
                .all(|(t, &k)| !omegas[k].contains(&s.residues[t]))
        });
        let trials = sampling.samples as u64;
        let estimate = hits as f64 / trials as f64;
        let std_error = proportion_se(hits, trials);
        let bound_exact = (mean > 0.0).then(|| variance / (mean * mean));
        let bound_proof = (sum_delta > 0.0).then(|| (q + q * q * max_abs_w) / (sum_delta * sum_delta));
        let pass = bound_exact.map_or(true, |b| estimate <= b + 3.0 * std_error);
        rows.push(LargeSieveRow {
            n,
            q,
            primes: active.len(),
            hits,
            trials,
            estimate,
            std_error,
            sum_delta,
            mean_exact: mean,
            variance_exact: variance,
            max_abs_w,
            bound_exact,
            bound_proof,
            exact_sifted,
            proof_constraint_log: (2.0 + 2.0 * order_exponent) * q.ln() + n as f64 * rho_bar.ln(),
            pass,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.hits > 0)
        .map(|r| (r.n as f64, r.estimate.ln()))
        .unzip();
    Ok(LargeSieveReport {
        experiment: "large",
        family: kind.label(),
        sampling: sampling.clone(),
        delta_floor,
        densities: omegas
            .iter()
            .map(|o| DensityCount {
                prime: o.prime,
                omega: o.size(),
                order: o.group_order,
                method: o.method,
            })
            .collect(),
        independence,
        spectral_radii,
        empirical_rho_bar: rho_bar,
        order_exponent,
        fit: linear_fit(&xs, &ys),
        all_pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Preset;
    use crate::poly::PolynomialFunction;
    use crate::quotient::DEFAULT_CAP;
    use std::collections::BTreeMap;

    fn lub() -> GroupSpec {
        GroupSpec::preset(Preset::Lubotzky(3), true).unwrap()
    }

    fn diag() -> FamilyKind {
        FamilyKind::PolyZero {
            polynomial: PolynomialFunction::sum_of_diagonal_squares(),
        }
    }

    fn sampling(n_grid: Vec<usize>, a: f64, samples: usize) -> SieveSampling {
        SieveSampling {
            n_grid,
            growth_base: a,
            lower: 3,
            excluded: BTreeSet::new(),
            samples,
            seed: 42,
            workers: 0,
            cap: DEFAULT_CAP,
        }
    }

    #[test]
    fn bounded_empty_and_full() {
        let empty = bounded_sieve_experiment(&lub(), &diag(), &[], 10, &PowerIteration::default(), DEFAULT_CAP).unwrap();
        assert!(empty.rows.iter().all(|r| r.sifted_mass == 1.0 && r.pass));
        let q5 = FiniteQuotient::enumerate(&lub(), &[5], DEFAULT_CAP).unwrap();
        let all = FamilyKind::Explicit {
            sets: BTreeMap::from([(5, q5.elements().to_vec())]),
        };
        let full = bounded_sieve_experiment(&lub(), &all, &[5], 10, &PowerIteration::default(), DEFAULT_CAP).unwrap();
        assert_eq!(full.limit, 0.0);
        assert!(full.rows.iter().all(|r| r.sifted_mass == 0.0));
    }

    #[test]
    fn bounded_is_monotone_in_primes() {
        let power = PowerIteration::default();
        let one = bounded_sieve_experiment(&lub(), &diag(), &[5], 30, &power, DEFAULT_CAP).unwrap();
        let two = bounded_sieve_experiment(&lub(), &diag(), &[5, 7], 30, &power, DEFAULT_CAP).unwrap();
        for (a, b) in one.rows.iter().zip(&two.rows) {
            assert!(b.sifted_mass <= a.sifted_mass + 1e-12);
        }
    }

    #[test]
    fn growth_base_default() {
        let a = default_growth_base(&lub(), 3, &BTreeSet::new(), 25, DEFAULT_CAP).unwrap();
        assert!((a.powi(25) - 22.5).abs() < 1e-9);
    }

    #[test]
    fn not_large_names_prime() {
        let s = sampling(vec![3], 2.0, 10);
        let err = large_sieve_experiment(&lub(), &diag(), &s, 0.1, &PowerIteration::default()).unwrap_err();
        assert!(matches!(err, Error::NotLarge { prime: 7, .. }), "{err}");
    }

    #[test]
    fn large_single_prime_matches_bounded() {
        let kind = FamilyKind::NonSquareEntry { row: 0, col: 0 };
        let power = PowerIteration::default();
        let s = sampling(vec![10], 6f64.powf(0.1), 20_000);
        let large = large_sieve_experiment(&lub(), &kind, &s, 0.25, &power).unwrap();
        let row = &large.rows[0];
        assert_eq!(row.primes, 1);
        let bounded = bounded_sieve_experiment(&lub(), &kind, &[5], 10, &power, DEFAULT_CAP).unwrap();
        assert!((row.exact_sifted.unwrap() - bounded.rows[10].sifted_mass).abs() < 1e-12);
        assert!((row.estimate - row.exact_sifted.unwrap()).abs() < 4.0 * row.std_error + 1e-3);
        assert!(row.pass);
    }

    #[test]
    fn small_sieve_empty_family() {
        let kind = FamilyKind::Explicit { sets: BTreeMap::new() };
        let s = sampling(vec![4, 6, 8], 2.0, 200);
        let r = small_sieve_experiment(&lub(), &kind, &s, 0.0).unwrap();
        assert!(r.rows.iter().all(|row| row.estimate == 1.0));
        assert_eq!(r.fitted_exponent, Some(0.0));
    }
}

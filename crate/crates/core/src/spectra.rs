//! The Markov operator of the walk on a finite quotient: exact laws of
//! `π_I(γ_n)`, spectral radius on mean-zero functions, and audits of the
//! equidistribution bound `|μ_n(g) - 1/|Γ_I|| <= ρ_I^n`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::quotient::FiniteQuotient;

/// Slack added to every floating-point audit comparison.
pub const AUDIT_SLACK: f64 = 1e-12;

/// Right action of the generating list on a finite set of states.
pub trait CayleyAction: Sync {
    fn state_count(&self) -> usize;
    fn generator_count(&self) -> usize;
    fn act(&self, state: usize, generator: usize) -> usize;
    fn identity(&self) -> usize {
        0
    }
}

impl CayleyAction for FiniteQuotient {
    fn state_count(&self) -> usize {
        self.order()
    }

    fn generator_count(&self) -> usize {
        FiniteQuotient::generator_count(self)
    }

    #[inline]
    fn act(&self, state: usize, generator: usize) -> usize {
        FiniteQuotient::act(self, state, generator)
    }
}

/// The walk on `Γ_p × Γ_q` driven by the same generator at both primes,
/// indexed as `i * |Γ_q| + j`. Its reachable set is `Γ_{p,q}`; states
/// outside it keep zero mass, so exact pair laws need no pair enumeration.
pub struct ProductAction<'a> {
    left: &'a FiniteQuotient,
    right: &'a FiniteQuotient,
}

impl<'a> ProductAction<'a> {
    pub fn new(left: &'a FiniteQuotient, right: &'a FiniteQuotient) -> Result<Self> {
        if left.generator_count() != right.generator_count() {
            return Err(Error::InvalidGroup(
                "product of quotients with different generating lists".into(),
            ));
        }
        Ok(ProductAction { left, right })
    }

    pub fn split(&self, state: usize) -> (usize, usize) {
        (state / self.right.order(), state % self.right.order())
    }
}

impl CayleyAction for ProductAction<'_> {
    fn state_count(&self) -> usize {
        self.left.order() * self.right.order()
    }

    fn generator_count(&self) -> usize {
        self.left.generator_count()
    }

    #[inline]
    fn act(&self, state: usize, generator: usize) -> usize {
        let n = self.right.order();
        self.left.act(state / n, generator) * n + self.right.act(state % n, generator)
    }
}

/// One real number per state.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionVector(pub Vec<f64>);

impl DistributionVector {
    pub fn point_mass(len: usize, at: usize) -> Self {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        DistributionVector(v)
    }

    pub fn uniform(len: usize) -> Self {
        DistributionVector(vec![1.0 / len as f64; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        par::sum(&self.0)
    }

    pub fn is_probability(&self) -> bool {
        self.0.iter().all(|&x| x >= -AUDIT_SLACK) && (self.total() - 1.0).abs() <= 1e-12
    }

    pub fn is_mean_zero(&self) -> bool {
        self.total().abs() <= 1e-12
    }
}

/// `(Mφ)(x) = (1/|S|) Σ_s φ(x s)`.
pub fn markov_apply<A: CayleyAction + ?Sized>(
    action: &A,
    v: &DistributionVector,
) -> Result<DistributionVector> {
    let mut out = vec![0.0; action.state_count()];
    markov_apply_into(action, &v.0, &mut out)?;
    Ok(DistributionVector(out))
}

fn markov_apply_into<A: CayleyAction + ?Sized>(action: &A, v: &[f64], out: &mut [f64]) -> Result<()> {
    let n = action.state_count();
    if v.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let ngen = action.generator_count();
    let scale = 1.0 / ngen as f64;
    par::fill_indexed(out, |x| {
        let mut acc = 0.0;
        for s in 0..ngen {
            acc += v[action.act(x, s)];
        }
        acc * scale
    });
    Ok(())
}

/// Calls `visit(n, μ_n)` for `n = 0..=n_max`, where `μ_n` is the exact law
/// of the walk's `n`-th step started at the identity. Because the generating
/// multiset is inverse-closed, `M` is symmetric and `μ_{n+1} = M μ_n`.
pub fn for_each_walk_distribution<A, F>(action: &A, n_max: usize, mut visit: F) -> Result<()>
where
    A: CayleyAction + ?Sized,
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    let size = action.state_count();
    let mut cur = vec![0.0; size];
    cur[action.identity()] = 1.0;
    let mut next = vec![0.0; size];
    visit(0, &cur)?;
    for n in 1..=n_max {
        markov_apply_into(action, &cur, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
        visit(n, &cur)?;
    }
    Ok(())
}

/// `M^n` applied to the point mass at the identity.
pub fn exact_walk_distribution<A: CayleyAction + ?Sized>(action: &A, n: usize) -> Result<DistributionVector> {
    let mut out = Vec::new();
    for_each_walk_distribution(action, n, |k, d| {
        if k == n {
            out = d.to_vec();
        }
        Ok(())
    })?;
    Ok(DistributionVector(out))
}

/// True iff the Cayley graph admits a proper 2-colouring.
pub fn bipartite_check<A: CayleyAction + ?Sized>(action: &A) -> bool {
    let n = action.state_count();
    let ngen = action.generator_count();
    let mut colour = vec![u8::MAX; n];
    let mut stack = Vec::new();
    for root in 0..n {
        if colour[root] != u8::MAX {
            continue;
        }
        colour[root] = 0;
        stack.push(root);
        while let Some(x) = stack.pop() {
            for s in 0..ngen {
                let y = action.act(x, s);
                if colour[y] == u8::MAX {
                    colour[y] = 1 - colour[x];
                    stack.push(y);
                } else if colour[y] == colour[x] {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tol: 1e-10,
            max_iter: 100_000,
            seed: 0x5eed_cafe,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub primes: Vec<u64>,
    pub order: usize,
    pub spectral_radius: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub bipartite: bool,
    pub trivial: bool,
}

fn project_mean_zero(v: &mut [f64]) {
    let mean = par::sum(v) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = par::dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest `|λ|` of `M` on mean-zero functions, by power iteration on `M²`
/// with re-projection each step. The residual is the change between
/// successive normalized iterates.
pub fn spectral_radius_of<A: CayleyAction + ?Sized>(
    action: &A,
    opts: &PowerIteration,
) -> Result<(f64, usize, f64)> {
    let n = action.state_count();
    if n <= 1 {
        return Ok((0.0, 0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project_mean_zero(&mut v);
    normalize(&mut v);
    let mut half = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        markov_apply_into(action, &v, &mut half)?;
        markov_apply_into(action, &half, &mut w)?;
        project_mean_zero(&mut w);
        // Rayleigh quotient of M² at the unit vector v.
        let lambda = par::dot(&v, &w).max(0.0);
        estimate = lambda.sqrt();
        if normalize(&mut w) == 0.0 {
            return Ok((0.0, it, 0.0));
        }
        residual = par::sum_by(n, |i| (w[i] - v[i]).powi(2)).sqrt();
        std::mem::swap(&mut v, &mut w);
        if residual <= opts.tol {
            return Ok((estimate.min(1.0), it, residual));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
        estimate,
    })
}

pub fn spectral_radius(q: &FiniteQuotient, opts: &PowerIteration) -> Result<SpectrumReport> {
    let (rho, iterations, residual) = spectral_radius_of(q, opts)?;
    Ok(SpectrumReport {
        primes: q.primes().to_vec(),
        order: q.order(),
        spectral_radius: rho,
        iterations,
        residual,
        converged: true,
        bipartite: bipartite_check(q),
        trivial: q.order() == 1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub n: usize,
    pub max_deviation: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub spectrum: SpectrumReport,
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// For each `n <= n_max`, the largest `|μ_n(g) - 1/|Γ_I||` against
/// `ρ_I^n (1 + 10 tol)`.
pub fn equidistribution_audit(q: &FiniteQuotient, n_max: usize, opts: &PowerIteration) -> Result<AuditReport> {
    let spectrum = spectral_radius(q, opts)?;
    let rho = spectrum.spectral_radius;
    let haar = 1.0 / q.order() as f64;
    let mut rows = Vec::with_capacity(n_max + 1);
    for_each_walk_distribution(q, n_max, |n, mu| {
        let max_deviation = par::max_by(mu.len(), |i| (mu[i] - haar).abs());
        let bound = rho.powi(n as i32) * (1.0 + 10.0 * opts.tol);
        rows.push(AuditRow {
            n,
            max_deviation,
            bound,
            pass: max_deviation <= bound + AUDIT_SLACK,
        });
        Ok(())
    })?;
    Ok(AuditReport { spectrum, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{GroupSpec, Preset};
    use crate::quotient::DEFAULT_CAP;
    use nalgebra::DMatrix;

    fn quotient(k: i64, id: bool, primes: &[u64]) -> FiniteQuotient {
        let g = GroupSpec::preset(Preset::Lubotzky(k), id).unwrap();
        FiniteQuotient::enumerate(&g, primes, DEFAULT_CAP).unwrap()
    }

    /// Dense symmetric eigen-decomposition of M; drops one eigenvalue 1.
    fn dense_rho(q: &FiniteQuotient) -> f64 {
        let n = q.order();
        let ngen = q.generator_count();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for x in 0..n {
            for s in 0..ngen {
                m[(x, q.act(x, s))] += 1.0 / ngen as f64;
            }
        }
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev.pop();
        ev.iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn uniform_is_stationary() {
        let q = quotient(3, true, &[5]);
        let u = DistributionVector::uniform(q.order());
        let out = markov_apply(&q, &u).unwrap();
        for (a, b) in out.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn one_step_from_identity() {
        let q = quotient(3, true, &[5]);
        let d = markov_apply(&q, &DistributionVector::point_mass(q.order(), 0)).unwrap();
        let support: Vec<f64> = d.values().iter().copied().filter(|&x| x > 0.0).collect();
        assert_eq!(support.len(), 5);
        assert!(support.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn size_mismatch() {
        let q = quotient(3, true, &[5]);
        assert!(matches!(
            markov_apply(&q, &DistributionVector::uniform(7)),
            Err(Error::SizeMismatch { expected: 120, got: 7 })
        ));
    }

    #[test]
    fn operator_is_self_adjoint_and_keeps_mean_zero() {
        let q = quotient(3, true, &[7]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = q.order();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu = markov_apply(&q, &DistributionVector(u.clone())).unwrap();
        let mv = markov_apply(&q, &DistributionVector(v.clone())).unwrap();
        assert!((par::dot(mu.values(), &v) - par::dot(&u, mv.values())).abs() < 1e-10);
        project_mean_zero(&mut v);
        assert!(markov_apply(&q, &DistributionVector(v)).unwrap().is_mean_zero());
    }

    #[test]
    fn rho_matches_dense_oracle() {
        for primes in [&[5u64][..], &[7], &[11]] {
            let q = quotient(3, true, primes);
            let report = spectral_radius(&q, &PowerIteration::default()).unwrap();
            let oracle = dense_rho(&q);
            assert!(
                (report.spectral_radius - oracle).abs() < 1e-9,
                "{primes:?}: {} vs {oracle}",
                report.spectral_radius
            );
            assert!(!report.bipartite);
        }
        // frozen from the dense oracle: (1 + 2φ)/5 with φ the golden ratio
        let q = quotient(3, true, &[5]);
        let rho = spectral_radius(&q, &PowerIteration::default()).unwrap().spectral_radius;
        assert!((rho - 0.847_213_595_499_958).abs() < 1e-9);
    }

    #[test]
    fn trivial_quotient_has_zero_radius() {
        let q = quotient(3, false, &[3]);
        let r = spectral_radius(&q, &PowerIteration::default()).unwrap();
        assert_eq!(r.spectral_radius, 0.0);
        assert!(r.trivial);
    }

    #[test]
    fn bipartite_detection() {
        // SL_2(F_2) = S_3; the elementary generators are transpositions.
        let sl2 = GroupSpec::preset(Preset::Sl2Standard, false).unwrap();
        let q = FiniteQuotient::enumerate(&sl2, &[2], DEFAULT_CAP).unwrap();
        assert!(bipartite_check(&q));
        let r = spectral_radius(&q, &PowerIteration::default()).unwrap();
        assert!((r.spectral_radius - 1.0).abs() < 1e-9);
        assert!(r.bipartite);
        assert!(!bipartite_check(&quotient(3, false, &[5])));
        assert!(!bipartite_check(&quotient(3, true, &[7])));
    }

    /// Z → Z/2 with S = {+1, -1}: both generators swap the two classes.
    struct ZmodTwo;
    impl CayleyAction for ZmodTwo {
        fn state_count(&self) -> usize {
            2
        }
        fn generator_count(&self) -> usize {
            2
        }
        fn act(&self, state: usize, _generator: usize) -> usize {
            1 - state
        }
    }

    #[test]
    fn cyclic_two_is_bipartite() {
        assert!(bipartite_check(&ZmodTwo));
    }

    #[test]
    fn exact_distribution_basics() {
        let q = quotient(3, true, &[5]);
        let d0 = exact_walk_distribution(&q, 0).unwrap();
        assert_eq!(d0, DistributionVector::point_mass(120, 0));
        let d1 = exact_walk_distribution(&q, 1).unwrap();
        assert_eq!(d1.values().iter().filter(|&&x| x > 0.0).count(), 5);
        let sl2 = GroupSpec::preset(Preset::Lubotzky(3), true).unwrap();
        // at p = 3 every generator reduces to the identity
        let q3 = FiniteQuotient::enumerate(&sl2, &[3], DEFAULT_CAP).unwrap();
        assert_eq!(exact_walk_distribution(&q3, 1).unwrap().values(), &[1.0]);
        for_each_walk_distribution(&q, 200, |_, d| {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn audit_mod_five() {
        let q = quotient(3, true, &[5]);
        let audit = equidistribution_audit(&q, 60, &PowerIteration::default()).unwrap();
        assert!(audit.all_pass());
        assert!((audit.rows[0].max_deviation - (1.0 - 1.0 / 120.0)).abs() < 1e-15);
        assert_eq!(audit.rows[0].bound, 1.0 + 1e-9);
        for w in audit.rows.windows(2) {
            assert!(w[1].max_deviation <= w[0].max_deviation + 1e-12);
        }
    }

    #[test]
    fn product_action_matches_pair_quotient() {
        let g = GroupSpec::preset(Preset::Lubotzky(3), true).unwrap();
        let q5 = FiniteQuotient::enumerate(&g, &[5], DEFAULT_CAP).unwrap();
        let q7 = FiniteQuotient::enumerate(&g, &[7], DEFAULT_CAP).unwrap();
        let pair = FiniteQuotient::enumerate(&g, &[5, 7], DEFAULT_CAP).unwrap();
        let prod = ProductAction::new(&q5, &q7).unwrap();
        let n = 9;
        let dp = exact_walk_distribution(&prod, n).unwrap();
        let dq = exact_walk_distribution(&pair, n).unwrap();
        for i in 0..pair.order() {
            let codes = pair.component_codes(i);
            let a = q5.index_of(codes[0]).unwrap();
            let b = q7.index_of(codes[1]).unwrap();
            assert!((dq.values()[i] - dp.values()[a * q7.order() + b]).abs() < 1e-15);
        }
    }
}

//! Sifted sets `S(P; Ω)` and per-sample membership.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::arith::primes_in;
use crate::error::{Error, Result};
use crate::group::GroupSpec;
use crate::walker::WalkSample;

use super::family::{FamilyKind, OmegaSet, SieveFamily};

/// Primes in `(lower, upper]` minus `excluded`, with their sieving sets.
#[derive(Clone, Debug)]
pub struct SiftedSetSpec {
    family: SieveFamily,
    lower: u64,
    upper: u64,
    excluded: BTreeSet<u64>,
    primes: Vec<u64>,
}

impl SiftedSetSpec {
    /// Fails with [`Error::Config`] when an exceptional prime of `spec` is in
    /// the window without being excluded.
    pub fn new(
        kind: FamilyKind,
        spec: &GroupSpec,
        lower: u64,
        upper: u64,
        excluded: &BTreeSet<u64>,
        cap: usize,
    ) -> Result<Self> {
        let primes: Vec<u64> = if upper > lower {
            primes_in(lower + 1, upper)
                .into_iter()
                .filter(|p| !excluded.contains(p))
                .collect()
        } else {
            Vec::new()
        };
        if let Some(p) = primes.iter().find(|&&p| spec.is_exceptional(p)) {
            return Err(Error::Config(format!(
                "prime {p} is exceptional for {} and lies in the sieve window ({lower}, {upper}]",
                spec.name()
            )));
        }
        let family = SieveFamily::build(kind, spec, &primes, cap)?;
        Ok(SiftedSetSpec {
            family,
            lower,
            upper,
            excluded: excluded.clone(),
            primes,
        })
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn family(&self) -> &SieveFamily {
        &self.family
    }

    pub fn window(&self) -> (u64, u64) {
        (self.lower, self.upper)
    }

    pub fn excluded(&self) -> &BTreeSet<u64> {
        &self.excluded
    }

    /// Binds the sieve primes to track positions of a walk.
    pub fn sifter(&self, tracked: &[u64]) -> Result<Sifter<'_>> {
        Sifter::new(&self.family, &self.primes, tracked)
    }
}

pub struct Sifter<'a> {
    slots: Vec<(usize, &'a OmegaSet)>,
}

impl<'a> Sifter<'a> {
    /// Sieves by `primes` (each must have a set in `family`), reading
    /// residues from the positions of `tracked`.
    pub fn new(family: &'a SieveFamily, primes: &[u64], tracked: &[u64]) -> Result<Self> {
        let slots = primes
            .iter()
            .map(|&p| {
                let k = tracked.iter().position(|&t| t == p).ok_or(Error::UntrackedPrime(p))?;
                let omega = family
                    .omega(p)
                    .ok_or_else(|| Error::Config(format!("no sieving set built for prime {p}")))?;
                Ok((k, omega))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sifter { slots })
    }

    /// `X = #{p : π_p(γ) ∈ Ω_p}`.
    pub fn count(&self, sample: &WalkSample) -> u32 {
        self.slots
            .iter()
            .filter(|(k, omega)| omega.contains(&sample.residues[*k]))
            .count() as u32
    }

    pub fn passes(&self, sample: &WalkSample) -> bool {
        !self.slots.iter().any(|(k, omega)| omega.contains(&sample.residues[*k]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiftOutcome {
    pub passed: Vec<bool>,
    pub counts: Vec<u32>,
    pub survivors: u64,
}

pub fn sift_batch(samples: &[WalkSample], tracked: &[u64], spec: &SiftedSetSpec) -> Result<SiftOutcome> {
    let sifter = spec.sifter(tracked)?;
    let counts: Vec<u32> = samples.iter().map(|s| sifter.count(s)).collect();
    let passed: Vec<bool> = counts.iter().map(|&c| c == 0).collect();
    Ok(SiftOutcome {
        survivors: passed.iter().filter(|&&b| b).count() as u64,
        passed,
        counts,
    })
}

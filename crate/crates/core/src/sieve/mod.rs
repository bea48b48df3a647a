//! Sieve families, sifted sets and sieve experiments along random walks.

mod baseline;
mod experiments;
mod family;
mod sifted;

pub use baseline::{
    almost_prime_bound, classical_integer_sieve, square_root_check, trial_division_survivors, AlmostPrimeBound, BaselineReport,
    SquareRootCheck,
};
pub use experiments::{
    bounded_sieve_experiment, default_growth_base, large_sieve_experiment, small_sieve_experiment, BoundedRow,
    BoundedSieveReport, LargeSieveReport, LargeSieveRow, SieveSampling, SmallSieveReport, SmallSieveRow,
};
pub use family::{
    build_omega, density_count, kappa_profile, lagrangian_report, omega_for_prime, CountMethod, DensityCount,
    DimensionReport, FamilyKind, KappaRow, LagrangianReport, LagrangianRow, OmegaSet, PrimePredicate, SieveFamily,
};
pub use sifted::{sift_batch, SiftOutcome, SiftedSetSpec, Sifter};

//! Sieving sets `Ω_p ⊂ Γ_p`, their exact densities and the dimension `κ`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::arith::{check_prime, Fp};
use crate::error::{Error, Result};
use crate::fpoly;
use crate::group::{Ambient, GroupSpec};
use crate::matrix::ModMatrix;
use crate::par;
use crate::poly::{ModPoly, PolynomialFunction};
use crate::quotient::FiniteQuotient;
use crate::stats::{linear_fit, LinearFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FamilyKind {
    /// `Ω_p = {g : f(g) ≡ 0 mod p}`.
    PolyZero { polynomial: PolynomialFunction },
    /// `Ω_p = {g : g_ij is not a square mod p}`, zero counted as a square.
    /// Indices are 0-based.
    NonSquareEntry { row: usize, col: usize },
    /// `Ω_p = {g : det(x - g) is irreducible over F_p}`.
    IrreducibleCharPoly,
    /// `Ω_p = {γ : J + γJ = F_p^{2g}}` with `J` spanned by `e_1..e_g`.
    LagrangianSpan { genus: usize },
    /// Per-prime lists of element encodings.
    Explicit { sets: BTreeMap<u64, Vec<u64>> },
}

impl FamilyKind {
    pub fn label(&self) -> String {
        match self {
            FamilyKind::PolyZero { polynomial } => format!("poly-zero({polynomial})"),
            FamilyKind::NonSquareEntry { row, col } => format!("non-square-entry({},{})", row + 1, col + 1),
            FamilyKind::IrreducibleCharPoly => "irreducible-char-poly".into(),
            FamilyKind::LagrangianSpan { genus } => format!("lagrangian-span(g={genus})"),
            FamilyKind::Explicit { .. } => "explicit".into(),
        }
    }

    fn short_name(&self) -> &'static str {
        match self {
            FamilyKind::PolyZero { .. } => "poly-zero",
            FamilyKind::NonSquareEntry { .. } => "non-square-entry",
            FamilyKind::IrreducibleCharPoly => "irreducible-char-poly",
            FamilyKind::LagrangianSpan { .. } => "lagrangian-span",
            FamilyKind::Explicit { .. } => "explicit",
        }
    }

    /// Checks that the family makes sense for matrices of `spec`.
    pub fn check(&self, spec: &GroupSpec) -> Result<()> {
        let rank = spec.rank();
        match self {
            FamilyKind::PolyZero { polynomial } if polynomial.rank() != rank => {
                Err(Error::DimensionMismatch(polynomial.rank(), rank))
            }
            FamilyKind::NonSquareEntry { row, col } if *row >= rank || *col >= rank => Err(Error::FamilyMismatch {
                family: self.short_name(),
                required: "entry indices within the matrix rank",
            }),
            FamilyKind::LagrangianSpan { genus } => {
                if spec.ambient() != Ambient::Symplectic || rank != 2 * genus {
                    Err(Error::FamilyMismatch {
                        family: self.short_name(),
                        required: "a symplectic group of rank 2g",
                    })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// True when, on `SL_2`, the predicate only depends on the diagonal.
    fn diagonal_only(&self) -> bool {
        match self {
            FamilyKind::PolyZero { polynomial } => {
                polynomial.rank() == 2
                    && polynomial.terms().iter().all(|t| t.factors.iter().all(|&i| i == 0 || i == 3))
            }
            FamilyKind::IrreducibleCharPoly => true,
            _ => false,
        }
    }

    pub fn compile(&self, p: u64, rank: usize) -> Result<PrimePredicate> {
        check_prime(p)?;
        let field = Fp::new(p)?;
        let test = match self {
            FamilyKind::PolyZero { polynomial } => Test::Poly(polynomial.compile(p)?),
            FamilyKind::NonSquareEntry { row, col } => Test::NonSquare(row * rank + col),
            FamilyKind::IrreducibleCharPoly => Test::Irreducible,
            FamilyKind::LagrangianSpan { genus } => Test::Span(*genus),
            FamilyKind::Explicit { sets } => {
                let mut members = sets.get(&p).cloned().unwrap_or_default();
                members.sort_unstable();
                members.dedup();
                Test::Explicit(members)
            }
        };
        Ok(PrimePredicate { field, rank, test })
    }
}

#[derive(Clone, Debug)]
enum Test {
    Poly(ModPoly),
    NonSquare(usize),
    Irreducible,
    Span(usize),
    Explicit(Vec<u64>),
}

/// The membership predicate of one `Ω_p`, precompiled for its prime.
#[derive(Clone, Debug)]
pub struct PrimePredicate {
    field: Fp,
    rank: usize,
    test: Test,
}

impl PrimePredicate {
    /// Membership of the matrix with row-major residues `entries`.
    pub fn contains(&self, entries: &[u64]) -> bool {
        let f = self.field;
        match &self.test {
            Test::Poly(poly) => poly.eval(entries) == 0,
            Test::NonSquare(i) => !f.is_square(entries[*i]),
            Test::Irreducible => fpoly::is_irreducible(&fpoly::char_poly(entries, self.rank, f), f),
            Test::Span(g) => {
                // J + γJ is everything iff the lower-left g×g block is invertible
                let n = 2 * g;
                let block: Vec<u64> = (0..*g)
                    .flat_map(|i| (0..*g).map(move |j| entries[(g + i) * n + j]))
                    .collect();
                ModMatrix::from_entries(*g, f.modulus(), block).determinant() != 0
            }
            Test::Explicit(members) => {
                let code = entries.iter().fold(0u64, |acc, &e| acc * f.modulus() + e);
                members.binary_search(&code).is_ok()
            }
        }
    }
}

/// `Ω_p` as a sorted list of element encodings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OmegaSet {
    pub prime: u64,
    pub rank: usize,
    pub group_order: u64,
    pub method: CountMethod,
    #[serde(skip)]
    members: Vec<u64>,
}

impl OmegaSet {
    pub fn size(&self) -> u64 {
        self.members.len() as u64
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    pub fn density(&self) -> f64 {
        self.size() as f64 / self.group_order as f64
    }

    pub fn contains_code(&self, code: u64) -> bool {
        self.members.binary_search(&code).is_ok()
    }

    pub fn contains(&self, m: &ModMatrix) -> bool {
        self.contains_code(m.encode())
    }

    /// Membership per element index of a single-prime quotient.
    pub fn indicator(&self, q: &FiniteQuotient) -> Vec<bool> {
        par::map_range(q.order(), |i| self.contains_code(q.code(i)))
    }
}

fn require_single_prime(q: &FiniteQuotient) -> Result<u64> {
    match q.primes() {
        [p] => Ok(*p),
        other => Err(Error::InvalidGroup(format!(
            "sieving sets live on single-prime quotients, got primes {other:?}"
        ))),
    }
}

/// Exhaustive scan of an enumerated `Γ_p`.
pub fn build_omega(kind: &FamilyKind, q: &FiniteQuotient) -> Result<OmegaSet> {
    let p = require_single_prime(q)?;
    let pred = kind.compile(p, q.rank())?;
    let rank = q.rank();
    let chunks = par::map_chunks(q.order(), par::REDUCE_CHUNK, |r| {
        let mut m = ModMatrix::identity(rank, p);
        r.filter_map(|i| {
            m.decode_into(q.code(i));
            pred.contains(m.entries()).then(|| q.code(i))
        })
        .collect::<Vec<u64>>()
    });
    let mut members: Vec<u64> = chunks.into_iter().flatten().collect();
    members.sort_unstable();
    Ok(OmegaSet {
        prime: p,
        rank,
        group_order: q.order() as u64,
        method: CountMethod::Enumeration,
        members,
    })
}

/// Calls `visit` on every `[a, b, c, d]` in `SL_2(F_p)` with the given `a`.
fn for_each_sl2_with_a(p: u64, a: u64, mut visit: impl FnMut(&[u64; 4])) {
    let f = Fp::new(p).expect("checked prime");
    if a == 0 {
        // bc = -1, d free
        for b in 1..p {
            let c = f.neg(f.inv(b).expect("unit"));
            for d in 0..p {
                visit(&[0, b, c, d]);
            }
        }
    } else {
        let a_inv = f.inv(a).expect("unit");
        for b in 0..p {
            // d = (1 + bc)/a, stepped by b/a as c increases
            let step = f.mul(b, a_inv);
            let mut d = a_inv;
            for c in 0..p {
                visit(&[a, b, c, d]);
                d = f.add(d, step);
            }
        }
    }
}

/// `|Ω_p|` over all of `SL_2(F_p)` by direct scan.
fn sl2_scan_count(pred: &PrimePredicate, p: u64) -> u64 {
    par::map_range(p as usize, |a| {
        let mut count = 0u64;
        for_each_sl2_with_a(p, a as u64, |m| count += u64::from(pred.contains(m)));
        count
    })
    .into_iter()
    .sum()
}

fn sl2_scan_collect(pred: &PrimePredicate, p: u64) -> Vec<u64> {
    let mut members: Vec<u64> = par::map_range(p as usize, |a| {
        let mut out = Vec::new();
        for_each_sl2_with_a(p, a as u64, |m| {
            if pred.contains(m) {
                out.push(((m[0] * p + m[1]) * p + m[2]) * p + m[3]);
            }
        });
        out
    })
    .into_iter()
    .flatten()
    .collect();
    members.sort_unstable();
    members
}

/// `|Ω_p|` for a predicate of the diagonal only: each `(a, d)` has
/// `#{(b, c) : bc = ad - 1}` completions, `p - 1` or `2p - 1` when `ad = 1`.
fn sl2_fiber_count(pred: &PrimePredicate, p: u64) -> u64 {
    let f = Fp::new(p).expect("checked prime");
    par::map_range(p as usize, |a| {
        let a = a as u64;
        let mut count = 0u64;
        for d in 0..p {
            // b = ad - 1, c = 1 puts a determinant-one matrix on the fibre
            let ad = f.mul(a, d);
            if pred.contains(&[a, f.sub(ad, 1), 1, d]) {
                count += if ad == 1 { 2 * p - 1 } else { p - 1 };
            }
        }
        count
    })
    .into_iter()
    .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMethod {
    /// BFS-enumerated quotient.
    Enumeration,
    /// Scan of `SL_2(F_p)`, valid because the generators certify `Γ_p = SL_2(F_p)`.
    Sl2Scan,
    /// Fibre counting over the diagonal of `SL_2(F_p)`.
    Sl2Fiber,
}

/// Exact `|Ω_p|` and `|Γ_p|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DensityCount {
    pub prime: u64,
    pub omega: u64,
    pub order: u64,
    pub method: CountMethod,
}

impl DensityCount {
    pub fn density(&self) -> f64 {
        self.omega as f64 / self.order as f64
    }
}

fn sl2_order(p: u64) -> u64 {
    p * (p * p - 1)
}

/// Exact density at `p`, by the cheapest exhaustive method available.
pub fn density_count(kind: &FamilyKind, spec: &GroupSpec, p: u64, cap: usize) -> Result<DensityCount> {
    kind.check(spec)?;
    let pred = kind.compile(p, spec.rank())?;
    if spec.certifies_full_sl2(p) {
        let (omega, method) = if kind.diagonal_only() {
            (sl2_fiber_count(&pred, p), CountMethod::Sl2Fiber)
        } else {
            (sl2_scan_count(&pred, p), CountMethod::Sl2Scan)
        };
        return Ok(DensityCount {
            prime: p,
            omega,
            order: sl2_order(p),
            method,
        });
    }
    let q = FiniteQuotient::enumerate(spec, &[p], cap)?;
    let omega = build_omega(kind, &q)?;
    Ok(DensityCount {
        prime: p,
        omega: omega.size(),
        order: omega.group_order,
        method: omega.method,
    })
}

/// Materialized `Ω_p` for the quotient of `spec` mod `p`.
pub fn omega_for_prime(kind: &FamilyKind, spec: &GroupSpec, p: u64, cap: usize) -> Result<OmegaSet> {
    kind.check(spec)?;
    if spec.certifies_full_sl2(p) {
        let pred = kind.compile(p, 2)?;
        return Ok(OmegaSet {
            prime: p,
            rank: 2,
            group_order: sl2_order(p),
            method: CountMethod::Sl2Scan,
            members: sl2_scan_collect(&pred, p),
        });
    }
    let q = FiniteQuotient::enumerate(spec, &[p], cap)?;
    build_omega(kind, &q)
}

/// `Ω_p` for a set of primes.
#[derive(Clone, Debug)]
pub struct SieveFamily {
    pub kind: FamilyKind,
    omegas: BTreeMap<u64, OmegaSet>,
}

impl SieveFamily {
    pub fn build(kind: FamilyKind, spec: &GroupSpec, primes: &[u64], cap: usize) -> Result<Self> {
        let mut omegas = BTreeMap::new();
        for &p in primes {
            omegas.insert(p, omega_for_prime(&kind, spec, p, cap)?);
        }
        Ok(SieveFamily { kind, omegas })
    }

    pub fn omega(&self, p: u64) -> Option<&OmegaSet> {
        self.omegas.get(&p)
    }

    pub fn primes(&self) -> Vec<u64> {
        self.omegas.keys().copied().collect()
    }

    pub fn densities(&self) -> Vec<DensityCount> {
        self.omegas
            .values()
            .map(|o| DensityCount {
                prime: o.prime,
                omega: o.size(),
                order: o.group_order,
                method: o.method,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaRow {
    pub prime: u64,
    pub omega: u64,
    pub order: u64,
    pub density: f64,
    pub kappa_p: f64,
    /// `Σ_{ℓ <= p} δ_ℓ log ℓ`.
    pub partial_sum: f64,
    /// `(1/π) Σ_{ℓ <= p} κ_ℓ` over the primes of the profile.
    pub running_average: f64,
    pub method: CountMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionReport {
    pub family: String,
    pub rows: Vec<KappaRow>,
    /// Least-squares slope of the partial sums against `log X`.
    pub fitted_kappa: f64,
    pub fit: Option<LinearFit>,
    pub running_average_kappa: f64,
}

pub fn kappa_profile(kind: &FamilyKind, spec: &GroupSpec, primes: &[u64], cap: usize) -> Result<DimensionReport> {
    let mut rows = Vec::with_capacity(primes.len());
    let mut partial = 0.0;
    let mut kappa_total = 0.0;
    for (k, &p) in primes.iter().enumerate() {
        let count = density_count(kind, spec, p, cap)?;
        let density = count.density();
        partial += density * (p as f64).ln();
        kappa_total += p as f64 * density;
        rows.push(KappaRow {
            prime: p,
            omega: count.omega,
            order: count.order,
            density,
            kappa_p: p as f64 * density,
            partial_sum: partial,
            running_average: kappa_total / (k + 1) as f64,
            method: count.method,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.prime as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.partial_sum).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(DimensionReport {
        family: kind.label(),
        fitted_kappa: fit.map_or(0.0, |f| f.slope),
        fit,
        running_average_kappa: rows.last().map_or(0.0, |r| r.running_average),
        rows,
    })
}

/// Spanning counts for the Lagrangian family next to the two closed forms
/// `Π_j 1/(1 + p^{-j})` and `1 - Π_j 1/(1 + p^{-j})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangianRow {
    pub prime: u64,
    pub genus: usize,
    pub spanning: u64,
    pub order: u64,
    pub spanning_fraction: f64,
    pub product_formula: f64,
    pub complement_formula: f64,
    pub matches_product: bool,
    pub matches_complement: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangianReport {
    pub rows: Vec<LagrangianRow>,
    /// True when the exhaustive fractions contradict `1 - Π 1/(1 + p^{-j})`.
    pub complement_formula_discrepancy: bool,
    pub note: String,
}

pub fn lagrangian_report(spec: &GroupSpec, primes: &[u64], cap: usize) -> Result<LagrangianReport> {
    let genus = spec.genus().ok_or(Error::FamilyMismatch {
        family: "lagrangian-span",
        required: "a symplectic group of rank 2g",
    })?;
    let kind = FamilyKind::LagrangianSpan { genus };
    let mut rows = Vec::new();
    for &p in primes {
        let q = FiniteQuotient::enumerate(spec, &[p], cap)?;
        let omega = build_omega(&kind, &q)?;
        let (spanning, order) = (omega.size(), q.order() as u64);
        // Π p^j/(p^j + 1) as an exact fraction
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for j in 1..=genus as u32 {
            num *= BigUint::from(p).pow(j);
            den *= BigUint::from(p).pow(j) + 1u32;
        }
        let matches_product = BigUint::from(spanning) * &den == BigUint::from(order) * &num;
        let matches_complement = BigUint::from(spanning) * &den == BigUint::from(order) * (&den - &num);
        let product = (0..genus as i32).map(|j| 1.0 / (1.0 + (p as f64).powi(-(j + 1)))).product::<f64>();
        rows.push(LagrangianRow {
            prime: p,
            genus,
            spanning,
            order,
            spanning_fraction: spanning as f64 / order as f64,
            product_formula: product,
            complement_formula: 1.0 - product,
            matches_product,
            matches_complement,
        });
    }
    let discrepancy = rows.iter().any(|r| !r.matches_complement);
    let note = if discrepancy {
        "exhaustive spanning fractions equal prod 1/(1+p^-j), not 1 - prod 1/(1+p^-j); densities use the exhaustive count".into()
    } else {
        String::new()
    };
    Ok(LagrangianReport {
        rows,
        complement_formula_discrepancy: discrepancy,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Preset;
    use crate::quotient::DEFAULT_CAP;

    fn lub() -> GroupSpec {
        GroupSpec::preset(Preset::Lubotzky(3), true).unwrap()
    }

    fn diag() -> FamilyKind {
        FamilyKind::PolyZero {
            polynomial: PolynomialFunction::sum_of_diagonal_squares(),
        }
    }

    #[test]
    fn diagonal_squares_small_primes() {
        let spec = lub();
        let q5 = FiniteQuotient::enumerate(&spec, &[5], DEFAULT_CAP).unwrap();
        let o5 = build_omega(&diag(), &q5).unwrap();
        assert_eq!((o5.size(), o5.group_order), (36, 120));
        let q7 = FiniteQuotient::enumerate(&spec, &[7], DEFAULT_CAP).unwrap();
        assert_eq!(build_omega(&diag(), &q7).unwrap().size(), 6);
    }

    #[test]
    fn counting_methods_agree() {
        let spec = lub();
        let fams = [
            diag(),
            FamilyKind::PolyZero {
                polynomial: PolynomialFunction::product_of_entries(2),
            },
            FamilyKind::NonSquareEntry { row: 0, col: 0 },
            FamilyKind::IrreducibleCharPoly,
        ];
        for kind in &fams {
            for p in [5u64, 7, 11] {
                let q = FiniteQuotient::enumerate(&spec, &[p], DEFAULT_CAP).unwrap();
                let bfs = build_omega(kind, &q).unwrap();
                let fast = density_count(kind, &spec, p, DEFAULT_CAP).unwrap();
                assert_eq!(fast.omega, bfs.size(), "{} at {p}", kind.label());
                assert_eq!(fast.order, bfs.group_order);
                let pred = kind.compile(p, 2).unwrap();
                assert_eq!(sl2_scan_count(&pred, p), bfs.size());
                assert_eq!(sl2_scan_collect(&pred, p), bfs.members());
            }
        }
        assert_eq!(density_count(&diag(), &spec, 13, DEFAULT_CAP).unwrap().method, CountMethod::Sl2Fiber);
        for p in [13u64, 17, 19, 23] {
            let kind = FamilyKind::IrreducibleCharPoly;
            let fast = density_count(&kind, &spec, p, DEFAULT_CAP).unwrap();
            assert_eq!(fast.method, CountMethod::Sl2Fiber);
            assert_eq!(fast.omega, sl2_scan_count(&kind.compile(p, 2).unwrap(), p));
        }
    }

    #[test]
    fn product_of_entries_at_seven() {
        let kind = FamilyKind::PolyZero {
            polynomial: PolynomialFunction::product_of_entries(2),
        };
        let c = density_count(&kind, &lub(), 7, DEFAULT_CAP).unwrap();
        assert_eq!((c.omega, c.order), (156, 336));
        let kappa = 7.0 * c.density();
        assert!((kappa - 4.0).abs() <= 7f64.sqrt());
    }

    #[test]
    fn non_square_density_is_p_over_two_p_plus_two() {
        for p in [5u64, 7, 11, 13] {
            let c = density_count(&FamilyKind::NonSquareEntry { row: 0, col: 0 }, &lub(), p, DEFAULT_CAP).unwrap();
            assert_eq!(c.omega * 2 * (p + 1), c.order * p);
        }
    }

    #[test]
    fn empty_family_profile() {
        let kind = FamilyKind::Explicit { sets: BTreeMap::new() };
        let r = kappa_profile(&kind, &lub(), &[5, 7, 11, 13], DEFAULT_CAP).unwrap();
        assert_eq!(r.fitted_kappa, 0.0);
        assert_eq!(r.fit.unwrap().rms_residual, 0.0);
        assert_eq!(r.running_average_kappa, 0.0);
    }

    #[test]
    fn lagrangian_genus_one_and_two() {
        let sp2 = GroupSpec::preset(Preset::SymplecticElementary(1), false).unwrap();
        let r = lagrangian_report(&sp2, &[3, 5, 7], DEFAULT_CAP).unwrap();
        let got: Vec<(u64, u64)> = r.rows.iter().map(|r| (r.spanning, r.order)).collect();
        assert_eq!(got, vec![(18, 24), (100, 120), (294, 336)]);
        assert!(r.rows.iter().all(|r| r.matches_product && !r.matches_complement));
        assert!(r.complement_formula_discrepancy);
        let sp4 = GroupSpec::preset(Preset::SymplecticElementary(2), false).unwrap();
        let r4 = lagrangian_report(&sp4, &[3], DEFAULT_CAP).unwrap();
        // transverse Lagrangians: 3^3 of (3 + 1)(9 + 1)
        assert_eq!(r4.rows[0].spanning * 40, r4.rows[0].order * 27);
    }

    #[test]
    fn family_checks() {
        assert!(matches!(
            FamilyKind::LagrangianSpan { genus: 1 }.check(&lub()),
            Err(Error::FamilyMismatch { .. })
        ));
        assert!(FamilyKind::NonSquareEntry { row: 2, col: 0 }.check(&lub()).is_err());
        let q = FiniteQuotient::enumerate(&lub(), &[5, 7], DEFAULT_CAP).unwrap();
        assert!(build_omega(&diag(), &q).is_err());
    }

    #[test]
    fn identity_in_product_family() {
        let kind = FamilyKind::PolyZero {
            polynomial: PolynomialFunction::product_of_entries(2),
        };
        for p in [5u64, 7] {
            let o = omega_for_prime(&kind, &lub(), p, DEFAULT_CAP).unwrap();
            assert!(o.contains(&ModMatrix::identity(2, p)));
        }
    }
}

//! Experiment configuration: a TOML document with one table per concern.
//!
//! ```toml
//! name = "lub-5"
//! experiment = "enumerate"
//!
//! [group]
//! preset = "lubotzky"
//! k = 3
//!
//! [primes]
//! list = [5]
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::{check_prime, primes_in};
use crate::error::{Error, Result};
use crate::group::{Ambient, GroupSpec, Preset};
use crate::matrix::IntegerMatrix;
use crate::poly::PolynomialFunction;
use crate::quotient::DEFAULT_CAP;
use crate::sieve::FamilyKind;
use crate::spectra::PowerIteration;
use crate::walker::BallMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Enumerate,
    Spectrum,
    Audit,
    Bounded,
    SmallSieve,
    LargeSieve,
    ErdosKac,
    Baseline,
    Ball,
    Densities,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Enumerate => "enumerate",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Audit => "audit",
            ExperimentKind::Bounded => "bounded",
            ExperimentKind::SmallSieve => "small-sieve",
            ExperimentKind::LargeSieve => "large-sieve",
            ExperimentKind::ErdosKac => "erdos-kac",
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::Ball => "ball",
            ExperimentKind::Densities => "densities",
        }
    }

    fn sieves(self) -> bool {
        matches!(
            self,
            ExperimentKind::Bounded | ExperimentKind::SmallSieve | ExperimentKind::LargeSieve | ExperimentKind::Densities
        )
    }

    fn needs_family(self) -> bool {
        self.sieves()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupPreset {
    Lubotzky,
    Sl2Standard,
    Symplectic,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GroupSection {
    pub preset: GroupPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genus: Option<usize>,
    /// Append the identity to the generating list (lazy walk).
    #[serde(default)]
    pub identity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Row-major integer lists; `custom` only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<IntegerMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<Ambient>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub exceptional: BTreeSet<u64>,
}

impl GroupSection {
    pub fn preset(preset: GroupPreset) -> Self {
        GroupSection {
            preset,
            k: None,
            genus: None,
            identity: false,
            name: None,
            generators: Vec::new(),
            ambient: None,
            exceptional: BTreeSet::new(),
        }
    }

    pub fn build(&self) -> std::result::Result<GroupSpec, Issue> {
        let wrap = |key: &'static str| move |e: Error| Issue::new(key, e.to_string());
        match self.preset {
            GroupPreset::Lubotzky => {
                let k = self.k.ok_or_else(|| Issue::new("group.k", "the lubotzky preset needs k"))?;
                GroupSpec::preset(Preset::Lubotzky(k), self.identity).map_err(wrap("group.k"))
            }
            GroupPreset::Sl2Standard => GroupSpec::preset(Preset::Sl2Standard, self.identity).map_err(wrap("group.preset")),
            GroupPreset::Symplectic => {
                let g = self
                    .genus
                    .ok_or_else(|| Issue::new("group.genus", "the symplectic preset needs genus"))?;
                GroupSpec::preset(Preset::SymplecticElementary(g), self.identity).map_err(wrap("group.genus"))
            }
            GroupPreset::Custom => {
                let mut gens = self.generators.clone();
                if gens.is_empty() {
                    return Err(Issue::new("group.generators", "a custom group needs generators"));
                }
                if self.identity && !gens.iter().any(IntegerMatrix::is_identity) {
                    gens.push(IntegerMatrix::identity(gens[0].dim()));
                }
                GroupSpec::new(
                    self.name.clone().unwrap_or_else(|| "custom".into()),
                    gens,
                    self.identity,
                    self.ambient.unwrap_or(Ambient::SpecialLinear),
                    self.exceptional.clone(),
                )
                .map_err(wrap("group.generators"))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PrimesSection {
    /// Explicit primes; takes precedence over the window.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub list: Vec<u64>,
    /// Window `(lower, upper]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub exclude: BTreeSet<u64>,
}

pub const DEFAULT_WINDOW_LOWER: u64 = 3;

impl PrimesSection {
    pub fn lower(&self) -> u64 {
        self.lower.unwrap_or(DEFAULT_WINDOW_LOWER)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum FamilySection {
    PolyZero { polynomial: String },
    /// 1-based indices.
    NonSquareEntry { row: usize, col: usize },
    IrreducibleCharPoly,
    LagrangianSpan { genus: usize },
    /// Keys are primes, values element encodings.
    Explicit { sets: BTreeMap<String, Vec<u64>> },
}

impl FamilySection {
    pub fn build(&self, spec: &GroupSpec) -> std::result::Result<FamilyKind, Issue> {
        let kind = match self {
            FamilySection::PolyZero { polynomial } => FamilyKind::PolyZero {
                polynomial: PolynomialFunction::parse(polynomial, spec.rank())
                    .map_err(|e| Issue::new("family.polynomial", e.to_string()))?,
            },
            FamilySection::NonSquareEntry { row, col } => {
                if *row == 0 || *col == 0 {
                    return Err(Issue::new("family.row", "entry indices are 1-based"));
                }
                FamilyKind::NonSquareEntry { row: row - 1, col: col - 1 }
            }
            FamilySection::IrreducibleCharPoly => FamilyKind::IrreducibleCharPoly,
            FamilySection::LagrangianSpan { genus } => FamilyKind::LagrangianSpan { genus: *genus },
            FamilySection::Explicit { sets } => {
                let mut out = BTreeMap::new();
                for (k, v) in sets {
                    let p: u64 = k
                        .parse()
                        .map_err(|_| Issue::new("family.sets", format!("key {k:?} is not a prime")))?;
                    check_prime(p).map_err(|e| Issue::new("family.sets", e.to_string()))?;
                    out.insert(p, v.clone());
                }
                FamilyKind::Explicit { sets: out }
            }
        };
        kind.check(spec).map_err(|e| Issue::new("family.kind", e.to_string()))?;
        Ok(kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct WalkSection {
    /// Walk length for single-length experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    /// Explicit lengths; otherwise `n-min..=n-max`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// `A` in `Q = A^n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_exact: Option<bool>,
}

fn default_samples() -> usize {
    10_000
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection {
            length: None,
            n_grid: Vec::new(),
            n_min: None,
            n_max: None,
            samples: default_samples(),
            growth_base: None,
            track_exact: None,
        }
    }
}

impl WalkSection {
    pub fn grid(&self) -> std::result::Result<Vec<usize>, Issue> {
        if !self.n_grid.is_empty() {
            return Ok(self.n_grid.clone());
        }
        match (self.n_min, self.n_max) {
            (Some(a), Some(b)) if a <= b => Ok((a..=b).collect()),
            (Some(_), Some(_)) => Err(Issue::new("walk.n-min", "n-min exceeds n-max")),
            _ => Err(Issue::new("walk.n-grid", "set n-grid or both n-min and n-max")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SpectrumSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Last step of exact audits.
    #[serde(default = "default_audit_n")]
    pub n_max: usize,
}

fn default_tol() -> f64 {
    PowerIteration::default().tol
}
fn default_max_iter() -> usize {
    PowerIteration::default().max_iter
}
fn default_audit_n() -> usize {
    60
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            tol: default_tol(),
            max_iter: default_max_iter(),
            n_max: default_audit_n(),
        }
    }
}

impl SpectrumSection {
    pub fn power(&self) -> PowerIteration {
        PowerIteration {
            tol: self.tol,
            max_iter: self.max_iter,
            ..PowerIteration::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SieveSection {
    /// Sieve dimension for the small sieve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Lower bound required of every `δ_p` in the large sieve.
    #[serde(default)]
    pub delta_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<String>,
    /// Truncation point `Q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_moments")]
    pub moments: Vec<u32>,
}

fn default_kappa() -> f64 {
    1.0
}
fn default_moments() -> Vec<u32> {
    vec![1, 2, 3, 4]
}

impl Default for EkSection {
    fn default() -> Self {
        EkSection {
            polynomial: None,
            q: None,
            kappa: default_kappa(),
            moments: default_moments(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BaselineSection {
    #[serde(default = "default_baseline_n")]
    pub n_max: u64,
    #[serde(default = "default_baseline_q")]
    pub q: u64,
    #[serde(default = "default_shifts")]
    pub shifts: Vec<i64>,
}

fn default_baseline_n() -> u64 {
    10_000
}
fn default_baseline_q() -> u64 {
    101
}
fn default_shifts() -> Vec<i64> {
    vec![0, 2]
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            n_max: default_baseline_n(),
            q: default_baseline_q(),
            shifts: default_shifts(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BallSection {
    #[serde(default = "default_radius")]
    pub radius: usize,
    #[serde(default = "default_ball_mode")]
    pub mode: BallMode,
    /// Key elements by exact integer matrices instead of residues mod `primes.list`.
    #[serde(default)]
    pub exact: bool,
    #[serde(default = "default_budget")]
    pub budget: u128,
}

fn default_radius() -> usize {
    4
}
fn default_ball_mode() -> BallMode {
    BallMode::WithMultiplicity
}
fn default_budget() -> u128 {
    crate::walker::DEFAULT_WORD_BUDGET
}

impl Default for BallSection {
    fn default() -> Self {
        BallSection {
            radius: default_radius(),
            mode: default_ball_mode(),
            exact: false,
            budget: default_budget(),
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Base name of the output files; defaults to the experiment kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub group: GroupSection,
    #[serde(default)]
    pub primes: PrimesSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySection>,
    #[serde(default)]
    pub walk: WalkSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub sieve: SieveSection,
    #[serde(default)]
    pub ek: EkSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub ball: BallSection,
}

/// A constraint violation tied to a dotted config key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl Issue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            key: key.into(),
            message: message.into(),
        }
    }

    fn into_error(self, source: Option<&str>) -> Error {
        match source.and_then(|s| locate_key(s, &self.key)) {
            Some((line, col)) => Error::Config(format!(
                "invalid config at line {line}, column {col}: {}: {}",
                self.key, self.message
            )),
            None => Error::Config(format!("invalid config: {}: {}", self.key, self.message)),
        }
    }
}

/// 1-based position of `section.key = ...` (or a top-level key) in `text`.
fn locate_key(text: &str, dotted: &str) -> Option<(usize, usize)> {
    let (section, key) = match dotted.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut section_line = None;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('[') {
            current = rest.trim_end().trim_end_matches(']').trim().to_string();
            if current == section {
                section_line = Some((i + 1, line.len() - trimmed.len() + 1));
            }
            continue;
        }
        if current == section {
            if let Some(rest) = trimmed.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some((i + 1, line.len() - trimmed.len() + 1));
                }
            }
        }
    }
    section_line
}

/// Everything the runner needs, resolved and checked.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub spec: GroupSpec,
    pub family: Option<FamilyKind>,
    /// Explicit list, or the window minus exclusions.
    pub primes: Vec<u64>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, group: GroupSection) -> Self {
        ExperimentConfig {
            name: None,
            experiment,
            seed: 0,
            workers: 0,
            cap: DEFAULT_CAP,
            group,
            primes: PrimesSection::default(),
            family: None,
            walk: WalkSection::default(),
            spectrum: SpectrumSection::default(),
            sieve: SieveSection::default(),
            ek: EkSection::default(),
            baseline: BaselineSection::default(),
            ball: BallSection::default(),
        }
    }

    /// Syntax and schema only; see [`parse_config`] for the full check.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {}", e.to_string().trim_end())))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.experiment.as_str())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<Resolved> {
        self.check().map_err(|i| i.into_error(None))
    }

    /// Like [`validate`](Self::validate), anchoring errors in `source`.
    pub fn validate_against(&self, source: &str) -> Result<Resolved> {
        self.check().map_err(|i| i.into_error(Some(source)))
    }

    fn check(&self) -> std::result::Result<Resolved, Issue> {
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Issue::new("name", format!("{name:?} is not a plain file name")));
            }
        }
        let spec = self.group.build()?;
        for &p in self.primes.list.iter().chain(&self.primes.exclude) {
            check_prime(p).map_err(|e| Issue::new("primes.list", e.to_string()))?;
        }
        let mut seen = BTreeSet::new();
        if let Some(p) = self.primes.list.iter().find(|p| !seen.insert(**p)) {
            return Err(Issue::new("primes.list", format!("prime {p} is listed twice")));
        }
        let kind = self.experiment;
        let primes: Vec<u64> = if !self.primes.list.is_empty() {
            self.primes.list.clone()
        } else if let Some(upper) = self.primes.upper {
            let lower = self.primes.lower();
            if upper > lower {
                primes_in(lower + 1, upper)
                    .into_iter()
                    .filter(|p| !self.primes.exclude.contains(p))
                    .collect()
            } else {
                Vec::new()
            }
        } else {
            Vec::new()
        };
        if kind.sieves() {
            let window = self.primes.list.is_empty();
            for &p in &primes {
                if spec.is_exceptional(p) && !self.primes.exclude.contains(&p) {
                    let key = if window { "primes.upper" } else { "primes.list" };
                    return Err(Issue::new(
                        key,
                        format!(
                            "prime {p} is exceptional for {} and lies in the sieve range; list it in primes.exclude",
                            spec.name()
                        ),
                    ));
                }
            }
        }
        let primes: Vec<u64> = primes.into_iter().filter(|p| !self.primes.exclude.contains(p)).collect();

        let family = match (&self.family, kind.needs_family()) {
            (Some(f), true) => Some(f.build(&spec)?),
            (None, true) => return Err(Issue::new("family", format!("{} needs a [family] table", kind.as_str()))),
            (Some(f), false) => Some(f.build(&spec)?),
            (None, false) => None,
        };

        let need_primes = matches!(
            kind,
            ExperimentKind::Enumerate | ExperimentKind::Spectrum | ExperimentKind::Audit | ExperimentKind::Bounded | ExperimentKind::Densities
        ) || (kind == ExperimentKind::Ball && !self.ball.exact);
        if need_primes && primes.is_empty() {
            return Err(Issue::new("primes.list", "no primes selected"));
        }
        if matches!(kind, ExperimentKind::SmallSieve | ExperimentKind::LargeSieve) {
            self.walk.grid()?;
            if self.walk.samples == 0 {
                return Err(Issue::new("walk.samples", "must be positive"));
            }
            if let Some(a) = self.walk.growth_base {
                if !(a > 1.0 && a.is_finite()) {
                    return Err(Issue::new("walk.growth-base", format!("must exceed 1, got {a}")));
                }
            }
            if !self.primes.list.is_empty() {
                return Err(Issue::new("primes.list", "sampled sieves take a window (lower, A^n], not a list"));
            }
        }
        match kind {
            ExperimentKind::SmallSieve if self.sieve.kappa.is_none() => {
                return Err(Issue::new("sieve.kappa", "the small sieve needs the sieve dimension"));
            }
            ExperimentKind::ErdosKac => {
                if self.walk.length.is_none() {
                    return Err(Issue::new("walk.length", "the Erdős–Kac run needs a walk length"));
                }
                if self.ek.q.is_none() {
                    return Err(Issue::new("ek.q", "the Erdős–Kac run needs the truncation Q"));
                }
                if self.walk.samples == 0 {
                    return Err(Issue::new("walk.samples", "must be positive"));
                }
                if self.ek.polynomial.is_none() && !matches!(self.family, Some(FamilySection::PolyZero { .. })) {
                    return Err(Issue::new("ek.polynomial", "set ek.polynomial or a poly-zero family"));
                }
            }
            ExperimentKind::Ball if self.ball.mode == BallMode::Deduplicated && !self.ball.exact => {
                return Err(Issue::new("ball.mode", "deduplicated balls need ball.exact = true"));
            }
            ExperimentKind::Baseline => {
                if self.baseline.shifts.is_empty() {
                    return Err(Issue::new("baseline.shifts", "at least one shift is needed"));
                }
            }
            _ => {}
        }
        if !(self.spectrum.tol > 0.0) {
            return Err(Issue::new("spectrum.tol", "must be positive"));
        }
        Ok(Resolved { spec, family, primes })
    }

    /// The polynomial of an Erdős–Kac run.
    pub fn ek_polynomial(&self, spec: &GroupSpec) -> Result<PolynomialFunction> {
        match (&self.ek.polynomial, &self.family) {
            (Some(text), _) | (None, Some(FamilySection::PolyZero { polynomial: text })) => {
                PolynomialFunction::parse(text, spec.rank())
            }
            _ => Err(Error::Config("ek.polynomial: missing".into())),
        }
    }
}

/// Parses and validates; every failure names the offending key with its
/// line and column.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_toml(text)?;
    cfg.validate_against(text)?;
    Ok(cfg)
}

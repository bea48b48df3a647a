//! Runs a validated [`ExperimentConfig`] and renders its reports.
//!
//! Every report is a JSON envelope (tool, version, digest of the embedded
//! config, seed, a single `timestamp` field, the result) plus a CSV of the
//! per-row table. Outputs depend only on the config, never on the worker
//! count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, Resolved};
use crate::ekstats::{ek_experiment, EkConfig, EkReport};
use crate::error::{Error, Result};
use crate::par;
use crate::quotient::{classical_group_order, surjectivity_report, ClassicalGroup, FiniteQuotient, SurjectivityRow};
use crate::sieve::{
    bounded_sieve_experiment, classical_integer_sieve, default_growth_base, kappa_profile, lagrangian_report,
    large_sieve_experiment, small_sieve_experiment, square_root_check, trial_division_survivors, BaselineReport,
    DimensionReport, FamilyKind, LagrangianReport, SieveSampling, SquareRootCheck,
};
use crate::spectra::{equidistribution_audit, spectral_radius, SpectrumReport};
use crate::walker::{ball_enumerate, derive_seed, BallKey, BallMode, BallTracking};

/// Bumped whenever a CSV column changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const TOOL: &str = "groupsieve";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    name: &'a str,
    seed: u64,
    config_digest: String,
    csv_schema: String,
    timestamp: u64,
    config: &'a ExperimentConfig,
    result: &'a T,
}

/// Rendered outputs of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub name: String,
    pub report: String,
    pub rows: String,
}

impl RunOutput {
    pub fn report_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.report.json", self.name))
    }

    pub fn rows_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.rows.csv", self.name))
    }

    /// Writes both files through temporaries and renames; nothing partial
    /// is left behind on failure.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let targets = [
            (self.report_path(dir), self.report.as_bytes()),
            (self.rows_path(dir), self.rows.as_bytes()),
        ];
        let mut temps = Vec::new();
        for (target, bytes) in &targets {
            let tmp = dir.join(format!(
                ".{}.tmp",
                target.file_name().expect("file name").to_string_lossy()
            ));
            if let Err(e) = fs::write(&tmp, bytes) {
                temps.iter().for_each(|t: &PathBuf| {
                    let _ = fs::remove_file(t);
                });
                let _ = fs::remove_file(&tmp);
                return Err(e.into());
            }
            temps.push(tmp);
        }
        for (tmp, (target, _)) in temps.iter().zip(&targets) {
            fs::rename(tmp, target)?;
        }
        Ok((targets[0].0.clone(), targets[1].0.clone()))
    }
}

/// The report with its `timestamp` removed, for byte comparisons.
pub fn without_timestamp(report: &str) -> String {
    report
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\":"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_at(cfg, now())
}

/// Validates, runs on `cfg.workers` threads and renders with a fixed timestamp.
pub fn run_experiment_at(cfg: &ExperimentConfig, timestamp: u64) -> Result<RunOutput> {
    let resolved = cfg.validate()?;
    par::with_workers(cfg.workers, || dispatch(cfg, &resolved, timestamp))
}

fn render<T: Serialize, R: Serialize>(cfg: &ExperimentConfig, timestamp: u64, result: &T, rows: &[R]) -> Result<RunOutput> {
    let envelope = Envelope {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.as_str(),
        name: cfg.name(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        csv_schema: format!("{}/v{CSV_SCHEMA_VERSION}", cfg.experiment.as_str()),
        timestamp,
        config: cfg,
        result,
    };
    let mut report = serde_json::to_string_pretty(&envelope)?;
    report.push('\n');
    Ok(RunOutput {
        name: cfg.name().to_string(),
        report,
        rows: csv_rows(rows)?,
    })
}

pub fn csv_rows<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn join(primes: &[u64]) -> String {
    primes.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Serialize)]
struct EnumerateRow {
    primes: String,
    order: u64,
    ambient_order: String,
    surjective: bool,
}

#[derive(Serialize)]
pub struct EnumerateResult {
    pub group: String,
    pub primes: Vec<u64>,
    pub order: u64,
    pub modulus: String,
    pub per_prime: Vec<SurjectivityRow>,
    /// `Π |Γ_p|`.
    pub product_of_orders: u64,
    pub multiplicative: bool,
}

#[derive(Serialize)]
struct SpectrumRow {
    primes: String,
    order: usize,
    spectral_radius: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    bipartite: bool,
    trivial: bool,
}

impl From<&SpectrumReport> for SpectrumRow {
    fn from(r: &SpectrumReport) -> Self {
        SpectrumRow {
            primes: join(&r.primes),
            order: r.order,
            spectral_radius: r.spectral_radius,
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
            bipartite: r.bipartite,
            trivial: r.trivial,
        }
    }
}

#[derive(Serialize)]
struct MomentCsvRow {
    quantity: &'static str,
    order: u32,
    walk: f64,
    walk_se: f64,
    oracle: f64,
    oracle_se: f64,
    delta: f64,
    joint_se: f64,
    normal_target: f64,
}

#[derive(Serialize)]
pub struct BaselineResult {
    pub sieve: BaselineReport,
    pub oracle_matches: bool,
    pub square_root: SquareRootCheck,
}

#[derive(Serialize)]
struct SurvivorRow {
    n: u64,
}

#[derive(Serialize)]
pub struct BallResult {
    pub group: String,
    pub mode: BallMode,
    pub radius: usize,
    pub tracking: String,
    pub distinct: usize,
    pub total: u64,
}

#[derive(Serialize)]
struct BallRow {
    key: String,
    multiplicity: u64,
}

#[derive(Serialize)]
pub struct DensitiesResult {
    pub dimension: DimensionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<LagrangianReport>,
}

fn sampling(cfg: &ExperimentConfig, resolved: &Resolved) -> Result<SieveSampling> {
    let n_grid = cfg.walk.grid().map_err(|i| Error::Config(format!("{}: {}", i.key, i.message)))?;
    let lower = cfg.primes.lower();
    let growth_base = match cfg.walk.growth_base {
        Some(a) => a,
        None => {
            let n_max = *n_grid.iter().max().expect("non-empty grid");
            default_growth_base(&resolved.spec, lower, &cfg.primes.exclude, n_max, cfg.cap)?
        }
    };
    Ok(SieveSampling {
        n_grid,
        growth_base,
        lower,
        excluded: cfg.primes.exclude.clone(),
        samples: cfg.walk.samples,
        seed: cfg.seed,
        workers: cfg.workers,
        cap: cfg.cap,
    })
}

fn family(resolved: &Resolved) -> &FamilyKind {
    resolved.family.as_ref().expect("validated")
}

fn dispatch(cfg: &ExperimentConfig, resolved: &Resolved, ts: u64) -> Result<RunOutput> {
    let spec = &resolved.spec;
    let primes = &resolved.primes;
    let power = cfg.spectrum.power();
    match cfg.experiment {
        ExperimentKind::Enumerate => {
            let q = FiniteQuotient::enumerate(spec, primes, cfg.cap)?;
            let per_prime = surjectivity_report(spec, primes, cfg.cap)?;
            let product: u64 = per_prime.iter().map(|r| r.order).product();
            let mut rows: Vec<EnumerateRow> = per_prime
                .iter()
                .map(|r| EnumerateRow {
                    primes: r.prime.to_string(),
                    order: r.order,
                    ambient_order: r.ambient_order.clone(),
                    surjective: r.surjective,
                })
                .collect();
            if primes.len() > 1 {
                let group = ClassicalGroup::of(spec);
                let ambient: num_bigint::BigUint = primes.iter().map(|&p| classical_group_order(group, p)).product();
                rows.push(EnumerateRow {
                    primes: join(primes),
                    order: q.order() as u64,
                    surjective: num_bigint::BigUint::from(q.order()) == ambient,
                    ambient_order: ambient.to_string(),
                });
            }
            let result = EnumerateResult {
                group: spec.name().to_string(),
                primes: primes.clone(),
                order: q.order() as u64,
                modulus: q.modulus().to_string(),
                per_prime,
                product_of_orders: product,
                multiplicative: q.order() as u64 == product,
            };
            render(cfg, ts, &result, &rows)
        }
        ExperimentKind::Spectrum => {
            let mut reports = Vec::new();
            for &p in primes {
                reports.push(spectral_radius(&FiniteQuotient::enumerate(spec, &[p], cfg.cap)?, &power)?);
            }
            if primes.len() > 1 {
                reports.push(spectral_radius(&FiniteQuotient::enumerate(spec, primes, cfg.cap)?, &power)?);
            }
            let rows: Vec<SpectrumRow> = reports.iter().map(SpectrumRow::from).collect();
            render(cfg, ts, &reports, &rows)
        }
        ExperimentKind::Audit => {
            let q = FiniteQuotient::enumerate(spec, primes, cfg.cap)?;
            let report = equidistribution_audit(&q, cfg.spectrum.n_max, &power)?;
            render(cfg, ts, &report, &report.rows)
        }
        ExperimentKind::Bounded => {
            let report = bounded_sieve_experiment(spec, family(resolved), primes, cfg.spectrum.n_max, &power, cfg.cap)?;
            render(cfg, ts, &report, &report.rows)
        }
        ExperimentKind::SmallSieve => {
            let kappa = cfg.sieve.kappa.expect("validated");
            let report = small_sieve_experiment(spec, family(resolved), &sampling(cfg, resolved)?, kappa)?;
            render(cfg, ts, &report, &report.rows)
        }
        ExperimentKind::LargeSieve => {
            let report = large_sieve_experiment(
                spec,
                family(resolved),
                &sampling(cfg, resolved)?,
                cfg.sieve.delta_floor,
                &power,
            )?;
            render(cfg, ts, &report, &report.rows)
        }
        ExperimentKind::ErdosKac => {
            let mut ek = EkConfig::new(
                spec.clone(),
                cfg.ek_polynomial(spec)?,
                cfg.walk.length.expect("validated"),
                cfg.ek.q.expect("validated"),
                cfg.ek.kappa,
                cfg.walk.samples,
                derive_seed(cfg.seed, 0xe4),
            );
            ek.workers = cfg.workers;
            ek.track_exact = cfg.walk.track_exact.unwrap_or(ek.n <= 200);
            ek.moment_orders = cfg.ek.moments.clone();
            ek.cap = cfg.cap;
            let report: EkReport = ek_experiment(&ek)?;
            let rows: Vec<MomentCsvRow> = [("count", &report.counts), ("statistic", &report.statistics)]
                .into_iter()
                .flat_map(|(quantity, m)| {
                    m.rows.iter().map(move |r| MomentCsvRow {
                        quantity,
                        order: r.order,
                        walk: r.walk,
                        walk_se: r.walk_se,
                        oracle: r.oracle,
                        oracle_se: r.oracle_se,
                        delta: r.delta,
                        joint_se: r.joint_se,
                        normal_target: r.normal_target,
                    })
                })
                .collect();
            render(cfg, ts, &report, &rows)
        }
        ExperimentKind::Baseline => {
            let b = &cfg.baseline;
            let sieve = classical_integer_sieve(b.n_max, b.q, &b.shifts)?;
            let oracle_matches = sieve.survivors == trial_division_survivors(b.n_max, b.q, &b.shifts);
            let rows: Vec<SurvivorRow> = sieve.survivors.iter().map(|&n| SurvivorRow { n }).collect();
            let result = BaselineResult {
                square_root: square_root_check(&sieve),
                sieve,
                oracle_matches,
            };
            render(cfg, ts, &result, &rows)
        }
        ExperimentKind::Ball => {
            let tracking = if cfg.ball.exact {
                BallTracking::Exact
            } else {
                BallTracking::Residues(primes.clone())
            };
            let table = ball_enumerate(spec, cfg.ball.radius, cfg.ball.mode, &tracking, cfg.ball.budget)?;
            let rows: Vec<BallRow> = table
                .entries
                .iter()
                .map(|e| BallRow {
                    key: match &e.key {
                        BallKey::Exact(v) => v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "),
                        BallKey::Residues(v) => join(v),
                    },
                    multiplicity: e.multiplicity,
                })
                .collect();
            let result = BallResult {
                group: spec.name().to_string(),
                mode: table.mode,
                radius: table.radius,
                tracking: if cfg.ball.exact { "exact".into() } else { format!("mod {}", join(primes)) },
                distinct: table.entries.len(),
                total: table.total(),
            };
            render(cfg, ts, &result, &rows)
        }
        ExperimentKind::Densities => {
            let kind = family(resolved);
            let dimension = kappa_profile(kind, spec, primes, cfg.cap)?;
            let lagrangian = match kind {
                FamilyKind::LagrangianSpan { .. } => Some(lagrangian_report(spec, primes, cfg.cap)?),
                _ => None,
            };
            let result = DensitiesResult { lagrangian, dimension };
            render(cfg, ts, &result, &result.dimension.rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(text: &str) -> ExperimentConfig {
        parse_config(text).unwrap()
    }

    const ENUM: &str = "experiment = \"enumerate\"\n[group]\npreset = \"lubotzky\"\nk = 3\n[primes]\nlist = [5]\n";

    #[test]
    fn enumerate_report() {
        let out = run_experiment_at(&cfg(ENUM), 7).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.report).unwrap();
        assert_eq!(v["result"]["order"], 120);
        assert_eq!(v["timestamp"], 7);
        assert_eq!(v["seed"], 0);
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(v["config_digest"].as_str().unwrap().len(), 64);
        assert!(out.rows.starts_with("primes,order,ambient_order,surjective\n5,120,120,true"));
    }

    #[test]
    fn embedded_config_reproduces() {
        let c = cfg(ENUM);
        let out = run_experiment_at(&c, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.report).unwrap();
        let back: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
        let again = run_experiment_at(&back, 2).unwrap();
        assert_eq!(without_timestamp(&out.report), without_timestamp(&again.report));
        assert_ne!(out.report, again.report);
    }

    #[test]
    fn bounded_limit() {
        let text = "experiment = \"bounded\"\n[group]\npreset = \"lubotzky\"\nk = 3\nidentity = true\n[primes]\nlist = [5, 7]\n[family]\nkind = \"poly-zero\"\npolynomial = \"a^2 + d^2\"\n[spectrum]\nn-max = 10\n";
        let out = run_experiment_at(&cfg(text), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.report).unwrap();
        assert!((v["result"]["limit"].as_f64().unwrap() - 0.6875).abs() < 1e-15);
        assert_eq!(out.rows.lines().count(), 12);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let text = "experiment = \"small-sieve\"\nseed = 11\n[group]\npreset = \"lubotzky\"\nk = 3\nidentity = true\n[family]\nkind = \"poly-zero\"\npolynomial = \"a^2 + d^2\"\n[walk]\nn-grid = [4, 8]\nsamples = 3000\ngrowth-base = 2.0\n[sieve]\nkappa = 1.0\n[primes]\nexclude = [3]\n";
        let mut c = cfg(text);
        c.workers = 1;
        let a = run_experiment_at(&c, 0).unwrap();
        c.workers = 3;
        let b = run_experiment_at(&c, 0).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn write_then_rename() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment_at(&cfg(ENUM), 0).unwrap();
        let (json, csv) = out.write(dir.path()).unwrap();
        assert!(json.ends_with("enumerate.report.json") && csv.ends_with("enumerate.rows.csv"));
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn infeasible_is_flagged() {
        let mut c = cfg(ENUM);
        c.cap = 10;
        assert!(run_experiment_at(&c, 0).unwrap_err().is_infeasible());
    }

    #[test]
    fn baseline_and_ball() {
        let text = "experiment = \"baseline\"\n[group]\npreset = \"lubotzky\"\nk = 3\n[baseline]\nn-max = 2000\nq = 43\n";
        let out = run_experiment_at(&cfg(text), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.report).unwrap();
        assert_eq!(v["result"]["oracle_matches"], true);
        let text = "experiment = \"ball\"\n[group]\npreset = \"lubotzky\"\nk = 3\n[primes]\nlist = [5]\n[ball]\nradius = 8\n";
        let out = run_experiment_at(&cfg(text), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.report).unwrap();
        assert_eq!(v["result"]["total"], 65536);
        assert!(v["result"]["distinct"].as_u64().unwrap() <= 120);
    }
}

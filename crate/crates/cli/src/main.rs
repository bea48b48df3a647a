use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groupsieve::config::{ExperimentConfig, ExperimentKind, FamilySection, GroupPreset, GroupSection};
use groupsieve::runner::run_experiment;
use groupsieve::walker::BallMode;
use groupsieve::Error;

#[derive(Parser)]
#[command(name = "groupsieve", version, about = "Sieve experiments in finitely generated matrix groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever experiment the config names.
    Run(Common),
    /// Congruence quotients by BFS.
    Enumerate(Common),
    /// Spectral radius of the Markov operator on each quotient.
    Spectrum(Common),
    /// Exact equidistribution audit against `ρⁿ`.
    Audit(Common),
    /// Bounded, small or large sieve.
    Sieve {
        #[arg(long, value_enum)]
        mode: SieveMode,
        #[command(flatten)]
        common: Common,
    },
    /// Erdős–Kac statistics along the walk.
    Ek(Common),
    /// Classical sieve on the integers.
    Baseline(Common),
    /// Word-ball enumeration.
    Ball(Common),
    /// Exact densities and the sieve dimension.
    Densities(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum SieveMode {
    Bounded,
    Small,
    Large,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Lubotzky,
    Sl2Standard,
    Symplectic,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    PolyZero,
    NonSquareEntry,
    IrreducibleCharPoly,
    LagrangianSpan,
}

#[derive(Clone, Copy, ValueEnum)]
enum BallModeArg {
    WithMultiplicity,
    Deduplicated,
}

/// Flags mirror config keys and override them.
#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Directory for `<name>.report.json` and `<name>.rows.csv`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,

    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    k: Option<i64>,
    #[arg(long)]
    genus: Option<usize>,
    #[arg(long)]
    identity: bool,

    #[arg(long, value_delimiter = ',')]
    primes: Option<Vec<u64>>,
    #[arg(long)]
    lower: Option<u64>,
    #[arg(long)]
    upper: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<u64>>,

    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Polynomial in entries `a b c d` (rank 2) or `x11 x12 ...`.
    #[arg(long)]
    polynomial: Option<String>,
    /// 1-based entry row.
    #[arg(long)]
    row: Option<usize>,
    #[arg(long)]
    col: Option<usize>,
    #[arg(long)]
    family_genus: Option<usize>,

    /// Walk length.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// `A` in `Q = A^n`.
    #[arg(long)]
    growth_base: Option<f64>,
    #[arg(long)]
    track_exact: Option<bool>,

    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Last step of exact audits and bounded sieves.
    #[arg(long)]
    audit_n: Option<usize>,

    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    delta_floor: Option<f64>,
    /// Truncation `Q` for `ek`, sieving limit for `baseline`.
    #[arg(long)]
    q: Option<u64>,
    #[arg(long)]
    baseline_n: Option<u64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    shifts: Option<Vec<i64>>,

    #[arg(long)]
    radius: Option<usize>,
    #[arg(long, value_enum)]
    ball_mode: Option<BallModeArg>,
    #[arg(long)]
    exact: bool,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn load(kind: Option<ExperimentKind>, c: &Common) -> Result<(ExperimentConfig, Option<String>), Error> {
    let (mut cfg, source) = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
            (ExperimentConfig::from_toml(&text)?, Some(text))
        }
        None => {
            let kind = kind.ok_or_else(|| invalid("`run` needs --config"))?;
            // the integer baseline never touches the group
            let preset = match (c.preset, kind) {
                (Some(p), _) => p,
                (None, ExperimentKind::Baseline) => PresetArg::Lubotzky,
                (None, _) => return Err(invalid("group.preset: pass --preset or --config")),
            };
            let preset = match preset {
                PresetArg::Lubotzky => GroupPreset::Lubotzky,
                PresetArg::Sl2Standard => GroupPreset::Sl2Standard,
                PresetArg::Symplectic => GroupPreset::Symplectic,
            };
            let mut group = GroupSection::preset(preset);
            if c.preset.is_none() {
                group.k = Some(3);
            }
            (ExperimentConfig::new(kind, group), None)
        }
    };
    if let Some(kind) = kind {
        if c.config.is_some() && cfg.experiment != kind {
            return Err(invalid(format!(
                "experiment: config says {} but the subcommand asks for {}",
                cfg.experiment.as_str(),
                kind.as_str()
            )));
        }
        cfg.experiment = kind;
    }
    overlay(&mut cfg, c)?;
    Ok((cfg, source))
}

fn overlay(cfg: &mut ExperimentConfig, c: &Common) -> Result<(), Error> {
    macro_rules! set {
        ($flag:expr => $slot:expr) => {
            if let Some(v) = $flag.clone() {
                $slot = v;
            }
        };
    }
    if c.name.is_some() {
        cfg.name = c.name.clone();
    }
    set!(c.seed => cfg.seed);
    set!(c.workers => cfg.workers);
    set!(c.cap => cfg.cap);
    if c.k.is_some() {
        cfg.group.k = c.k;
    }
    if c.genus.is_some() {
        cfg.group.genus = c.genus;
    }
    cfg.group.identity |= c.identity;
    set!(c.primes => cfg.primes.list);
    if c.lower.is_some() {
        cfg.primes.lower = c.lower;
    }
    if c.upper.is_some() {
        cfg.primes.upper = c.upper;
    }
    if let Some(ex) = &c.exclude {
        cfg.primes.exclude = ex.iter().copied().collect();
    }

    let ek = cfg.experiment == ExperimentKind::ErdosKac;
    if let Some(f) = c.family {
        let need = |v: Option<usize>, key: &str| v.ok_or_else(|| invalid(format!("family.{key}: missing flag --{key}")));
        cfg.family = Some(match f {
            FamilyArg::PolyZero => FamilySection::PolyZero {
                polynomial: c
                    .polynomial
                    .clone()
                    .ok_or_else(|| invalid("family.polynomial: missing flag --polynomial"))?,
            },
            FamilyArg::NonSquareEntry => FamilySection::NonSquareEntry {
                row: need(c.row, "row")?,
                col: need(c.col, "col")?,
            },
            FamilyArg::IrreducibleCharPoly => FamilySection::IrreducibleCharPoly,
            FamilyArg::LagrangianSpan => FamilySection::LagrangianSpan {
                genus: c.family_genus.ok_or_else(|| invalid("family.genus: missing flag --family-genus"))?,
            },
        });
    } else if let Some(p) = &c.polynomial {
        match &mut cfg.family {
            Some(FamilySection::PolyZero { polynomial }) => *polynomial = p.clone(),
            _ if ek => {}
            _ => return Err(invalid("--polynomial needs --family poly-zero")),
        }
    }
    if ek && c.polynomial.is_some() {
        cfg.ek.polynomial = c.polynomial.clone();
    }

    if c.n.is_some() {
        cfg.walk.length = c.n;
    }
    set!(c.n_grid => cfg.walk.n_grid);
    if c.n_min.is_some() || c.n_max.is_some() {
        cfg.walk.n_grid.clear();
        cfg.walk.n_min = c.n_min.or(cfg.walk.n_min);
        cfg.walk.n_max = c.n_max.or(cfg.walk.n_max);
    }
    set!(c.samples => cfg.walk.samples);
    if c.growth_base.is_some() {
        cfg.walk.growth_base = c.growth_base;
    }
    if c.track_exact.is_some() {
        cfg.walk.track_exact = c.track_exact;
    }
    set!(c.tol => cfg.spectrum.tol);
    set!(c.max_iter => cfg.spectrum.max_iter);
    set!(c.audit_n => cfg.spectrum.n_max);
    if c.kappa.is_some() {
        if ek {
            cfg.ek.kappa = c.kappa.unwrap();
        } else {
            cfg.sieve.kappa = c.kappa;
        }
    }
    set!(c.delta_floor => cfg.sieve.delta_floor);
    if let Some(q) = c.q {
        match cfg.experiment {
            ExperimentKind::Baseline => cfg.baseline.q = q,
            _ => cfg.ek.q = Some(q),
        }
    }
    set!(c.baseline_n => cfg.baseline.n_max);
    set!(c.shifts => cfg.baseline.shifts);
    set!(c.radius => cfg.ball.radius);
    if let Some(m) = c.ball_mode {
        cfg.ball.mode = match m {
            BallModeArg::WithMultiplicity => BallMode::WithMultiplicity,
            BallModeArg::Deduplicated => BallMode::Deduplicated,
        };
    }
    cfg.ball.exact |= c.exact;
    Ok(())
}

fn execute(kind: Option<ExperimentKind>, common: &Common) -> Result<(), Error> {
    let (cfg, source) = load(kind, common)?;
    match &source {
        Some(text) => cfg.validate_against(text)?,
        None => cfg.validate()?,
    };
    let out = run_experiment(&cfg)?;
    let (json, csv) = out.write(&common.out_dir)?;
    println!("{}", json.display());
    println!("{}", csv.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::Run(c) => (None, c),
        Command::Enumerate(c) => (Some(ExperimentKind::Enumerate), c),
        Command::Spectrum(c) => (Some(ExperimentKind::Spectrum), c),
        Command::Audit(c) => (Some(ExperimentKind::Audit), c),
        Command::Sieve { mode, common } => (
            Some(match mode {
                SieveMode::Bounded => ExperimentKind::Bounded,
                SieveMode::Small => ExperimentKind::SmallSieve,
                SieveMode::Large => ExperimentKind::LargeSieve,
            }),
            common,
        ),
        Command::Ek(c) => (Some(ExperimentKind::ErdosKac), c),
        Command::Baseline(c) => (Some(ExperimentKind::Baseline), c),
        Command::Ball(c) => (Some(ExperimentKind::Ball), c),
        Command::Densities(c) => (Some(ExperimentKind::Densities), c),
    };
    match execute(kind, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groupsieve: {e}");
            if e.is_infeasible() || matches!(e, Error::Io(_)) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

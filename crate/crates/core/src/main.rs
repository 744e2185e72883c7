use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cellfree_ba::config::{AssignmentKind, PatternKind, Profile, SimConfig};
use cellfree_ba::estimators::Estimator;
use cellfree_ba::harness::output::{write_detection_csv, write_mobility_csv, write_result, write_sinr_csv, Metadata};
use cellfree_ba::harness::trial::{beacon_fading, beacon_observables, beacon_resources, trial_assignment, trial_scenario};
use cellfree_ba::harness::validate::run_validation;
use cellfree_ba::harness::{run_detection, run_mobility, run_sinr, BeamSource, Direction, Variant};
use cellfree_ba::harness::metrics::median;
use cellfree_ba::channel::BeamspaceDict;
use cellfree_ba::resources::{mean_same_tuple_distance, Assignment};
use cellfree_ba::{Error, Result};

#[derive(Parser)]
#[command(name = "cfba", version, about = "Cell-free mmWave beam-alignment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with SimConfig keys, applied on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(clap::ValueEnum, Clone, Copy, PartialEq, Eq)]
enum EstimatorArg {
    Sco,
    Mco,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Sco => Estimator::Sco,
            EstimatorArg::Mco => Estimator::Mco,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum PatternArg {
    PilotLess,
    PilotBased,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum AssignmentArg {
    Lba,
    Ra,
}

#[derive(Subcommand)]
enum Command {
    /// Detection probability versus the number of beacon slots.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Beacon slot counts.
        #[arg(long = "slots", value_delimiter = ',', default_value = "5,10,20,40")]
        slots: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "mco")]
        estimator: Vec<EstimatorArg>,
        /// Defaults to the configured pattern kind.
        #[arg(long, value_enum, value_delimiter = ',')]
        patterns: Vec<PatternArg>,
        /// Defaults to the configured assignment.
        #[arg(long, value_enum, value_delimiter = ',')]
        assignment: Vec<AssignmentArg>,
        /// Also write the observable tensor of trial 0 (first slot count) as a binary dump.
        #[arg(long)]
        dump_observables: bool,
    },
    /// DL/UL SINR per UE and subcarrier, estimated beams against perfect CSI.
    Sinr {
        #[command(flatten)]
        common: Common,
        #[arg(long = "slots", default_value_t = 40)]
        slots: usize,
        #[arg(long, value_enum, default_value = "mco")]
        estimator: EstimatorArg,
    },
    /// Per-frame detection with moving UEs and MCO tracking.
    Mobility {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        /// Maximum UE speed in m/s.
        #[arg(long, default_value_t = 5.0)]
        v_max: f64,
        /// Forgetting factor in (0, 1].
        #[arg(long, default_value_t = 0.95)]
        lambda_f: f64,
    },
    /// Runs the data-pattern assignment on one topology and exports it.
    Assign {
        #[command(flatten)]
        common: Common,
        /// Topology index (trial number) to use.
        #[arg(long, default_value_t = 0)]
        topology: u64,
        /// Read and check an exported assignment instead of computing one.
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Runs the invariant self-check suite.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<SimConfig> {
    let base = SimConfig::profile(match common.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    });
    let mut cfg = match &common.config {
        Some(path) => SimConfig::overlay_toml(&base, &std::fs::read_to_string(path)?)?,
        None => base,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn pattern_kind(p: PatternArg) -> PatternKind {
    match p {
        PatternArg::PilotLess => PatternKind::PilotLess,
        PatternArg::PilotBased => PatternKind::PilotBased,
    }
}

fn assignment_kind(a: AssignmentArg) -> AssignmentKind {
    match a {
        AssignmentArg::Lba => AssignmentKind::Location,
        AssignmentArg::Ra => AssignmentKind::Random,
    }
}

fn detect(common: &Common, slots: &[usize], estimators: &[EstimatorArg], patterns: &[PatternArg], assignment: &[AssignmentArg], dump: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let patterns: Vec<PatternKind> = if patterns.is_empty() { vec![cfg.patterns] } else { patterns.iter().map(|&p| pattern_kind(p)).collect() };
    let assignments: Vec<AssignmentKind> =
        if assignment.is_empty() { vec![cfg.assignment] } else { assignment.iter().map(|&a| assignment_kind(a)).collect() };
    let mut variants = Vec::new();
    for &e in estimators {
        for &p in &patterns {
            for &a in &assignments {
                variants.push(Variant::new(e.into(), p, a));
            }
        }
    }
    let points = run_detection(&cfg, slots, &variants)?;
    for p in &points {
        println!(
            "{:<24} T={:<3} p_detect={:.4} [{:.4}, {:.4}] scored={} excluded={}",
            p.variant.label(),
            p.slots,
            p.p.p,
            p.p.lo,
            p.p.hi,
            p.tally.scored,
            p.tally.excluded
        );
    }
    let excluded: u64 = points.first().map_or(0, |p| p.tally.excluded);
    let meta = Metadata::new("detect", &cfg).note("excluded_ues", excluded).note("slots", slots.to_vec());
    let path = write_result(&common.out, "detection", &meta, |w| write_detection_csv(w, &points))?;
    println!("wrote {}", path.display());
    if dump {
        dump_observables(&cfg, variants[0], slots[0], &common.out)?;
    }
    Ok(())
}

fn dump_observables(cfg: &SimConfig, variant: Variant, slots: usize, out: &Path) -> Result<()> {
    let cfg = variant.apply(cfg, slots);
    let scenario = trial_scenario(&cfg, cfg.seed, 0)?;
    let assignment = trial_assignment(&cfg, &scenario, cfg.seed, 0)?;
    let res = beacon_resources(&cfg, cfg.seed, 0, 0)?;
    let fading = beacon_fading(&cfg, &scenario, cfg.seed, 0, 0)?;
    let dict = BeamspaceDict::new(cfg.ap_antennas, cfg.ue_antennas);
    let tensor = beacon_observables(&cfg, &scenario, &fading, &res, &assignment, &dict, cfg.seed, 0, 0)?;
    let path = out.join("observables.bin");
    tensor.write_dump(std::io::BufWriter::new(std::fs::File::create(&path)?), cfg.seed, &cfg.hash())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sinr(common: &Common, slots: usize, estimator: EstimatorArg) -> Result<()> {
    let cfg = load_config(common)?;
    let result = run_sinr(&cfg, slots, estimator.into())?;
    for dir in [Direction::Dl, Direction::Ul] {
        for src in [BeamSource::Estimated(estimator.into()), BeamSource::PerfectCsi] {
            let med = median(&result.values(dir, src)).unwrap_or(f64::NAN);
            println!("{} {:<12} median SINR {:.2} dB", dir.as_str(), src.label(), med);
        }
    }
    let meta = Metadata::new("sinr", &cfg)
        .note("slots", slots)
        .note("short_estimated", result.short_estimated)
        .note("short_baseline", result.short_baseline);
    let path = write_result(&common.out, "sinr", &meta, |w| write_sinr_csv(w, &result))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn mobility(common: &Common, frames: usize, v_max: f64, lambda_f: f64) -> Result<()> {
    let cfg = load_config(common)?;
    let points = run_mobility(&cfg, frames, v_max, lambda_f)?;
    for p in &points {
        println!("frame {:<3} p_detect={:.4} [{:.4}, {:.4}]", p.frame, p.p.p, p.p.lo, p.p.hi);
    }
    let meta = Metadata::new("mobility", &cfg).note("frames", frames).note("v_max", v_max).note("lambda_f", lambda_f);
    let path = write_result(&common.out, "mobility", &meta, |w| write_mobility_csv(w, &points))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn assign(common: &Common, topology: u64, import: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    let scenario = trial_scenario(&cfg, cfg.seed, topology)?;
    let assignment = match import {
        Some(path) => {
            let a = Assignment::from_text(&std::fs::read_to_string(path)?)?;
            if a.num_aps() != scenario.num_aps() {
                return Err(Error::Dimension(format!("file has {} APs, topology has {}", a.num_aps(), scenario.num_aps())));
            }
            a
        }
        None => trial_assignment(&cfg, &scenario, cfg.seed, topology)?,
    };
    match mean_same_tuple_distance(&assignment, &scenario.ap_positions) {
        Some(d) => println!("mean distance to nearest same-tuple AP: {d:.2} m"),
        None => println!("every AP holds a distinct tuple"),
    }
    if import.is_none() {
        std::fs::create_dir_all(&common.out)?;
        let path = common.out.join("assignment.txt");
        std::fs::write(&path, assignment.to_text())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn validate(common: &Common) -> Result<bool> {
    let cfg = load_config(common)?;
    let checks = run_validation(&cfg)?;
    for c in &checks {
        println!("{} {:<26} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Detect { common, slots, estimator, patterns, assignment, dump_observables } => {
            detect(common, slots, estimator, patterns, assignment, *dump_observables).map(|_| true)
        }
        Command::Sinr { common, slots, estimator } => sinr(common, *slots, *estimator).map(|_| true),
        Command::Mobility { common, frames, v_max, lambda_f } => mobility(common, *frames, *v_max, *lambda_f).map(|_| true),
        Command::Assign { common, topology, import } => assign(common, *topology, import.as_deref()).map(|_| true),
        Command::Validate { common } => validate(common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

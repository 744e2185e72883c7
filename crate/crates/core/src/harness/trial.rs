//! One Monte Carlo trial of the beacon phase: resources, synthesis,
//! estimation, reports and scoring.

use rayon::prelude::*;

use crate::channel::{BeamspaceDict, FadingState};
use crate::config::{AssignmentKind, NoiseKnowledge, PatternKind, SimConfig};
use crate::datalink::{build_report, EstimateReport, TrueLink};
use crate::error::{Error, Result};
use crate::estimators::{estimate_ue, Estimator};
use crate::observables::{synthesize, BeaconInputs, ObservableTensor};
use crate::resources::{assign_lb, assign_random, enumerate_patterns, pilot_matrix, ue_codebook, Assignment, PatternPlan, PilotMatrix, UeCodebook};
use crate::rng::{label, substream};
use crate::scenario::{generate_scenario, Scenario};

/// Estimator plus the two resource options that define a detection curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub estimator: Estimator,
    pub patterns: PatternKind,
    pub assignment: AssignmentKind,
}

impl Variant {
    pub fn new(estimator: Estimator, patterns: PatternKind, assignment: AssignmentKind) -> Self {
        Variant { estimator, patterns, assignment }
    }

    pub fn patterns_label(&self) -> &'static str {
        match self.patterns {
            PatternKind::PilotLess => "pilot-less",
            PatternKind::PilotBased => "pilot-based",
        }
    }

    pub fn assignment_label(&self) -> &'static str {
        match self.assignment {
            AssignmentKind::Location => "lba",
            AssignmentKind::Random => "ra",
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.estimator, self.patterns_label(), self.assignment_label())
    }

    /// `cfg` with this variant's resource options and `slots` beacon slots.
    pub fn apply(&self, cfg: &SimConfig, slots: usize) -> SimConfig {
        SimConfig { patterns: self.patterns, assignment: self.assignment, beacon_slots: slots, ..cfg.clone() }
    }
}

pub fn trial_scenario(cfg: &SimConfig, seed: u64, trial: u64) -> Result<Scenario> {
    generate_scenario(cfg, &mut substream(seed, &[label::SCENARIO, trial]))
}

pub fn trial_assignment(cfg: &SimConfig, scenario: &Scenario, seed: u64, trial: u64) -> Result<Assignment> {
    match cfg.assignment {
        AssignmentKind::Location => assign_lb(
            &scenario.ap_positions,
            scenario.area_side,
            cfg.num_patterns(),
            cfg.num_pilots(),
            cfg.lba_max_iters,
        ),
        AssignmentKind::Random => Ok(assign_random(
            scenario.num_aps(),
            cfg.num_patterns(),
            cfg.num_pilots(),
            &mut substream(seed, &[label::ASSIGNMENT, trial]),
        )),
    }
}

/// Beam supports and pilots of one BA phase.
pub struct BeaconResources {
    pub plan: PatternPlan,
    pub codebooks: Vec<UeCodebook>,
    pub pilots: PilotMatrix,
}

/// `stream` separates the BA phases of one trial (frames under mobility).
pub fn beacon_resources(cfg: &SimConfig, seed: u64, trial: u64, stream: u64) -> Result<BeaconResources> {
    let plan = enumerate_patterns(
        cfg.subcarriers,
        cfg.subcarriers_per_chain,
        cfg.ap_rf_chains,
        cfg.beacon_slots,
        cfg.ap_antennas,
        cfg.ap_fingers,
        cfg.subcarrier_layout,
        &mut substream(seed, &[label::PATTERNS, trial, stream]),
    )?;
    let mut rng = substream(seed, &[label::CODEBOOK, trial, stream]);
    let codebooks = (0..cfg.num_ues)
        .map(|_| ue_codebook(cfg.ue_antennas, cfg.ue_fingers, cfg.beacon_slots, cfg.ue_rf_chains, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let pilots = pilot_matrix(cfg.symbols_per_slot, cfg.beta())?;
    Ok(BeaconResources { plan, codebooks, pilots })
}

pub fn beacon_fading(cfg: &SimConfig, scenario: &Scenario, seed: u64, trial: u64, stream: u64) -> Result<Vec<FadingState>> {
    FadingState::sequence(
        scenario,
        cfg.fading_coefficient(),
        cfg.beacon_slots,
        &mut substream(seed, &[label::FADING, trial, stream]),
    )
}

/// Synthesizes the observable tensor of one BA phase.
#[allow(clippy::too_many_arguments)]
pub fn beacon_observables(
    cfg: &SimConfig,
    scenario: &Scenario,
    fading: &[FadingState],
    res: &BeaconResources,
    assignment: &Assignment,
    dict: &BeamspaceDict,
    seed: u64,
    trial: u64,
    stream: u64,
) -> Result<ObservableTensor> {
    let inputs = BeaconInputs {
        scenario,
        fading,
        plan: &res.plan,
        assignment,
        pilots: &res.pilots,
        codebooks: &res.codebooks,
        dict,
        beta: cfg.beta(),
        noise_var: cfg.noise_var(),
        freq_step_hz: cfg.freq_step_hz(),
        estimate_noise: cfg.noise_knowledge == NoiseKnowledge::EmptySubcarriers,
    };
    synthesize(&inputs, &mut substream(seed, &[label::NOISE, trial, stream]))
}

/// Everything a static BA phase produced.
pub struct BeaconRun {
    pub assignment: Assignment,
    pub resources: BeaconResources,
    pub fading: Vec<FadingState>,
    pub tensor: ObservableTensor,
    pub reports: Vec<EstimateReport>,
}

/// Runs one static BA phase on `scenario`; `cfg` already carries the variant's
/// resource options and slot count.
pub fn run_beacon(cfg: &SimConfig, estimator: Estimator, scenario: &Scenario, dict: &BeamspaceDict, seed: u64, trial: u64) -> Result<BeaconRun> {
    let assignment = trial_assignment(cfg, scenario, seed, trial)?;
    let resources = beacon_resources(cfg, seed, trial, 0)?;
    let fading = beacon_fading(cfg, scenario, seed, trial, 0)?;
    let tensor = beacon_observables(cfg, scenario, &fading, &resources, &assignment, dict, seed, trial, 0)?;
    let reports = (0..scenario.num_ues())
        .into_par_iter()
        .map(|k| {
            let grids = estimate_ue(estimator, &tensor, k, &resources.plan.patterns, &resources.codebooks[k], cfg.ap_antennas)?;
            Ok(build_report(k, scenario.ue_positions[k], &grids))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeaconRun { assignment, resources, fading, tensor, reports })
}

/// True iff, for each of the best APs, the report entry of that AP's tuple
/// carries exactly the quantized (AoA, AoD) of its strongest path.
pub fn detection_success(report: &EstimateReport, truth: &[TrueLink], assignment: &Assignment) -> bool {
    truth.iter().all(|t| {
        let (d, l) = assignment.tuple(t.ap);
        report.entry(d, l).is_some_and(|e| e.h == t.h && e.hp == t.hp)
    })
}

/// Successes and scored UEs of one BA phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub successes: u64,
    pub scored: u64,
    /// UEs left out because fewer than `N_D` APs reach them.
    pub excluded: u64,
}

impl Tally {
    pub fn add(&mut self, other: Tally) {
        self.successes += other.successes;
        self.scored += other.scored;
        self.excluded += other.excluded;
    }
}

pub fn score(reports: &[EstimateReport], truth: &[Option<Vec<TrueLink>>], assignment: &Assignment) -> Result<Tally> {
    if reports.len() != truth.len() {
        return Err(Error::Dimension(format!("{} reports for {} UEs", reports.len(), truth.len())));
    }
    let mut t = Tally::default();
    for (rep, tr) in reports.iter().zip(truth) {
        match tr {
            Some(links) => {
                t.scored += 1;
                t.successes += u64::from(detection_success(rep, links, assignment));
            }
            None => t.excluded += 1,
        }
    }
    Ok(t)
}

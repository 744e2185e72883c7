//! Detection over consecutive frames with moving UEs and MCO tracking.

use rand::Rng;
use rayon::prelude::*;

use crate::channel::BeamspaceDict;
use crate::config::SimConfig;
use crate::datalink::{build_report, true_best_links};
use crate::error::{Error, Result};
use crate::estimators::{mco_slot_matrices, McoTracker};
use crate::harness::metrics::Proportion;
use crate::harness::trial::{beacon_fading, beacon_observables, beacon_resources, score, trial_assignment, trial_scenario, Tally};
use crate::rng::{label, substream};
use crate::scenario::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityPoint {
    /// 1-based frame index.
    pub frame: usize,
    pub v_max: f64,
    pub forgetting: f64,
    pub tally: Tally,
    pub p: Proportion,
}

/// Folds a coordinate back into `[0, side]` as if reflected by the walls.
pub fn reflect(x: f64, side: f64) -> f64 {
    let period = 2.0 * side;
    let r = x.rem_euclid(period);
    if r > side {
        period - r
    } else {
        r
    }
}

/// One step of the mobility law: fresh heading and speed `U(0, v_max)`, then a
/// straight move of `speed * dt` with reflecting walls.
pub fn move_ue<R: Rng + ?Sized>(p: Point, v_max: f64, dt: f64, side: f64, rng: &mut R) -> Point {
    if v_max <= 0.0 {
        return p;
    }
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let dist = rng.random_range(0.0..v_max) * dt;
    Point::new(reflect(p.x + dist * heading.cos(), side), reflect(p.y + dist * heading.sin(), side))
}

/// Frame duration `T_BA + T_D` in seconds.
pub fn frame_duration(cfg: &SimConfig) -> f64 {
    cfg.ba_duration() + cfg.data_duration_s
}

/// `frames` consecutive BA phases per trial; frame `r` is scored on the
/// tracked MCO grid `C_r`.
pub fn run_mobility(cfg: &SimConfig, frames: usize, v_max: f64, forgetting: f64) -> Result<Vec<MobilityPoint>> {
    let cfg = SimConfig { ue_speed_mps: v_max, forgetting_factor: forgetting, ..cfg.clone() };
    cfg.validate()?;
    McoTracker::new(forgetting)?;
    if cfg.trials == 0 || frames == 0 {
        return Err(Error::Config("at least one trial and one frame are needed".into()));
    }
    let dict = BeamspaceDict::new(cfg.ap_antennas, cfg.ue_antennas);
    let seed = cfg.seed;
    let dt = frame_duration(&cfg);

    let per_trial: Vec<Vec<Tally>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut scenario = trial_scenario(&cfg, seed, trial)?;
            let assignment = trial_assignment(&cfg, &scenario, seed, trial)?;
            let mut walk = substream(seed, &[label::MOBILITY, trial]);
            let mut trackers: Vec<Vec<Vec<McoTracker>>> = (0..cfg.num_ues)
                .map(|_| {
                    (0..assignment.num_patterns)
                        .map(|_| (0..assignment.num_pilots).map(|_| McoTracker::new(forgetting)).collect::<Result<_>>())
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?;
            let mut tallies = Vec::with_capacity(frames);
            for r in 0..frames {
                if r > 0 {
                    let moved: Vec<Point> = scenario
                        .ue_positions
                        .iter()
                        .map(|&p| move_ue(p, v_max, dt, scenario.area_side, &mut walk))
                        .collect();
                    scenario.relocate_ues(&moved, &cfg)?;
                }
                let stream = r as u64;
                let res = beacon_resources(&cfg, seed, trial, stream)?;
                let fading = beacon_fading(&cfg, &scenario, seed, trial, stream)?;
                let tensor = beacon_observables(&cfg, &scenario, &fading, &res, &assignment, &dict, seed, trial, stream)?;
                let mut reports = Vec::with_capacity(cfg.num_ues);
                for (k, per_ue) in trackers.iter_mut().enumerate() {
                    let mut grids = Vec::with_capacity(assignment.num_patterns);
                    for (d, per_pattern) in per_ue.iter_mut().enumerate() {
                        let mut row = Vec::with_capacity(assignment.num_pilots);
                        for (l, tracker) in per_pattern.iter_mut().enumerate() {
                            let slots = mco_slot_matrices(tensor.stacked(k, d, l), &res.plan.patterns[d], &res.codebooks[k], cfg.ap_antennas)?;
                            tracker.push_frame(&slots)?;
                            row.push(tracker.grid().expect("frame pushed"));
                        }
                        grids.push(row);
                    }
                    reports.push(build_report(k, scenario.ue_positions[k], &grids));
                }
                let truth = true_best_links(&scenario, cfg.serving_aps, cfg.ap_antennas, cfg.ue_antennas);
                tallies.push(score(&reports, &truth, &assignment)?);
            }
            Ok(tallies)
        })
        .collect::<Result<_>>()?;

    Ok((0..frames)
        .map(|r| {
            let mut tally = Tally::default();
            for t in &per_trial {
                tally.add(t[r]);
            }
            MobilityPoint { frame: r + 1, v_max, forgetting, tally, p: Proportion::new(tally.successes, tally.scored) }
        })
        .collect())
}

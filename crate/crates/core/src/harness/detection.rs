//! Detection probability versus the number of beacon slots.

use rayon::prelude::*;

use crate::channel::BeamspaceDict;
use crate::config::SimConfig;
use crate::datalink::true_best_links;
use crate::error::{Error, Result};
use crate::harness::metrics::Proportion;
use crate::harness::trial::{run_beacon, score, trial_scenario, Tally, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPoint {
    pub variant: Variant,
    pub slots: usize,
    pub num_patterns: usize,
    pub per_chain: usize,
    pub serving_aps: usize,
    pub trials: usize,
    pub tally: Tally,
    pub p: Proportion,
}

/// Runs every (T, variant) pair on the same `cfg.trials` scenarios.
pub fn run_detection(cfg: &SimConfig, slot_counts: &[usize], variants: &[Variant]) -> Result<Vec<DetectionPoint>> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Err(Error::Config("at least one trial is needed".into()));
    }
    if slot_counts.is_empty() || variants.is_empty() {
        return Err(Error::Config("no slot counts or variants to run".into()));
    }
    let runs: Vec<(usize, Variant, SimConfig)> = slot_counts
        .iter()
        .flat_map(|&t| variants.iter().map(move |v| (t, *v)))
        .map(|(t, v)| {
            let c = v.apply(cfg, t);
            c.validate().map(|_| (t, v, c))
        })
        .collect::<Result<_>>()?;
    let dict = BeamspaceDict::new(cfg.ap_antennas, cfg.ue_antennas);
    let seed = cfg.seed;

    let per_trial: Vec<Vec<Tally>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let scenario = trial_scenario(cfg, seed, trial)?;
            let truth = true_best_links(&scenario, cfg.serving_aps, cfg.ap_antennas, cfg.ue_antennas);
            runs.iter()
                .map(|(_, v, c)| {
                    let run = run_beacon(c, v.estimator, &scenario, &dict, seed, trial)?;
                    score(&run.reports, &truth, &run.assignment)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(runs
        .iter()
        .enumerate()
        .map(|(i, (t, v, c))| {
            let mut tally = Tally::default();
            for tr in &per_trial {
                tally.add(tr[i]);
            }
            DetectionPoint {
                variant: *v,
                slots: *t,
                num_patterns: c.num_patterns(),
                per_chain: c.subcarriers_per_chain,
                serving_aps: c.serving_aps,
                trials: cfg.trials,
                tally,
                p: Proportion::new(tally.successes, tally.scored),
            }
        })
        .collect())
}

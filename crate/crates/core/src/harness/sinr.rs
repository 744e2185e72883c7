//! Per-subcarrier DL and UL SINR with estimated beams and with the
//! perfect-CSI baseline.

use rayon::prelude::*;

use crate::channel::BeamspaceDict;
use crate::config::{dbw_to_watts, SimConfig};
use crate::datalink::{associate, dl_power_alloc, dl_sinr, perfect_csi_baseline, ul_power_alloc, ul_sinr, AssociationMap, DataChannel};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::harness::metrics::to_db;
use crate::harness::trial::{run_beacon, trial_scenario};
use crate::rng::{label, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Dl,
    Ul,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Dl => "dl",
            Direction::Ul => "ul",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamSource {
    Estimated(Estimator),
    PerfectCsi,
}

impl BeamSource {
    pub fn label(&self) -> String {
        match self {
            BeamSource::Estimated(e) => e.to_string(),
            BeamSource::PerfectCsi => "perfect-csi".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrSample {
    pub direction: Direction,
    pub source: BeamSource,
    /// `trial * K + k`.
    pub ue: usize,
    pub subcarrier: usize,
    pub sinr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SinrResult {
    pub samples: Vec<SinrSample>,
    /// UEs (over all trials) served by fewer than `N_D` APs, per beam source.
    pub short_estimated: usize,
    pub short_baseline: usize,
}

impl SinrResult {
    pub fn values(&self, direction: Direction, source: BeamSource) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.direction == direction && s.source == source)
            .map(|s| s.sinr_db)
            .collect()
    }
}

fn evaluate(
    map: &AssociationMap,
    ch: &DataChannel<'_>,
    cfg: &SimConfig,
    source: BeamSource,
    trial: usize,
    out: &mut Vec<SinrSample>,
) {
    let noise = cfg.noise_var();
    let eta_dl = dl_power_alloc(map, dbw_to_watts(cfg.p_dl_dbw));
    let eta_ul = ul_power_alloc(map, cfg.serving_aps, dbw_to_watts(cfg.p_ul_dbw));
    let k_count = map.num_ues();
    for k in 0..k_count {
        for q in 0..cfg.subcarriers {
            let ue = trial * k_count + k;
            let dl = dl_sinr(k, q, ch, map, &eta_dl, noise);
            out.push(SinrSample { direction: Direction::Dl, source, ue, subcarrier: q, sinr_db: to_db(dl) });
            let ul = ul_sinr(k, q, ch, map, &eta_ul, noise, cfg.ul_interference);
            out.push(SinrSample { direction: Direction::Ul, source, ue, subcarrier: q, sinr_db: to_db(ul) });
        }
    }
}

/// BA with `estimator` over `slots` beacon slots, then data-phase SINR for the
/// estimated association and the perfect-CSI one, on the same channel.
pub fn run_sinr(cfg: &SimConfig, slots: usize, estimator: Estimator) -> Result<SinrResult> {
    let cfg = SimConfig { beacon_slots: slots, ..cfg.clone() };
    cfg.validate()?;
    if cfg.trials == 0 {
        return Err(Error::Config("at least one trial is needed".into()));
    }
    let dict = BeamspaceDict::new(cfg.ap_antennas, cfg.ue_antennas);
    let seed = cfg.seed;
    let per_trial: Vec<(Vec<SinrSample>, usize, usize)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let t = trial as u64;
            let scenario = trial_scenario(&cfg, seed, t)?;
            let run = run_beacon(&cfg, estimator, &scenario, &dict, seed, t)?;
            let last = run.fading.last().expect("at least one beacon slot");
            let data_fading = last.next(&scenario, &mut substream(seed, &[label::DATA_FADING, t]))?;
            let ch = DataChannel::new(&scenario, &data_fading, &dict, cfg.freq_step_hz());
            let est = associate(&run.reports, &scenario.ap_positions, &run.assignment, cfg.serving_aps);
            let base = perfect_csi_baseline(&scenario, &run.assignment, cfg.serving_aps, cfg.ap_antennas, cfg.ue_antennas);
            let mut out = Vec::new();
            evaluate(&est, &ch, &cfg, BeamSource::Estimated(estimator), trial, &mut out);
            evaluate(&base, &ch, &cfg, BeamSource::PerfectCsi, trial, &mut out);
            let short = |m: &AssociationMap| m.short.iter().filter(|&&s| s).count();
            Ok((out, short(&est), short(&base)))
        })
        .collect::<Result<_>>()?;
    let mut result = SinrResult::default();
    for (samples, se, sb) in per_trial {
        result.samples.extend(samples);
        result.short_estimated += se;
        result.short_baseline += sb;
    }
    Ok(result)
}

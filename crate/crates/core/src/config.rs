//! Simulation configuration.
//!
//! The on-disk format is flat TOML. Every physical quantity carries its unit
//! in the key name (`_m`, `_hz`, `_s`, `_db`, `_dbw`, `_dbm_hz`, `_mps`).
//! Keys that are omitted fall back to the desk profile.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    /// APs sharing a data-pattern transmit a constant signal.
    PilotLess,
    /// APs sharing a data-pattern are separated by orthogonal length-S pilots.
    PilotBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentKind {
    /// Capacity-constrained k-means followed by latitude ordering.
    Location,
    Random,
}

/// Frequency used for subcarrier `q` in the delay phase term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyAxis {
    /// `q / t0`, with `t0` the full symbol duration including the cyclic prefix.
    SymbolDuration,
    /// `q * delta_f`.
    SubcarrierSpacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubcarrierLayout {
    /// Fresh disjoint random subcarrier sets in every beacon slot.
    Random,
    /// Fixed contiguous blocks, identical in every slot.
    Contiguous,
}

/// What the UE uses as the noise floor in the NNLS offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKnowledge {
    Known,
    /// Sample power on subcarriers not occupied by any data-pattern.
    EmptySubcarriers,
}

/// Which association variable weights the uplink interference term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UlInterference {
    /// `a[k][m]` of the victim UE, as printed in the uplink SINR expression.
    Victim,
    /// `a[j][m] * a[k][m]`: only APs serving both the victim and the interferer.
    Interferer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// Scatterer-mediated multipath with blockage.
    Scatterers,
    /// One path per link with AoA/AoD drawn on the beamspace grids.
    OnGridSinglePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub area_side_m: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub num_scatterers: usize,
    pub ap_antennas: usize,
    pub ue_antennas: usize,
    pub ap_rf_chains: usize,
    pub ue_rf_chains: usize,
    pub subcarriers: usize,
    pub subcarriers_per_chain: usize,
    pub symbols_per_slot: usize,
    pub beacon_slots: usize,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub symbol_duration_s: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub p_ba_dbw: f64,
    pub p_dl_dbw: f64,
    pub p_ul_dbw: f64,
    pub ap_fingers: usize,
    pub ue_fingers: usize,
    pub serving_aps: usize,
    pub pathloss_exponent: f64,
    pub shadow_sigma_db: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub seed: u64,
    pub trials: usize,

    pub patterns: PatternKind,
    pub assignment: AssignmentKind,
    pub direct_path: bool,
    pub channel_mode: ChannelMode,
    pub noiseless: bool,
    /// Slot-to-slot AR(1) fading coefficient; the profiles redraw the gains every
    /// slot (0). When absent it is derived from `ue_speed_mps` and the slot length.
    pub fading_rho: Option<f64>,
    pub ue_speed_mps: f64,
    pub frequency_axis: FrequencyAxis,
    pub subcarrier_layout: SubcarrierLayout,
    pub noise_knowledge: NoiseKnowledge,
    pub ul_interference: UlInterference,
    pub lba_max_iters: usize,

    /// Beam-alignment phase duration. Defaults to `t0 * S * T`.
    pub ba_duration_s: Option<f64>,
    pub data_duration_s: f64,
    pub forgetting_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::desk()
    }
}

impl SimConfig {
    /// Small profile that keeps a full Monte Carlo sweep within minutes.
    pub fn desk() -> Self {
        SimConfig {
            area_side_m: 250.0,
            num_aps: 20,
            num_ues: 5,
            num_scatterers: 2000,
            ap_antennas: 16,
            ue_antennas: 8,
            ap_rf_chains: 4,
            ue_rf_chains: 2,
            subcarriers: 64,
            subcarriers_per_chain: 2,
            ..SimConfig::paper()
        }
        .with_fingers(4, 2)
        .with_trials(200)
    }

    /// Full-size setup: 50 APs, 10 UEs, 400 m x 400 m, 28 GHz.
    pub fn paper() -> Self {
        SimConfig {
            area_side_m: 400.0,
            num_aps: 50,
            num_ues: 10,
            num_scatterers: 5000,
            ap_antennas: 32,
            ue_antennas: 16,
            ap_rf_chains: 8,
            ue_rf_chains: 4,
            subcarriers: 256,
            subcarriers_per_chain: 4,
            symbols_per_slot: 8,
            beacon_slots: 20,
            carrier_hz: 28e9,
            subcarrier_spacing_hz: 480e3,
            symbol_duration_s: 2.23e-6,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            p_ba_dbw: 10.0,
            p_dl_dbw: 10.0,
            p_ul_dbw: 3.0,
            ap_fingers: 8,
            ue_fingers: 4,
            serving_aps: 1,
            pathloss_exponent: 3.19,
            shadow_sigma_db: 8.2,
            ap_height_m: 10.0,
            ue_height_m: 1.65,
            seed: 1,
            trials: 200,
            patterns: PatternKind::PilotLess,
            assignment: AssignmentKind::Location,
            direct_path: false,
            channel_mode: ChannelMode::Scatterers,
            noiseless: false,
            fading_rho: Some(0.0),
            ue_speed_mps: 0.0,
            frequency_axis: FrequencyAxis::SymbolDuration,
            subcarrier_layout: SubcarrierLayout::Random,
            noise_knowledge: NoiseKnowledge::Known,
            ul_interference: UlInterference::Victim,
            lba_max_iters: 100,
            ba_duration_s: None,
            data_duration_s: 0.45,
            forgetting_factor: 0.95,
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn with_fingers(mut self, ap: usize, ue: usize) -> Self {
        self.ap_fingers = ap;
        self.ue_fingers = ue;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_aps", self.num_aps),
            ("num_ues", self.num_ues),
            ("ap_antennas", self.ap_antennas),
            ("ue_antennas", self.ue_antennas),
            ("ap_rf_chains", self.ap_rf_chains),
            ("ue_rf_chains", self.ue_rf_chains),
            ("subcarriers", self.subcarriers),
            ("subcarriers_per_chain", self.subcarriers_per_chain),
            ("symbols_per_slot", self.symbols_per_slot),
            ("beacon_slots", self.beacon_slots),
            ("ap_fingers", self.ap_fingers),
            ("ue_fingers", self.ue_fingers),
            ("serving_aps", self.serving_aps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.num_patterns() == 0 {
            return Err(Error::Config(format!(
                "no data-pattern fits: floor(floor({} / {}) / {}) = 0",
                self.subcarriers, self.subcarriers_per_chain, self.ap_rf_chains
            )));
        }
        if self.ap_fingers > self.ap_antennas || self.ue_fingers > self.ue_antennas {
            return Err(Error::Config("active fingers exceed antenna count".into()));
        }
        if self.ap_rf_chains > self.ap_antennas || self.ue_rf_chains > self.ue_antennas {
            return Err(Error::Config("RF chains exceed antenna count".into()));
        }
        let positive = [
            ("area_side_m", self.area_side_m),
            ("carrier_hz", self.carrier_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("symbol_duration_s", self.symbol_duration_s),
            ("pathloss_exponent", self.pathloss_exponent),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(self.shadow_sigma_db.is_finite() && self.shadow_sigma_db >= 0.0) {
            return Err(Error::Config("shadow_sigma_db must be non-negative".into()));
        }
        if let Some(rho) = self.fading_rho {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config("fading_rho must lie in [0, 1]".into()));
            }
        }
        if !(self.forgetting_factor > 0.0 && self.forgetting_factor <= 1.0) {
            return Err(Error::Config("forgetting_factor must lie in (0, 1]".into()));
        }
        if self.ue_speed_mps < 0.0 || !self.ue_speed_mps.is_finite() {
            return Err(Error::Config("ue_speed_mps must be non-negative".into()));
        }
        if self.noise_knowledge == NoiseKnowledge::EmptySubcarriers
            && self.num_patterns() * self.ap_rf_chains * self.subcarriers_per_chain >= self.subcarriers
        {
            return Err(Error::Config("noise estimation needs idle subcarriers, but every subcarrier is occupied".into()));
        }
        if self.patterns == PatternKind::PilotBased && !self.symbols_per_slot.is_power_of_two() {
            return Err(Error::Config(
                "pilot-based patterns need symbols_per_slot to be a power of two".into(),
            ));
        }
        Ok(())
    }

    /// Number of data-patterns `D = floor(floor(N_C / Q) / n_AP)`.
    pub fn num_patterns(&self) -> usize {
        (self.subcarriers / self.subcarriers_per_chain.max(1)) / self.ap_rf_chains.max(1)
    }

    /// Number of pilot sequences in use: `S` when pilot-based, otherwise one.
    pub fn num_pilots(&self) -> usize {
        match self.patterns {
            PatternKind::PilotLess => 1,
            PatternKind::PilotBased => self.symbols_per_slot,
        }
    }

    /// Number of distinct (pattern, pilot) tuples handed out by the assignment.
    pub fn num_tuples(&self) -> usize {
        self.num_patterns() * self.num_pilots()
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Per-subcarrier, per-symbol beacon power `beta = P_BA / N_C` in watts.
    pub fn beta(&self) -> f64 {
        dbw_to_watts(self.p_ba_dbw) / self.subcarriers as f64
    }

    /// Thermal noise power per subcarrier sample in watts.
    pub fn noise_var(&self) -> f64 {
        if self.noiseless {
            return 0.0;
        }
        let dbm = self.noise_psd_dbm_hz + self.noise_figure_db + 10.0 * self.subcarrier_spacing_hz.log10();
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn slot_duration_s(&self) -> f64 {
        match self.ba_duration_s {
            Some(t_ba) => t_ba / self.beacon_slots as f64,
            None => self.symbol_duration_s * self.symbols_per_slot as f64,
        }
    }

    pub fn ba_duration(&self) -> f64 {
        self.slot_duration_s() * self.beacon_slots as f64
    }

    /// AR(1) coefficient between consecutive beacon slots.
    pub fn fading_coefficient(&self) -> f64 {
        if let Some(rho) = self.fading_rho {
            return rho;
        }
        let tc = coherence_time(self.carrier_hz, self.ue_speed_mps);
        if tc.is_infinite() {
            1.0
        } else {
            (1.0 - self.slot_duration_s() / tc).max(0.0)
        }
    }

    /// Frequency step between subcarriers in the delay phase term.
    pub fn freq_step_hz(&self) -> f64 {
        match self.frequency_axis {
            FrequencyAxis::SymbolDuration => 1.0 / self.symbol_duration_s,
            FrequencyAxis::SubcarrierSpacing => self.subcarrier_spacing_hz,
        }
    }

    /// Frequency in Hz used for subcarrier `q`.
    pub fn subcarrier_frequency(&self, q: usize) -> f64 {
        q as f64 * self.freq_step_hz()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Applies the keys present in `text` on top of `base`.
    pub fn overlay_toml(base: &SimConfig, text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(&toml::to_string(base)?)?;
        let over: toml::Table = toml::from_str(text)?;
        for (k, v) in over {
            table.insert(k, v);
        }
        let cfg: SimConfig = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

/// Maximum Doppler shift `f0 * v / c`.
pub fn max_doppler(carrier_hz: f64, speed_mps: f64) -> f64 {
    carrier_hz * speed_mps / SPEED_OF_LIGHT
}

/// Channel coherence time `sqrt(9 / (16 pi f_D^2))`; infinite for a static UE.
pub fn coherence_time(carrier_hz: f64, speed_mps: f64) -> f64 {
    let fd = max_doppler(carrier_hz, speed_mps);
    if fd <= 0.0 {
        return f64::INFINITY;
    }
    (9.0 / (16.0 * std::f64::consts::PI * fd * fd)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_counts_match_captions() {
        let mut cfg = SimConfig::paper();
        assert_eq!(cfg.num_patterns(), 8);
        cfg.subcarriers_per_chain = 2;
        assert_eq!(cfg.num_patterns(), 16);
        cfg.patterns = PatternKind::PilotBased;
        assert_eq!(cfg.num_tuples(), 128);
    }

    #[test]
    fn doppler_and_coherence_at_28ghz() {
        let fd = max_doppler(28e9, 10.0);
        assert!((fd - 933.3).abs() < 1.0, "fd = {fd}");
        let tc = coherence_time(28e9, 10.0);
        assert!((tc - 0.453e-3).abs() < 1e-6, "tc = {tc}");
        assert!(coherence_time(28e9, 0.0).is_infinite());
    }

    #[test]
    fn static_ue_gives_block_fading() {
        assert_eq!(SimConfig::desk().fading_coefficient(), 0.0);
        let cfg = SimConfig { fading_rho: None, ..SimConfig::desk() };
        assert_eq!(cfg.fading_coefficient(), 1.0);
        let moving = SimConfig { ue_speed_mps: 10.0, ..cfg };
        let rho = moving.fading_coefficient();
        assert!(rho > 0.9 && rho < 1.0);
    }

    #[test]
    fn noise_power_per_subcarrier() {
        let cfg = SimConfig::paper();
        // -174 + 9 + 10 log10(480e3) = -108.19 dBm
        let dbm = 10.0 * (cfg.noise_var() * 1e3).log10();
        assert!((dbm + 108.19).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = SimConfig::desk();
        cfg.subcarriers_per_chain = 64;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::desk();
        cfg.ap_fingers = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::desk();
        cfg.num_ues = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = SimConfig::paper();
        cfg.fading_rho = Some(0.25);
        cfg.patterns = PatternKind::PilotBased;
        let back = SimConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_toml_falls_back_to_desk() {
        let cfg = SimConfig::from_toml("num_aps = 7\nseed = 42\n").unwrap();
        assert_eq!(cfg.num_aps, 7);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.ap_antennas, SimConfig::desk().ap_antennas);
    }

    #[test]
    fn overlay_keeps_base_profile() {
        let cfg = SimConfig::overlay_toml(&SimConfig::paper(), "num_ues = 3\npatterns = \"pilot-based\"\n").unwrap();
        assert_eq!(cfg.num_ues, 3);
        assert_eq!(cfg.patterns, PatternKind::PilotBased);
        assert_eq!(cfg.ap_antennas, 32);
        assert!(SimConfig::overlay_toml(&SimConfig::paper(), "bogus = 1\n").is_err());
    }
}

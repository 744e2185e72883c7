//! From estimates to served links: reports, user-centric association, power
//! allocation and per-subcarrier DL/UL SINR.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use crate::channel::{quantize_angle, BeamspaceDict, FadingState};
use crate::config::UlInterference;
use crate::estimators::{top_paths, EstimateGrid, Provenance};
use crate::resources::Assignment;
use crate::scenario::{Point, Scenario};

/// Strongest entry of the grid of one (pattern, pilot) tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportEntry {
    pub pattern: usize,
    pub pilot: usize,
    /// Strength indicator: value of the selected grid entry.
    pub rho: f64,
    /// UE (receive) beam index.
    pub h: usize,
    /// AP (transmit) beam index.
    pub hp: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub ue: usize,
    pub position: Point,
    /// One entry per tuple, pattern-major.
    pub entries: Vec<ReportEntry>,
}

impl EstimateReport {
    pub fn entry(&self, pattern: usize, pilot: usize) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.pattern == pattern && e.pilot == pilot)
    }
}

/// `grids[d][l]`; a pilot-less run has a single pilot column.
pub fn build_report(ue: usize, position: Point, grids: &[Vec<EstimateGrid>]) -> EstimateReport {
    let mut entries = Vec::new();
    for (d, row) in grids.iter().enumerate() {
        for (l, g) in row.iter().enumerate() {
            let (h, hp, rho) = top_paths(g, 1).expect("grids are non-empty")[0];
            entries.push(ReportEntry { pattern: d, pilot: l, rho: rho.max(0.0), h, hp });
        }
    }
    EstimateReport { ue, position, entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServedLink {
    pub ap: usize,
    pub tuple: (usize, usize),
    pub ap_beam: usize,
    pub ue_beam: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMap {
    pub num_aps: usize,
    /// Served links of every UE in decreasing strength order.
    pub links: Vec<Vec<ServedLink>>,
    /// UEs that got fewer than `N_D` links.
    pub short: Vec<bool>,
}

impl AssociationMap {
    pub fn num_ues(&self) -> usize {
        self.links.len()
    }

    pub fn a(&self, k: usize, m: usize) -> bool {
        self.links[k].iter().any(|l| l.ap == m)
    }

    pub fn link(&self, k: usize, m: usize) -> Option<&ServedLink> {
        self.links[k].iter().find(|l| l.ap == m)
    }

    /// Number of UEs served by AP `m`.
    pub fn load(&self, m: usize) -> usize {
        (0..self.num_ues()).filter(|&k| self.a(k, m)).count()
    }
}

/// Picks the `n_d` strongest reported tuples (zero strength never counts) and
/// maps each to the nearest AP that holds it.
pub fn associate(reports: &[EstimateReport], ap_positions: &[Point], assignment: &Assignment, n_d: usize) -> AssociationMap {
    let mut links = Vec::with_capacity(reports.len());
    let mut short = Vec::with_capacity(reports.len());
    for rep in reports {
        let mut order: Vec<&ReportEntry> = rep.entries.iter().filter(|e| e.rho > 0.0).collect();
        // Stable: equal strengths keep the (pattern, pilot) order.
        order.sort_by(|a, b| b.rho.total_cmp(&a.rho));
        let mut mine: Vec<ServedLink> = Vec::new();
        for e in order {
            if mine.len() == n_d {
                break;
            }
            let holders = assignment.aps_with_tuple(e.pattern, e.pilot);
            let nearest = holders.iter().copied().min_by(|&a, &b| {
                ap_positions[a]
                    .distance(&rep.position)
                    .total_cmp(&ap_positions[b].distance(&rep.position))
                    .then(a.cmp(&b))
            });
            if let Some(ap) = nearest {
                mine.push(ServedLink { ap, tuple: (e.pattern, e.pilot), ap_beam: e.hp, ue_beam: e.h });
            }
        }
        short.push(mine.len() < n_d);
        links.push(mine);
    }
    AssociationMap { num_aps: ap_positions.len(), links, short }
}

/// `eta[k][m] = P_DL / (UEs served by m)` on served links, zero elsewhere.
pub fn dl_power_alloc(map: &AssociationMap, p_dl_w: f64) -> Array2<f64> {
    let loads: Vec<usize> = (0..map.num_aps).map(|m| map.load(m)).collect();
    let mut eta = Array2::zeros((map.num_ues(), map.num_aps));
    for (k, links) in map.links.iter().enumerate() {
        for l in links {
            eta[(k, l.ap)] = p_dl_w / loads[l.ap] as f64;
        }
    }
    eta
}

/// Per-UE stream power `P_UL / N_D` for each of its beams.
pub fn ul_power_alloc(map: &AssociationMap, n_d: usize, p_ul_w: f64) -> Vec<Vec<f64>> {
    map.links.iter().map(|l| vec![p_ul_w / n_d as f64; l.len()]).collect()
}

/// Beamformed gains `v_h^H H_{k,m}(q) u_{h'}` with DFT-column beams, computed
/// from per-path dictionary projections.
pub struct DataChannel<'a> {
    scenario: &'a Scenario,
    fading: &'a FadingState,
    freq_step_hz: f64,
    /// `[k][m][path]` -> (W_UE^H a_UE, W_AP^H a_AP)
    proj: Vec<Vec<Vec<(Array1<C64>, Array1<C64>)>>>,
}

impl<'a> DataChannel<'a> {
    pub fn new(scenario: &'a Scenario, fading: &'a FadingState, dict: &BeamspaceDict, freq_step_hz: f64) -> Self {
        let proj = (0..scenario.num_ues())
            .map(|k| {
                (0..scenario.num_aps())
                    .map(|m| {
                        scenario
                            .link(k, m)
                            .paths
                            .iter()
                            .map(|p| (dict.ue_beamspace(p.aoa), dict.ap_beamspace(p.aod)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        DataChannel { scenario, fading, freq_step_hz, proj }
    }

    pub fn gain(&self, k: usize, m: usize, h: usize, hp: usize, q: usize) -> C64 {
        let f = q as f64 * self.freq_step_hz;
        self.scenario
            .link(k, m)
            .paths
            .iter()
            .zip(&self.proj[k][m])
            .zip(&self.fading.alpha[k][m])
            .map(|((p, (bu, ba)), a)| a * C64::cis(-2.0 * PI * f * p.delay_s) * bu[h] * ba[hp].conj())
            .sum()
    }
}

/// Linear DL SINR of UE `k` on subcarrier `q`; zero when `k` is unserved.
pub fn dl_sinr(k: usize, q: usize, ch: &DataChannel<'_>, map: &AssociationMap, eta: &Array2<f64>, noise_var: f64) -> f64 {
    let mine = &map.links[k];
    if mine.is_empty() {
        return 0.0;
    }
    // Combined UE beam sum_n v_{k,n} against AP beam `hp` of AP `m`.
    let combined = |m: usize, hp: usize| -> C64 { mine.iter().map(|v| ch.gain(k, m, v.ue_beam, hp, q)).sum() };
    let desired: C64 = mine.iter().map(|l| combined(l.ap, l.ap_beam) * eta[(k, l.ap)].sqrt()).sum();
    let interference: f64 = (0..map.num_ues())
        .filter(|&j| j != k)
        .map(|j| {
            map.links[j]
                .iter()
                .map(|l| combined(l.ap, l.ap_beam) * eta[(j, l.ap)].sqrt())
                .sum::<C64>()
                .norm_sqr()
        })
        .sum();
    desired.norm_sqr() / (interference + noise_var * mine.len() as f64)
}

/// Linear UL SINR of UE `k` on subcarrier `q` after combining at its serving APs.
pub fn ul_sinr(
    k: usize,
    q: usize,
    ch: &DataChannel<'_>,
    map: &AssociationMap,
    eta: &[Vec<f64>],
    noise_var: f64,
    reading: UlInterference,
) -> f64 {
    let mine = &map.links[k];
    if mine.is_empty() {
        return 0.0;
    }
    // u_{k,m}^H H_{j,m}^H sum_n sqrt(eta_{j,n}) v_{j,n}
    let received = |j: usize, m: usize, hp: usize| -> C64 {
        map.links[j]
            .iter()
            .zip(&eta[j])
            .map(|(v, e)| ch.gain(j, m, v.ue_beam, hp, q).conj() * e.sqrt())
            .sum()
    };
    let desired: C64 = mine.iter().map(|l| received(k, l.ap, l.ap_beam)).sum();
    let interference: f64 = (0..map.num_ues())
        .filter(|&j| j != k)
        .map(|j| {
            mine.iter()
                .filter(|l| reading == UlInterference::Victim || map.a(j, l.ap))
                .map(|l| received(j, l.ap, l.ap_beam))
                .sum::<C64>()
                .norm_sqr()
        })
        .sum();
    desired.norm_sqr() / (interference + noise_var * mine.len() as f64)
}

/// Strongest path of one of the `N_D` best APs of a UE, on the angle grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueLink {
    pub ap: usize,
    pub h: usize,
    pub hp: usize,
}

/// Per UE, the `n_d` APs with the largest per-path gain variance and the
/// quantized angles of that path. `None` for UEs with fewer linked APs.
pub fn true_best_links(scenario: &Scenario, n_d: usize, ap_antennas: usize, ue_antennas: usize) -> Vec<Option<Vec<TrueLink>>> {
    (0..scenario.num_ues())
        .map(|k| {
            let mut ranked: Vec<(usize, usize, f64)> = (0..scenario.num_aps())
                .filter_map(|m| {
                    let link = scenario.link(k, m);
                    link.strongest().map(|i| (m, i, link.paths[i].gain_var))
                })
                .collect();
            if ranked.len() < n_d {
                return None;
            }
            ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            Some(
                ranked[..n_d]
                    .iter()
                    .map(|&(m, i, _)| {
                        let p = &scenario.link(k, m).paths[i];
                        TrueLink { ap: m, h: quantize_angle(p.aoa, ue_antennas), hp: quantize_angle(p.aod, ap_antennas) }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Grids built from the true path powers: every path of every AP holding the
/// tuple adds its gain variance at its quantized (AoA, AoD) cell.
pub fn truth_grids(scenario: &Scenario, k: usize, assignment: &Assignment, ap_antennas: usize, ue_antennas: usize) -> Vec<Vec<EstimateGrid>> {
    (0..assignment.num_patterns)
        .map(|d| {
            (0..assignment.num_pilots)
                .map(|l| {
                    let mut g = EstimateGrid::zeros(ue_antennas, ap_antennas, Provenance::Truth);
                    for m in assignment.aps_with_tuple(d, l) {
                        for p in &scenario.link(k, m).paths {
                            g.scores[(quantize_angle(p.aoa, ue_antennas), quantize_angle(p.aod, ap_antennas))] += p.gain_var;
                        }
                    }
                    g
                })
                .collect()
        })
        .collect()
}

/// Association obtained with perfect knowledge of the beamspace path powers.
pub fn perfect_csi_baseline(scenario: &Scenario, assignment: &Assignment, n_d: usize, ap_antennas: usize, ue_antennas: usize) -> AssociationMap {
    let reports: Vec<EstimateReport> = (0..scenario.num_ues())
        .map(|k| build_report(k, scenario.ue_positions[k], &truth_grids(scenario, k, assignment, ap_antennas, ue_antennas)))
        .collect();
    associate(&reports, &scenario.ap_positions, assignment, n_d)
}

//! Beacon-phase synthesis of the averaged quadratic observables.
//!
//! Everything is computed in beamspace: for every path the UE and AP
//! dictionary projections `W^H a(angle)` are formed once, and the beamformed
//! sample `v^H HH u` is assembled from them per subcarrier. Each received
//! sample carries AWGN of variance `noise_var`; the UE correlates the `S`
//! samples of a slot with each pilot and averages `|.|^2` over the `Q`
//! subcarriers of the stream.

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::channel::{complex_gaussian, BeamspaceDict, FadingState, C64};
use crate::error::{Error, Result};
use crate::resources::{Assignment, PatternPlan, PilotMatrix, UeCodebook};
use crate::rng::SimRng;
use crate::scenario::Scenario;

const DUMP_MAGIC: &[u8; 8] = b"CFBAOBS\0";
const DUMP_VERSION: u32 = 1;

/// `c[k][d][l][s][j][i]`, stored flat in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTensor {
    pub num_ues: usize,
    pub num_patterns: usize,
    pub num_pilots: usize,
    pub slots: usize,
    pub ue_chains: usize,
    pub ap_chains: usize,
    /// Noise floor the UE uses in the NNLS offset, one per UE.
    pub noise_floor: Vec<f64>,
    pub data: Vec<f64>,
}

impl ObservableTensor {
    pub fn zeros(num_ues: usize, num_patterns: usize, num_pilots: usize, slots: usize, ue_chains: usize, ap_chains: usize) -> Self {
        let len = num_ues * num_patterns * num_pilots * slots * ue_chains * ap_chains;
        ObservableTensor {
            num_ues,
            num_patterns,
            num_pilots,
            slots,
            ue_chains,
            ap_chains,
            noise_floor: vec![0.0; num_ues],
            data: vec![0.0; len],
        }
    }

    /// Length of one stacked observable vector.
    pub fn stack_len(&self) -> usize {
        self.slots * self.ue_chains * self.ap_chains
    }

    /// Position of `(s, j, i)` inside a stacked vector: slot-major, then UE chain, then AP chain.
    pub fn stack_index(&self, s: usize, j: usize, i: usize) -> usize {
        (s * self.ue_chains + j) * self.ap_chains + i
    }

    fn offset(&self, k: usize, d: usize, l: usize) -> usize {
        ((k * self.num_patterns + d) * self.num_pilots + l) * self.stack_len()
    }

    pub fn get(&self, k: usize, d: usize, l: usize, s: usize, j: usize, i: usize) -> f64 {
        self.data[self.offset(k, d, l) + self.stack_index(s, j, i)]
    }

    /// Stacked vector `c_k^(d,l)`.
    pub fn stacked(&self, k: usize, d: usize, l: usize) -> &[f64] {
        let o = self.offset(k, d, l);
        &self.data[o..o + self.stack_len()]
    }

    fn per_ue_len(&self) -> usize {
        self.num_patterns * self.num_pilots * self.stack_len()
    }

    /// Writes the tensor with a versioned header (dims, seed, config hash).
    pub fn write_dump<W: Write>(&self, mut w: W, seed: u64, config_hash: &str) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        for dim in [self.num_ues, self.num_patterns, self.num_pilots, self.slots, self.ue_chains, self.ap_chains] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        w.write_all(&seed.to_le_bytes())?;
        let mut hash = [0u8; 64];
        let src = config_hash.as_bytes();
        hash[..src.len().min(64)].copy_from_slice(&src[..src.len().min(64)]);
        w.write_all(&hash)?;
        for v in self.noise_floor.iter().chain(&self.data) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump; returns the tensor, seed and config hash.
    pub fn read_dump<R: Read>(mut r: R) -> Result<(Self, u64, String)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Parse("not an observable dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DUMP_VERSION {
            return Err(Error::Parse(format!("unsupported dump version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = read_u32(&mut r)? as usize;
        }
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let mut hash = [0u8; 64];
        r.read_exact(&mut hash)?;
        let hash = String::from_utf8_lossy(&hash).trim_end_matches('\0').to_string();
        let mut t = ObservableTensor::zeros(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]);
        let mut buf = [0u8; 8];
        for v in t.noise_floor.iter_mut().chain(t.data.iter_mut()) {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Parse(format!("{} trailing bytes in dump", rest.len())));
        }
        Ok((t, u64::from_le_bytes(seed), hash))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Everything the beacon phase depends on.
#[derive(Clone, Copy)]
pub struct BeaconInputs<'a> {
    pub scenario: &'a Scenario,
    /// Fading state of each beacon slot; held constant within a slot.
    pub fading: &'a [FadingState],
    pub plan: &'a PatternPlan,
    pub assignment: &'a Assignment,
    pub pilots: &'a PilotMatrix,
    pub codebooks: &'a [UeCodebook],
    pub dict: &'a BeamspaceDict,
    pub beta: f64,
    /// Per-sample noise power after beamforming.
    pub noise_var: f64,
    /// Subcarrier `q` sits at `q * freq_step_hz`.
    pub freq_step_hz: f64,
    /// Estimate the noise floor from idle subcarriers instead of using `noise_var`.
    pub estimate_noise: bool,
}

impl BeaconInputs<'_> {
    fn check(&self) -> Result<()> {
        let k = self.scenario.num_ues();
        let m = self.scenario.num_aps();
        let t = self.plan.num_slots();
        let dim = |msg: String| Err(Error::Dimension(msg));
        if self.codebooks.len() != k {
            return dim(format!("{} codebooks for {k} UEs", self.codebooks.len()));
        }
        if self.assignment.num_aps() != m {
            return dim(format!("assignment covers {} APs, scenario has {m}", self.assignment.num_aps()));
        }
        if self.fading.len() < t {
            return dim(format!("{} fading slots for {t} beacon slots", self.fading.len()));
        }
        if self.assignment.num_patterns != self.plan.num_patterns() {
            return dim("assignment and plan disagree on the pattern count".into());
        }
        if self.assignment.num_pilots > self.pilots.len() {
            return dim(format!("{} pilots assigned, {} available", self.assignment.num_pilots, self.pilots.len()));
        }
        if self.plan.ap_antennas != self.dict.n_ap() {
            return dim("plan and dictionary disagree on AP antennas".into());
        }
        let chains = self.codebooks.first().map_or(0, |c| c.supports.first().map_or(0, Vec::len));
        for cb in self.codebooks {
            if cb.ue_antennas != self.dict.n_ue() || cb.supports.len() < t || cb.supports.iter().any(|s| s.len() != chains) {
                return dim("UE codebook does not match the slot count or antenna count".into());
            }
        }
        for f in self.fading {
            if f.alpha.len() != k || f.alpha.iter().any(|r| r.len() != m) {
                return dim("fading state does not match the scenario".into());
            }
        }
        Ok(())
    }
}

/// Synthesizes the observable tensor for every UE.
pub fn synthesize<R: Rng + ?Sized>(inputs: &BeaconInputs<'_>, rng: &mut R) -> Result<ObservableTensor> {
    inputs.check()?;
    let k_count = inputs.scenario.num_ues();
    let ue_chains = inputs.codebooks.first().map_or(0, |c| c.supports[0].len());
    let mut tensor = ObservableTensor::zeros(
        k_count,
        inputs.plan.num_patterns(),
        inputs.assignment.num_pilots,
        inputs.plan.num_slots(),
        ue_chains,
        inputs.plan.num_chains(),
    );
    let seeds: Vec<u64> = (0..k_count).map(|_| rng.random()).collect();
    let per_ue = tensor.per_ue_len();
    let floors: Vec<f64> = tensor
        .data
        .par_chunks_mut(per_ue)
        .zip(seeds.par_iter())
        .enumerate()
        .map(|(k, (out, &seed))| synthesize_ue(inputs, k, ue_chains, out, &mut SimRng::seed_from_u64(seed)))
        .collect();
    tensor.noise_floor = floors;
    Ok(tensor)
}

/// Fills `out` (layout `[d][l][s][j][i]`) for UE `k`; returns the noise floor.
fn synthesize_ue(inputs: &BeaconInputs<'_>, k: usize, ue_chains: usize, out: &mut [f64], rng: &mut SimRng) -> f64 {
    let sc = inputs.scenario;
    let plan = inputs.plan;
    let asg = inputs.assignment;
    let n_pilots = asg.num_pilots;
    let s_len = inputs.pilots.signs[0].len();
    let ap_chains = plan.num_chains();
    let slots = plan.num_slots();
    let amp = (inputs.beta / ue_chains as f64).sqrt();

    // Dictionary projections of every path of every link toward UE k.
    let proj: Vec<Vec<(Array1<C64>, Array1<C64>)>> = (0..sc.num_aps())
        .map(|m| {
            sc.link(k, m)
                .paths
                .iter()
                .map(|p| (inputs.dict.ue_beamspace(p.aoa), inputs.dict.ap_beamspace(p.aod)))
                .collect()
        })
        .collect();
    let members: Vec<Vec<usize>> = (0..plan.num_patterns()).map(|d| asg.aps_with_pattern(d)).collect();
    // Delay phases exp(-i 2 pi f_q tau) of every path, laid out [m][q][path].
    let phases: Vec<Vec<Vec<C64>>> = (0..sc.num_aps())
        .map(|m| {
            let link = sc.link(k, m);
            (0..plan.num_subcarriers)
                .map(|q| {
                    let f = q as f64 * inputs.freq_step_hz;
                    link.paths.iter().map(|p| C64::cis(-2.0 * PI * f * p.delay_s)).collect()
                })
                .collect()
        })
        .collect();

    let mut g_ue = vec![vec![Vec::<C64>::new(); sc.num_aps()]; ue_chains];
    // alpha * AP-side gain per path, for the current (slot, pattern, chain)
    let mut w_ap = vec![Vec::<C64>::new(); sc.num_aps()];
    let mut h = vec![vec![C64::new(0.0, 0.0); sc.num_aps()]; ue_chains];
    let mut samples = vec![C64::new(0.0, 0.0); s_len];

    for s in 0..slots {
        let alpha = &inputs.fading[s].alpha[k];
        for (j, per_ap) in g_ue.iter_mut().enumerate() {
            let support = &inputs.codebooks[k].supports[s][j];
            let norm = 1.0 / (support.len() as f64).sqrt();
            for (m, g) in per_ap.iter_mut().enumerate() {
                *g = proj[m].iter().map(|(bu, _)| support.iter().map(|&hh| bu[hh]).sum::<C64>() * norm).collect();
            }
        }
        for (d, aps) in members.iter().enumerate() {
            let pattern = &plan.patterns[d];
            for i in 0..ap_chains {
                let support = &pattern.supports[s][i];
                let norm = 1.0 / (support.len() as f64).sqrt();
                for &m in aps {
                    w_ap[m] = proj[m]
                        .iter()
                        .zip(&alpha[m])
                        .map(|((_, ba), a)| a * support.iter().map(|&hp| ba[hp].conj()).sum::<C64>() * norm)
                        .collect();
                }
                let subcarriers = &pattern.subcarriers[s][i];
                let scale = 1.0 / (subcarriers.len() * s_len) as f64;
                for &q in subcarriers {
                    for &m in aps {
                        let ph = &phases[m][q];
                        for (j, hj) in h.iter_mut().enumerate() {
                            hj[m] = w_ap[m].iter().zip(ph).zip(&g_ue[j][m]).map(|((w, p), g)| w * p * g).sum();
                        }
                    }
                    for (j, hj) in h.iter().enumerate() {
                        for (p, y) in samples.iter_mut().enumerate() {
                            let clean: C64 = aps.iter().map(|&m| hj[m] * inputs.pilots.signs[asg.pilot[m]][p] as f64).sum();
                            *y = clean * amp + complex_gaussian(rng, inputs.noise_var);
                        }
                        let base = d * n_pilots * slots * ue_chains * ap_chains;
                        for l in 0..n_pilots {
                            let corr: C64 = samples.iter().zip(&inputs.pilots.signs[l]).map(|(y, &sg)| y * sg as f64).sum();
                            let idx = base + ((l * slots + s) * ue_chains + j) * ap_chains + i;
                            out[idx] += corr.norm_sqr() * scale;
                        }
                    }
                }
            }
        }
    }

    if inputs.estimate_noise {
        let mut acc = 0.0;
        let mut n = 0usize;
        for s in 0..slots {
            for _ in plan.idle_subcarriers(s) {
                for _ in 0..ue_chains * s_len {
                    acc += complex_gaussian(rng, inputs.noise_var).norm_sqr();
                    n += 1;
                }
            }
        }
        if n > 0 {
            return acc / n as f64;
        }
    }
    inputs.noise_var
}

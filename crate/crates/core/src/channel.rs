//! Array responses, DFT beamspace dictionaries, fading and frequency responses.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scenario::{PathSet, Scenario};

pub type C64 = Complex64;

/// Half-wavelength ULA response: entry `n` is `exp(i pi n sin(angle))`.
pub fn steering_vector(angle: f64, n: usize) -> Array1<C64> {
    let s = angle.sin();
    Array1::from_shape_fn(n, |i| C64::cis(PI * i as f64 * s))
}

/// Unitary DFT dictionary whose column `u` is the normalized steering vector
/// toward the `u`-th grid angle.
pub fn dft_matrix(n: usize) -> Array2<C64> {
    let norm = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, n), |(p, u)| {
        C64::from_polar(norm, 2.0 * PI * p as f64 * (u as f64 / n as f64 - 0.5))
    })
}

/// Quantized angles `asin(2u/N - 1)`, `u = 0..N`. The first entry is `-pi/2`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|u| (2.0 * u as f64 / n as f64 - 1.0).asin()).collect()
}

/// Transmit (AP) and receive (UE) angle grids.
pub fn angle_grids(n_ap: usize, n_ue: usize) -> (Vec<f64>, Vec<f64>) {
    (angle_grid(n_ap), angle_grid(n_ue))
}

/// Grid index nearest to `angle` in the sine domain. The grid is periodic in
/// `sin`, so `sin = 1` maps back onto index 0.
pub fn quantize_angle(angle: f64, n: usize) -> usize {
    let pos = (angle.sin() + 1.0) * n as f64 / 2.0;
    (pos.round() as i64).rem_euclid(n as i64) as usize
}

/// DFT dictionaries for both ends of a link.
#[derive(Debug, Clone)]
pub struct BeamspaceDict {
    pub w_ap: Array2<C64>,
    pub w_ue: Array2<C64>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl BeamspaceDict {
    pub fn new(n_ap: usize, n_ue: usize) -> Self {
        let (theta, phi) = angle_grids(n_ap, n_ue);
        BeamspaceDict { w_ap: dft_matrix(n_ap), w_ue: dft_matrix(n_ue), theta, phi }
    }

    pub fn n_ap(&self) -> usize {
        self.theta.len()
    }

    pub fn n_ue(&self) -> usize {
        self.phi.len()
    }

    /// `W_AP^H a_AP(theta)`.
    pub fn ap_beamspace(&self, aod: f64) -> Array1<C64> {
        adjoint_times(&self.w_ap, &steering_vector(aod, self.n_ap()))
    }

    /// `W_UE^H a_UE(phi)`.
    pub fn ue_beamspace(&self, aoa: f64) -> Array1<C64> {
        adjoint_times(&self.w_ue, &steering_vector(aoa, self.n_ue()))
    }
}

fn adjoint_times(w: &Array2<C64>, v: &Array1<C64>) -> Array1<C64> {
    w.t().mapv(|z| z.conj()).dot(v)
}

pub fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Draws a `CN(0, var)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// One AR(1) fading step for every path of a link.
///
/// `alpha_s = rho * alpha_{s-1} + sqrt(1 - rho^2) * w`, `w ~ CN(0, gamma)`. The
/// first slot (no `prev`) draws `CN(0, gamma)` directly.
pub fn fading_step<R: Rng + ?Sized>(prev: Option<&[C64]>, paths: &PathSet, rho: f64, rng: &mut R) -> Result<Vec<C64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("fading coefficient {rho} outside [0, 1]")));
    }
    match prev {
        None => Ok(paths.paths.iter().map(|p| complex_gaussian(rng, p.gain_var)).collect()),
        Some(prev) => {
            if prev.len() != paths.len() {
                return Err(Error::Dimension(format!(
                    "fading state has {} paths, link has {}",
                    prev.len(),
                    paths.len()
                )));
            }
            let innov = (1.0 - rho * rho).sqrt();
            Ok(prev
                .iter()
                .zip(&paths.paths)
                .map(|(a, p)| a * rho + complex_gaussian(rng, p.gain_var) * innov)
                .collect())
        }
    }
}

/// Fading gains of every path of every link for one beacon slot, `alpha[k][m][path]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingState {
    pub alpha: Vec<Vec<Vec<C64>>>,
    pub rho: f64,
}

impl FadingState {
    /// Fresh draw for the first slot.
    pub fn initial<R: Rng + ?Sized>(scenario: &Scenario, rho: f64, rng: &mut R) -> Result<Self> {
        Self::advance(None, scenario, rho, rng)
    }

    pub fn next<R: Rng + ?Sized>(&self, scenario: &Scenario, rng: &mut R) -> Result<Self> {
        Self::advance(Some(self), scenario, self.rho, rng)
    }

    fn advance<R: Rng + ?Sized>(prev: Option<&Self>, scenario: &Scenario, rho: f64, rng: &mut R) -> Result<Self> {
        let mut alpha = Vec::with_capacity(scenario.num_ues());
        for k in 0..scenario.num_ues() {
            let mut row = Vec::with_capacity(scenario.num_aps());
            for m in 0..scenario.num_aps() {
                let p = prev.map(|f| f.alpha[k][m].as_slice());
                row.push(fading_step(p, scenario.link(k, m), rho, rng)?);
            }
            alpha.push(row);
        }
        Ok(FadingState { alpha, rho })
    }

    /// `T` consecutive slots.
    pub fn sequence<R: Rng + ?Sized>(scenario: &Scenario, rho: f64, slots: usize, rng: &mut R) -> Result<Vec<Self>> {
        let mut out: Vec<Self> = Vec::with_capacity(slots);
        for s in 0..slots {
            let next = match out.last() {
                None => Self::initial(scenario, rho, rng)?,
                Some(prev) => prev.next(scenario, rng)?,
            };
            debug_assert_eq!(out.len(), s);
            out.push(next);
        }
        Ok(out)
    }
}

/// Antenna-domain frequency response `sum_l alpha_l a_UE(phi_l) a_AP(theta_l)^H exp(-i 2 pi f tau_l)`.
pub fn freq_response(paths: &PathSet, alpha: &[C64], freq_hz: f64, n_ue: usize, n_ap: usize) -> Result<Array2<C64>> {
    if alpha.len() != paths.len() {
        return Err(Error::Dimension(format!("{} gains for {} paths", alpha.len(), paths.len())));
    }
    let mut h = Array2::<C64>::zeros((n_ue, n_ap));
    for (p, a) in paths.paths.iter().zip(alpha) {
        let coef = a * C64::cis(-2.0 * PI * freq_hz * p.delay_s);
        let ue = steering_vector(p.aoa, n_ue);
        let ap = steering_vector(p.aod, n_ap);
        for (r, u) in ue.iter().enumerate() {
            for (c, v) in ap.iter().enumerate() {
                h[(r, c)] += coef * u * v.conj();
            }
        }
    }
    Ok(h)
}

/// `W_UE^H H W_AP`.
pub fn to_beamspace(h: &Array2<C64>, w_ue: &Array2<C64>, w_ap: &Array2<C64>) -> Result<Array2<C64>> {
    let (r, c) = h.dim();
    if w_ue.nrows() != r || w_ap.nrows() != c || !w_ue.is_square() || !w_ap.is_square() {
        return Err(Error::Dimension(format!(
            "channel {r}x{c} against dictionaries {:?} and {:?}",
            w_ue.dim(),
            w_ap.dim()
        )));
    }
    Ok(adjoint(w_ue).dot(h).dot(w_ap))
}

/// `W_UE HH W_AP^H`, the inverse of [`to_beamspace`].
pub fn from_beamspace(hb: &Array2<C64>, w_ue: &Array2<C64>, w_ap: &Array2<C64>) -> Result<Array2<C64>> {
    let (r, c) = hb.dim();
    if w_ue.nrows() != r || w_ap.nrows() != c {
        return Err(Error::Dimension(format!("beamspace {r}x{c} against dictionaries")));
    }
    Ok(w_ue.dot(hb).dot(&adjoint(w_ap)))
}

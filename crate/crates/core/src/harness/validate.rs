//! Self-check suite run by the `validate` subcommand.

use ndarray::Array2;
use rand::Rng;

use crate::channel::{complex_gaussian, dft_matrix, freq_response, to_beamspace, BeamspaceDict, FadingState, C64};
use crate::config::{SimConfig, UlInterference};
use crate::datalink::{dl_power_alloc, dl_sinr, ul_power_alloc, ul_sinr, AssociationMap, DataChannel, ServedLink};
use crate::error::Result;
use crate::estimators::{nnls_dense, NNLS_MAX_ITER, NNLS_TOL};
use crate::resources::{assign_lb, enumerate_patterns, pilot_matrix};
use crate::rng::substream;
use crate::scenario::generate_scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, limit: f64) -> Check {
    Check { name, passed: worst <= limit, detail: format!("worst {worst:.3e}, limit {limit:.0e}") }
}

fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn dft_unitarity() -> Check {
    let worst = [1, 2, 8, 16, 32, 64]
        .iter()
        .map(|&n| {
            let w = dft_matrix(n);
            let g = w.t().mapv(|z| z.conj()).dot(&w);
            max_abs_diff(&g, &Array2::eye(n))
        })
        .fold(0.0, f64::max);
    check("dft-unitarity", worst, 1e-10)
}

fn pilot_orthogonality() -> Check {
    let ok = [1, 2, 4, 8, 16, 32].iter().all(|&s| {
        let p = pilot_matrix(s, 1.0).expect("power of two");
        p.integer_gram()
            .iter()
            .enumerate()
            .all(|(a, row)| row.iter().enumerate().all(|(b, &v)| v == if a == b { s as i64 } else { 0 }))
    });
    Check { name: "pilot-orthogonality", passed: ok, detail: "integer Gram equals S*I".into() }
}

fn inner_product_preservation(seed: u64) -> Check {
    let mut rng = substream(seed, &[101]);
    let dict = BeamspaceDict::new(16, 8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = Array2::from_shape_simple_fn((8, 16), || complex_gaussian(&mut rng, 1.0));
        let b = Array2::from_shape_simple_fn((8, 16), || complex_gaussian(&mut rng, 1.0));
        let ip = |x: &Array2<C64>, y: &Array2<C64>| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum::<C64>();
        let ba = to_beamspace(&a, &dict.w_ue, &dict.w_ap).expect("square dictionaries");
        let bb = to_beamspace(&b, &dict.w_ue, &dict.w_ap).expect("square dictionaries");
        worst = worst.max((ip(&a, &b) - ip(&ba, &bb)).norm());
    }
    check("beamspace-inner-product", worst, 1e-9)
}

fn subcarrier_disjointness(cfg: &SimConfig, seed: u64) -> Result<Check> {
    let plan = enumerate_patterns(
        cfg.subcarriers,
        cfg.subcarriers_per_chain,
        cfg.ap_rf_chains,
        cfg.beacon_slots,
        cfg.ap_antennas,
        cfg.ap_fingers,
        cfg.subcarrier_layout,
        &mut substream(seed, &[102]),
    )?;
    let ok = (0..plan.num_slots()).all(|s| {
        let mut seen = vec![false; plan.num_subcarriers];
        plan.patterns.iter().flat_map(|p| p.subcarriers[s].iter().flatten()).all(|&q| !std::mem::replace(&mut seen[q], true))
    });
    Ok(Check { name: "subcarrier-disjointness", passed: ok, detail: format!("{} patterns x {} slots", plan.num_patterns(), plan.num_slots()) })
}

fn assignment_capacity(cfg: &SimConfig, seed: u64) -> Result<Check> {
    let mut ok = true;
    for t in 0..20 {
        let sc = generate_scenario(&SimConfig { num_scatterers: 0, ..cfg.clone() }, &mut substream(seed, &[103, t]))?;
        let a = assign_lb(&sc.ap_positions, sc.area_side, cfg.num_patterns(), cfg.num_pilots(), cfg.lba_max_iters)?;
        let cap = cfg.num_tuples();
        for c in 0..sc.num_aps().div_ceil(cap) {
            let members: Vec<usize> = (0..sc.num_aps()).filter(|&m| a.cluster[m] == c).collect();
            let mut tuples: Vec<_> = members.iter().map(|&m| a.tuple(m)).collect();
            tuples.sort_unstable();
            tuples.dedup();
            ok &= members.len() <= cap && tuples.len() == members.len();
        }
    }
    Ok(Check { name: "assignment-capacity", passed: ok, detail: "cluster sizes and tuple uniqueness over 20 topologies".into() })
}

/// KKT conditions of random NNLS instances.
fn nnls_kkt(seed: u64) -> Result<Check> {
    let mut rng = substream(seed, &[104]);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (r, c) = (rng.random_range(3..20), rng.random_range(2..12));
        let b = Array2::from_shape_simple_fn((r, c), || rng.random_range(0.0..1.0));
        let y: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..2.0)).collect();
        let sol = nnls_dense(&b, &y, 0.0, NNLS_TOL, NNLS_MAX_ITER)?;
        let resid = b.dot(&sol.x) - ndarray::Array1::from(y);
        let grad = b.t().dot(&resid);
        for (x, g) in sol.x.iter().zip(&grad) {
            let viol = if *x > 0.0 { g.abs() } else { (-g).max(0.0) };
            worst = worst.max(viol).max((-x).max(0.0));
        }
    }
    Ok(check("nnls-kkt", worst, 1e-5))
}

/// Literal matrix evaluation of the DL and UL SINR against the fast route.
fn sinr_double_entry(cfg: &SimConfig, seed: u64) -> Result<Check> {
    let small = SimConfig { num_aps: 4, num_ues: 3, num_scatterers: 60, area_side_m: 60.0, serving_aps: 2, ..cfg.clone() };
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let mut rng = substream(seed, &[105, t]);
        let sc = generate_scenario(&small, &mut rng)?;
        let fading = FadingState::initial(&sc, 1.0, &mut rng)?;
        let dict = BeamspaceDict::new(small.ap_antennas, small.ue_antennas);
        let links: Vec<Vec<ServedLink>> = (0..small.num_ues)
            .map(|_| {
                let first = rng.random_range(0..small.num_aps);
                let second = (first + rng.random_range(1..small.num_aps)) % small.num_aps;
                [first, second]
                    .iter()
                    .map(|&ap| ServedLink {
                        ap,
                        tuple: (ap, 0),
                        ap_beam: rng.random_range(0..small.ap_antennas),
                        ue_beam: rng.random_range(0..small.ue_antennas),
                    })
                    .collect()
            })
            .collect();
        let map = AssociationMap { num_aps: small.num_aps, short: vec![false; small.num_ues], links };
        let ch = DataChannel::new(&sc, &fading, &dict, small.freq_step_hz());
        let eta = dl_power_alloc(&map, 10.0);
        let eta_ul = ul_power_alloc(&map, 2, 2.0);
        let noise = 1e-9;
        let q = rng.random_range(0..small.subcarriers);
        let h: Vec<Vec<Array2<C64>>> = (0..small.num_ues)
            .map(|k| {
                (0..small.num_aps)
                    .map(|m| freq_response(sc.link(k, m), &fading.alpha[k][m], q as f64 * small.freq_step_hz(), small.ue_antennas, small.ap_antennas))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let v = |k: usize| -> ndarray::Array1<C64> { map.links[k].iter().map(|l| dict.w_ue.column(l.ue_beam).to_owned()).fold(ndarray::Array1::zeros(small.ue_antennas), |a, b| a + b) };
        let u = |k: usize, m: usize| dict.w_ap.column(map.link(k, m).expect("served").ap_beam).to_owned();
        let form = |vk: &ndarray::Array1<C64>, hm: &Array2<C64>, um: &ndarray::Array1<C64>| vk.mapv(|z| z.conj()).dot(&hm.dot(um));
        for k in 0..small.num_ues {
            let vk = v(k);
            let mut sig = C64::new(0.0, 0.0);
            let mut interf = 0.0;
            for j in 0..small.num_ues {
                let mut acc = C64::new(0.0, 0.0);
                for m in (0..small.num_aps).filter(|&m| map.a(j, m)) {
                    acc += form(&vk, &h[k][m], &u(j, m)) * eta[(j, m)].sqrt();
                }
                if j == k {
                    sig = acc;
                } else {
                    interf += acc.norm_sqr();
                }
            }
            let beam_norms: f64 = map.links[k].iter().map(|l| dict.w_ue.column(l.ue_beam).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
            let literal_dl = sig.norm_sqr() / (interf + noise * beam_norms);
            let fast_dl = dl_sinr(k, q, &ch, &map, &eta, noise);
            worst = worst.max((literal_dl - fast_dl).abs() / literal_dl.abs().max(1e-300));

            // UL: u_{k,m}^H H_{j,m}^H t_j at the APs serving k.
            let mut sig = C64::new(0.0, 0.0);
            let mut interf = 0.0;
            let mut noise_norm = 0.0;
            for j in 0..small.num_ues {
                let tj: ndarray::Array1<C64> = map.links[j]
                    .iter()
                    .zip(&eta_ul[j])
                    .map(|(l, e)| dict.w_ue.column(l.ue_beam).mapv(|z| z * e.sqrt()))
                    .fold(ndarray::Array1::zeros(small.ue_antennas), |a, b| a + b);
                let mut acc = C64::new(0.0, 0.0);
                for m in (0..small.num_aps).filter(|&m| map.a(k, m)) {
                    let hh = h[j][m].t().mapv(|z| z.conj());
                    acc += u(k, m).mapv(|z| z.conj()).dot(&hh.dot(&tj));
                    if j == k {
                        noise_norm += u(k, m).iter().map(|z| z.norm_sqr()).sum::<f64>();
                    }
                }
                if j == k {
                    sig = acc;
                } else {
                    interf += acc.norm_sqr();
                }
            }
            let literal_ul = sig.norm_sqr() / (interf + noise * noise_norm);
            let fast_ul = ul_sinr(k, q, &ch, &map, &eta_ul, noise, UlInterference::Victim);
            worst = worst.max((literal_ul - fast_ul).abs() / literal_ul.abs().max(1e-300));
        }
    }
    Ok(check("sinr-double-entry", worst, 1e-10))
}

/// Runs every check; `cfg` supplies the resource dimensions.
pub fn run_validation(cfg: &SimConfig) -> Result<Vec<Check>> {
    cfg.validate()?;
    let seed = cfg.seed;
    Ok(vec![
        dft_unitarity(),
        pilot_orthogonality(),
        inner_product_preservation(seed),
        subcarrier_disjointness(cfg, seed)?,
        assignment_capacity(cfg, seed)?,
        nnls_kkt(seed)?,
        sinr_double_entry(cfg, seed)?,
    ])
}

//! Network geometry, blockage-driven multipath and large-scale gains.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::angle_grid;
use crate::config::{ChannelMode, SimConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Smallest distance fed to the LOS model when two entities coincide.
const MIN_DISTANCE_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Direction of `other` as seen from `self`, in (-pi, pi].
    pub fn bearing_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// One propagation path of a link.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Angle of arrival in the UE array frame.
    pub aoa: f64,
    /// Angle of departure in the AP array frame.
    pub aod: f64,
    pub delay_s: f64,
    /// Variance of the complex path gain (linear power).
    pub gain_var: f64,
    /// `None` for the direct AP-UE path.
    pub via_scatterer: Option<usize>,
    /// Shadow-fading draw that produced `gain_var`, kept for re-evaluation under mobility.
    pub shadow_db: f64,
}

/// Paths between one UE and one AP. Empty means the link is fully blocked.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Index of the path with the largest gain variance (lowest index on ties).
    pub fn strongest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.paths.iter().enumerate() {
            match best {
                Some(b) if self.paths[b].gain_var >= p.gain_var => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub area_side: f64,
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub scatterer_positions: Vec<Point>,
    /// Broadside direction of each AP array, in [-pi, pi).
    pub ap_orientations: Vec<f64>,
    pub ue_orientations: Vec<f64>,
    /// `paths[k][m]`.
    pub paths: Vec<Vec<PathSet>>,
    /// Every path of link (k, m) that passed the blockage draws, including
    /// those currently behind an array: (scatterer, shadow dB). Empty for
    /// links built without scatterers.
    pub latent: Vec<Vec<Vec<(Option<usize>, f64)>>>,
}

impl Scenario {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn link(&self, k: usize, m: usize) -> &PathSet {
        &self.paths[k][m]
    }

    /// Moves the UEs and re-evaluates the angles, delays and path losses.
    /// Blockage and shadowing draws are kept; paths behind an array are hidden
    /// and come back once the geometry allows. Links without latent paths
    /// re-evaluate their visible paths only.
    pub fn relocate_ues(&mut self, positions: &[Point], cfg: &SimConfig) -> Result<()> {
        if positions.len() != self.ue_positions.len() {
            return Err(Error::Dimension(format!(
                "expected {} UE positions, got {}",
                self.ue_positions.len(),
                positions.len()
            )));
        }
        self.ue_positions = positions.to_vec();
        let lambda = cfg.wavelength_m();
        for k in 0..self.num_ues() {
            for m in 0..self.num_aps() {
                let seeds: Vec<(Option<usize>, f64)> = match self.latent.get(k).and_then(|l| l.get(m)) {
                    Some(l) if !l.is_empty() => l.clone(),
                    _ => self.paths[k][m].paths.iter().map(|p| (p.via_scatterer, p.shadow_db)).collect(),
                };
                let mut kept = Vec::with_capacity(seeds.len());
                for (via, shadow_db) in seeds {
                    let at = via.map(|n| self.scatterer_positions[n]);
                    if let Some(np) = self.path_geometry(k, m, at, shadow_db, cfg.pathloss_exponent, lambda)? {
                        kept.push(Path { via_scatterer: via, ..np });
                    }
                }
                self.paths[k][m].paths = kept;
            }
        }
        Ok(())
    }

    /// Geometry of a path from AP `m` to UE `k`, either direct or bouncing off
    /// `via`. Returns `None` when the path leaves or arrives behind an array.
    fn path_geometry(
        &self,
        k: usize,
        m: usize,
        via: Option<Point>,
        shadow_db: f64,
        pathloss_exponent: f64,
        lambda: f64,
    ) -> Result<Option<Path>> {
        let ap = self.ap_positions[m];
        let ue = self.ue_positions[k];
        let (toward_from_ap, toward_from_ue, length) = match via {
            Some(s) => (s, s, ap.distance(&s) + ue.distance(&s)),
            None => (ue, ap, ap.distance(&ue)),
        };
        let aod = wrap_angle(ap.bearing_to(&toward_from_ap) - self.ap_orientations[m]);
        let aoa = wrap_angle(ue.bearing_to(&toward_from_ue) - self.ue_orientations[k]);
        if aod.abs() > PI / 2.0 || aoa.abs() > PI / 2.0 {
            return Ok(None);
        }
        let length = length.max(MIN_DISTANCE_M);
        Ok(Some(Path {
            aoa,
            aod,
            delay_s: length / SPEED_OF_LIGHT,
            gain_var: path_gain_variance(length, lambda, pathloss_exponent, shadow_db)?,
            via_scatterer: None,
            shadow_db,
        }))
    }
}

/// Wraps an angle into [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// UMi street-canyon line-of-sight probability at distance `d` meters.
pub fn los_probability(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("LOS probability needs d > 0, got {d}")));
    }
    let e = (-d / 39.0).exp();
    Ok((20.0 / d).min(1.0) * (1.0 - e) + e)
}

/// Linear path gain variance for a path of length `r` meters.
///
/// `shadow_db` is the shadow-fading draw, passed in so callers control the
/// randomness.
pub fn path_gain_variance(r: f64, lambda: f64, pathloss_exponent: f64, shadow_db: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("path length must be positive, got {r}")));
    }
    let db = -20.0 * (4.0 * PI / lambda).log10() - 10.0 * pathloss_exponent * r.log10() - shadow_db;
    Ok(10f64.powf(db / 10.0))
}

/// Draws the positions, orientations and all link path sets.
pub fn generate_scenario<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Scenario> {
    let side = cfg.area_side_m;
    let uniform_point = |rng: &mut R| Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
    let ap_positions: Vec<Point> = (0..cfg.num_aps).map(|_| uniform_point(rng)).collect();
    let ue_positions: Vec<Point> = (0..cfg.num_ues).map(|_| uniform_point(rng)).collect();
    let scatterer_positions: Vec<Point> = match cfg.channel_mode {
        ChannelMode::Scatterers => (0..cfg.num_scatterers).map(|_| uniform_point(rng)).collect(),
        ChannelMode::OnGridSinglePath => Vec::new(),
    };
    let ap_orientations = (0..cfg.num_aps).map(|_| rng.random_range(-PI..PI)).collect();
    let ue_orientations = (0..cfg.num_ues).map(|_| rng.random_range(-PI..PI)).collect();

    let mut scenario = Scenario {
        area_side: side,
        ap_positions,
        ue_positions,
        scatterer_positions,
        ap_orientations,
        ue_orientations,
        paths: vec![vec![PathSet::default(); cfg.num_aps]; cfg.num_ues],
        latent: vec![vec![Vec::new(); cfg.num_aps]; cfg.num_ues],
    };
    for k in 0..cfg.num_ues {
        for m in 0..cfg.num_aps {
            match cfg.channel_mode {
                ChannelMode::Scatterers => {
                    let (paths, latent) = draw_paths(k, m, &scenario, cfg, rng, |d| los_probability(d.max(MIN_DISTANCE_M)))?;
                    scenario.paths[k][m] = paths;
                    scenario.latent[k][m] = latent;
                }
                ChannelMode::OnGridSinglePath => scenario.paths[k][m] = build_on_grid_path(k, m, &scenario, cfg, rng)?,
            }
        }
    }
    Ok(scenario)
}

/// Builds the scatterer-mediated path set of link (k, m).
pub fn build_paths<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    scenario: &Scenario,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathSet> {
    build_paths_with(k, m, scenario, cfg, rng, |d| los_probability(d.max(MIN_DISTANCE_M)))
}

/// [`build_paths`] with a caller-supplied LOS probability model.
pub fn build_paths_with<R, F>(
    k: usize,
    m: usize,
    scenario: &Scenario,
    cfg: &SimConfig,
    rng: &mut R,
    los: F,
) -> Result<PathSet>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> Result<f64>,
{
    draw_paths(k, m, scenario, cfg, rng, los).map(|(paths, _)| paths)
}

/// Visible paths of link (k, m) plus every blockage survivor as (scatterer, shadow dB).
fn draw_paths<R, F>(
    k: usize,
    m: usize,
    scenario: &Scenario,
    cfg: &SimConfig,
    rng: &mut R,
    los: F,
) -> Result<(PathSet, Vec<(Option<usize>, f64)>)>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> Result<f64>,
{
    let shadow = shadow_distribution(cfg)?;
    let lambda = cfg.wavelength_m();
    let ap = scenario.ap_positions[m];
    let ue = scenario.ue_positions[k];
    let mut paths = Vec::new();
    let mut latent = Vec::new();

    if cfg.direct_path {
        let p_los = los(ap.distance(&ue))?;
        if rng.random_bool(p_los.clamp(0.0, 1.0)) {
            let shadow_db = shadow.sample(rng);
            latent.push((None, shadow_db));
            if let Some(p) = scenario.path_geometry(k, m, None, shadow_db, cfg.pathloss_exponent, lambda)? {
                paths.push(p);
            }
        }
    }

    for (n, s) in scenario.scatterer_positions.iter().enumerate() {
        let ap_side = rng.random_bool(los(ap.distance(s))?.clamp(0.0, 1.0));
        let ue_side = rng.random_bool(los(ue.distance(s))?.clamp(0.0, 1.0));
        if !(ap_side && ue_side) {
            continue;
        }
        let shadow_db = shadow.sample(rng);
        latent.push((Some(n), shadow_db));
        if let Some(p) = scenario.path_geometry(k, m, Some(*s), shadow_db, cfg.pathloss_exponent, lambda)? {
            paths.push(Path { via_scatterer: Some(n), ..p });
        }
    }
    Ok((PathSet { paths }, latent))
}

/// A single path per link with AoA and AoD on the beamspace grids. Used for
/// oracle experiments where the true beam pair is exactly representable.
pub fn build_on_grid_path<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    scenario: &Scenario,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathSet> {
    let shadow = shadow_distribution(cfg)?;
    let ap_grid = angle_grid(cfg.ap_antennas);
    let ue_grid = angle_grid(cfg.ue_antennas);
    let r = scenario.ap_positions[m].distance(&scenario.ue_positions[k]).max(MIN_DISTANCE_M);
    let shadow_db = shadow.sample(rng);
    let aod = ap_grid[rng.random_range(0..ap_grid.len())];
    let aoa = ue_grid[rng.random_range(0..ue_grid.len())];
    Ok(PathSet {
        paths: vec![Path {
            aoa,
            aod,
            delay_s: r / SPEED_OF_LIGHT,
            gain_var: path_gain_variance(r, cfg.wavelength_m(), cfg.pathloss_exponent, shadow_db)?,
            via_scatterer: None,
            shadow_db,
        }],
    })
}

fn shadow_distribution(cfg: &SimConfig) -> Result<Normal<f64>> {
    Normal::new(0.0, cfg.shadow_sigma_db).map_err(|e| Error::Config(format!("shadow fading: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn two_node_scenario(scatterers: Vec<Point>) -> Scenario {
        Scenario {
            area_side: 400.0,
            ap_positions: vec![Point::new(0.0, 0.0)],
            ue_positions: vec![Point::new(100.0, 0.0)],
            scatterer_positions: scatterers,
            ap_orientations: vec![0.0],
            ue_orientations: vec![-PI],
            paths: vec![vec![PathSet::default()]],
            latent: vec![vec![Vec::new()]],
        }
    }

    #[test]
    fn los_probability_values() {
        assert_eq!(los_probability(1.0).unwrap(), 1.0);
        assert!((los_probability(39.0).unwrap() - 0.69205).abs() < 1e-4);
        assert!((los_probability(390.0).unwrap() - 0.051325).abs() < 1e-5);
        assert!(los_probability(0.0).is_err());
        assert!(los_probability(-3.0).is_err());
    }

    #[test]
    fn gain_variance_distance_law() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        let at_one = 10.0 * path_gain_variance(1.0, lambda, 3.19, 0.0).unwrap().log10();
        assert!((at_one + 20.0 * (4.0 * PI / lambda).log10()).abs() < 1e-9);
        let a = 10.0 * path_gain_variance(50.0, lambda, 3.19, 0.0).unwrap().log10();
        let b = 10.0 * path_gain_variance(100.0, lambda, 3.19, 0.0).unwrap().log10();
        assert!((a - b - 9.6029).abs() < 1e-3);
        let shadowed = 10.0 * path_gain_variance(50.0, lambda, 3.19, 4.0).unwrap().log10();
        assert!((a - shadowed - 4.0).abs() < 1e-9);
        assert!(path_gain_variance(0.0, lambda, 3.19, 0.0).is_err());
    }

    #[test]
    fn collinear_scatterer_angles_are_bearings() {
        let mut cfg = SimConfig::desk();
        cfg.num_scatterers = 1;
        cfg.shadow_sigma_db = 0.0;
        // AP faces +x, UE faces -x, scatterer slightly above the midpoint.
        let sc = two_node_scenario(vec![Point::new(50.0, 10.0)]);
        let mut rng = substream(1, &[0]);
        let ps = build_paths_with(0, 0, &sc, &cfg, &mut rng, |_| Ok(1.0)).unwrap();
        assert_eq!(ps.len(), 1);
        let p = &ps.paths[0];
        assert!((p.aod - (10.0f64).atan2(50.0)).abs() < 1e-12);
        // Seen from the UE the scatterer is at bearing pi - atan(10/50); relative to -pi broadside.
        let expected_aoa = wrap_angle(PI - (10.0f64).atan2(50.0) + PI);
        assert!((p.aoa - expected_aoa).abs() < 1e-12);
        let r = 2.0 * (50f64.hypot(10.0));
        assert!((p.delay_s - r / SPEED_OF_LIGHT).abs() < 1e-18);
        assert_eq!(p.via_scatterer, Some(0));
    }

    #[test]
    fn no_scatterers_no_paths() {
        let mut cfg = SimConfig::desk();
        cfg.num_aps = 1;
        cfg.num_ues = 1;
        cfg.num_scatterers = 0;
        let sc = generate_scenario(&cfg, &mut substream(3, &[])).unwrap();
        assert!(sc.paths[0][0].is_empty());
        assert_eq!(sc.paths[0][0].strongest(), None);
    }

    #[test]
    fn blockage_free_links_keep_every_scatterer() {
        let cfg = SimConfig::desk();
        let scatterers: Vec<Point> = (0..40).map(|i| Point::new(20.0 + 1.5 * i as f64, -30.0 + 1.3 * i as f64)).collect();
        let sc = two_node_scenario(scatterers);
        let ps = build_paths_with(0, 0, &sc, &cfg, &mut substream(5, &[]), |_| Ok(1.0)).unwrap();
        assert_eq!(ps.len(), 40);
        let mut with_direct = cfg.clone();
        with_direct.direct_path = true;
        let ps = build_paths_with(0, 0, &sc, &with_direct, &mut substream(5, &[]), |_| Ok(1.0)).unwrap();
        assert_eq!(ps.len(), 41);
        assert_eq!(ps.paths[0].via_scatterer, None);
    }

    #[test]
    fn behind_array_paths_are_dropped() {
        let cfg = SimConfig::desk();
        // Scatterer behind the AP (AP faces +x).
        let sc = two_node_scenario(vec![Point::new(-20.0, 5.0)]);
        let ps = build_paths_with(0, 0, &sc, &cfg, &mut substream(5, &[]), |_| Ok(1.0)).unwrap();
        assert!(ps.is_empty());
    }

    #[test]
    fn far_scatterers_are_almost_surely_blocked() {
        let cfg = SimConfig::desk();
        let sc = two_node_scenario((0..200).map(|i| Point::new(2000.0 + i as f64, 1500.0)).collect());
        let ps = build_paths(0, 0, &sc, &cfg, &mut substream(9, &[])).unwrap();
        assert!(ps.is_empty());
    }

    #[test]
    fn generated_scenario_is_well_formed_and_reproducible() {
        let mut cfg = SimConfig::desk();
        cfg.num_scatterers = 300;
        let a = generate_scenario(&cfg, &mut substream(11, &[1])).unwrap();
        let b = generate_scenario(&cfg, &mut substream(11, &[1])).unwrap();
        assert_eq!(a, b);
        let inside = |p: &Point| (0.0..cfg.area_side_m).contains(&p.x) && (0.0..cfg.area_side_m).contains(&p.y);
        assert!(a.ap_positions.iter().chain(&a.ue_positions).chain(&a.scatterer_positions).all(inside));
        assert!(a.ap_orientations.iter().chain(&a.ue_orientations).all(|o| (-PI..PI).contains(o)));
        for row in &a.paths {
            for link in row {
                for p in &link.paths {
                    assert!(p.aoa.abs() <= PI / 2.0 && p.aod.abs() <= PI / 2.0);
                    assert!(p.delay_s > 0.0 && p.gain_var > 0.0);
                    assert!(p.via_scatterer.unwrap() < a.scatterer_positions.len());
                }
            }
        }
    }

    #[test]
    fn delays_equal_path_length_over_c() {
        let mut cfg = SimConfig::desk();
        cfg.num_scatterers = 500;
        let sc = generate_scenario(&cfg, &mut substream(4, &[])).unwrap();
        for (k, row) in sc.paths.iter().enumerate() {
            for (m, link) in row.iter().enumerate() {
                for p in &link.paths {
                    let s = sc.scatterer_positions[p.via_scatterer.unwrap()];
                    let r = sc.ap_positions[m].distance(&s) + sc.ue_positions[k].distance(&s);
                    assert_eq!(p.delay_s, r / SPEED_OF_LIGHT);
                }
            }
        }
    }

    #[test]
    fn relocation_keeps_blockage_and_moves_angles() {
        let mut cfg = SimConfig::desk();
        cfg.num_scatterers = 400;
        let mut sc = generate_scenario(&cfg, &mut substream(21, &[])).unwrap();
        let before = sc.clone();
        let moved: Vec<Point> = sc.ue_positions.iter().map(|p| Point::new(p.x, p.y)).collect();
        sc.relocate_ues(&moved, &cfg).unwrap();
        assert_eq!(sc, before);
        let shifted: Vec<Point> = sc.ue_positions.iter().map(|p| Point::new(p.x + 1.0, p.y)).collect();
        sc.relocate_ues(&shifted, &cfg).unwrap();
        for (k, row) in sc.paths.iter().enumerate() {
            for (m, link) in row.iter().enumerate() {
                let drawn: Vec<_> = before.latent[k][m].iter().map(|l| l.0).collect();
                assert!(link.paths.iter().all(|p| drawn.contains(&p.via_scatterer)));
            }
        }
        // moving back restores the original path sets, including paths hidden in between
        sc.relocate_ues(&before.ue_positions, &cfg).unwrap();
        assert_eq!(sc, before);
    }

    #[test]
    fn hidden_paths_reappear() {
        let cfg = SimConfig::desk();
        // UE at (100, 0) faces -x; the scatterer at (50, 5) is in front of both arrays.
        let mut sc = two_node_scenario(vec![Point::new(50.0, 5.0)]);
        sc.latent = vec![vec![vec![(Some(0), 0.0)]]];
        sc.relocate_ues(&[Point::new(100.0, 0.0)], &cfg).unwrap();
        assert_eq!(sc.paths[0][0].len(), 1);
        // past the scatterer the path arrives from behind the UE array
        sc.relocate_ues(&[Point::new(30.0, 0.0)], &cfg).unwrap();
        assert!(sc.paths[0][0].is_empty());
        sc.relocate_ues(&[Point::new(100.0, 0.0)], &cfg).unwrap();
        assert_eq!(sc.paths[0][0].len(), 1);
        assert_eq!(sc.paths[0][0].paths[0].via_scatterer, Some(0));
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-7.0, -PI, -1.0, 0.0, 1.0, PI, 7.0, 3.0 * PI] {
            let w = wrap_angle(a);
            assert!((-PI..PI).contains(&w));
            assert!(((w - a) / (2.0 * PI)).round() * 2.0 * PI - (w - a) < 1e-12);
        }
    }
}

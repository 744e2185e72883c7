//! Data-patterns, pilot sequences, pseudo-random multi-finger codebooks and
//! the AP -> (pattern, pilot) assignment.

use std::fmt::Write as _;

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;

use crate::config::SubcarrierLayout;
use crate::error::{Error, Result};
use crate::scenario::Point;

/// Centroid movement below which the constrained k-means stops.
const CENTROID_TOL_M: f64 = 1e-6;

/// One data-pattern: per slot and per AP RF chain, the subcarriers carrying
/// the stream and the beamspace support of the transmit beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPattern {
    pub id: usize,
    /// `subcarriers[s][i]`, `Q` indices each.
    pub subcarriers: Vec<Vec<Vec<usize>>>,
    /// `supports[s][i]`, `nu_AP` sorted angle indices each.
    pub supports: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternPlan {
    pub patterns: Vec<DataPattern>,
    pub num_subcarriers: usize,
    pub ap_antennas: usize,
    pub ap_fingers: usize,
}

impl PatternPlan {
    pub fn num_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn num_slots(&self) -> usize {
        self.patterns.first().map_or(0, |p| p.subcarriers.len())
    }

    pub fn num_chains(&self) -> usize {
        self.patterns.first().and_then(|p| p.subcarriers.first()).map_or(0, |s| s.len())
    }

    /// Subcarriers of slot `s` not used by any pattern.
    pub fn idle_subcarriers(&self, s: usize) -> Vec<usize> {
        let mut used = vec![false; self.num_subcarriers];
        for p in &self.patterns {
            for set in &p.subcarriers[s] {
                for &q in set {
                    used[q] = true;
                }
            }
        }
        (0..self.num_subcarriers).filter(|&q| !used[q]).collect()
    }
}

/// Number of data-patterns that fit: `floor(floor(N_C / Q) / n_AP)`.
pub fn pattern_count(num_subcarriers: usize, per_chain: usize, ap_chains: usize) -> usize {
    if per_chain == 0 || ap_chains == 0 {
        return 0;
    }
    (num_subcarriers / per_chain) / ap_chains
}

/// Builds the `D` data-patterns for `slots` beacon slots.
///
/// Within each slot the subcarrier sets of all (pattern, chain) streams are
/// disjoint. Supports are drawn without replacement from the `ap_antennas`
/// beamspace directions, independently per (pattern, slot, chain).
#[allow(clippy::too_many_arguments)]
pub fn enumerate_patterns<R: Rng + ?Sized>(
    num_subcarriers: usize,
    per_chain: usize,
    ap_chains: usize,
    slots: usize,
    ap_antennas: usize,
    ap_fingers: usize,
    layout: SubcarrierLayout,
    rng: &mut R,
) -> Result<PatternPlan> {
    let d_count = pattern_count(num_subcarriers, per_chain, ap_chains);
    if d_count == 0 {
        return Err(Error::Config(format!(
            "no data-pattern fits into {num_subcarriers} subcarriers with Q={per_chain}, n_AP={ap_chains}"
        )));
    }
    if ap_fingers == 0 || ap_fingers > ap_antennas {
        return Err(Error::Config(format!("cannot pick {ap_fingers} of {ap_antennas} directions")));
    }
    let mut patterns: Vec<DataPattern> = (0..d_count)
        .map(|id| DataPattern {
            id,
            subcarriers: vec![Vec::with_capacity(ap_chains); slots],
            supports: vec![Vec::with_capacity(ap_chains); slots],
        })
        .collect();

    let mut carriers: Vec<usize> = (0..num_subcarriers).collect();
    for s in 0..slots {
        if layout == SubcarrierLayout::Random {
            carriers.shuffle(rng);
        }
        for (d, pat) in patterns.iter_mut().enumerate() {
            for i in 0..ap_chains {
                let start = (d * ap_chains + i) * per_chain;
                let mut set = carriers[start..start + per_chain].to_vec();
                set.sort_unstable();
                pat.subcarriers[s].push(set);
            }
        }
    }
    // Supports are drawn after the subcarriers so the two layouts share beams.
    for s in 0..slots {
        for pat in patterns.iter_mut() {
            for _ in 0..ap_chains {
                pat.supports[s].push(draw_support(ap_antennas, ap_fingers, rng));
            }
        }
    }
    Ok(PatternPlan { patterns, num_subcarriers, ap_antennas, ap_fingers })
}

fn draw_support<R: Rng + ?Sized>(n: usize, fingers: usize, rng: &mut R) -> Vec<usize> {
    let mut v = sample(rng, n, fingers).into_vec();
    v.sort_unstable();
    v
}

/// Orthogonal pilot sequences built from the Sylvester-Hadamard matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    /// `signs[l][p]` in {+1, -1}.
    pub signs: Vec<Vec<i8>>,
    pub beta: f64,
}

impl PilotMatrix {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Column `l` scaled by `sqrt(beta)`.
    pub fn column(&self, l: usize) -> Vec<f64> {
        let a = self.beta.sqrt();
        self.signs[l].iter().map(|&s| a * s as f64).collect()
    }

    /// Integer Gram matrix of the sign patterns; equals `S * I` for valid pilots.
    pub fn integer_gram(&self) -> Vec<Vec<i64>> {
        self.signs
            .iter()
            .map(|a| {
                self.signs
                    .iter()
                    .map(|b| a.iter().zip(b).map(|(&x, &y)| x as i64 * y as i64).sum())
                    .collect()
            })
            .collect()
    }
}

/// `S` orthogonal pilots of length `S`; `S` must be a power of two.
pub fn pilot_matrix(len: usize, beta: f64) -> Result<PilotMatrix> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::Config(format!("Hadamard pilots need a power-of-two length, got {len}")));
    }
    let signs = (0..len)
        .map(|l| {
            (0..len)
                .map(|p| if (l & p).count_ones() % 2 == 0 { 1 } else { -1 })
                .collect()
        })
        .collect();
    Ok(PilotMatrix { signs, beta })
}

/// AP -> (pattern, pilot) map. Pilot-less operation uses one pilot (index 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub pattern: Vec<usize>,
    pub pilot: Vec<usize>,
    /// Cluster of each AP; every AP sits in cluster 0 under random assignment.
    pub cluster: Vec<usize>,
    pub num_patterns: usize,
    pub num_pilots: usize,
}

impl Assignment {
    pub fn num_aps(&self) -> usize {
        self.pattern.len()
    }

    pub fn tuple(&self, m: usize) -> (usize, usize) {
        (self.pattern[m], self.pilot[m])
    }

    pub fn aps_with_pattern(&self, d: usize) -> Vec<usize> {
        (0..self.num_aps()).filter(|&m| self.pattern[m] == d).collect()
    }

    pub fn aps_with_tuple(&self, d: usize, l: usize) -> Vec<usize> {
        (0..self.num_aps()).filter(|&m| self.tuple(m) == (d, l)).collect()
    }

    /// Plain-text export: a header line, then one `ap,pattern,pilot,cluster` row per AP.
    pub fn to_text(&self) -> String {
        let mut out = format!("# patterns={} pilots={}\nap,pattern,pilot,cluster\n", self.num_patterns, self.num_pilots);
        for m in 0..self.num_aps() {
            let _ = writeln!(out, "{m},{},{},{}", self.pattern[m], self.pilot[m], self.cluster[m]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty assignment file".into()))?;
        let mut num_patterns = None;
        let mut num_pilots = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("patterns", v)) => num_patterns = v.parse().ok(),
                Some(("pilots", v)) => num_pilots = v.parse().ok(),
                _ => {}
            }
        }
        let (num_patterns, num_pilots) = num_patterns
            .zip(num_pilots)
            .ok_or_else(|| Error::Parse(format!("bad assignment header: {header}")))?;
        if lines.next().map(str::trim) != Some("ap,pattern,pilot,cluster") {
            return Err(Error::Parse("missing column header".into()));
        }
        let mut a = Assignment { pattern: vec![], pilot: vec![], cluster: vec![], num_patterns, num_pilots };
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<usize> = line
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            if f.len() != 4 || f[0] != row || f[1] >= num_patterns || f[2] >= num_pilots {
                return Err(Error::Parse(format!("row {row}: invalid entry {line:?}")));
            }
            a.pattern.push(f[1]);
            a.pilot.push(f[2]);
            a.cluster.push(f[3]);
        }
        Ok(a)
    }
}

/// Fixed enumeration of the `D * L` tuples: tuple `t` is pattern `t % D`, pilot `t / D`.
pub fn tuple_of(t: usize, num_patterns: usize) -> (usize, usize) {
    (t % num_patterns, t / num_patterns)
}

/// Initial centroids: a `g x g` lattice (`g = ceil(sqrt(n))`) of cell centres,
/// truncated to `n` points in row-major order.
pub fn lattice_centroids(n: usize, area_side: f64) -> Vec<Point> {
    let g = (n as f64).sqrt().ceil() as usize;
    let step = area_side / g as f64;
    (0..n)
        .map(|c| Point::new((c % g) as f64 * step + step / 2.0, (c / g) as f64 * step + step / 2.0))
        .collect()
}

/// Location-based assignment: capacity-constrained k-means with
/// `ceil(M / D~)` centroids, then latitude ordering inside each cluster.
pub fn assign_lb(
    ap_positions: &[Point],
    area_side: f64,
    num_patterns: usize,
    num_pilots: usize,
    max_iters: usize,
) -> Result<Assignment> {
    let capacity = num_patterns * num_pilots;
    let m_count = ap_positions.len();
    if capacity == 0 || m_count == 0 {
        return Err(Error::Config("location-based assignment needs APs and tuples".into()));
    }
    let n_clusters = m_count.div_ceil(capacity);
    let mut centroids = lattice_centroids(n_clusters, area_side);
    let mut cluster = constrained_assign(ap_positions, &centroids, capacity);
    for _ in 0..max_iters {
        let updated = cluster_means(ap_positions, &cluster, &centroids);
        let shift = updated.iter().zip(&centroids).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
        centroids = updated;
        cluster = constrained_assign(ap_positions, &centroids, capacity);
        if shift < CENTROID_TOL_M {
            break;
        }
    }

    let mut pattern = vec![0; m_count];
    let mut pilot = vec![0; m_count];
    for c in 0..n_clusters {
        let mut members: Vec<usize> = (0..m_count).filter(|&m| cluster[m] == c).collect();
        members.sort_by(|&a, &b| {
            let (pa, pb) = (ap_positions[a], ap_positions[b]);
            pb.y.total_cmp(&pa.y).then(pa.x.total_cmp(&pb.x)).then(a.cmp(&b))
        });
        for (rank, &m) in members.iter().enumerate() {
            let (d, l) = tuple_of(rank, num_patterns);
            pattern[m] = d;
            pilot[m] = l;
        }
    }
    Ok(Assignment { pattern, pilot, cluster, num_patterns, num_pilots })
}

/// Greedy capacity-constrained nearest-centroid assignment. APs are handled in
/// increasing order of the distance to their nearest centroid.
pub fn constrained_assign(ap_positions: &[Point], centroids: &[Point], capacity: usize) -> Vec<usize> {
    let nearest = |p: &Point| centroids.iter().map(|c| p.distance(c)).fold(f64::INFINITY, f64::min);
    let mut order: Vec<usize> = (0..ap_positions.len()).collect();
    order.sort_by(|&a, &b| nearest(&ap_positions[a]).total_cmp(&nearest(&ap_positions[b])).then(a.cmp(&b)));
    let mut load = vec![0usize; centroids.len()];
    let mut cluster = vec![usize::MAX; ap_positions.len()];
    for m in order {
        let p = ap_positions[m];
        let best = (0..centroids.len())
            .filter(|&c| load[c] < capacity)
            .min_by(|&a, &b| p.distance(&centroids[a]).total_cmp(&p.distance(&centroids[b])).then(a.cmp(&b)))
            .expect("total capacity covers every AP");
        load[best] += 1;
        cluster[m] = best;
    }
    cluster
}

fn cluster_means(ap_positions: &[Point], cluster: &[usize], previous: &[Point]) -> Vec<Point> {
    let mut sum = vec![(0.0, 0.0, 0usize); previous.len()];
    for (p, &c) in ap_positions.iter().zip(cluster) {
        sum[c].0 += p.x;
        sum[c].1 += p.y;
        sum[c].2 += 1;
    }
    sum.iter()
        .zip(previous)
        .map(|(&(x, y, n), old)| if n == 0 { *old } else { Point::new(x / n as f64, y / n as f64) })
        .collect()
}

/// Random assignment: every AP draws a tuple uniformly and independently.
pub fn assign_random<R: Rng + ?Sized>(num_aps: usize, num_patterns: usize, num_pilots: usize, rng: &mut R) -> Assignment {
    let total = num_patterns * num_pilots;
    let mut pattern = Vec::with_capacity(num_aps);
    let mut pilot = Vec::with_capacity(num_aps);
    for _ in 0..num_aps {
        let (d, l) = tuple_of(rng.random_range(0..total), num_patterns);
        pattern.push(d);
        pilot.push(l);
    }
    Assignment { pattern, pilot, cluster: vec![0; num_aps], num_patterns, num_pilots }
}

/// Mean over APs of the distance to the nearest other AP holding the same
/// tuple. APs with a unique tuple are skipped; `None` when no tuple repeats.
pub fn mean_same_tuple_distance(assignment: &Assignment, ap_positions: &[Point]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for m in 0..assignment.num_aps() {
        let nearest = (0..assignment.num_aps())
            .filter(|&o| o != m && assignment.tuple(o) == assignment.tuple(m))
            .map(|o| ap_positions[m].distance(&ap_positions[o]))
            .fold(f64::INFINITY, f64::min);
        if nearest.is_finite() {
            total += nearest;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Receive supports chosen by one UE: `supports[s][j]`, `nu_UE` sorted indices each.
#[derive(Debug, Clone, PartialEq)]
pub struct UeCodebook {
    pub supports: Vec<Vec<Vec<usize>>>,
    pub ue_antennas: usize,
}

impl UeCodebook {
    /// Beamspace combiner `1_V / sqrt(nu_UE)`.
    pub fn combiner(&self, s: usize, j: usize) -> Vec<f64> {
        indicator_beam(&self.supports[s][j], self.ue_antennas)
    }
}

pub fn indicator_beam(support: &[usize], n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    let a = 1.0 / (support.len() as f64).sqrt();
    for &h in support {
        v[h] = a;
    }
    v
}

pub fn ue_codebook<R: Rng + ?Sized>(
    ue_antennas: usize,
    ue_fingers: usize,
    slots: usize,
    ue_chains: usize,
    rng: &mut R,
) -> Result<UeCodebook> {
    if ue_fingers == 0 || ue_fingers > ue_antennas {
        return Err(Error::Config(format!("cannot pick {ue_fingers} of {ue_antennas} directions")));
    }
    let supports = (0..slots)
        .map(|_| (0..ue_chains).map(|_| draw_support(ue_antennas, ue_fingers, rng)).collect())
        .collect();
    Ok(UeCodebook { supports, ue_antennas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn plan(n_c: usize, q: usize, n_ap: usize, t: usize, layout: SubcarrierLayout) -> PatternPlan {
        enumerate_patterns(n_c, q, n_ap, t, 16, 4, layout, &mut substream(1, &[])).unwrap()
    }

    #[test]
    fn pattern_counts() {
        assert_eq!(plan(256, 4, 8, 2, SubcarrierLayout::Random).num_patterns(), 8);
        assert_eq!(plan(256, 2, 8, 2, SubcarrierLayout::Random).num_patterns(), 16);
        assert_eq!(plan(70, 4, 4, 1, SubcarrierLayout::Random).num_patterns(), 4);
        let err = enumerate_patterns(8, 4, 4, 1, 16, 4, SubcarrierLayout::Random, &mut substream(1, &[]));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn subcarrier_sets_are_disjoint_per_slot() {
        for layout in [SubcarrierLayout::Random, SubcarrierLayout::Contiguous] {
            let p = plan(70, 3, 4, 6, layout);
            for s in 0..6 {
                let mut seen = vec![false; 70];
                let mut total = 0;
                for pat in &p.patterns {
                    for set in &pat.subcarriers[s] {
                        assert_eq!(set.len(), 3);
                        for &q in set {
                            assert!(!seen[q], "subcarrier {q} reused in slot {s}");
                            seen[q] = true;
                            total += 1;
                        }
                    }
                }
                assert!(total <= 70);
                assert_eq!(p.idle_subcarriers(s).len(), 70 - total);
            }
            for pat in &p.patterns {
                for slot in &pat.supports {
                    for sup in slot {
                        assert_eq!(sup.len(), 4);
                        assert!(sup.windows(2).all(|w| w[0] < w[1]) && sup.iter().all(|&h| h < 16));
                    }
                }
            }
        }
    }

    #[test]
    fn contiguous_layout_is_static() {
        let p = plan(64, 2, 4, 3, SubcarrierLayout::Contiguous);
        assert_eq!(p.patterns[1].subcarriers[0][2], vec![12, 13]);
        assert_eq!(p.patterns[1].subcarriers[0], p.patterns[1].subcarriers[2]);
    }

    #[test]
    fn hadamard_pilots() {
        let p = pilot_matrix(2, 1.0).unwrap();
        assert_eq!(p.column(0), vec![1.0, 1.0]);
        assert_eq!(p.column(1), vec![1.0, -1.0]);
        let p = pilot_matrix(8, 0.5).unwrap();
        let g = p.integer_gram();
        for (a, row) in g.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                assert_eq!(v, if a == b { 8 } else { 0 });
            }
        }
        let c0 = p.column(0);
        let c3 = p.column(3);
        let dot: f64 = c0.iter().zip(&c3).map(|(a, b)| a * b).sum();
        assert_eq!(dot, 0.0);
        assert!((c3.iter().map(|x| x * x).sum::<f64>() - 8.0 * 0.5).abs() < 1e-12);
        let single = pilot_matrix(1, 2.0).unwrap();
        assert_eq!(single.signs, vec![vec![1]]);
        assert!(pilot_matrix(6, 1.0).is_err());
        assert!(pilot_matrix(0, 1.0).is_err());
    }

    #[test]
    fn single_cluster_follows_latitude() {
        let aps = [Point::new(10.0, 5.0), Point::new(30.0, 50.0), Point::new(20.0, 20.0), Point::new(40.0, 35.0)];
        let a = assign_lb(&aps, 100.0, 4, 1, 50).unwrap();
        assert!(a.cluster.iter().all(|&c| c == 0));
        assert_eq!(a.pattern, vec![3, 0, 2, 1]);
        assert!(a.pilot.iter().all(|&l| l == 0));
    }

    #[test]
    fn latitude_ties_break_on_longitude() {
        let aps = [Point::new(30.0, 10.0), Point::new(10.0, 10.0)];
        let a = assign_lb(&aps, 100.0, 2, 1, 10).unwrap();
        assert_eq!(a.pattern, vec![1, 0]);
    }

    #[test]
    fn lattice_has_requested_size() {
        let c = lattice_centroids(7, 300.0);
        assert_eq!(c.len(), 7);
        assert_eq!(c[0], Point::new(50.0, 50.0));
        assert!(c.iter().all(|p| p.x > 0.0 && p.x < 300.0 && p.y > 0.0 && p.y < 300.0));
    }

    #[test]
    fn fifty_aps_eight_tuples() {
        let mut rng = substream(7, &[]);
        let aps: Vec<Point> = (0..50).map(|_| Point::new(rng.random_range(0.0..400.0), rng.random_range(0.0..400.0))).collect();
        let a = assign_lb(&aps, 400.0, 8, 1, 100).unwrap();
        let n_clusters = a.cluster.iter().max().unwrap() + 1;
        assert!(n_clusters <= 7);
        for c in 0..7 {
            assert!(a.cluster.iter().filter(|&&x| x == c).count() <= 8);
        }
    }

    #[test]
    fn random_assignment_basics() {
        let a = assign_random(30, 1, 1, &mut substream(4, &[]));
        assert!(a.pattern.iter().all(|&d| d == 0) && a.pilot.iter().all(|&l| l == 0));
        let b = assign_random(30, 4, 8, &mut substream(4, &[1]));
        let c = assign_random(30, 4, 8, &mut substream(4, &[1]));
        assert_eq!(b, c);
        assert!(b.pattern.iter().all(|&d| d < 4) && b.pilot.iter().all(|&l| l < 8));
    }

    #[test]
    fn random_assignment_frequencies() {
        let (m, total) = (10_000usize, 8usize);
        let a = assign_random(m, 4, 2, &mut substream(99, &[]));
        let mut counts = vec![0usize; total];
        for ap in 0..m {
            let (d, l) = a.tuple(ap);
            counts[l * 4 + d] += 1;
        }
        let p = 1.0 / total as f64;
        let mean = m as f64 * p;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - mean).abs() < 5.0 * sd), "{counts:?}");
    }

    #[test]
    fn assignment_text_round_trip() {
        let a = assign_random(12, 4, 8, &mut substream(5, &[]));
        let back = Assignment::from_text(&a.to_text()).unwrap();
        assert_eq!(a, back);
        assert!(Assignment::from_text("").is_err());
        assert!(Assignment::from_text("# patterns=2 pilots=1\nap,pattern,pilot,cluster\n0,5,0,0\n").is_err());
    }

    #[test]
    fn codebook_shapes() {
        let cb = ue_codebook(8, 8, 3, 2, &mut substream(1, &[])).unwrap();
        let v = cb.combiner(0, 0);
        assert!(v.iter().all(|&x| (x - 1.0 / 8f64.sqrt()).abs() < 1e-15));
        let cb = ue_codebook(16, 4, 5, 4, &mut substream(2, &[])).unwrap();
        for s in 0..5 {
            for j in 0..4 {
                let v = cb.combiner(s, j);
                assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(ue_codebook(4, 5, 1, 1, &mut substream(1, &[])).is_err());
    }

    #[test]
    fn codebook_covers_every_direction() {
        // 1 - 16 (3/4)^160 is within 1e-18 of one; one miss in 2000 would already be suspicious.
        let mut covered = 0;
        for trial in 0..2000 {
            let cb = ue_codebook(16, 4, 40, 4, &mut substream(8, &[trial])).unwrap();
            let mut seen = [false; 16];
            cb.supports.iter().flatten().flatten().for_each(|&h| seen[h] = true);
            covered += seen.iter().all(|&x| x) as usize;
        }
        assert!(covered as f64 / 2000.0 >= 0.999);
    }
}

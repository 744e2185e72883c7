//! Direction estimators run at the UE: SCO (NNLS inversion of the stacked
//! observables) and MCO (accumulation of the observables on the angle grid),
//! plus the forgetting-factor tracker used under mobility.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::observables::ObservableTensor;
use crate::resources::{indicator_beam, DataPattern, UeCodebook};

pub const NNLS_TOL: f64 = 1e-8;
pub const NNLS_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Sco,
    Mco,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Sco => "sco",
            Estimator::Mco => "mco",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sco,
    Mco,
    McoTracked,
    Truth,
}

/// Non-negative path-power scores on the (receive, transmit) angle grid,
/// `scores[(h, h')]` with `h` the UE index and `h'` the AP index.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateGrid {
    pub scores: Array2<f64>,
    pub provenance: Provenance,
}

impl EstimateGrid {
    pub fn zeros(n_ue: usize, n_ap: usize, provenance: Provenance) -> Self {
        EstimateGrid { scores: Array2::zeros((n_ue, n_ap)), provenance }
    }

    /// Largest entry with lexicographic tie-break.
    pub fn peak(&self) -> (usize, usize, f64) {
        top_paths(self, 1).expect("grid is non-empty")[0]
    }
}

/// Stacked measurement rows `(d ⊗ v) / (|d| |v|)` for one (UE, pattern).
///
/// Row `(s, j, i)` sits at `(s * n_UE + j) * n_AP + i`; column `h' * N_UE + h`
/// follows the Kronecker order (transmit index major).
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    pub b: Array2<f64>,
    pub gram: Array2<f64>,
    pub ap_antennas: usize,
    pub ue_antennas: usize,
}

impl MeasurementMatrix {
    pub fn rows(&self) -> usize {
        self.b.nrows()
    }

    pub fn column_of(&self, h: usize, hp: usize) -> usize {
        hp * self.ue_antennas + h
    }
}

pub fn build_measurement_matrix(pattern: &DataPattern, codebook: &UeCodebook, ap_antennas: usize) -> MeasurementMatrix {
    let slots = pattern.supports.len();
    let ap_chains = pattern.supports.first().map_or(0, Vec::len);
    let ue_chains = codebook.supports.first().map_or(0, Vec::len);
    let n_ue = codebook.ue_antennas;
    let mut b = Array2::<f64>::zeros((slots * ue_chains * ap_chains, ap_antennas * n_ue));
    for s in 0..slots {
        for j in 0..ue_chains {
            let v = indicator_beam(&codebook.supports[s][j], n_ue);
            let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for i in 0..ap_chains {
                let d = indicator_beam(&pattern.supports[s][i], ap_antennas);
                let d_norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                let row = (s * ue_chains + j) * ap_chains + i;
                for (hp, dv) in d.iter().enumerate().filter(|(_, x)| **x != 0.0) {
                    for (h, vv) in v.iter().enumerate().filter(|(_, x)| **x != 0.0) {
                        b[(row, hp * n_ue + h)] = dv * vv / (d_norm * v_norm);
                    }
                }
            }
        }
    }
    let gram = b.t().dot(&b);
    MeasurementMatrix { b, gram, ap_antennas, ue_antennas: n_ue }
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `|Bx + offset - y|^2` after every accepted step, starting at `x = 0`.
    pub objective_trace: Vec<f64>,
}

impl NnlsSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with x = 0")
    }
}

/// Non-negative least squares `min |Bx + offset * 1 - y|^2` over `x >= 0`.
///
/// Lawson-Hanson active-set iteration on the Gram matrix. The problem is solved
/// after dividing `y - offset` by its largest magnitude, so `tol` is relative to
/// the data scale: a column enters the passive set only while its
/// negative gradient exceeds `tol * |B^T y_scaled|_inf`. `max_iter` bounds the
/// number of column insertions.
pub fn nnls_solve(mm: &MeasurementMatrix, y: &[f64], offset: f64, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    nnls_solve_raw(&mm.b, &mm.gram, y, offset, tol, max_iter)
}

/// [`nnls_solve`] for an arbitrary matrix.
pub fn nnls_dense(b: &Array2<f64>, y: &[f64], offset: f64, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    nnls_solve_raw(b, &b.t().dot(b), y, offset, tol, max_iter)
}

fn nnls_solve_raw(b: &Array2<f64>, gram: &Array2<f64>, y: &[f64], offset: f64, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    if y.len() != b.nrows() {
        return Err(Error::Dimension(format!("{} observations for a {}-row matrix", y.len(), b.nrows())));
    }
    if !offset.is_finite() || y.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("NNLS input contains NaN or infinity".into()));
    }
    let n = b.ncols();
    let shifted: Array1<f64> = y.iter().map(|v| v - offset).collect();
    let scale = shifted.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut x = Array1::<f64>::zeros(n);
    let y_sq = shifted.dot(&shifted);
    if scale == 0.0 || n == 0 {
        return Ok(NnlsSolution { x, iterations: 0, converged: true, objective_trace: vec![y_sq] });
    }
    let ys = &shifted / scale;
    let rhs = b.t().dot(&ys);
    let ys_sq = ys.dot(&ys);
    let objective = |x: &Array1<f64>| (x.dot(&gram.dot(x)) - 2.0 * rhs.dot(x) + ys_sq).max(0.0) * scale * scale;
    let stop = tol * rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let diag_max = gram.diag().iter().fold(0.0f64, |a, &v| a.max(v));

    let mut passive = vec![false; n];
    // columns found dependent on the current passive set; cleared when it changes
    let mut blocked = vec![false; n];
    let mut trace = vec![objective(&x)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let w = &rhs - &gram.dot(&x);
        let entering = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && gram[(j, j)] > 1e-14 * diag_max)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]).then(c.cmp(&a)));
        let Some(t) = entering.filter(|&t| w[t] > stop) else {
            converged = true;
            break;
        };
        iterations += 1;
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let Some(z) = solve_spd(gram, &rhs, &idx) else {
                passive[t] = false;
                blocked[t] = true;
                break;
            };
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (&j, &v) in idx.iter().zip(&z) {
                    x[j] = v;
                }
                blocked.fill(false);
                break;
            }
            // move toward z until the first passive entry reaches zero, then drop it
            let mut alpha = 1.0f64;
            let mut hit = t;
            for (&j, &v) in idx.iter().zip(&z) {
                if v <= 0.0 {
                    let a = x[j] / (x[j] - v);
                    if a < alpha {
                        alpha = a;
                        hit = j;
                    }
                }
            }
            let floor = 1e-14 * (1.0 + x.iter().fold(0.0f64, |a, &v| a.max(v)));
            for (&j, &v) in idx.iter().zip(&z) {
                x[j] += alpha * (v - x[j]);
                if j == hit || x[j] <= floor {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            blocked.fill(false);
        }
        trace.push(objective(&x));
    }
    Ok(NnlsSolution { x: x * scale, iterations, converged, objective_trace: trace })
}
/// Solves `G[idx, idx] z = r[idx]` by Cholesky; `None` if the block is not
/// numerically positive definite.
fn solve_spd(gram: &Array2<f64>, rhs: &Array1<f64>, idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = gram[(idx[i], idx[j])];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if sum <= 1e-12 * gram[(idx[i], idx[i])] {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    let mut z: Vec<f64> = idx.iter().map(|&j| rhs[j]).collect();
    for i in 0..k {
        let s: f64 = (0..i).map(|p| l[i * k + p] * z[p]).sum();
        z[i] = (z[i] - s) / l[i * k + i];
    }
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|p| l[p * k + i] * z[p]).sum();
        z[i] = (z[i] - s) / l[i * k + i];
    }
    Some(z)
}

/// SCO grid for one stacked observable vector.
pub fn sco_estimate(c: &[f64], mm: &MeasurementMatrix, noise_floor: f64) -> Result<EstimateGrid> {
    let sol = nnls_solve(mm, c, noise_floor, NNLS_TOL, NNLS_MAX_ITER)?;
    let mut grid = EstimateGrid::zeros(mm.ue_antennas, mm.ap_antennas, Provenance::Sco);
    for ((h, hp), v) in grid.scores.indexed_iter_mut() {
        *v = sol.x[hp * mm.ue_antennas + h];
    }
    Ok(grid)
}

/// Per-slot MCO matrices `C~(s)`: every observable is added to all
/// (receive, transmit) cells that were active when it was measured.
pub fn mco_slot_matrices(c: &[f64], pattern: &DataPattern, codebook: &UeCodebook, ap_antennas: usize) -> Result<Vec<Array2<f64>>> {
    let slots = pattern.supports.len();
    let ap_chains = pattern.supports.first().map_or(0, Vec::len);
    let ue_chains = codebook.supports.first().map_or(0, Vec::len);
    if c.len() != slots * ue_chains * ap_chains {
        return Err(Error::Dimension(format!(
            "{} observables for {slots} slots x {ue_chains} x {ap_chains} chains",
            c.len()
        )));
    }
    let mut out = Vec::with_capacity(slots);
    for s in 0..slots {
        let mut m = Array2::<f64>::zeros((codebook.ue_antennas, ap_antennas));
        for j in 0..ue_chains {
            for i in 0..ap_chains {
                let v = c[(s * ue_chains + j) * ap_chains + i];
                for &h in &codebook.supports[s][j] {
                    for &hp in &pattern.supports[s][i] {
                        m[(h, hp)] += v;
                    }
                }
            }
        }
        out.push(m);
    }
    Ok(out)
}

pub fn mco_estimate(c: &[f64], pattern: &DataPattern, codebook: &UeCodebook, ap_antennas: usize) -> Result<EstimateGrid> {
    let mut grid = EstimateGrid::zeros(codebook.ue_antennas, ap_antennas, Provenance::Mco);
    for m in mco_slot_matrices(c, pattern, codebook, ap_antennas)? {
        grid.scores += &m;
    }
    Ok(grid)
}

/// Recursive form of the forgetting-factor accumulation
/// `C_r = sum_{r'<=r} sum_s lambda^{rT - (r'-1)T + s} C~[(r'-1)T + s]`,
/// i.e. `C_r = lambda^T C_{r-1} + sum_s lambda^{T+s} C~_r(s)`.
#[derive(Debug, Clone)]
pub struct McoTracker {
    forgetting: f64,
    acc: Option<Array2<f64>>,
    frames: usize,
}

impl McoTracker {
    pub fn new(forgetting: f64) -> Result<Self> {
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::Domain(format!("forgetting factor {forgetting} outside (0, 1]")));
        }
        Ok(McoTracker { forgetting, acc: None, frames: 0 })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Folds in the `T` slot matrices of a new frame.
    pub fn push_frame(&mut self, slot_matrices: &[Array2<f64>]) -> Result<()> {
        let t = slot_matrices.len() as i32;
        let Some(first) = slot_matrices.first() else {
            return Err(Error::Dimension("frame without beacon slots".into()));
        };
        let mut acc = match self.acc.take() {
            Some(prev) if prev.dim() == first.dim() => prev * self.forgetting.powi(t),
            Some(_) => return Err(Error::Dimension("frame grid size changed".into())),
            None => Array2::zeros(first.dim()),
        };
        for (s, m) in slot_matrices.iter().enumerate() {
            if m.dim() != first.dim() {
                return Err(Error::Dimension("slot grid size mismatch".into()));
            }
            acc.scaled_add(self.forgetting.powi(t + s as i32 + 1), m);
        }
        self.acc = Some(acc);
        self.frames += 1;
        Ok(())
    }

    pub fn grid(&self) -> Option<EstimateGrid> {
        self.acc.as_ref().map(|a| EstimateGrid { scores: a.clone(), provenance: Provenance::McoTracked })
    }
}

/// Batch form: runs the tracker over `history[frame][slot]`.
pub fn mco_track(history: &[Vec<Array2<f64>>], forgetting: f64) -> Result<EstimateGrid> {
    let mut tr = McoTracker::new(forgetting)?;
    for frame in history {
        tr.push_frame(frame)?;
    }
    tr.grid().ok_or_else(|| Error::Dimension("empty history".into()))
}

/// The `n` largest entries as `(h, h', score)`, ties broken by `(h, h')`.
pub fn top_paths(grid: &EstimateGrid, n: usize) -> Result<Vec<(usize, usize, f64)>> {
    let size = grid.scores.len();
    if n == 0 || n > size {
        return Err(Error::Domain(format!("asked for {n} of {size} grid entries")));
    }
    let mut cells: Vec<(usize, usize, f64)> = grid.scores.indexed_iter().map(|((h, hp), &v)| (h, hp, v)).collect();
    // indexed_iter walks in row-major (lexicographic) order; a stable sort keeps it for ties.
    cells.sort_by(|a, b| b.2.total_cmp(&a.2));
    cells.truncate(n);
    Ok(cells)
}

/// Grids for every (pattern, pilot) of UE `k`, indexed `[d][l]`.
pub fn estimate_ue(
    estimator: Estimator,
    tensor: &ObservableTensor,
    k: usize,
    patterns: &[DataPattern],
    codebook: &UeCodebook,
    ap_antennas: usize,
) -> Result<Vec<Vec<EstimateGrid>>> {
    let mut out = Vec::with_capacity(patterns.len());
    for (d, pattern) in patterns.iter().enumerate() {
        let mm = (estimator == Estimator::Sco).then(|| build_measurement_matrix(pattern, codebook, ap_antennas));
        let mut row = Vec::with_capacity(tensor.num_pilots);
        for l in 0..tensor.num_pilots {
            let c = tensor.stacked(k, d, l);
            row.push(match &mm {
                Some(mm) => sco_estimate(c, mm, tensor.noise_floor[k])?,
                None => mco_estimate(c, pattern, codebook, ap_antennas)?,
            });
        }
        out.push(row);
    }
    Ok(out)
}

//! Reference implementations used only by the tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None` when
/// `a` is numerically singular.
pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut r = b.clone();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))?;
        if m[(piv, col)].abs() < 1e-10 * scale {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap((piv, c), (col, c));
            }
            r.swap(piv, col);
        }
        for row in col + 1..n {
            let f = m[(row, col)] / m[(col, col)];
            for c in col..n {
                m[(row, c)] -= f * m[(col, c)];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[(row, c)] * x[c]).sum();
        x[row] = (r[row] - s) / m[(row, row)];
    }
    Some(x)
}

pub fn residual_sq(b: &Array2<f64>, x: &Array1<f64>, y: &[f64]) -> f64 {
    b.dot(x).iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Global NNLS optimum by trying every support: the least-squares solution on
/// each column subset is kept when it is nonnegative. Exponential, so only
/// for a dozen columns or fewer.
pub fn nnls_by_enumeration(b: &Array2<f64>, y: &[f64]) -> (Array1<f64>, f64) {
    let n = b.ncols();
    assert!(n <= 14, "enumeration over {n} columns is too slow");
    let y_arr = Array1::from(y.to_vec());
    let mut best = Array1::zeros(n);
    let mut best_obj = residual_sq(b, &best, y);
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|c| mask & (1 << c) != 0).collect();
        let sub = b.select(ndarray::Axis(1), &cols);
        let Some(xs) = solve_dense(&sub.t().dot(&sub), &sub.t().dot(&y_arr)) else {
            continue;
        };
        if xs.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut x = Array1::zeros(n);
        for (&c, &v) in cols.iter().zip(&xs) {
            x[c] = v.max(0.0);
        }
        let obj = residual_sq(b, &x, y);
        if obj < best_obj {
            best_obj = obj;
            best = x;
        }
    }
    (best, best_obj)
}

/// Tracked score of a cell observed with value `v` in every slot of the
/// frames listed in `present`, by direct evaluation of the geometric weights
/// `lambda^{(r - r') T + s + 1}` (0-based slot `s`, frames 0-based).
pub fn tracked_weight(forgetting: f64, slots: usize, frame: usize, present: &[usize], v: f64) -> f64 {
    present
        .iter()
        .filter(|&&r| r <= frame)
        .map(|&r| {
            (0..slots)
                .map(|s| v * forgetting.powi(((frame - r) * slots + slots + s + 1) as i32))
                .sum::<f64>()
        })
        .sum()
}

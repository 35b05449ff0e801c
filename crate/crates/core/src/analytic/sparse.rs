// Sparse Gaussian elimination for the M-matrix systems that arise from
// first-step analysis: diagonal pivots, chosen greedily by Markowitz cost.

use std::collections::{BTreeMap, BTreeSet};

use super::AnalyticError;

const PIVOT_EPS: f64 = 1e-300;

/// Solves `A x = b` where `A` is given row-wise as `(column, value)` lists.
pub(crate) fn solve(n: usize, rows: Vec<Vec<(usize, f64)>>, mut b: Vec<f64>) -> Result<Vec<f64>, AnalyticError> {
    debug_assert_eq!(rows.len(), n);
    debug_assert_eq!(b.len(), n);

    let mut a: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(n);
    let mut cols: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, row) in rows.into_iter().enumerate() {
        let mut m = BTreeMap::new();
        for (j, v) in row {
            if v != 0.0 {
                *m.entry(j).or_insert(0.0) += v;
                cols[j].insert(i);
            }
        }
        a.push(m);
    }

    let cost = |a: &[BTreeMap<usize, f64>], cols: &[BTreeSet<usize>], p: usize| -> usize {
        a[p].len().saturating_sub(1) * cols[p].len().saturating_sub(1)
    };
    let mut queue: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut cur_cost = vec![0usize; n];
    for p in 0..n {
        cur_cost[p] = cost(&a, &cols, p);
        queue.insert((cur_cost[p], p));
    }

    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut pivot_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];

    while let Some(&(c, p)) = queue.iter().next() {
        queue.remove(&(c, p));
        let diag = a[p].get(&p).copied().unwrap_or(0.0);
        if diag.abs() < PIVOT_EPS {
            return Err(AnalyticError::Singular);
        }
        let prow: Vec<(usize, f64)> = a[p].iter().map(|(&j, &v)| (j, v)).collect();
        let targets: Vec<usize> = cols[p].iter().copied().filter(|&i| i != p).collect();
        let mut touched = BTreeSet::new();
        for i in targets {
            let f = match a[i].remove(&p) {
                Some(v) => v / diag,
                None => continue,
            };
            for &(j, v) in &prow {
                if j == p {
                    continue;
                }
                let e = a[i].entry(j).or_insert(0.0);
                *e -= f * v;
                cols[j].insert(i);
                touched.insert(j);
            }
            b[i] -= f * b[p];
            touched.insert(i);
        }
        for &(j, _) in &prow {
            cols[j].remove(&p);
            touched.insert(j);
        }
        cols[p].clear();
        done[p] = true;
        order.push(p);
        pivot_rows[p] = prow;
        for q in touched {
            if done[q] {
                continue;
            }
            let nc = cost(&a, &cols, q);
            if nc != cur_cost[q] {
                queue.remove(&(cur_cost[q], q));
                cur_cost[q] = nc;
                queue.insert((nc, q));
            }
        }
    }

    let mut x = vec![0.0; n];
    for &p in order.iter().rev() {
        let mut acc = b[p];
        let mut diag = 0.0;
        for &(j, v) in &pivot_rows[p] {
            if j == p {
                diag = v;
            } else {
                acc -= v * x[j];
            }
        }
        x[p] = acc / diag;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticError::Singular);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_rows(m: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        m.iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
            .collect()
    }

    #[test]
    fn small_dense_system() {
        let m = vec![vec![4.0, -1.0, 0.0], vec![-1.0, 4.0, -1.0], vec![0.0, -1.0, 4.0]];
        let x_true = [1.0, 2.0, 3.0];
        let b: Vec<f64> = m.iter().map(|r| r.iter().zip(x_true).map(|(a, x)| a * x).sum()).collect();
        let x = solve(3, dense_to_rows(&m), b).unwrap();
        for (a, e) in x.iter().zip(x_true) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn arrow_matrix_with_fill() {
        // dense first row and column, diagonally dominant
        let n = 40;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 2.0 * n as f64;
            m[0][i] += 1.0;
            m[i][0] += 1.0;
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = m.iter().map(|r| r.iter().zip(&x_true).map(|(a, x)| a * x).sum()).collect();
        let x = solve(n, dense_to_rows(&m), b).unwrap();
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }

    #[test]
    fn zero_pivot_is_singular() {
        let m = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(solve(2, dense_to_rows(&m), vec![1.0, 1.0]), Err(AnalyticError::Singular));
    }
}

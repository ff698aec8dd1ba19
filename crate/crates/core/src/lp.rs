//! Dense two-phase simplex for the small linear programs that arise when a
//! decomposition is rebuilt from a fixed set of atoms.

const EPS: f64 = 1e-11;

/// Minimizes `c·x` subject to `A x = b`, `x >= 0`.
///
/// Returns the optimal point and value, or `None` when infeasible or
/// unbounded.
pub(crate) fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<(Vec<f64>, f64)> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = s * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // phase one: minimize the artificial sum
    for j in 0..width {
        t[m][j] = -(0..m).map(|i| t[i][j]).sum::<f64>();
    }
    for i in 0..m {
        t[m][n + i] = 0.0;
    }
    if !run(&mut t, &mut basis, n + m) {
        return None;
    }
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if -t[m][width - 1] > 1e-9 * scale {
        return None;
    }
    // drive artificials out of the basis
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    for row in t.iter_mut() {
        for v in row.iter_mut().skip(n).take(m) {
            *v = 0.0;
        }
    }
    for j in 0..width {
        t[m][j] = if j < n { c[j] } else { 0.0 };
    }
    for i in 0..m {
        let bj = basis[i];
        if bj < n {
            let f = t[m][bj];
            if f != 0.0 {
                for j in 0..width {
                    t[m][j] -= f * t[i][j];
                }
            }
        }
    }
    if !run(&mut t, &mut basis, n) {
        return None;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Some((x, value))
}

// Bland's rule over the first `cols` columns. Returns false when unbounded.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cols: usize) -> bool {
    let m = basis.len();
    let last = t[0].len() - 1;
    for _ in 0..50_000 {
        let Some(enter) = (0..cols).find(|&j| t[m][j] < -EPS && !basis.contains(&j)) else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > EPS {
                let r = t[i][last] / t[i][enter];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => r < lr - EPS || (r <= lr + EPS && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, r));
                }
            }
        }
        let Some((row, _)) = leave else {
            return false;
        };
        pivot(t, basis, row, enter);
    }
    true
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pr = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (v, q) in r.iter_mut().zip(&pr) {
                    *v -= f * q;
                }
            }
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program() {
        // min -x - y, x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]];
        let (x, v) = simplex(&a, &[4.0, 6.0], &[-1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!((v + 2.8).abs() < 1e-12, "{x:?}");
        assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_negative_rhs() {
        let a = vec![vec![1.0, 1.0]];
        assert!(simplex(&a, &[-1.0], &[1.0, 1.0]).is_none());
        let a = vec![vec![-1.0, 1.0]];
        let (x, v) = simplex(&a, &[-2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(x, vec![2.0, 0.0]);
        assert_eq!(v, 2.0);
    }
}

//! Small dense routines for normal-equation least squares.

/// Cholesky factor of a symmetric positive semidefinite matrix with
/// diagonal pivoting: `P^T A P = L L^T` restricted to the first `rank`
/// pivots.
#[derive(Debug, Clone)]
pub(crate) struct PivotedCholesky {
    l: Vec<Vec<f64>>,
    /// `perm[k]` is the original column placed at pivot position `k`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedCholesky {
    /// Pivots whose remaining Schur complement drops below
    /// `rel_tol · max(diag(A))` are treated as linearly dependent.
    pub fn factor(a: &[Vec<f64>], rel_tol: f64) -> Self {
        let p = a.len();
        let mut work: Vec<Vec<f64>> = a.to_vec();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut l = vec![vec![0.0; p]; p];
        let max_diag = (0..p).map(|i| a[i][i]).fold(0.0f64, f64::max);
        let tol = rel_tol * max_diag.max(f64::MIN_POSITIVE);
        let mut rank = 0;
        for k in 0..p {
            let (pivot, value) = (k..p)
                .map(|j| (j, work[j][j]))
                .fold((k, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            if value <= tol {
                break;
            }
            work.swap(k, pivot);
            for row in &mut work {
                row.swap(k, pivot);
            }
            l.swap(k, pivot);
            perm.swap(k, pivot);

            let d = work[k][k].sqrt();
            l[k][k] = d;
            for i in k + 1..p {
                l[i][k] = work[i][k] / d;
            }
            for i in k + 1..p {
                for j in k + 1..=i {
                    let update = l[i][k] * l[j][k];
                    work[i][j] -= update;
                    work[j][i] = work[i][j];
                }
            }
            rank = k + 1;
        }
        Self { l, perm, rank }
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.perm.len()
    }

    /// Solves `A x = b` on the leading `rank` pivots; dependent columns get 0.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut y = vec![0.0; r];
        for i in 0..r {
            let s: f64 = (0..i).map(|k| self.l[i][k] * y[k]).sum();
            y[i] = (b[self.perm[i]] - s) / self.l[i][i];
        }
        let mut z = vec![0.0; r];
        for i in (0..r).rev() {
            let s: f64 = (i + 1..r).map(|k| self.l[k][i] * z[k]).sum();
            z[i] = (y[i] - s) / self.l[i][i];
        }
        let mut x = vec![0.0; self.perm.len()];
        for (k, &col) in self.perm.iter().enumerate().take(r) {
            x[col] = z[k];
        }
        x
    }

    /// Diagonal of `A^{-1}`; only meaningful at full rank.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let p = self.perm.len();
        (0..p)
            .map(|j| {
                let mut e = vec![0.0; p];
                e[j] = 1.0;
                self.solve(&e)[j]
            })
            .collect()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Z-scores, or `None` for a constant column.
pub(crate) fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let m = mean(xs);
    let sd = std_dev(xs);
    if sd.is_nan() || sd <= 0.0 || !sd.is_finite() || xs.iter().all(|&x| x == xs[0]) {
        return None;
    }
    Some(xs.iter().map(|x| (x - m) / sd).collect())
}

pub(crate) fn gram(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = columns.len();
    let mut out = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

pub(crate) fn cross(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    columns.iter().map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
}

/// Residual sum of squares of `y` against `columns · beta`.
pub(crate) fn residual_ss(columns: &[Vec<f64>], beta: &[f64], y: &[f64]) -> f64 {
    (0..y.len())
        .map(|i| {
            let fitted: f64 = columns.iter().zip(beta).map(|(c, b)| c[i] * b).sum();
            (y[i] - fitted).powi(2)
        })
        .sum()
}

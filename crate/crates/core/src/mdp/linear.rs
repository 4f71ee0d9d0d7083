use ndarray::{Array1, Array2};

use crate::error::{Result, SpiError};

/// Gaussian elimination with partial pivoting; `b` is overwritten with the solution.
pub(crate) fn solve_in_place(a: &mut Array2<f64>, b: &mut Array1<f64>) -> Result<()> {
    let n = b.len();
    if a.dim() != (n, n) {
        return Err(SpiError::Shape("linear system is not square".into()));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .unwrap_or(col);
        if a[[pivot, col]].abs() < 1e-300 {
            return Err(SpiError::InvalidMdp("singular Bellman system".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
            }
            b.swap(pivot, col);
        }
        let diag = a[[col, col]];
        for row in col + 1..n {
            let factor = a[[row, col]] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= factor * a[[col, k]];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[[row, k]] * b[k];
        }
        b[row] = acc / a[[row, row]];
    }
    Ok(())
}

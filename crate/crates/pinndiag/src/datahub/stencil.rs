//! Central finite-difference stencils of arbitrary derivative order,
//! generated by solving the moment conditions on symmetric integer offsets.
//! Used to cross-check analytic derivative sources against grid data.

use crate::error::{Error, Result};

/// Coefficients c_j on offsets -m..=m such that
/// sum_j c_j f(x + j h) / h^d approximates f^(d)(x) with error O(h^p),
/// p >= `accuracy` (one order better when parity helps).
pub fn central_stencil(deriv: usize, accuracy: usize) -> Result<(i64, Vec<f64>)> {
    if accuracy < 2 || accuracy % 2 != 0 {
        return Err(Error::config("stencil accuracy must be even and >= 2"));
    }
    // Smallest symmetric stencil: n = 2 ceil(d/2) - 1 + p points.
    let n = 2 * ((deriv + 1) / 2) - 1 + accuracy;
    let m = ((n - 1) / 2) as i64;
    // Vandermonde moment system: sum_j c_j j^k = d! [k == d], k = 0..n-1.
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (k, row) in a.iter_mut().enumerate() {
        for (col, j) in (-m..=m).enumerate() {
            row[col] = (j as f64).powi(k as i32);
        }
    }
    rhs[deriv] = (1..=deriv).map(|i| i as f64).product::<f64>();
    let coeffs = solve_dense(a, rhs)?;
    Ok((m, coeffs))
}

/// Gaussian elimination with partial pivoting; the systems here are tiny.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::numeric("singular stencil system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Apply a 1D stencil to samples of `f` around `x0`.
pub fn apply_stencil(
    f: &dyn Fn(f64) -> f64,
    x0: f64,
    h: f64,
    deriv: usize,
    accuracy: usize,
) -> Result<f64> {
    let (m, c) = central_stencil(deriv, accuracy)?;
    let mut acc = 0.0;
    for (idx, j) in (-m..=m).enumerate() {
        acc += c[idx] * f(x0 + j as f64 * h);
    }
    Ok(acc / h.powi(deriv as i32))
}

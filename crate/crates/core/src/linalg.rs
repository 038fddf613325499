//! Dense helpers for the small symmetric positive-definite systems the
//! agent maintains. Dimensions here are the feature dimension `d`
//! (single digits to a few dozen), so direct Cholesky factorization is
//! both simpler and faster than anything fancier.

use ndarray::{Array1, Array2};

/// `x^T m x` without allocating. `m` must be square with side `x.len()`.
pub fn quad_form(m: &Array2<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    debug_assert_eq!(m.nrows(), d);
    debug_assert_eq!(m.ncols(), d);
    let mut total = 0.0;
    for i in 0..d {
        let row = m.row(i);
        let mut acc = 0.0;
        for j in 0..d {
            acc += row[j] * x[j];
        }
        total += x[i] * acc;
    }
    total
}

/// `m += w * x x^T`.
pub fn add_scaled_outer(m: &mut Array2<f64>, w: f64, x: &[f64]) {
    let d = x.len();
    for i in 0..d {
        let xi = w * x[i];
        let mut row = m.row_mut(i);
        for j in 0..d {
            row[j] += xi * x[j];
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// matrix. Returns `None` when a pivot is not strictly positive.
pub fn cholesky(m: &Array2<f64>) -> Option<Array2<f64>> {
    let d = m.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut sum = m[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solves `m z = b` for symmetric positive-definite `m`.
pub fn spd_solve(m: &Array2<f64>, b: &[f64]) -> Option<Array1<f64>> {
    let l = cholesky(m)?;
    let d = b.len();
    // forward: L y = b
    let mut y = Array1::<f64>::zeros(d);
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    // backward: L^T z = y
    let mut z = Array1::<f64>::zeros(d);
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in (i + 1)..d {
            sum -= l[[k, i]] * z[k];
        }
        z[i] = sum / l[[i, i]];
    }
    Some(z)
}

/// Full inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &Array2<f64>) -> Option<Array2<f64>> {
    let d = m.nrows();
    let l = cholesky(m)?;
    let mut inv = Array2::<f64>::zeros((d, d));
    let mut unit = vec![0.0; d];
    for col in 0..d {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[col] = 1.0;
        // reuse the factor rather than re-solving from scratch
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut sum = unit[i];
            for k in 0..i {
                sum -= l[[i, k]] * y[k];
            }
            y[i] = sum / l[[i, i]];
        }
        for i in (0..d).rev() {
            let mut sum = y[i];
            for k in (i + 1)..d {
                sum -= l[[k, i]] * inv[[k, col]];
            }
            inv[[i, col]] = sum / l[[i, i]];
        }
    }
    // symmetrize to squash round-off skew
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = avg;
            inv[[j, i]] = avg;
        }
    }
    Some(inv)
}

/// Frobenius norm of `a b - I`.
pub fn product_identity_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let d = a.nrows();
    let mut sq = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[[i, k]] * b[[k, j]];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            sq += (acc - target) * (acc - target);
        }
    }
    sq.sqrt()
}

/// Euclidean norm of a slice.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product of two slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solve_roundtrip() {
        let m = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let z = spd_solve(&m, &b).unwrap();
        let back = m.dot(&z);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_matches_solve() {
        let m = array![[2.0, 0.3], [0.3, 1.5]];
        let inv = spd_inverse(&m).unwrap();
        assert!(product_identity_gap(&m, &inv) < 1e-12);
    }

    #[test]
    fn quad_form_matches_expanded() {
        let m = array![[2.0, 0.5], [0.5, 1.0]];
        let x = [3.0, -1.0];
        let expected = 2.0 * 9.0 - 2.0 * 0.5 * 3.0 + 1.0;
        assert_abs_diff_eq!(quad_form(&m, &x), expected, epsilon = 1e-12);
    }

    #[test]
    fn non_pd_matrix_rejected() {
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&m).is_none());
    }
}

//! Small dense helpers. Matrices are row-major `Vec<f64>` with an explicit size.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dimension at or below which [`spectral_norm_sym`] uses a full Jacobi solve.
pub const JACOBI_MAX_DIM: usize = 64;

/// Eigenvalues of a symmetric `n × n` matrix by cyclic Jacobi rotations,
/// in ascending order.
pub fn jacobi_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s
    };
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        if off_norm(&a) <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

/// Largest eigenvalue magnitude of a symmetric matrix by power iteration.
pub fn power_iteration(matrix: &[f64], n: usize, tol: f64, max_iter: usize) -> f64 {
    assert_eq!(matrix.len(), n * n);
    if n == 0 {
        return 0.0;
    }
    // Deterministic start vector with no special alignment.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda = 0.0;
    let mut w = vec![0.0; n];
    for _ in 0..max_iter {
        for i in 0..n {
            w[i] = dot(&matrix[i * n..(i + 1) * n], &v);
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w).abs();
        for i in 0..n {
            v[i] = w[i] / nw;
        }
        if (next - lambda).abs() <= tol * next.max(1.0) {
            return nw;
        }
        lambda = next;
    }
    lambda
}

/// Spectral norm of a symmetric matrix: largest absolute eigenvalue.
pub fn spectral_norm_sym(matrix: &[f64], n: usize) -> f64 {
    if n <= JACOBI_MAX_DIM {
        jacobi_eigenvalues(matrix, n)
            .into_iter()
            .fold(0.0, |m: f64, e| m.max(e.abs()))
    } else {
        power_iteration(matrix, n, 1e-10, 10_000)
    }
}

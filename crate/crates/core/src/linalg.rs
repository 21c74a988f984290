//! Matrix-free conjugate gradients for the symmetric positive definite
//! systems of the implicit diffusion and viscous steps.

use thiserror::Error;

/// Relative residual every accepted solve must reach.
pub const REQUIRED_RTOL: f64 = 1e-10;

/// Relative residual the iteration aims for. Solves that stall between this
/// and [`REQUIRED_RTOL`] are accepted.
pub const TARGET_RTOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
pub struct LinearSolveDivergence {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = rhs` starting from the contents of `x`.
///
/// Reductions run sequentially in index order, so results are reproducible
/// bit for bit.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    max_iter: usize,
) -> Result<CgStats, LinearSolveDivergence> {
    let n = rhs.len();
    assert_eq!(x.len(), n);
    let norm_b = dot(rhs, rhs).sqrt();
    if norm_b == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut rr = dot(&r, &r);
    if rr == 0.0 {
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut p = r.clone();
    let mut iterations = 0;
    let mut rel = rr.sqrt() / norm_b;
    while rel > TARGET_RTOL && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        iterations += 1;
        rel = rr_new.sqrt() / norm_b;
        if rr_new == 0.0 {
            rel = 0.0;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rel <= REQUIRED_RTOL {
        Ok(CgStats {
            iterations,
            residual: rel,
        })
    } else {
        Err(LinearSolveDivergence {
            iterations,
            residual: rel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 4.0 * x[i] - l - r;
        }
    }

    #[test]
    fn solves_diagonally_dominant_system() {
        let n = 50;
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut rhs = vec![0.0; n];
        tridiag(&exact, &mut rhs);
        let mut x = vec![0.0; n];
        let stats = conjugate_gradient(tridiag, &rhs, &mut x, 200).unwrap();
        assert!(stats.iterations > 0 && stats.residual <= REQUIRED_RTOL);
        for (a, b) in x.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_initial_guess_takes_no_iterations() {
        let x0 = vec![1.0; 8];
        let mut rhs = vec![0.0; 8];
        tridiag(&x0, &mut rhs);
        let mut x = x0.clone();
        let stats = conjugate_gradient(tridiag, &rhs, &mut x, 10).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(x, x0);
    }

    #[test]
    fn iteration_cap_reports_divergence() {
        let n = 200;
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let weak = |x: &[f64], y: &mut [f64]| {
            let n = x.len();
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0001 * x[i] - l - r;
            }
        };
        let err = conjugate_gradient(weak, &rhs, &mut x, 3).unwrap_err();
        assert_eq!(err.iterations, 3);
    }
}

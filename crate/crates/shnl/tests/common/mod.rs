#![allow(dead_code)]

use std::sync::Arc;

use shnl::domain::{Domain, Field};
use shnl::initial::InitialCondition;

pub fn dom1(n: usize, length: f64) -> Arc<Domain> {
    Domain::new(&[n], &[length]).unwrap()
}

pub fn dom2(nx: usize, ny: usize, lx: f64, ly: f64) -> Arc<Domain> {
    Domain::new(&[nx, ny], &[lx, ly]).unwrap()
}

/// Seeded band-limited random field, rescaled to the given sup amplitude.
pub fn random_field(domain: &Arc<Domain>, seed: u64, cutoff: usize, amplitude: f64) -> Field {
    InitialCondition::RandomSmooth { seed, cutoff, amplitude }
        .build(domain)
        .unwrap()
}

pub fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn l2_diff(a: &Field, b: &Field) -> f64 {
    let w = a.domain().cell_volume();
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (w * sum).sqrt()
}

pub fn l2_norm(a: &Field) -> f64 {
    let w = a.domain().cell_volume();
    let sum: f64 = a.values().iter().map(|x| x * x).sum();
    (w * sum).sqrt()
}

/// Solve a small dense linear system by Gaussian elimination with partial
/// pivoting. Used by tests that derive stencil or fit coefficients on the fly.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    x
}

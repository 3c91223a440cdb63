//! Small numeric helpers shared across modules.

/// Compensated (Neumaier) summation. All quadrature sums, masses and norms go
/// through this so that results are deterministic and the rounding floor stays
/// near one ulp even for long accumulations.
pub(crate) fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Visit every flat index of a row-major array of the given shape together
/// with its multi-index (last axis fastest).
pub(crate) fn for_each_index(sizes: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = sizes.iter().product();
    let mut idx = vec![0usize; sizes.len()];
    for flat in 0..total {
        f(flat, &idx);
        for a in (0..sizes.len()).rev() {
            idx[a] += 1;
            if idx[a] < sizes[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Row-major strides (last axis has stride 1).
pub(crate) fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; sizes.len()];
    for a in (0..sizes.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * sizes[a + 1];
    }
    s
}

/// Smallest integer >= n whose prime factors are all in {2, 3, 5}; good FFT
/// lengths for the padded convolution grids.
pub(crate) fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2usize, 3, 5] {
            while k.is_multiple_of(p) {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Least-squares slope of ln(y) against ln(x). Returns None when fewer than
/// two usable points remain.
pub(crate) fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = ksum(usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    let sxy = ksum(usable.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Weighted Lp norm of raw values: (sum |v|^s * weight)^(1/s), or the plain
/// sup norm when s is infinite. Callers restrict or transform the values
/// before handing them over.
pub(crate) fn lp_norm(values: impl IntoIterator<Item = f64>, weight: f64, s: f64) -> f64 {
    if s.is_infinite() {
        return values.into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let total = if s == 1.0 {
        ksum(values.into_iter().map(|v| v.abs()))
    } else if s == 2.0 {
        ksum(values.into_iter().map(|v| v * v))
    } else {
        ksum(values.into_iter().map(|v| v.abs().powf(s)))
    };
    if s == 1.0 {
        total * weight
    } else if s == 2.0 {
        (total * weight).sqrt()
    } else {
        (total * weight).powf(1.0 / s)
    }
}

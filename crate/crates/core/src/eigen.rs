//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! the implicit QL algorithm (the classic tred2/tql2 pair).
//!
//! Storage is the transpose of the textbook layout so the inner loops run
//! over contiguous memory. The reduction leaves the last basis vector
//! invariant, which is what makes the weights-only mode cheap.

use crate::error::{invalid, Error, Result};

/// Eigenvalues in ascending order and, optionally, the eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `vectors[ν]` is the normalized eigenvector of `values[ν]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Full eigendecomposition of the symmetric `n × n` row-major matrix `a`.
pub fn eigh(a: &[f64], n: usize) -> Result<Eigen> {
    check(a, n)?;
    let mut w = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut w, n, &mut d, &mut e, true);
    tql2(&mut d, &mut e, n, Rotations::Full(&mut w))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    Ok(Eigen {
        values: order.iter().map(|&i| d[i]).collect(),
        vectors: order.iter().map(|&i| w[i * n..(i + 1) * n].to_vec()).collect(),
    })
}

/// Eigenvalues and the squared overlaps `|⟨ν|index⟩|²`, without forming
/// eigenvectors. Cost is that of the tridiagonal reduction alone.
pub fn eigh_weights(a: &[f64], n: usize, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check(a, n)?;
    if index >= n {
        return Err(invalid(format!("index {index} out of range for n = {n}")));
    }
    let mut w = a.to_vec();
    if index != n - 1 {
        // Symmetric permutation moving `index` to the invariant last slot.
        let last = n - 1;
        for k in 0..n {
            w.swap(index * n + k, last * n + k);
        }
        for k in 0..n {
            w.swap(k * n + index, k * n + last);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut w, n, &mut d, &mut e, false);
    drop(w);
    let mut z = vec![0.0; n];
    z[n - 1] = 1.0;
    tql2(&mut d, &mut e, n, Rotations::Row(&mut z))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    Ok((
        order.iter().map(|&i| d[i]).collect(),
        order.iter().map(|&i| z[i] * z[i]).collect(),
    ))
}

fn check(a: &[f64], n: usize) -> Result<()> {
    if n == 0 || a.len() != n * n {
        return Err(invalid(format!("expected {n}x{n} matrix, got {} entries", a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    Ok(())
}

/// Householder reduction of `w` (symmetric, so `w` equals its transpose)
/// to tridiagonal form with diagonal `d` and subdiagonal `e[1..]`.
///
/// `w[j*n + k]` plays the role of `V[k][j]` in the textbook algorithm. With
/// `accumulate`, row `j` of `w` ends up holding column `j` of the orthogonal
/// transform.
fn tred2(w: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    for j in 0..n {
        d[j] = w[j * n + n - 1];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[j * n + i - 1];
                w[j * n + i] = 0.0;
                w[i * n + j] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                w[i * n + j] = f;
                let row = &w[j * n..j * n + i];
                g = e[j] + row[j] * f;
                for k in j + 1..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let row = &mut w[j * n..j * n + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = row[i - 1];
                w[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for i in 0..n {
            d[i] = w[i * n + i];
        }
        e[0] = 0.0;
        return;
    }

    for i in 0..n - 1 {
        w[i * n + n - 1] = w[i * n + i];
        w[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += w[(i + 1) * n + k] * w[j * n + k];
                }
                for k in 0..=i {
                    w[j * n + k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            w[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[j * n + n - 1];
        w[j * n + n - 1] = 0.0;
    }
    w[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

enum Rotations<'a> {
    /// Rows of the transposed eigenvector matrix.
    Full(&'a mut [f64]),
    /// A single component (the last row of the eigenvector matrix).
    Row(&'a mut [f64]),
}

/// Implicit QL iterations on the tridiagonal matrix `(d, e)`.
fn tql2(d: &mut [f64], e: &mut [f64], n: usize, mut rot: Rotations) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    match &mut rot {
                        Rotations::Full(w) => {
                            let (a, b) = w.split_at_mut((i + 1) * n);
                            let vi = &mut a[i * n..];
                            let vi1 = &mut b[..n];
                            for (x, y) in vi.iter_mut().zip(vi1.iter_mut()) {
                                let hk = *y;
                                *y = s * *x + c * hk;
                                *x = c * *x - s * hk;
                            }
                        }
                        Rotations::Row(z) => {
                            let hk = z[i + 1];
                            z[i + 1] = s * z[i] + c * hk;
                            z[i] = c * z[i] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Largest absolute row sum, an upper bound on the spectral norm.
pub fn norm_inf(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    fn residual(a: &[f64], n: usize, lambda: f64, v: &[f64]) -> f64 {
        (0..n)
            .map(|i| {
                let hv: f64 = (0..n).map(|j| a[i * n + j] * v[j]).sum();
                (hv - lambda * v[i]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn residual_and_orthogonality() {
        for (n, seed) in [(1, 0), (2, 1), (7, 2), (60, 3), (200, 4)] {
            let a = random_symmetric(n, seed);
            let eig = eigh(&a, n).unwrap();
            let norm = norm_inf(&a, n);
            for (l, v) in eig.values.iter().zip(&eig.vectors) {
                assert!(residual(&a, n, *l, v) <= 1e-10 * norm);
            }
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = eig.vectors[i].iter().zip(&eig.vectors[j]).map(|(x, y)| x * y).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() < 1e-12);
                }
            }
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn known_spectrum() {
        // Path-graph Laplacian-like tridiagonal: eigenvalues 2 - 2cos(kπ/(n+1)).
        let n = 30;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0;
            if i + 1 < n {
                a[i * n + i + 1] = -1.0;
                a[(i + 1) * n + i] = -1.0;
            }
        }
        let eig = eigh(&a, n).unwrap();
        for (k, l) in eig.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((l - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn weights_match_full_decomposition() {
        let n = 80;
        let a = random_symmetric(n, 9);
        let full = eigh(&a, n).unwrap();
        for index in [0, 17, n - 1] {
            let (vals, wts) = eigh_weights(&a, n, index).unwrap();
            let total: f64 = wts.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for k in 0..n {
                assert!((vals[k] - full.values[k]).abs() < 1e-12);
                assert!((wts[k] - full.vectors[k][index].powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_and_degenerate_inputs() {
        let a = vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0];
        let eig = eigh(&a, 3).unwrap();
        assert_eq!(eig.values, vec![1.0, 3.0, 3.0]);
        let (_, w) = eigh_weights(&a, 3, 1).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        assert!(eigh(&[1.0, 2.0], 2).is_err());
        assert!(eigh(&[f64::NAN], 1).is_err());
    }
}

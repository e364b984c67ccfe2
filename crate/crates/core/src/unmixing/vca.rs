//! Vertex Component Analysis.
//!
//! Pixels are projected onto a `d`-dimensional signal subspace; endmembers are
//! then picked one at a time as the pixel with the largest absolute projection
//! onto a random direction orthogonal to the endmembers found so far.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EndmemberMatrix;
use crate::{Error, HsiCube, Result};

/// Relative singular-value floor below which the data is treated as rank
/// deficient. Singular values come from the eigenvalues of `RRᵀ`, so the
/// achievable floor is about `sqrt(machine epsilon)`.
const DATA_RANK_TOL: f64 = 1e-6;

/// Leading `k` eigenvectors (descending eigenvalue) and all eigenvalues,
/// sorted descending.
fn leading_eigvecs(sym: DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), k, |r, j| {
        eig.eigenvectors[(r, order[j])]
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (vecs, vals)
}

/// SNR estimate in dB from the raw data, its mean and the projected centered
/// data.
fn estimate_snr(r: &DMatrix<f64>, mean: &DVector<f64>, projected: &DMatrix<f64>, d: usize) -> f64 {
    let (c, n) = r.shape();
    let p_y = r.norm_squared() / n as f64;
    let p_x = projected.norm_squared() / n as f64 + mean.norm_squared();
    let signal = p_x - d as f64 / c as f64 * p_y;
    let noise = p_y - p_x;
    if noise <= 0.0 {
        f64::INFINITY
    } else if signal <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

/// Extracts `d` endmembers; every returned column is an actual pixel spectrum.
/// Deterministic for a given `(cube, d, seed)`.
pub fn vca(cube: &HsiCube, d: usize, seed: u64) -> Result<EndmemberMatrix> {
    let (c, n) = (cube.bands, cube.pixels());
    if d < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 endmembers, got {d}"
        )));
    }
    if d > n {
        return Err(Error::Invalid(format!(
            "{d} endmembers requested from {n} pixels"
        )));
    }
    if d > c {
        return Err(Error::Invalid(format!(
            "{d} endmembers requested from {c} bands"
        )));
    }
    let r = DMatrix::from_fn(c, n, |b, p| cube.data[b * n + p] as f64);

    let (_, raw_vals) = leading_eigvecs(&r * r.transpose() / n as f64, 0);
    let top = raw_vals[0].max(0.0).sqrt();
    let kth = raw_vals[d - 1].max(0.0).sqrt();
    if !(kth > DATA_RANK_TOL * top) {
        return Err(Error::RankDeficient(format!(
            "data spans fewer than {d} dimensions (singular value ratio {:.3e})",
            if top > 0.0 { kth / top } else { 0.0 }
        )));
    }

    let mean = r.column_mean();
    let mut centered = r.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let (ud, _) = leading_eigvecs(&centered * centered.transpose() / n as f64, d);
    let x_p = ud.transpose() * &centered;
    let snr = estimate_snr(&r, &mean, &x_p, d);
    let snr_threshold = 15.0 + 10.0 * (d as f64).log10();

    let y = if snr < snr_threshold {
        // (d-1)-dimensional affine projection lifted by a constant coordinate
        let x = x_p.rows(0, d - 1).into_owned();
        let lift = x.column_iter().map(|col| col.norm()).fold(0.0f64, f64::max);
        let mut y = DMatrix::from_element(d, n, lift);
        y.rows_mut(0, d - 1).copy_from(&x);
        y
    } else {
        // projective projection onto the d-dimensional subspace
        let (ud, _) = leading_eigvecs(&r * r.transpose() / n as f64, d);
        let mut x = ud.transpose() * &r;
        let u = x.column_mean();
        for mut col in x.column_iter_mut() {
            let s = col.dot(&u);
            if s.abs() > f64::MIN_POSITIVE {
                col /= s;
            }
        }
        x
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = DMatrix::<f64>::zeros(d, d);
    basis[(d - 1, 0)] = 1.0;
    let mut indices = Vec::with_capacity(d);
    for i in 0..d {
        let w = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let pinv = basis
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::RankDeficient(e.to_string()))?;
        let mut f = &w - &basis * (pinv * &w);
        let norm = f.norm();
        if norm > 0.0 {
            f /= norm;
        }
        let v = f.transpose() * &y;
        let (best, _) = v
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &s)| {
                if s.abs() > acc.1 {
                    (j, s.abs())
                } else {
                    acc
                }
            });
        indices.push(best);
        basis.set_column(i, &y.column(best));
    }

    let columns: Vec<Vec<f64>> = indices.iter().map(|&p| cube.spectrum(p)).collect();
    EndmemberMatrix::from_columns(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unmixing::spectral_angle;

    fn cube_from_pixels(pixels: &[Vec<f64>], h: usize, w: usize) -> HsiCube {
        let c = pixels[0].len();
        let n = h * w;
        let mut data = vec![0.0f32; c * n];
        for (p, s) in pixels.iter().enumerate() {
            for b in 0..c {
                data[b * n + p] = s[b] as f32;
            }
        }
        HsiCube::new(c, h, w, data).unwrap()
    }

    #[test]
    fn two_point_set() {
        let a1: Vec<f64> = (0..6).map(|b| 0.25 + 0.125 * b as f64).collect();
        let a2: Vec<f64> = (0..6).map(|b| 1.0 - 0.125 * b as f64).collect();
        let pixels: Vec<Vec<f64>> = (0..12)
            .map(|i| if i % 3 == 0 { a1.clone() } else { a2.clone() })
            .collect();
        let a = vca(&cube_from_pixels(&pixels, 3, 4), 2, 5).unwrap();
        let cols = [a.column(0), a.column(1)];
        assert!(
            (cols[0] == a1 && cols[1] == a2) || (cols[0] == a2 && cols[1] == a1),
            "{cols:?}"
        );
    }

    #[test]
    fn identical_pixels_are_rank_deficient() {
        let pixels = vec![vec![0.5, 0.25, 0.75]; 9];
        assert!(matches!(
            vca(&cube_from_pixels(&pixels, 3, 3), 2, 0),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn too_many_endmembers() {
        let pixels = vec![vec![0.5, 0.25, 0.75], vec![0.1, 0.2, 0.3]];
        assert!(vca(&cube_from_pixels(&pixels, 1, 2), 3, 0).is_err());
        assert!(vca(&cube_from_pixels(&pixels, 1, 2), 1, 0).is_err());
    }

    #[test]
    fn recovers_simplex_vertices() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let c = 20;
        let truth: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..c).map(|_| rng.random_range(0.1..1.0)).collect())
            .collect();
        let mut pixels: Vec<Vec<f64>> = truth.clone();
        while pixels.len() < 100 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            pixels.push(
                (0..c)
                    .map(|b| (0..4).map(|k| w[k] / s * truth[k][b]).sum())
                    .collect(),
            );
        }
        let cube = cube_from_pixels(&pixels, 10, 10);
        let a = vca(&cube, 4, 3).unwrap();
        // greedy matching on spectral angle
        let mut free: Vec<usize> = (0..4).collect();
        for k in 0..4 {
            let col = a.column(k);
            let (pos, angle) = free
                .iter()
                .enumerate()
                .map(|(i, &t)| (i, spectral_angle(&col, &truth[t])))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(angle < 1e-2, "column {k} angle {angle}");
            free.remove(pos);
        }
        assert_eq!(a.matrix(), vca(&cube, 4, 3).unwrap().matrix());
    }
}

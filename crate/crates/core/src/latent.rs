//! Constraint relaxation between abundances and an unconstrained latent space.
//!
//! `to_latent` is `Z = ln(X + e^{-ln d - 8})` elementwise and `from_latent` a
//! per-pixel softmax. The pair is lossy: `from_latent(to_latent(X))` equals
//! `(X + e^{-ln d - 8}) / (1 + e^{-8})`, which is within `e^{-8}` of `X`.

use crate::field::{AbundanceField, Field, LatentField};

/// Additive offset `e^{-ln d - 8} = e^{-8} / d` that keeps the log finite.
pub fn latent_offset(d: usize) -> f64 {
    (-(d as f64).ln() - 8.0).exp()
}

/// Worst-case deviation of a projection round trip, `e^{-8}`.
pub fn round_trip_bound() -> f64 {
    (-8.0f64).exp()
}

pub fn to_latent(x: &AbundanceField) -> LatentField {
    let f = x.field();
    let off = latent_offset(f.channels);
    LatentField(Field {
        channels: f.channels,
        height: f.height,
        width: f.width,
        data: f.data.iter().map(|&v| (v.max(0.0) + off).ln()).collect(),
    })
}

/// Per-pixel softmax over channels, with max subtraction.
pub fn from_latent(z: &LatentField) -> AbundanceField {
    let f = &z.0;
    let n = f.pixels();
    let d = f.channels;
    let mut out = Field::zeros(d, f.height, f.width);
    let mut buf = vec![0.0; d];
    for p in 0..n {
        let max = (0..d)
            .map(|c| f.data[c * n + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..d {
            buf[c] = (f.data[c * n + p] - max).exp();
            sum += buf[c];
        }
        for c in 0..d {
            out.data[c * n + p] = buf[c] / sum;
        }
    }
    AbundanceField::new_unchecked(out)
}

/// Directional derivative of [`to_latent`] at `x` along `dx`.
pub fn to_latent_jvp(x: &AbundanceField, dx: &Field) -> Field {
    let f = x.field();
    let off = latent_offset(f.channels);
    Field {
        data: f
            .data
            .iter()
            .zip(&dx.data)
            .map(|(&v, &dv)| dv / (v.max(0.0) + off))
            .collect(),
        ..f.clone()
    }
}

/// Directional derivative of [`from_latent`] at `z` along `dz`:
/// `s ⊙ (dz − ⟨s, dz⟩)` per pixel, with `s` the softmax.
pub fn from_latent_jvp(z: &LatentField, dz: &Field) -> Field {
    let s = from_latent(z);
    let s = s.field();
    let n = s.pixels();
    let mut out = s.clone();
    for p in 0..n {
        let inner: f64 = (0..s.channels)
            .map(|c| s.data[c * n + p] * dz.data[c * n + p])
            .sum();
        for c in 0..s.channels {
            let i = c * n + p;
            out.data[i] = s.data[i] * (dz.data[i] - inner);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::UNITY_TOL;
    use proptest::prelude::*;

    fn abundance(d: usize, pixels: &[Vec<f64>]) -> AbundanceField {
        AbundanceField::new(Field::from_pixels(d, 1, pixels.len(), pixels)).unwrap()
    }

    #[test]
    fn uniform_maps_to_constant() {
        let x = abundance(4, &[vec![0.25; 4]]);
        let z = to_latent(&x);
        let expect = ((1.0 + (-8.0f64).exp()) / 4.0).ln();
        for v in &z.0.data {
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_values() {
        let z = to_latent(&abundance(2, &[vec![1.0, 0.0]]));
        // ln(1 + e^-8/2) and ln(e^-8/2) = -8 - ln 2
        let e8 = (-8.0f64).exp();
        assert!((z.0.data[0] - (e8 / 2.0).ln_1p()).abs() < 1e-15);
        assert!((z.0.data[1] - (-8.0 - 2f64.ln())).abs() < 1e-13);
        assert!((z.0.data[0] - 1.677e-4).abs() < 1e-6);
        assert!((z.0.data[1] + 8.693147).abs() < 1e-6);
    }

    #[test]
    fn round_trip_closed_form() {
        let x = abundance(3, &[vec![0.2, 0.0, 0.8], vec![1.0, 0.0, 0.0]]);
        let back = from_latent(&to_latent(&x));
        let off = latent_offset(3);
        let e8 = (-8.0f64).exp();
        for (u, v) in back.field().data.iter().zip(&x.field().data) {
            assert!((u - (v + off) / (1.0 + e8)).abs() < 1e-15);
            assert!((u - v).abs() <= e8);
        }
    }

    #[test]
    fn constant_latent_is_uniform() {
        let z = LatentField(Field::from_pixels(5, 1, 1, &[vec![-3.0; 5]]));
        for v in &from_latent(&z).field().data {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_latents_stay_valid() {
        let z = LatentField(Field::from_pixels(
            3,
            1,
            2,
            &[vec![1e4, -1e4, 0.0], vec![-800.0, -900.0, -1000.0]],
        ));
        let x = from_latent(&z);
        AbundanceField::new(x.field().clone()).unwrap();
        assert!(x.field().data.iter().all(|v| v.is_finite()));
    }

    fn random_pixels(d: usize, raw: &[f64]) -> Vec<Vec<f64>> {
        raw.chunks(d)
            .map(|c| {
                let s: f64 = c.iter().sum();
                c.iter().map(|v| v / s).collect()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn round_trip_bound_holds(d in 2usize..17, raw in prop::collection::vec(1e-3f64..1.0, 16 * 8)) {
            let x = abundance(d, &random_pixels(d, &raw[..d * 8]));
            let back = from_latent(&to_latent(&x));
            let err = back.field().data.iter().zip(&x.field().data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err <= round_trip_bound());
        }

        #[test]
        fn shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 6), shift in -50.0f64..50.0) {
            let a = from_latent(&LatentField(Field::from_pixels(3, 1, 2, &[z[..3].to_vec(), z[3..].to_vec()])));
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let b = from_latent(&LatentField(Field::from_pixels(3, 1, 2, &[shifted[..3].to_vec(), shifted[3..].to_vec()])));
            for (u, v) in a.field().data.iter().zip(&b.field().data) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_output_on_simplex(z in prop::collection::vec(-300.0f64..300.0, 8)) {
            let x = from_latent(&LatentField(Field::from_pixels(8, 1, 1, &[z])));
            let s: f64 = x.field().data.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-7 && (s - 1.0).abs() < UNITY_TOL);
            prop_assert!(x.field().data.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = rng.random_range(2..8);
            let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
            let x = abundance(d, &random_pixels(d, &raw));
            let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dx = Field::from_pixels(d, 1, 1, std::slice::from_ref(&dir));
            let h = 1e-6;
            let shift = |s: f64| {
                let mut f = x.field().clone();
                f.data.iter_mut().zip(&dir).for_each(|(v, dv)| *v += s * dv);
                AbundanceField::new_unchecked(f)
            };
            let jvp = to_latent_jvp(&x, &dx);
            let (zp, zm) = (to_latent(&shift(h)), to_latent(&shift(-h)));
            for i in 0..d {
                let fd = (zp.0.data[i] - zm.0.data[i]) / (2.0 * h);
                assert!((fd - jvp.data[i]).abs() <= 1e-4 * jvp.data[i].abs().max(1e-3));
            }

            let z = LatentField(Field::from_pixels(
                d,
                1,
                1,
                &[(0..d).map(|_| rng.random_range(-5.0..5.0)).collect()],
            ));
            let jvp = from_latent_jvp(&z, &dx);
            let zs = |s: f64| {
                let mut f = z.0.clone();
                f.data.iter_mut().zip(&dir).for_each(|(v, dv)| *v += s * dv);
                from_latent(&LatentField(f))
            };
            let (xp, xm) = (zs(h), zs(-h));
            for i in 0..d {
                let fd = (xp.field().data[i] - xm.field().data[i]) / (2.0 * h);
                assert!(
                    (fd - jvp.data[i]).abs() <= 1e-4 * jvp.data[i].abs().max(1e-3),
                    "{fd} vs {}",
                    jvp.data[i]
                );
            }
        }
    }
}

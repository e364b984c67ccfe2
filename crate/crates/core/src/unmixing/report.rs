use serde::Serialize;

use crate::{Error, HsiCube, Result};

/// Angle between two spectra in radians. Computed as
/// `2·atan2(‖â − b̂‖, ‖â + b̂‖)` on the unit vectors, which equals the arccos of
/// the clamped cosine but stays accurate near 0 and π. A zero spectrum is at
/// angle 0 from another zero spectrum and π/2 from anything else.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (false, false) => 0.0,
        (true, true) => {
            let (mut diff, mut sum) = (0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                let (u, v) = (x / na, y / nb);
                diff += (u - v) * (u - v);
                sum += (u + v) * (u + v);
            }
            2.0 * diff.sqrt().atan2(sum.sqrt())
        }
        _ => std::f64::consts::FRAC_PI_2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub rmse: f64,
    pub mean_spectral_angle: f64,
}

pub fn reconstruction_report(y: &HsiCube, y_hat: &HsiCube) -> Result<ReconstructionReport> {
    if (y.bands, y.height, y.width) != (y_hat.bands, y_hat.height, y_hat.width) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            y.bands, y.height, y.width, y_hat.bands, y_hat.height, y_hat.width
        )));
    }
    let sse: f64 = y
        .data
        .iter()
        .zip(&y_hat.data)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    let rmse = (sse / y.data.len() as f64).sqrt();
    let angles: f64 = (0..y.pixels())
        .map(|p| spectral_angle(&y.spectrum(p), &y_hat.spectrum(p)))
        .sum();
    Ok(ReconstructionReport {
        rmse,
        mean_spectral_angle: angles / y.pixels() as f64,
    })
}

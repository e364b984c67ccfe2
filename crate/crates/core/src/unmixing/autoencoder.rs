use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::solve::{apply_encoder, fcls_with, FclsProblem};
use super::{encoder_matrix, project_finite, EndmemberMatrix, FclsOptions};
use crate::field::{AbundanceField, Field};
use crate::parallel::map_indexed;
use crate::{Error, HsiCube, Result};

/// How [`encode`] turns spectra into abundances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodeMode {
    /// `(AᵀA)⁻¹Aᵀy` followed by projection onto the simplex.
    #[default]
    Linear,
    /// Fully constrained least squares.
    Fcls,
}

impl fmt::Display for EncodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodeMode::Linear => "linear",
            EncodeMode::Fcls => "fcls",
        })
    }
}

impl FromStr for EncodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(EncodeMode::Linear),
            "fcls" => Ok(EncodeMode::Fcls),
            other => Err(Error::Invalid(format!(
                "unknown unmix mode {other:?} (expected linear or fcls)"
            ))),
        }
    }
}

/// Linear encoder/decoder pair initialised from an endmember matrix: the
/// decoder is `A`, the encoder `(AᵀA)⁻¹Aᵀ`.
#[derive(Debug, Clone)]
pub struct UnmixingAutoencoder {
    endmembers: EndmemberMatrix,
    encoder: DMatrix<f64>,
    /// Cleared only by [`fine_tune`]; training never updates the pair.
    pub frozen: bool,
    pub fcls: FclsOptions,
}

impl UnmixingAutoencoder {
    pub fn new(endmembers: EndmemberMatrix) -> Result<Self> {
        let encoder = encoder_matrix(&endmembers)?;
        Ok(Self {
            endmembers,
            encoder,
            frozen: true,
            fcls: FclsOptions::default(),
        })
    }

    pub fn endmembers(&self) -> &EndmemberMatrix {
        &self.endmembers
    }

    pub fn encoder(&self) -> &DMatrix<f64> {
        &self.encoder
    }

    pub fn d(&self) -> usize {
        self.endmembers.d()
    }

    pub fn bands(&self) -> usize {
        self.endmembers.bands()
    }
}

pub fn encode(
    uae: &UnmixingAutoencoder,
    cube: &HsiCube,
    mode: EncodeMode,
) -> Result<AbundanceField> {
    if cube.bands != uae.bands() {
        return Err(Error::Shape(format!(
            "cube has {} bands, autoencoder expects {}",
            cube.bands,
            uae.bands()
        )));
    }
    match mode {
        EncodeMode::Linear => {
            let mut field = apply_encoder(&uae.encoder, cube);
            for p in 0..field.pixels() {
                let x = project_finite(&field.pixel(p));
                field.set_pixel(p, &x);
            }
            Ok(AbundanceField::new_unchecked(field))
        }
        EncodeMode::Fcls => {
            let problem = FclsProblem::new(&uae.endmembers, uae.encoder.clone());
            Ok(fcls_with(&problem, cube, uae.fcls).0)
        }
    }
}

/// `Ŷ = A X` per pixel.
pub fn decode(uae: &UnmixingAutoencoder, x: &AbundanceField) -> Result<HsiCube> {
    decode_field(uae, x.field())
}

pub(crate) fn decode_field(uae: &UnmixingAutoencoder, x: &Field) -> Result<HsiCube> {
    if x.channels != uae.d() {
        return Err(Error::Shape(format!(
            "abundance field has {} channels, autoencoder has {} endmembers",
            x.channels,
            uae.d()
        )));
    }
    let a = uae.endmembers.matrix();
    let (c, d, n) = (a.nrows(), a.ncols(), x.pixels());
    let spectra = map_indexed(n, |p| {
        (0..c)
            .map(|b| (0..d).map(|i| a[(b, i)] * x.data[i * n + p]).sum::<f64>() as f32)
            .collect::<Vec<f32>>()
    });
    let mut data = vec![0.0f32; c * n];
    for (p, s) in spectra.iter().enumerate() {
        for b in 0..c {
            data[b * n + p] = s[b];
        }
    }
    HsiCube::new(c, x.height, x.width, data)
}

/// Refines the decoder on `cube` by projected gradient steps on
/// `½‖Y − AX‖²/N` with `X` held at the current encoding, keeping `A ≥ 0`, then
/// rebuilds the encoder. The result is marked as not frozen.
pub fn fine_tune(
    uae: &UnmixingAutoencoder,
    cube: &HsiCube,
    mode: EncodeMode,
    iterations: usize,
) -> Result<UnmixingAutoencoder> {
    let x = encode(uae, cube, mode)?;
    let n = cube.pixels();
    let xf = x.field();
    let xm = DMatrix::from_fn(uae.d(), n, |i, p| xf.data[i * n + p]);
    let ym = DMatrix::from_fn(cube.bands, n, |b, p| cube.data[b * n + p] as f64);
    let xxt = &xm * xm.transpose() / n as f64;
    let yxt = &ym * xm.transpose() / n as f64;
    let lipschitz = SymmetricEigen::new(xxt.clone()).eigenvalues.max();
    if !(lipschitz > 0.0) {
        return Err(Error::RankDeficient("abundances carry no energy".into()));
    }
    let mut a = uae.endmembers.matrix().clone();
    for _ in 0..iterations {
        let grad = &a * &xxt - &yxt;
        a -= grad / lipschitz;
        a.apply(|v| *v = v.max(0.0));
    }
    let mut tuned = UnmixingAutoencoder::new(EndmemberMatrix::new(a)?)?;
    tuned.frozen = false;
    tuned.fcls = uae.fcls;
    Ok(tuned)
}

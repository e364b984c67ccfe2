//! Linear spectral unmixing: endmember extraction (VCA), abundance solvers and
//! the frozen linear autoencoder built from them.
//!
//! Under the linear mixing model every pixel spectrum `y ∈ R^c` is `A x + ε`
//! with `A` the `c × d` endmember matrix and `x` a point of the probability
//! simplex.

mod autoencoder;
mod report;
mod simplex;
mod solve;
mod vca;

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::io::{load_cube, save_cube};
use crate::{Error, HsiCube, Result};

pub use autoencoder::{decode, encode, fine_tune, EncodeMode, UnmixingAutoencoder};
pub use report::{reconstruction_report, spectral_angle, ReconstructionReport};
pub(crate) use simplex::project_finite;
pub use simplex::project_to_simplex;
pub use solve::{
    encoder_matrix, solve_abundance_fcls, solve_abundance_linear, FclsDiagnostics, FclsOptions,
};
pub use vca::vca;

/// Relative smallest-singular-value bound for a usable endmember matrix.
pub const RANK_TOL: f64 = 1e-8;

/// `c × d` matrix whose columns are endmember spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    matrix: DMatrix<f64>,
}

impl EndmemberMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (c, d) = matrix.shape();
        if d < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 endmembers, got {d}"
            )));
        }
        if c < d {
            return Err(Error::Invalid(format!(
                "{d} endmembers cannot be identified from {c} bands"
            )));
        }
        if let Some(index) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let sv = matrix.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(min > RANK_TOL * max) {
            return Err(Error::RankDeficient(format!(
                "endmember matrix singular values span [{min:.3e}, {max:.3e}]"
            )));
        }
        Ok(Self { matrix })
    }

    /// Builds `A` from endmember spectra given as columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        let c = columns.first().map_or(0, |v| v.len());
        if columns.iter().any(|v| v.len() != c) {
            return Err(Error::Shape("endmember spectra differ in length".into()));
        }
        Self::new(DMatrix::from_fn(c, d, |r, k| columns[k][r]))
    }

    pub fn bands(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.matrix.column(i).iter().copied().collect()
    }

    /// Stored as a cube with `height = d`, `width = 1`: each endmember is one
    /// "pixel".
    pub fn to_cube(&self) -> HsiCube {
        let (c, d) = self.matrix.shape();
        let mut data = Vec::with_capacity(c * d);
        for b in 0..c {
            for i in 0..d {
                data.push(self.matrix[(b, i)] as f32);
            }
        }
        HsiCube {
            bands: c,
            height: d,
            width: 1,
            data,
            band_names: None,
        }
    }

    pub fn from_cube(cube: &HsiCube) -> Result<Self> {
        if cube.width != 1 {
            return Err(Error::Shape(format!(
                "endmember cube must have width 1, got {}",
                cube.width
            )));
        }
        let (c, d) = (cube.bands, cube.height);
        Self::new(DMatrix::from_fn(c, d, |b, i| cube.data[b * d + i] as f64))
    }
}

/// JSON sidecar written next to a persisted endmember matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndmemberSidecar {
    pub d: usize,
    pub seed: u64,
    pub mode: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

pub fn save_endmembers(a: &EndmemberMatrix, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_cube(&a.to_cube(), path)?;
    let sidecar = EndmemberSidecar {
        d: a.d(),
        seed,
        mode: "vca".into(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string(&sidecar).expect("sidecar serializes") + "\n";
    fs::write(&side, text).map_err(|e| Error::io(side, e))
}

pub fn load_endmembers(
    path: impl AsRef<Path>,
) -> Result<(EndmemberMatrix, Option<EndmemberSidecar>)> {
    let path = path.as_ref();
    let a = EndmemberMatrix::from_cube(&load_cube(path)?)?;
    let side = sidecar_path(path);
    let sidecar = match fs::read_to_string(&side) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| Error::Header {
            path: side,
            message: e.to_string(),
        })?),
        Err(_) => None,
    };
    Ok((a, sidecar))
}

use nalgebra::{DMatrix, SymmetricEigen};

use super::{project_finite, EndmemberMatrix};
use crate::field::{AbundanceField, CoefficientField, Field};
use crate::parallel::map_indexed;
use crate::{Error, HsiCube, Result};

const MAX_CONDITION: f64 = 1e12;

fn check_bands(a: &EndmemberMatrix, cube: &HsiCube) -> Result<()> {
    if cube.bands != a.bands() {
        return Err(Error::Shape(format!(
            "cube has {} bands, endmember matrix has {}",
            cube.bands,
            a.bands()
        )));
    }
    Ok(())
}

/// Extreme eigenvalues of the Gram matrix `AᵀA`.
fn gram_spectrum(gram: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    (eig.min(), eig.max())
}

/// Left pseudo-inverse `(AᵀA)⁻¹Aᵀ`, refusing Gram matrices with condition
/// number above 1e12.
pub fn encoder_matrix(a: &EndmemberMatrix) -> Result<DMatrix<f64>> {
    let at = a.matrix().transpose();
    let gram = &at * a.matrix();
    let (lo, hi) = gram_spectrum(&gram);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::IllConditioned(if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }));
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    Ok(chol.solve(&at))
}

fn apply_rows(m: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().zip(y).map(|(a, b)| a * b).sum())
        .collect()
}

/// Per-pixel unconstrained least squares `X = (AᵀA)⁻¹AᵀY`.
pub fn solve_abundance_linear(a: &EndmemberMatrix, cube: &HsiCube) -> Result<CoefficientField> {
    check_bands(a, cube)?;
    let e = encoder_matrix(a)?;
    Ok(CoefficientField(apply_encoder(&e, cube)))
}

pub(crate) fn apply_encoder(e: &DMatrix<f64>, cube: &HsiCube) -> Field {
    let pixels = map_indexed(cube.pixels(), |p| apply_rows(e, &cube.spectrum(p)));
    Field::from_pixels(e.nrows(), cube.height, cube.width, &pixels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FclsOptions {
    /// Stop once one iteration lowers `½‖y − Ax‖²` by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FclsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct FclsDiagnostics {
    pub pixels: usize,
    /// Pixels that hit `max_iter` before the decrease fell below `tol`.
    pub unconverged: usize,
    pub max_iterations: usize,
    pub mean_iterations: f64,
}

/// Fixed per-matrix quantities of the constrained solve.
pub(crate) struct FclsProblem {
    gram: DMatrix<f64>,
    encoder: DMatrix<f64>,
    at: DMatrix<f64>,
    lipschitz: f64,
}

impl FclsProblem {
    pub(crate) fn new(a: &EndmemberMatrix, encoder: DMatrix<f64>) -> Self {
        let at = a.matrix().transpose();
        let gram = &at * a.matrix();
        let (_, lipschitz) = gram_spectrum(&gram);
        Self {
            gram,
            encoder,
            at,
            lipschitz,
        }
    }

    /// `½xᵀGx − bᵀx`, i.e. `½‖y − Ax‖²` minus the constant `½‖y‖²`.
    fn objective(&self, x: &[f64], b: &[f64]) -> f64 {
        let d = x.len();
        let mut quad = 0.0;
        for i in 0..d {
            let gx: f64 = (0..d).map(|j| self.gram[(i, j)] * x[j]).sum();
            quad += x[i] * gx;
        }
        0.5 * quad - x.iter().zip(b).map(|(a, c)| a * c).sum::<f64>()
    }

    /// Accelerated projected gradient with step `1/L` and adaptive restart,
    /// warm-started at the projected unconstrained solution.
    pub(crate) fn solve_pixel(&self, y: &[f64], opts: FclsOptions) -> (Vec<f64>, usize, bool) {
        let d = self.gram.nrows();
        let b = apply_rows(&self.at, y);
        let mut x = project_finite(&apply_rows(&self.encoder, y));
        let mut fx = self.objective(&x, &b);
        let mut z = x.clone();
        let mut t = 1.0f64;
        let mut momentum = false;
        let mut step = vec![0.0; d];
        for it in 1..=opts.max_iter {
            for i in 0..d {
                let g: f64 = (0..d).map(|j| self.gram[(i, j)] * z[j]).sum::<f64>() - b[i];
                step[i] = z[i] - g / self.lipschitz;
            }
            let x_new = project_finite(&step);
            let f_new = self.objective(&x_new, &b);
            if f_new > fx {
                if !momentum {
                    // a plain gradient step from the best iterate failed to descend
                    return (x, it, true);
                }
                z.clone_from(&x);
                t = 1.0;
                momentum = false;
                continue;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            for i in 0..d {
                z[i] = x_new[i] + beta * (x_new[i] - x[i]);
            }
            momentum = true;
            let decrease = fx - f_new;
            x = x_new;
            fx = f_new;
            t = t_new;
            if decrease < opts.tol {
                return (x, it, true);
            }
        }
        (x, opts.max_iter, false)
    }
}

/// Per-pixel least squares on the probability simplex.
///
/// Non-convergence within `max_iter` is not an error: the best iterate is
/// kept and the pixel is counted in the diagnostics.
pub fn solve_abundance_fcls(
    a: &EndmemberMatrix,
    cube: &HsiCube,
    opts: FclsOptions,
) -> Result<(AbundanceField, FclsDiagnostics)> {
    check_bands(a, cube)?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Invalid(
            "fcls needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let problem = FclsProblem::new(a, encoder_matrix(a)?);
    Ok(fcls_with(&problem, cube, opts))
}

pub(crate) fn fcls_with(
    problem: &FclsProblem,
    cube: &HsiCube,
    opts: FclsOptions,
) -> (AbundanceField, FclsDiagnostics) {
    let results = map_indexed(cube.pixels(), |p| {
        problem.solve_pixel(&cube.spectrum(p), opts)
    });
    let mut diag = FclsDiagnostics {
        pixels: results.len(),
        ..Default::default()
    };
    let mut total = 0usize;
    let pixels: Vec<Vec<f64>> = results
        .into_iter()
        .map(|(x, it, ok)| {
            total += it;
            diag.max_iterations = diag.max_iterations.max(it);
            if !ok {
                diag.unconverged += 1;
            }
            x
        })
        .collect();
    diag.mean_iterations = total as f64 / diag.pixels.max(1) as f64;
    let d = problem.gram.nrows();
    let field = Field::from_pixels(d, cube.height, cube.width, &pixels);
    (AbundanceField::new_unchecked(field), diag)
}

#[cfg(test)]
pub(crate) fn residual(a: &EndmemberMatrix, x: &[f64], y: &[f64]) -> f64 {
    let ax = a.matrix() * nalgebra::DVector::from_column_slice(x);
    ax.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()
}

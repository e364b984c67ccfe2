//! Variance schedule and the closed-form pieces of the forward and reverse
//! processes.

use serde::{Deserialize, Serialize};

use crate::field::{Field, LatentField};
use crate::{Error, Result};

/// Linear β schedule of `T` steps plus every derived per-step coefficient.
///
/// All arrays are indexed by `t - 1` for `t ∈ 1..=T`; use the accessors,
/// which take the 1-based step. `ᾱ₀ ≡ 1`, so the posterior at `t = 1` is a
/// point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Sampler noise scale, `σ_t = √β_t`.
    pub sigma: Vec<f64>,
    /// Coefficient of `Z₀` in the posterior mean.
    pub posterior_coef_z0: Vec<f64>,
    /// Coefficient of `Z_t` in the posterior mean.
    pub posterior_coef_zt: Vec<f64>,
    /// Posterior variance `β̃_t`.
    pub beta_tilde: Vec<f64>,
}

/// Serializable schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleParams {
    pub const DEFAULT_STEPS: usize = 1000;
    pub const DEFAULT_BETA_START: f64 = 1e-4;
    pub const DEFAULT_BETA_END: f64 = 0.02;

    /// Linear schedule whose endpoints are the defaults scaled by `1000 / steps`
    /// (capped below one), so that `ᾱ_T` stays near zero for short chains.
    /// At 1000 steps this is exactly `1e-4 → 0.02`.
    pub fn scaled(steps: usize) -> Self {
        let k = Self::DEFAULT_STEPS as f64 / steps.max(1) as f64;
        let beta_end = (Self::DEFAULT_BETA_END * k).min(0.999);
        Self {
            steps,
            beta_start: (Self::DEFAULT_BETA_START * k).min(beta_end),
            beta_end,
        }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.beta_start, self.beta_end)
    }
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self::scaled(Self::DEFAULT_STEPS)
    }
}

pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Invalid("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Invalid(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let sigma = beta.iter().map(|b| b.sqrt()).collect();
    let mut posterior_coef_z0 = Vec::with_capacity(steps);
    let mut posterior_coef_zt = Vec::with_capacity(steps);
    let mut beta_tilde = Vec::with_capacity(steps);
    for i in 0..steps {
        let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
        let denom = 1.0 - alpha_bar[i];
        posterior_coef_z0.push(prev.sqrt() * beta[i] / denom);
        posterior_coef_zt.push(alpha[i].sqrt() * (1.0 - prev) / denom);
        beta_tilde.push((1.0 - prev) / denom * beta[i]);
    }
    Ok(NoiseSchedule {
        steps,
        beta_start,
        beta_end,
        beta,
        alpha,
        alpha_bar,
        sigma,
        posterior_coef_z0,
        posterior_coef_zt,
        beta_tilde,
    })
}

impl NoiseSchedule {
    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            steps: self.steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::Invalid(format!(
                "step {t} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ₀ = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    /// Posterior mean `μ̃_t(Z_t, Z₀)`, elementwise.
    pub fn posterior_mean(&self, t: usize, zt: f64, z0: f64) -> f64 {
        self.posterior_coef_z0[t - 1] * z0 + self.posterior_coef_zt[t - 1] * zt
    }

    /// Reverse mean in the ε parameterisation,
    /// `(Z_t − β_t/√(1−ᾱ_t)·ε)/√α_t`, elementwise.
    pub fn eps_mean(&self, t: usize, zt: f64, eps: f64) -> f64 {
        (zt - self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt() * eps) / self.alpha(t).sqrt()
    }
}

fn check_shapes(a: &Field, b: &Field) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    Ok(())
}

/// Draw from `q(Z_t | Z₀)`: `√ᾱ_t·Z₀ + √(1−ᾱ_t)·ε`.
pub fn q_sample(
    z0: &LatentField,
    t: usize,
    eps: &LatentField,
    s: &NoiseSchedule,
) -> Result<LatentField> {
    s.check_step(t)?;
    check_shapes(&z0.0, &eps.0)?;
    let (a, b) = (s.alpha_bar(t).sqrt(), (1.0 - s.alpha_bar(t)).sqrt());
    Ok(LatentField(Field {
        data: z0
            .0
            .data
            .iter()
            .zip(&eps.0.data)
            .map(|(z, e)| a * z + b * e)
            .collect(),
        ..z0.0.clone()
    }))
}

/// One ancestral step
/// `Z_{t−1} = (Z_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t + σ_t·noise`, with the noise term
/// dropped at `t = 1`.
pub fn sample_step(
    zt: &LatentField,
    t: usize,
    eps_hat: &LatentField,
    noise: &LatentField,
    s: &NoiseSchedule,
) -> Result<LatentField> {
    s.check_step(t)?;
    check_shapes(&zt.0, &eps_hat.0)?;
    check_shapes(&zt.0, &noise.0)?;
    let sigma = if t == 1 { 0.0 } else { s.sigma(t) };
    let data =
        zt.0.data
            .iter()
            .zip(&eps_hat.0.data)
            .zip(&noise.0.data)
            .map(|((&z, &e), &n)| s.eps_mean(t, z, e) + sigma * n)
            .collect();
    Ok(LatentField(Field {
        data,
        ..zt.0.clone()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaled_params() {
        let p = ScheduleParams::scaled(1000);
        assert_eq!((p.beta_start, p.beta_end), (1e-4, 0.02));
        assert_eq!(ScheduleParams::default(), p);
        let short = ScheduleParams::scaled(100);
        assert!((short.beta_end - 0.2).abs() < 1e-15);
        assert!(short.build().unwrap().alpha_bar(100) < 1e-4);
        let tiny = ScheduleParams::scaled(10);
        assert!(tiny.beta_end < 1.0 && tiny.beta_start <= tiny.beta_end);
        tiny.build().unwrap();
    }
    use rand_distr::StandardNormal;

    fn field(values: Vec<f64>) -> LatentField {
        let n = values.len();
        LatentField(Field::new(1, 1, n, values).unwrap())
    }

    #[test]
    fn single_step() {
        let s = build_schedule(1, 0.5, 0.5).unwrap();
        assert_eq!(
            (s.alpha.clone(), s.alpha_bar.clone()),
            (vec![0.5], vec![0.5])
        );
        assert_eq!(s.posterior_coef_z0, vec![1.0]);
        assert_eq!(s.beta_tilde, vec![0.0]);
    }

    #[test]
    fn standard_schedule_alpha_bar() {
        let s = build_schedule(1000, 1e-4, 0.02).unwrap();
        // 50-digit cumulative product of (1 - beta_t)
        let oracle = 4.0358297653756833e-5;
        assert!(
            (s.alpha_bar(1000) / oracle - 1.0).abs() < 1e-10,
            "{}",
            s.alpha_bar(1000)
        );
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.beta.iter().all(|&b| b > 0.0 && b < 1.0));
        assert!((s.beta(1) - 1e-4).abs() < 1e-18 && (s.beta(1000) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn invalid_betas() {
        assert!(build_schedule(10, 1e-4, 1.0).is_err());
        assert!(build_schedule(10, 0.0, 0.1).is_err());
        assert!(build_schedule(10, 0.2, 0.1).is_err());
        assert!(build_schedule(0, 0.1, 0.1).is_err());
    }

    #[test]
    fn posterior_and_eps_means_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for steps in [10, 100, 1000] {
            let s = build_schedule(steps, 1e-4, 0.02).unwrap();
            for t in 1..=steps {
                let z0: f64 = rng.sample(StandardNormal);
                let zt: f64 = rng.sample(StandardNormal);
                let eps = (zt - s.alpha_bar(t).sqrt() * z0) / (1.0 - s.alpha_bar(t)).sqrt();
                let a = s.posterior_mean(t, zt, z0);
                let b = s.eps_mean(t, zt, eps);
                assert!((a - b).abs() < 1e-6, "T={steps} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn q_sample_branches() {
        let s = build_schedule(50, 1e-3, 0.05).unwrap();
        let z0 = field(vec![1.0, -2.0, 0.5]);
        let zero = field(vec![0.0; 3]);
        let eps = field(vec![0.3, 0.1, -1.0]);
        let a = s.alpha_bar(20).sqrt();
        let b = (1.0 - s.alpha_bar(20)).sqrt();
        let q = q_sample(&z0, 20, &zero, &s).unwrap();
        assert_eq!(
            q.0.data,
            z0.0.data.iter().map(|v| a * v).collect::<Vec<_>>()
        );
        let q = q_sample(&zero, 20, &eps, &s).unwrap();
        assert_eq!(
            q.0.data,
            eps.0.data.iter().map(|v| b * v).collect::<Vec<_>>()
        );
        assert!(q_sample(&z0, 0, &eps, &s).is_err());
        assert!(q_sample(&z0, 51, &eps, &s).is_err());
        assert!(q_sample(&z0, 1, &field(vec![0.0; 2]), &s).is_err());
    }

    #[test]
    fn q_sample_moments() {
        let s = build_schedule(100, 1e-4, 0.02).unwrap();
        let t = 40;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = field((0..n).map(|_| rng.sample(StandardNormal)).collect());
        let z0 = field(vec![0.7; n]);
        let q = q_sample(&z0, t, &eps, &s).unwrap();
        let mean = q.0.data.iter().sum::<f64>() / n as f64;
        let var = q.0.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_var = 1.0 - s.alpha_bar(t);
        let expect_mean = s.alpha_bar(t).sqrt() * 0.7;
        assert!((mean - expect_mean).abs() <= 4.0 * (true_var / n as f64).sqrt());
        assert!((var / true_var - 1.0).abs() <= 0.05);
    }

    #[test]
    fn sample_step_reductions() {
        let s = build_schedule(20, 1e-3, 0.1).unwrap();
        let zt = field(vec![1.0, -0.5]);
        let zero = field(vec![0.0; 2]);
        let out = sample_step(&zt, 7, &zero, &zero, &s).unwrap();
        for (o, z) in out.0.data.iter().zip(&zt.0.data) {
            assert!((o - z / s.alpha(7).sqrt()).abs() < 1e-15);
        }
        let noise = field(vec![5.0, -3.0]);
        assert_eq!(
            sample_step(&zt, 1, &zero, &noise, &s).unwrap(),
            sample_step(&zt, 1, &zero, &zero, &s).unwrap()
        );
        assert!(sample_step(&zt, 21, &zero, &zero, &s).is_err());
    }

    #[test]
    fn point_mass_oracle_recovers_target() {
        let s = build_schedule(100, 1e-4, 0.02).unwrap();
        let target = [0.3, -8.2, 1.7];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut z = field((0..3).map(|_| rng.sample(StandardNormal)).collect());
        let zero = field(vec![0.0; 3]);
        for t in (1..=100).rev() {
            let eps = field(
                z.0.data
                    .iter()
                    .zip(&target)
                    .map(|(zt, z0)| {
                        (zt - s.alpha_bar(t).sqrt() * z0) / (1.0 - s.alpha_bar(t)).sqrt()
                    })
                    .collect(),
            );
            // independent route: posterior mean μ̃_t(Z_t, Z₀*)
            let expect: Vec<f64> =
                z.0.data
                    .iter()
                    .zip(&target)
                    .map(|(&zt, &z0)| s.posterior_mean(t, zt, z0))
                    .collect();
            z = sample_step(&z, t, &eps, &zero, &s).unwrap();
            for (a, b) in z.0.data.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
        for (a, b) in z.0.data.iter().zip(&target) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }
}

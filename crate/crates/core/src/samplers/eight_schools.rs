//! Deterministic-scan Gibbs sampler for the hierarchical normal model
//!
//! ```text
//! y_j | θ_j ~ N(θ_j, σ_j²)    σ_j known
//! θ_j | μ, τ ~ N(μ, τ²)
//! f(μ) ∝ 1
//! ```
//!
//! Full conditionals, for J groups:
//!
//! ```text
//! θ_j | μ, τ, y ~ N((y_j τ² + μ σ_j²)/(τ² + σ_j²), (1/σ_j² + 1/τ²)⁻¹)
//! μ   | θ, τ    ~ N(θ̄, τ²/J)
//! τ²  | θ, μ    ~ Scaled-Inv-χ²(J − 1, Σ(θ_j − μ)²/(J − 1))
//! ```

use std::path::Path;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::estimation::SampleMatrix;
use crate::samplers::stream_rng;
use crate::{Error, Result};

const FIXTURE: &str = include_str!("../../data/eight_schools.json");
const MAX_TAU_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EightSchoolsData {
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl EightSchoolsData {
    pub fn new(y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let data = Self { y, sigma };
        data.validate()?;
        Ok(data)
    }

    /// The bundled SAT coaching data (see `data/eight_schools.json`).
    pub fn rubin_1981() -> Self {
        Self::from_json_str(FIXTURE).expect("bundled fixture is valid")
    }

    /// Reads `{"y": [...], "sigma": [...]}`; other keys are ignored.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let data: Self = serde_json::from_str(text)?;
        data.validate()?;
        Ok(data)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn groups(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() < 2 || self.y.len() != self.sigma.len() {
            return Err(Error::Sampler(format!(
                "need at least 2 groups with matching y and sigma, got {} and {}",
                self.y.len(),
                self.sigma.len()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler("y must be finite".into()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Sampler("sigma must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        (1..=self.groups())
            .map(|j| format!("theta{j}"))
            .chain(["mu".to_string(), "tau".to_string()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsState {
    pub theta: Vec<f64>,
    pub mu: f64,
    pub tau: f64,
}

impl GibbsState {
    /// θ = y, μ = ȳ, τ = sd(y).
    pub fn from_data(data: &EightSchoolsData) -> Self {
        let j = data.groups() as f64;
        let mu = data.y.iter().sum::<f64>() / j;
        let var = data.y.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / (j - 1.0);
        Self {
            theta: data.y.clone(),
            mu,
            tau: var.sqrt().max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Rows kept after burn-in.
    pub n_draws: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub initial: Option<GibbsState>,
    /// Hold τ at this value instead of updating it.
    pub fixed_tau: Option<f64>,
}

impl GibbsConfig {
    pub fn new(n_draws: usize, seed: u64) -> Self {
        Self {
            n_draws,
            seed,
            burn_in: 1000,
            initial: None,
            fixed_tau: None,
        }
    }
}

/// θ | μ, τ, y, written into `theta`.
pub fn draw_theta<R: Rng + ?Sized>(data: &EightSchoolsData, mu: f64, tau: f64, rng: &mut R, theta: &mut [f64]) {
    let tau2 = tau * tau;
    for ((t, &y), &s) in theta.iter_mut().zip(&data.y).zip(&data.sigma) {
        let s2 = s * s;
        let mean = (y * tau2 + mu * s2) / (tau2 + s2);
        let var = 1.0 / (1.0 / s2 + 1.0 / tau2);
        let z: f64 = rng.sample(StandardNormal);
        *t = mean + var.sqrt() * z;
    }
}

/// μ | θ, τ.
pub fn draw_mu<R: Rng + ?Sized>(theta: &[f64], tau: f64, rng: &mut R) -> f64 {
    let j = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / j;
    let z: f64 = rng.sample(StandardNormal);
    mean + tau / j.sqrt() * z
}

/// τ | θ, μ, returned as τ (not τ²). Draws of τ² that underflow or overflow
/// are redrawn.
pub fn draw_tau<R: Rng + ?Sized>(theta: &[f64], mu: f64, rng: &mut R) -> Result<f64> {
    let df = (theta.len() - 1) as f64;
    let ss: f64 = theta.iter().map(|t| (t - mu).powi(2)).sum();
    let chi = ChiSquared::new(df).map_err(|e| Error::Sampler(e.to_string()))?;
    for _ in 0..MAX_TAU_RETRIES {
        let tau2 = ss / chi.sample(rng);
        if tau2.is_finite() && tau2 > f64::MIN_POSITIVE {
            return Ok(tau2.sqrt());
        }
    }
    Err(Error::Sampler(format!(
        "tau draw degenerate after {MAX_TAU_RETRIES} attempts (sum of squares {ss:e})"
    )))
}

/// n×(J+2) matrix: θ₁..θ_J, μ, τ, one row per sweep after burn-in.
pub fn gibbs_eight_schools(data: &EightSchoolsData, config: &GibbsConfig) -> Result<SampleMatrix<f64>> {
    data.validate()?;
    let j = data.groups();
    let mut state = config.initial.clone().unwrap_or_else(|| GibbsState::from_data(data));
    if state.theta.len() != j || !(state.tau > 0.0) {
        return Err(Error::Sampler(format!(
            "initial state needs {j} theta values and positive tau"
        )));
    }
    if let Some(tau) = config.fixed_tau {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Sampler(format!("fixed tau {tau} must be positive")));
        }
        state.tau = tau;
    }
    let mut rng = stream_rng(config.seed, 0);
    let mut columns = vec![Vec::with_capacity(config.n_draws); j + 2];
    for sweep in 0..config.burn_in + config.n_draws {
        draw_theta(data, state.mu, state.tau, &mut rng, &mut state.theta);
        state.mu = draw_mu(&state.theta, state.tau, &mut rng);
        if config.fixed_tau.is_none() {
            state.tau = draw_tau(&state.theta, state.mu, &mut rng)?;
        }
        if sweep >= config.burn_in {
            for (c, &t) in columns.iter_mut().zip(&state.theta) {
                c.push(t);
            }
            columns[j].push(state.mu);
            columns[j + 1].push(state.tau);
        }
    }
    if config.n_draws < 2 {
        return Err(Error::Sampler(format!("need at least 2 draws, got {}", config.n_draws)));
    }
    SampleMatrix::from_columns(columns, Some(data.column_names()))
}

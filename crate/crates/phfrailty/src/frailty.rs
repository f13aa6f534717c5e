//! The univariate phase-type frailty model: an unobserved PH-distributed
//! multiplier on a parametric baseline hazard, with optional log-linear
//! covariate effects.
//!
//! All functionals are resolvent expressions `pi (M I - T)^{-n} t` evaluated
//! by repeated LU solves.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineHazard;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{dominant_eigen_structure, resolvent_apply};
use crate::phase_type::{PhStructure, PhaseType};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrailtyModel {
    #[serde(flatten)]
    pub frailty: PhaseType,
    pub baseline: BaselineHazard,
    #[serde(default)]
    pub beta: Vec<f64>,
}

/// Tail behavior of the model: the dominant eigenvalue of `T`, the size of its
/// largest Jordan block `k`, and the regular-variation index `k * theta` when
/// the baseline is the power family (survival ~ C y^{-k theta}). For other
/// baselines the power law lives on the cumulative-hazard scale and only `k`
/// is reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailIndex {
    pub eigenvalue: f64,
    pub jordan_block: usize,
    pub regular_variation_index: Option<f64>,
}

impl FrailtyModel {
    pub fn new(frailty: PhaseType, baseline: BaselineHazard, beta: Vec<f64>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("regression coefficients must be finite".into()));
        }
        Ok(FrailtyModel {
            frailty,
            baseline,
            beta,
        })
    }

    pub fn without_covariates(frailty: PhaseType, baseline: BaselineHazard) -> Result<Self> {
        Self::new(frailty, baseline, Vec::new())
    }

    /// Linear predictor `x beta`.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::Dimension(format!(
                "covariate width {} does not match beta length {}",
                x.len(),
                self.beta.len()
            )));
        }
        Ok(x.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }

    /// Covariate-scaled cumulative hazard `exp(x beta) M(y)`.
    pub fn scaled_cum_hazard(&self, y: f64, x: &[f64]) -> Result<f64> {
        Ok(self.linear_predictor(x)?.exp() * self.baseline.cum_hazard(y)?)
    }

    /// `pi (m I - T)^{-n} t` for a given shift `m`.
    fn resolvent_form(&self, m: f64, n: usize) -> Result<f64> {
        let v = resolvent_apply(self.frailty.sub_intensity(), m, n, self.frailty.exit())?;
        Ok(self.frailty.pi().dot(&v))
    }

    /// Survival `S(y | x) = pi (exp(x beta) M(y) I - T)^{-1} t`.
    pub fn survival(&self, y: f64, x: &[f64]) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("survival requires y >= 0, got {y}")));
        }
        let m = self.scaled_cum_hazard(y, x)?;
        Ok(self.resolvent_form(m, 1)?.clamp(0.0, 1.0))
    }

    /// Density `f(y | x) = exp(x beta) mu(y) pi (exp(x beta) M(y) I - T)^{-2} t`.
    pub fn density(&self, y: f64, x: &[f64]) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("density requires y > 0, got {y}")));
        }
        let factor = self.linear_predictor(x)?.exp();
        let m = factor * self.baseline.cum_hazard(y)?;
        Ok((factor * self.baseline.hazard(y)? * self.resolvent_form(m, 2)?).max(0.0))
    }

    /// Hazard `mu_Y(y | x) = exp(x beta) mu(y) [pi R^2 t] / [pi R t]`.
    pub fn hazard(&self, y: f64, x: &[f64]) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("hazard requires y > 0, got {y}")));
        }
        let factor = self.linear_predictor(x)?.exp();
        let m = factor * self.baseline.cum_hazard(y)?;
        let num = self.resolvent_form(m, 2)?;
        let den = self.resolvent_form(m, 1)?;
        Ok(factor * self.baseline.hazard(y)? * num / den)
    }

    /// `E(Z | Y > y, x) = [pi R^2 t] / [pi R t]`; decreasing in `y` from `E(Z)`.
    pub fn cond_frailty_mean_surviving(&self, y: f64, x: &[f64]) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("requires y >= 0, got {y}")));
        }
        let m = self.scaled_cum_hazard(y, x)?;
        Ok(self.resolvent_form(m, 2)? / self.resolvent_form(m, 1)?)
    }

    /// `E(Z | Y = y, x) = 2 [pi R^3 t] / [pi R^2 t]`.
    pub fn cond_frailty_mean_event(&self, y: f64, x: &[f64]) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("requires y > 0, got {y}")));
        }
        let m = self.scaled_cum_hazard(y, x)?;
        Ok(2.0 * self.resolvent_form(m, 3)? / self.resolvent_form(m, 2)?)
    }

    /// The remaining lifetime after surviving to `t` is again PH frailty
    /// distributed; returns that model (shifted baseline, same beta).
    pub fn residual_model(&self, t: f64) -> Result<FrailtyModel> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("residual time must be positive, got {t}")));
        }
        let m = self.baseline.cum_hazard(t)?;
        let sub = self.frailty.sub_intensity();
        let p = self.frailty.dim();
        // The conditional frailty is a tilted PH; the diagonal similarity by
        // h = (M I - T)^{-1} t turns it into a proper representation with
        // pi~_i = pi_i h_i / S and T~ = D^{-1} (T - M I) D, D = diag(h).
        let h = resolvent_apply(sub, m, 1, self.frailty.exit())?;
        if h.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numeric("degenerate survival in residual model".into()));
        }
        let denom = self.frailty.pi().dot(&h);
        if !(denom > 0.0) {
            return Err(Error::Numeric("degenerate survival in residual model".into()));
        }
        let new_pi =
            DVector::from_fn(p, |i, _| self.frailty.pi()[i] * h[i] / denom);
        let mut new_t = sub.clone();
        for i in 0..p {
            new_t[(i, i)] -= m;
        }
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    new_t[(i, j)] *= h[j] / h[i];
                }
            }
        }
        let frailty = PhaseType::new(new_pi, new_t, PhStructure::General)?;
        FrailtyModel::new(
            frailty,
            self.baseline.clone().shifted(t)?,
            self.beta.clone(),
        )
    }

    /// Tail exponent from the Jordan structure of the dominant eigenvalue.
    pub fn tail_index(&self) -> Result<TailIndex> {
        let (eigenvalue, jordan_block) =
            dominant_eigen_structure(self.frailty.sub_intensity(), 1e-8)?;
        let regular_variation_index = match self.baseline {
            BaselineHazard::Power { theta } => Some(jordan_block as f64 * theta),
            _ => None,
        };
        Ok(TailIndex {
            eigenvalue,
            jordan_block,
            regular_variation_index,
        })
    }

    /// Observed-data log-likelihood: events contribute `log f`, censored rows `log S`.
    pub fn loglikelihood(&self, data: &Dataset) -> Result<f64> {
        data.validate()?;
        let mut total = 0.0;
        for obs in &data.observations {
            let term = if obs.event {
                self.density(obs.time, &obs.covariates)?.ln()
            } else {
                self.survival(obs.time, &obs.covariates)?.ln()
            };
            if !term.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite log-likelihood contribution at time {}",
                    obs.time
                )));
            }
            total += term;
        }
        Ok(total)
    }
}

//! Parametric baseline hazard families: hazard `mu`, cumulative hazard `M`,
//! and the inverse `M^{-1}` used for inverse-transform sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A baseline hazard family with closed-form cumulative hazard.
///
/// - `constant`: mu(y) = rate, M(y) = rate * y
/// - `gompertz`: mu(y) = b e^{c y}, M(y) = b (e^{c y} - 1) / c (and b y at c = 0)
/// - `power`: mu(y) = theta y^{theta-1}, M(y) = y^theta
/// - `shifted`: mu(y) = base.mu(y + offset); represents residual-lifetime models
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaselineHazard {
    Constant { rate: f64 },
    Gompertz { b: f64, c: f64 },
    Power { theta: f64 },
    Shifted { base: Box<BaselineHazard>, offset: f64 },
}

impl BaselineHazard {
    pub fn constant(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Validation("constant hazard rate must be positive".into()));
        }
        Ok(BaselineHazard::Constant { rate })
    }

    pub fn gompertz(b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0) || !c.is_finite() {
            return Err(Error::Validation("Gompertz needs b > 0 and finite c".into()));
        }
        Ok(BaselineHazard::Gompertz { b, c })
    }

    pub fn power(theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::Validation("power exponent theta must be positive".into()));
        }
        Ok(BaselineHazard::Power { theta })
    }

    pub fn shifted(self, offset: f64) -> Result<Self> {
        if !(offset >= 0.0) {
            return Err(Error::Validation("shift offset must be nonnegative".into()));
        }
        Ok(BaselineHazard::Shifted {
            base: Box::new(self),
            offset,
        })
    }

    /// Instantaneous hazard `mu(y)`. For the power family with theta < 1 the
    /// hazard diverges at 0; callers evaluate strictly inside the domain.
    pub fn hazard(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("hazard requires y >= 0, got {y}")));
        }
        Ok(match *self {
            BaselineHazard::Constant { rate } => rate,
            BaselineHazard::Gompertz { b, c } => b * (c * y).exp(),
            BaselineHazard::Power { theta } => theta * y.powf(theta - 1.0),
            BaselineHazard::Shifted { ref base, offset } => base.hazard(y + offset)?,
        })
    }

    /// Cumulative hazard `M(y)`.
    pub fn cum_hazard(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("cumulative hazard requires y >= 0, got {y}")));
        }
        Ok(match *self {
            BaselineHazard::Constant { rate } => rate * y,
            BaselineHazard::Gompertz { b, c } => {
                if c == 0.0 {
                    b * y
                } else {
                    b * ((c * y).exp_m1()) / c
                }
            }
            BaselineHazard::Power { theta } => y.powf(theta),
            BaselineHazard::Shifted { ref base, offset } => {
                base.cum_hazard(y + offset)? - base.cum_hazard(offset)?
            }
        })
    }

    /// Inverse cumulative hazard `M^{-1}(m)`. Returns infinity where the family's
    /// cumulative hazard is bounded below `m` (Gompertz with c < 0).
    pub fn inv_cum_hazard(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0) {
            return Err(Error::Domain(format!("inverse requires m >= 0, got {m}")));
        }
        Ok(match *self {
            BaselineHazard::Constant { rate } => m / rate,
            BaselineHazard::Gompertz { b, c } => {
                if c == 0.0 {
                    m / b
                } else {
                    let arg = 1.0 + c * m / b;
                    if arg <= 0.0 {
                        f64::INFINITY
                    } else {
                        arg.ln() / c
                    }
                }
            }
            BaselineHazard::Power { theta } => m.powf(1.0 / theta),
            BaselineHazard::Shifted { ref base, offset } => {
                let total = base.inv_cum_hazard(m + base.cum_hazard(offset)?)?;
                total - offset
            }
        })
    }

    /// Hazard and cumulative hazard at `y` in one call.
    pub fn eval(&self, y: f64) -> Result<(f64, f64)> {
        Ok((self.hazard(y)?, self.cum_hazard(y)?))
    }
}

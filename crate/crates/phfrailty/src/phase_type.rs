//! Phase-type distributions: representation `(pi, T)`, closed-form functionals,
//! structured constructors, and exact simulation of the absorption time.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{mat_exp, resolvent_apply};

/// Structural pattern imposed on the sub-intensity matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhStructure {
    General,
    Coxian,
    Erlang,
    #[serde(rename = "hyperexp")]
    HyperExponential,
}

impl PhStructure {
    /// Whether the off-diagonal position `(i, j)` may be nonzero.
    fn allows(self, i: usize, j: usize) -> bool {
        match self {
            PhStructure::General => true,
            PhStructure::Coxian | PhStructure::Erlang => j == i + 1,
            PhStructure::HyperExponential => false,
        }
    }

    fn requires_first_state_start(self) -> bool {
        matches!(self, PhStructure::Coxian | PhStructure::Erlang)
    }
}

impl std::str::FromStr for PhStructure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(PhStructure::General),
            "coxian" => Ok(PhStructure::Coxian),
            "erlang" => Ok(PhStructure::Erlang),
            "hyperexp" => Ok(PhStructure::HyperExponential),
            other => Err(Error::Validation(format!("unknown structure `{other}`"))),
        }
    }
}

/// A phase-type distribution PH(pi, T); the exit vector `t = -T e` is derived
/// on construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PhaseTypeJson", into = "PhaseTypeJson")]
pub struct PhaseType {
    pi: DVector<f64>,
    sub_intensity: DMatrix<f64>,
    exit: DVector<f64>,
    structure: PhStructure,
}

const VALIDATION_TOL: f64 = 1e-9;

impl PhaseType {
    pub fn new(pi: DVector<f64>, sub_intensity: DMatrix<f64>, structure: PhStructure) -> Result<Self> {
        let p = pi.len();
        if p == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if sub_intensity.nrows() != p || sub_intensity.ncols() != p {
            return Err(Error::Dimension(format!(
                "sub-intensity is {}x{}, expected {p}x{p}",
                sub_intensity.nrows(),
                sub_intensity.ncols()
            )));
        }
        if pi.iter().any(|x| !x.is_finite()) || sub_intensity.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("parameters must be finite".into()));
        }
        if pi.iter().any(|&x| x < -VALIDATION_TOL) {
            return Err(Error::Validation("initial probabilities must be nonnegative".into()));
        }
        if (pi.sum() - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::Validation(format!(
                "initial probabilities sum to {}, expected 1",
                pi.sum()
            )));
        }
        for i in 0..p {
            if sub_intensity[(i, i)] >= 0.0 {
                return Err(Error::Validation(format!(
                    "diagonal entry ({i},{i}) must be negative"
                )));
            }
            let mut row = 0.0;
            for j in 0..p {
                let v = sub_intensity[(i, j)];
                if i != j {
                    if v < 0.0 {
                        return Err(Error::Validation(format!(
                            "off-diagonal entry ({i},{j}) must be nonnegative"
                        )));
                    }
                    if !structure.allows(i, j) && v != 0.0 {
                        return Err(Error::Validation(format!(
                            "entry ({i},{j}) must be zero under the {structure:?} structure"
                        )));
                    }
                }
                row += v;
            }
            if row > VALIDATION_TOL {
                return Err(Error::Validation(format!(
                    "row {i} sums to {row}, exceeding 0"
                )));
            }
        }
        if structure.requires_first_state_start() {
            for k in 1..p {
                if pi[k] != 0.0 {
                    return Err(Error::Validation(
                        "Coxian/Erlang structures start in state 1".into(),
                    ));
                }
            }
        }
        if structure == PhStructure::Erlang {
            // No early exit: every row but the last is conservative.
            for i in 0..p - 1 {
                let row: f64 = (0..p).map(|j| sub_intensity[(i, j)]).sum();
                if row.abs() > VALIDATION_TOL {
                    return Err(Error::Validation(
                        "Erlang structure admits exit only from the last phase".into(),
                    ));
                }
            }
        }
        let pi = pi.map(|x| x.max(0.0));
        let exit = (-(&sub_intensity * DVector::from_element(p, 1.0))).map(|x| x.max(0.0));
        Ok(PhaseType {
            pi,
            sub_intensity,
            exit,
            structure,
        })
    }

    /// Erlang(k, rate): `k` sequential phases with a common rate.
    pub fn erlang(k: usize, rate: f64) -> Result<Self> {
        if k == 0 || !(rate > 0.0) {
            return Err(Error::Validation("Erlang needs k >= 1 and rate > 0".into()));
        }
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = -rate;
            if i + 1 < k {
                t[(i, i + 1)] = rate;
            }
        }
        let mut pi = DVector::zeros(k);
        pi[0] = 1.0;
        Self::new(pi, t, PhStructure::Erlang)
    }

    /// Hyperexponential mixture with the given mixing probabilities and rates.
    pub fn hyperexponential(probs: &[f64], rates: &[f64]) -> Result<Self> {
        if probs.len() != rates.len() || probs.is_empty() {
            return Err(Error::Validation("probs and rates must have equal nonzero length".into()));
        }
        if rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Validation("rates must be positive".into()));
        }
        let p = probs.len();
        let t = DMatrix::from_fn(p, p, |i, j| if i == j { -rates[i] } else { 0.0 });
        Self::new(
            DVector::from_row_slice(probs),
            t,
            PhStructure::HyperExponential,
        )
    }

    /// Coxian chain: per-phase total rates and continuation probabilities
    /// (`continue_probs[i]` is the probability of moving from phase `i` to `i+1`
    /// rather than exiting).
    pub fn coxian(rates: &[f64], continue_probs: &[f64]) -> Result<Self> {
        let p = rates.len();
        if p == 0 || continue_probs.len() != p - 1 {
            return Err(Error::Validation(
                "Coxian needs p rates and p-1 continuation probabilities".into(),
            ));
        }
        if rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Validation("rates must be positive".into()));
        }
        if continue_probs.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::Validation("continuation probabilities must lie in [0,1]".into()));
        }
        let mut t = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            t[(i, i)] = -rates[i];
            if i + 1 < p {
                t[(i, i + 1)] = rates[i] * continue_probs[i];
            }
        }
        let mut pi = DVector::zeros(p);
        pi[0] = 1.0;
        Self::new(pi, t, PhStructure::Coxian)
    }

    /// Random admissible initialization under a structure, rates log-uniform in
    /// `[0.1, 10] * scale`.
    pub fn random(structure: PhStructure, p: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        if p == 0 || !(scale > 0.0) {
            return Err(Error::Validation("need p >= 1 and scale > 0".into()));
        }
        let log_uniform = |rng: &mut dyn rand::RngCore| -> f64 {
            let lo = (0.1f64 * scale).ln();
            let hi = (10.0f64 * scale).ln();
            (lo + (hi - lo) * rng.gen::<f64>()).exp()
        };
        match structure {
            PhStructure::Erlang => {
                let rate = log_uniform(rng);
                Self::erlang(p, rate)
            }
            PhStructure::HyperExponential => {
                let rates: Vec<f64> = (0..p).map(|_| log_uniform(rng)).collect();
                let mut probs: Vec<f64> = (0..p).map(|_| rng.gen_range(0.2..1.0)).collect();
                let s: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|x| *x /= s);
                Self::hyperexponential(&probs, &rates)
            }
            PhStructure::Coxian => {
                let rates: Vec<f64> = (0..p).map(|_| log_uniform(rng)).collect();
                let cont: Vec<f64> = (0..p.saturating_sub(1))
                    .map(|_| rng.gen_range(0.3..0.95))
                    .collect();
                Self::coxian(&rates, &cont)
            }
            PhStructure::General => {
                let mut t = DMatrix::<f64>::zeros(p, p);
                for i in 0..p {
                    for j in 0..p {
                        if i != j {
                            t[(i, j)] = 0.2 * log_uniform(rng);
                        }
                    }
                    let off: f64 = (0..p).filter(|&j| j != i).map(|j| t[(i, j)]).sum();
                    t[(i, i)] = -(off + log_uniform(rng));
                }
                let mut pi: Vec<f64> = (0..p).map(|_| rng.gen_range(0.2..1.0)).collect();
                let s: f64 = pi.iter().sum();
                pi.iter_mut().for_each(|x| *x /= s);
                Self::new(DVector::from_vec(pi), t, PhStructure::General)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn sub_intensity(&self) -> &DMatrix<f64> {
        &self.sub_intensity
    }

    pub fn exit(&self) -> &DVector<f64> {
        &self.exit
    }

    pub fn structure(&self) -> PhStructure {
        self.structure
    }

    /// Density `f(z) = pi exp(T z) t`, for `z > 0`.
    pub fn density(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::Domain(format!("density requires z > 0, got {z}")));
        }
        let e = mat_exp(&self.sub_intensity, z)?;
        Ok((self.pi.transpose() * e * &self.exit)[(0, 0)].max(0.0))
    }

    /// Survival `S(z) = pi exp(T z) e`, for `z >= 0`.
    pub fn survival(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::Domain(format!("survival requires z >= 0, got {z}")));
        }
        let e = mat_exp(&self.sub_intensity, z)?;
        let ones = DVector::from_element(self.dim(), 1.0);
        Ok((self.pi.transpose() * e * ones)[(0, 0)].clamp(0.0, 1.0))
    }

    /// Laplace transform `L(u) = pi (u I - T)^{-1} t`.
    pub fn laplace(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("laplace requires u >= 0, got {u}")));
        }
        let v = resolvent_apply(&self.sub_intensity, u, 1, &self.exit)?;
        Ok(self.pi.dot(&v))
    }

    /// Alternate Laplace form `pi (u (-T)^{-1} + I)^{-1} e`; agrees with
    /// `laplace` and is used as a cross-check.
    pub fn laplace_alt(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("laplace requires u >= 0, got {u}")));
        }
        let p = self.dim();
        let ident = DMatrix::<f64>::identity(p, p);
        let neg_t_inv = (-&self.sub_intensity)
            .lu()
            .solve(&ident)
            .ok_or_else(|| Error::Numeric("singular sub-intensity".into()))?;
        let system = u * neg_t_inv + ident;
        let ones = DVector::from_element(p, 1.0);
        let v = system
            .lu()
            .solve(&ones)
            .ok_or_else(|| Error::Numeric("singular Laplace system".into()))?;
        Ok(self.pi.dot(&v))
    }

    /// Raw moment `E(Z^n) = n! pi (-T)^{-n} e`.
    pub fn moment(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("moment order must be >= 1".into()));
        }
        let ones = DVector::from_element(self.dim(), 1.0);
        let v = resolvent_apply(&self.sub_intensity, 0.0, n, &ones)?;
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        Ok(fact * self.pi.dot(&v))
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1)
    }

    /// Simulate the absorption time of the underlying Markov jump process.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let p = self.dim();
        // initial state
        let mut u = rng.gen::<f64>() * self.pi.sum();
        let mut state = p - 1;
        for k in 0..p {
            if u < self.pi[k] {
                state = k;
                break;
            }
            u -= self.pi[k];
        }
        let mut time = 0.0;
        loop {
            let total = -self.sub_intensity[(state, state)];
            time += -rng.gen::<f64>().ln() / total;
            let mut u = rng.gen::<f64>() * total;
            // absorption
            if u < self.exit[state] {
                return time;
            }
            u -= self.exit[state];
            let mut next = state;
            for j in 0..p {
                if j == state {
                    continue;
                }
                if u < self.sub_intensity[(state, j)] {
                    next = j;
                    break;
                }
                u -= self.sub_intensity[(state, j)];
            }
            state = next;
        }
    }

    /// Drop initial probabilities below `tol` and renormalize; printed fitted
    /// vectors use exact zeros.
    pub fn truncate_small_pi(&mut self, tol: f64) {
        let mut changed = false;
        for k in 0..self.pi.len() {
            if self.pi[k] < tol {
                self.pi[k] = 0.0;
                changed = true;
            }
        }
        if changed {
            let s = self.pi.sum();
            if s > 0.0 {
                self.pi /= s;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PhaseTypeJson {
    pi: Vec<f64>,
    #[serde(rename = "T")]
    t: Vec<Vec<f64>>,
    structure: PhStructure,
}

impl From<PhaseType> for PhaseTypeJson {
    fn from(ph: PhaseType) -> Self {
        let p = ph.dim();
        PhaseTypeJson {
            pi: ph.pi.iter().copied().collect(),
            t: (0..p)
                .map(|i| (0..p).map(|j| ph.sub_intensity[(i, j)]).collect())
                .collect(),
            structure: ph.structure,
        }
    }
}

impl TryFrom<PhaseTypeJson> for PhaseType {
    type Error = Error;
    fn try_from(j: PhaseTypeJson) -> Result<Self> {
        let p = j.pi.len();
        if j.t.len() != p || j.t.iter().any(|row| row.len() != p) {
            return Err(Error::Dimension("T must be square and match pi".into()));
        }
        let flat: Vec<f64> = j.t.iter().flatten().copied().collect();
        PhaseType::new(
            DVector::from_vec(j.pi),
            DMatrix::from_row_slice(p, p, &flat),
            j.structure,
        )
    }
}

//! Multivariate extensions: shared PH frailty for clustered data, and a
//! correlated frailty model driven by a bivariate phase-type vector.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineHazard;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{
    initial_baseline, maximize_baseline, mixture_sample, weighted_ph_em_iteration, FitOptions,
    FitResult, MixtureComponent,
};
use crate::frailty::FrailtyModel;
use crate::matrix::{mat_exp, resolvent_apply};
use crate::phase_type::PhaseType;

/// A shared-frailty model is a univariate model whose frailty draw is common
/// to all members of a cluster.
pub type SharedFrailtyModel = FrailtyModel;

fn resolvent_form(ph: &PhaseType, shift: f64, n: usize) -> Result<f64> {
    let v = resolvent_apply(ph.sub_intensity(), shift, n, ph.exit())?;
    Ok(ph.pi().dot(&v))
}

/// Joint survival of a cluster: `pi (sum_j M(y_j) I - T)^{-1} t`.
pub fn shared_survival(model: &SharedFrailtyModel, times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::Data("cluster must be nonempty".into()));
    }
    let mut total = 0.0;
    for &y in times {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("times must be >= 0, got {y}")));
        }
        total += model.baseline.cum_hazard(y)?;
    }
    Ok(resolvent_form(&model.frailty, total, 1)?.clamp(0.0, 1.0))
}

/// Censored joint density of a cluster with event indicators `deltas`:
/// `kappa! (prod mu(y_j)^{delta_j}) pi (sum M I - T)^{-1-kappa} t`.
pub fn shared_density(model: &SharedFrailtyModel, times: &[f64], deltas: &[bool]) -> Result<f64> {
    if times.len() != deltas.len() || times.is_empty() {
        return Err(Error::Dimension("times and deltas must match and be nonempty".into()));
    }
    let kappa = deltas.iter().filter(|&&d| d).count();
    let mut total = 0.0;
    let mut hazard_prod = 1.0;
    for (&y, &d) in times.iter().zip(deltas) {
        if d && !(y > 0.0) {
            return Err(Error::Domain("event times must be positive".into()));
        }
        total += model.baseline.cum_hazard(y)?;
        if d {
            hazard_prod *= model.baseline.hazard(y)?;
        }
    }
    let fact: f64 = (1..=kappa).map(|k| k as f64).product();
    Ok((fact * hazard_prod * resolvent_form(&model.frailty, total, 1 + kappa)?).max(0.0))
}

/// `E(Z | cluster) = (kappa+1) pi R^{2+kappa} t / pi R^{1+kappa} t`.
pub fn shared_estep(model: &SharedFrailtyModel, times: &[f64], deltas: &[bool]) -> Result<f64> {
    if times.len() != deltas.len() || times.is_empty() {
        return Err(Error::Dimension("times and deltas must match and be nonempty".into()));
    }
    let kappa = deltas.iter().filter(|&&d| d).count();
    let mut total = 0.0;
    for &y in times {
        total += model.baseline.cum_hazard(y)?;
    }
    let num = resolvent_form(&model.frailty, total, 2 + kappa)?;
    let den = resolvent_form(&model.frailty, total, 1 + kappa)?;
    Ok((kappa as f64 + 1.0) * num / den)
}

struct ClusterStats {
    kappa: usize,
    total_hazard: f64,
}

fn cluster_stats(model: &FrailtyModel, data: &Dataset, group: &[usize]) -> Result<ClusterStats> {
    let mut kappa = 0;
    let mut total_hazard = 0.0;
    for &i in group {
        let obs = &data.observations[i];
        if obs.event {
            kappa += 1;
        }
        total_hazard += model.scaled_cum_hazard(obs.time, &obs.covariates)?;
    }
    Ok(ClusterStats { kappa, total_hazard })
}

/// Observed-data log-likelihood of clustered data under a shared frailty.
pub fn shared_loglikelihood(model: &FrailtyModel, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for group in data.cluster_groups() {
        let stats = cluster_stats(model, data, &group)?;
        let fact: f64 = (1..=stats.kappa).map(|k| k as f64).product();
        let mut term = fact.ln();
        for &i in &group {
            let obs = &data.observations[i];
            if obs.event {
                term += model.linear_predictor(&obs.covariates)?
                    + model.baseline.hazard(obs.time)?.ln();
            }
        }
        term += resolvent_form(&model.frailty, stats.total_hazard, 1 + stats.kappa)?.ln();
        if !term.is_finite() {
            return Err(Error::Numeric("non-finite cluster likelihood".into()));
        }
        total += term;
    }
    Ok(total)
}

/// Fit a shared PH frailty model to clustered data by the nested EM.
///
/// Clusters of size one reproduce the univariate [`crate::estimation::fit`].
pub fn fit_shared(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    data.validate()?;
    if data.event_count() == 0 {
        return Err(Error::Data(
            "dataset has no events; the baseline scale is unidentifiable".into(),
        ));
    }
    let mut last_err = None;
    for attempt in 0..3 {
        match fit_shared_once(data, opts, opts.seed.wrapping_add(attempt)) {
            Ok(result) => return Ok(result),
            Err(e @ Error::StateStarvation { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn fit_shared_once(data: &Dataset, opts: &FitOptions, seed: u64) -> Result<FitResult> {
    let groups = data.cluster_groups();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ph = PhaseType::random(opts.structure, opts.ph_dim, 1.0, &mut rng)?;
    let mut baseline = initial_baseline(opts.baseline, data)?;
    let mut beta = vec![0.0; data.covariate_width()];

    let mut model = FrailtyModel::new(ph.clone(), baseline.clone(), beta.clone())?;
    let mut trace = vec![shared_loglikelihood(&model, data)?];
    let mut converged = false;
    let mut iterations = 0;
    let mut steady = 0;

    for _ in 0..opts.max_outer_iter {
        // E-step per cluster
        let mut components = Vec::with_capacity(groups.len());
        let mut ez = vec![0.0; data.len()];
        for group in &groups {
            let stats = cluster_stats(&model, data, group)?;
            let num = resolvent_form(&model.frailty, stats.total_hazard, 2 + stats.kappa)?;
            let den = resolvent_form(&model.frailty, stats.total_hazard, 1 + stats.kappa)?;
            let expectation = (stats.kappa as f64 + 1.0) * num / den;
            for &i in group {
                ez[i] = expectation;
            }
            components.push(MixtureComponent {
                kappa: stats.kappa,
                total_hazard: stats.total_hazard,
            });
        }

        let sample =
            mixture_sample(&model.frailty, &components, opts.quad_nodes, opts.trunc_tail_mass)?;

        let (new_baseline, new_beta, _stalled) =
            maximize_baseline(data, &ez, &baseline, &beta, opts.mstep_budget)?;
        baseline = new_baseline;
        beta = new_beta;

        for _ in 0..opts.inner_iter_per_outer {
            ph = weighted_ph_em_iteration(&ph, &sample)?;
        }

        model = FrailtyModel::new(ph.clone(), baseline.clone(), beta.clone())?;
        let ll = shared_loglikelihood(&model, data)?;
        let prev = *trace.last().unwrap();
        trace.push(ll);
        iterations += 1;

        if (ll - prev).abs() / (prev.abs() + 1e-12) < opts.rel_tol {
            steady += 1;
            if steady >= 3 {
                converged = true;
                break;
            }
        } else {
            steady = 0;
        }
    }

    model.frailty.truncate_small_pi(1e-12);
    let loglik = *trace.last().unwrap();
    Ok(FitResult {
        model,
        loglik,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

/// A bivariate phase-type vector `(Z1, Z2)`: the process runs through the
/// first block, transfers via `T12`, then runs through the second block.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "BivariatePhJson", into = "BivariatePhJson")]
pub struct BivariatePH {
    eta: DVector<f64>,
    t11: DMatrix<f64>,
    t12: DMatrix<f64>,
    t22: DMatrix<f64>,
}

const TOL: f64 = 1e-9;

impl BivariatePH {
    pub fn new(
        eta: DVector<f64>,
        t11: DMatrix<f64>,
        t12: DMatrix<f64>,
        t22: DMatrix<f64>,
    ) -> Result<Self> {
        let p1 = eta.len();
        let p2 = t22.nrows();
        if t11.nrows() != p1 || t11.ncols() != p1 {
            return Err(Error::Dimension("T11 must be p1 x p1".into()));
        }
        if t12.nrows() != p1 || t12.ncols() != p2 {
            return Err(Error::Dimension("T12 must be p1 x p2".into()));
        }
        if t22.ncols() != p2 || p2 == 0 || p1 == 0 {
            return Err(Error::Dimension("T22 must be square and nonempty".into()));
        }
        if eta.iter().any(|&x| x < -TOL) || (eta.sum() - 1.0).abs() > TOL {
            return Err(Error::Validation("eta must be a probability vector".into()));
        }
        if t12.iter().any(|&x| x < 0.0) {
            return Err(Error::Validation("T12 must be nonnegative".into()));
        }
        for i in 0..p1 {
            if t11[(i, i)] >= 0.0 {
                return Err(Error::Validation("T11 diagonal must be negative".into()));
            }
            let row: f64 = (0..p1).map(|j| t11[(i, j)]).sum::<f64>()
                + (0..p2).map(|j| t12[(i, j)]).sum::<f64>();
            if row.abs() > TOL {
                return Err(Error::Validation(
                    "rows of [T11 T12] must sum to zero".into(),
                ));
            }
        }
        for i in 0..p2 {
            if t22[(i, i)] >= 0.0 {
                return Err(Error::Validation("T22 diagonal must be negative".into()));
            }
            let row: f64 = (0..p2).map(|j| t22[(i, j)]).sum();
            if row > TOL {
                return Err(Error::Validation("T22 row sums must be <= 0".into()));
            }
        }
        Ok(BivariatePH { eta, t11, t12, t22 })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.t11.nrows(), self.t22.nrows())
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn t11(&self) -> &DMatrix<f64> {
        &self.t11
    }

    pub fn t12(&self) -> &DMatrix<f64> {
        &self.t12
    }

    pub fn t22(&self) -> &DMatrix<f64> {
        &self.t22
    }

    /// Exit rates of the second block, `-T22 e`.
    fn exit2(&self) -> DVector<f64> {
        -(&self.t22 * DVector::from_element(self.t22.nrows(), 1.0))
    }

    /// Joint density `eta e^{T11 z1} T12 e^{T22 z2} (-T22) e`.
    pub fn density(&self, z1: f64, z2: f64) -> Result<f64> {
        if !(z1 > 0.0) || !(z2 > 0.0) {
            return Err(Error::Domain("density requires z1, z2 > 0".into()));
        }
        let e1 = mat_exp(&self.t11, z1)?;
        let e2 = mat_exp(&self.t22, z2)?;
        let v = e2 * self.exit2();
        let v = &self.t12 * v;
        let v = e1 * v;
        Ok(self.eta.dot(&v).max(0.0))
    }

    /// Joint Laplace transform `eta (u1 I - T11)^{-1} T12 (u2 I - T22)^{-1} (-T22) e`.
    pub fn laplace(&self, u1: f64, u2: f64) -> Result<f64> {
        let v = self.chain(1, 1, u1, u2)?;
        Ok(v)
    }

    /// Marginal distribution of the first coordinate: PH(eta, T11).
    pub fn margin1(&self) -> Result<PhaseType> {
        PhaseType::new(
            self.eta.clone(),
            self.t11.clone(),
            crate::phase_type::PhStructure::General,
        )
    }

    /// Marginal distribution of the second coordinate: PH(eta (-T11)^{-1} T12, T22).
    pub fn margin2(&self) -> Result<PhaseType> {
        let u = resolvent_apply(&self.t11.transpose(), 0.0, 1, &self.eta)?;
        let pi2 = self.t12.transpose() * u;
        PhaseType::new(
            pi2,
            self.t22.clone(),
            crate::phase_type::PhStructure::General,
        )
    }

    /// `eta (s1 I - T11)^{-a} T12 (s2 I - T22)^{-b} (-T22) e`, right to left.
    fn chain(&self, a: usize, b: usize, s1: f64, s2: f64) -> Result<f64> {
        let v = self.exit2();
        let v = resolvent_apply(&self.t22, s2, b, &v)?;
        let v = &self.t12 * v;
        let v = resolvent_apply(&self.t11, s1, a, &v)?;
        Ok(self.eta.dot(&v))
    }
}

#[derive(Serialize, Deserialize)]
struct BivariatePhJson {
    eta: Vec<f64>,
    #[serde(rename = "T11")]
    t11: Vec<Vec<f64>>,
    #[serde(rename = "T12")]
    t12: Vec<Vec<f64>>,
    #[serde(rename = "T22")]
    t22: Vec<Vec<f64>>,
}

fn to_dmatrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let c = rows[0].len();
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

impl From<BivariatePH> for BivariatePhJson {
    fn from(b: BivariatePH) -> Self {
        let dump = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        BivariatePhJson {
            eta: b.eta.iter().copied().collect(),
            t11: dump(&b.t11),
            t12: dump(&b.t12),
            t22: dump(&b.t22),
        }
    }
}

impl TryFrom<BivariatePhJson> for BivariatePH {
    type Error = Error;
    fn try_from(j: BivariatePhJson) -> Result<Self> {
        BivariatePH::new(
            DVector::from_vec(j.eta),
            to_dmatrix(&j.t11)?,
            to_dmatrix(&j.t12)?,
            to_dmatrix(&j.t22)?,
        )
    }
}

/// Two correlated frailties `(Z1, Z2)` acting on two baseline hazards.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelatedFrailtyModel {
    pub bivph: BivariatePH,
    pub baseline1: BaselineHazard,
    pub baseline2: BaselineHazard,
}

impl CorrelatedFrailtyModel {
    pub fn new(
        bivph: BivariatePH,
        baseline1: BaselineHazard,
        baseline2: BaselineHazard,
    ) -> Result<Self> {
        Ok(CorrelatedFrailtyModel {
            bivph,
            baseline1,
            baseline2,
        })
    }

    /// Joint survival `eta (M1 I - T11)^{-1} T12 (M2 I - T22)^{-1} (-T22) e`.
    pub fn survival(&self, y1: f64, y2: f64) -> Result<f64> {
        if !(y1 >= 0.0) || !(y2 >= 0.0) {
            return Err(Error::Domain("survival requires y1, y2 >= 0".into()));
        }
        let m1 = self.baseline1.cum_hazard(y1)?;
        let m2 = self.baseline2.cum_hazard(y2)?;
        Ok(self.bivph.chain(1, 1, m1, m2)?.clamp(0.0, 1.0))
    }

    /// Joint density `mu1 mu2 eta (M1 I - T11)^{-2} T12 (M2 I - T22)^{-2} (-T22) e`.
    pub fn density(&self, y1: f64, y2: f64) -> Result<f64> {
        if !(y1 > 0.0) || !(y2 > 0.0) {
            return Err(Error::Domain("density requires y1, y2 > 0".into()));
        }
        let m1 = self.baseline1.cum_hazard(y1)?;
        let m2 = self.baseline2.cum_hazard(y2)?;
        let h = self.baseline1.hazard(y1)? * self.baseline2.hazard(y2)?;
        Ok((h * self.bivph.chain(2, 2, m1, m2)?).max(0.0))
    }

    /// Conditional frailty means `(E(Z1 | Y = y), E(Z2 | Y = y))` for an
    /// uncensored pair.
    pub fn estep(&self, y1: f64, y2: f64) -> Result<(f64, f64)> {
        if !(y1 > 0.0) || !(y2 > 0.0) {
            return Err(Error::Domain("estep requires y1, y2 > 0".into()));
        }
        let m1 = self.baseline1.cum_hazard(y1)?;
        let m2 = self.baseline2.cum_hazard(y2)?;
        let den = self.bivph.chain(2, 2, m1, m2)?;
        let z1 = 2.0 * self.bivph.chain(3, 2, m1, m2)? / den;
        let z2 = 2.0 * self.bivph.chain(2, 3, m1, m2)? / den;
        Ok((z1, z2))
    }
}

/// EM over the two baseline parameter vectors with the bivariate PH component
/// held fixed, for fully observed pairs. Returns the fitted baselines and the
/// joint log-likelihood trace.
pub fn fit_correlated_baselines(
    model: &CorrelatedFrailtyModel,
    pairs: &[(f64, f64)],
    max_iter: usize,
    rel_tol: f64,
    budget: usize,
) -> Result<(CorrelatedFrailtyModel, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Data("no observation pairs".into()));
    }
    let loglik = |m: &CorrelatedFrailtyModel| -> Result<f64> {
        pairs.iter().try_fold(0.0, |acc, &(y1, y2)| {
            let d = m.density(y1, y2)?;
            if !(d > 0.0) {
                return Err(Error::Numeric("vanishing pair density".into()));
            }
            Ok(acc + d.ln())
        })
    };

    let mut current = model.clone();
    let mut trace = vec![loglik(&current)?];
    for _ in 0..max_iter {
        let mut ez1 = Vec::with_capacity(pairs.len());
        let mut ez2 = Vec::with_capacity(pairs.len());
        for &(y1, y2) in pairs {
            let (a, b) = current.estep(y1, y2)?;
            ez1.push(a);
            ez2.push(b);
        }
        // per-margin datasets of uncensored times
        let margin_data = |idx: usize| -> Result<Dataset> {
            Dataset::new(
                pairs
                    .iter()
                    .map(|&(y1, y2)| crate::data::Observation {
                        time: if idx == 0 { y1 } else { y2 },
                        event: true,
                        covariates: vec![],
                        cluster: None,
                    })
                    .collect(),
            )
        };
        let (b1, _, _) =
            maximize_baseline(&margin_data(0)?, &ez1, &current.baseline1, &[], budget)?;
        let (b2, _, _) =
            maximize_baseline(&margin_data(1)?, &ez2, &current.baseline2, &[], budget)?;
        current.baseline1 = b1;
        current.baseline2 = b2;
        let ll = loglik(&current)?;
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() / (prev.abs() + 1e-12) < rel_tol {
            break;
        }
    }
    Ok((current, trace))
}

//! Maximum-likelihood fitting of PH frailty models by a nested EM.
//!
//! The outer EM computes conditional frailty expectations per observation,
//! maximizes the baseline/regression parameters numerically, and hands the
//! mixture of conditional frailty densities (discretized on Gauss–Legendre
//! nodes) to an inner weighted PH EM for the `(pi, T)` update.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineHazard;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::frailty::FrailtyModel;
use crate::matrix::van_loan_conv;
use crate::phase_type::{PhStructure, PhaseType};
use crate::quadrature::gauss_legendre_on;

/// Baseline family selector for fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineFamily {
    Constant,
    Gompertz,
    Power,
}

impl std::str::FromStr for BaselineFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(BaselineFamily::Constant),
            "gompertz" => Ok(BaselineFamily::Gompertz),
            "power" => Ok(BaselineFamily::Power),
            other => Err(Error::Validation(format!("unknown baseline family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub ph_dim: usize,
    pub structure: PhStructure,
    pub baseline: BaselineFamily,
    pub max_outer_iter: usize,
    pub inner_iter_per_outer: usize,
    pub rel_tol: f64,
    pub quad_nodes: usize,
    pub trunc_tail_mass: f64,
    pub seed: u64,
    pub mstep_budget: usize,
}

impl FitOptions {
    pub fn new(ph_dim: usize, structure: PhStructure, baseline: BaselineFamily) -> Self {
        FitOptions {
            ph_dim,
            structure,
            baseline,
            max_outer_iter: 200,
            inner_iter_per_outer: 5,
            rel_tol: 1e-8,
            quad_nodes: 200,
            trunc_tail_mass: 1e-10,
            seed: 0,
            mstep_budget: 200,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.ph_dim == 0 || self.inner_iter_per_outer == 0 || self.quad_nodes == 0 {
            return Err(Error::Validation("counts in FitOptions must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Validation("rel_tol must be positive".into()));
        }
        if !(self.trunc_tail_mass > 0.0 && self.trunc_tail_mass <= 1e-6) {
            return Err(Error::Validation("trunc_tail_mass must lie in (0, 1e-6]".into()));
        }
        Ok(())
    }
}

/// Discretized density on positive nodes; weights are normalized to sum to 1.
#[derive(Clone, Debug)]
pub struct WeightedSample {
    pub points: Vec<(f64, f64)>,
}

impl WeightedSample {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("weighted sample is empty".into()));
        }
        if points.iter().any(|&(z, w)| !(z > 0.0) || !(w >= 0.0)) {
            return Err(Error::Data("nodes must be positive, weights nonnegative".into()));
        }
        let total: f64 = points.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::Numeric("weighted sample has zero total mass".into()));
        }
        for p in &mut points {
            p.1 /= total;
        }
        Ok(WeightedSample { points })
    }

    pub fn weighted_mean(&self) -> f64 {
        self.points.iter().map(|&(z, w)| z * w).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub model: FrailtyModel,
    pub loglik: f64,
    #[serde(rename = "trace")]
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-observation conditional frailty expectations `E(Z | obs)`.
pub fn estep_expectations(model: &FrailtyModel, data: &Dataset) -> Result<Vec<f64>> {
    data.observations
        .iter()
        .map(|obs| {
            if obs.event {
                model.cond_frailty_mean_event(obs.time, &obs.covariates)
            } else {
                model.cond_frailty_mean_surviving(obs.time, &obs.covariates)
            }
        })
        .collect()
}

/// Truncation point for frailty-space quadrature: smallest power-of-two multiple
/// of the frailty mean where `z^(kappa+1) S_Z(z)` drops below `tail_mass`.
pub(crate) fn truncation_point(ph: &PhaseType, max_kappa: usize, tail_mass: f64) -> Result<f64> {
    let mut z = ph.mean()?.max(1e-6);
    let power = (max_kappa + 1).max(2) as i32;
    for _ in 0..60 {
        if z.powi(power) * ph.survival(z)? < tail_mass {
            return Ok(z);
        }
        z *= 2.0;
    }
    Err(Error::Truncation(60))
}

/// One component of the conditional-frailty mixture: a density proportional to
/// `z^kappa exp(-z total_hazard) f_Z(z)`, with closed-form normalizer
/// `kappa! pi (total_hazard I - T)^{-1-kappa} t`.
pub(crate) struct MixtureComponent {
    pub kappa: usize,
    pub total_hazard: f64,
}

pub(crate) fn mixture_sample(
    ph: &PhaseType,
    components: &[MixtureComponent],
    quad_nodes: usize,
    tail_mass: f64,
) -> Result<WeightedSample> {
    if components.is_empty() {
        return Err(Error::Data("no mixture components".into()));
    }
    let max_kappa = components.iter().map(|c| c.kappa).max().unwrap();
    let z_max = truncation_point(ph, max_kappa, tail_mass)?;
    let (nodes, quad_w) = gauss_legendre_on(quad_nodes, 0.0, z_max);

    // closed-form normalizers kappa! pi (S I - T)^{-1-kappa} t
    let normalizers: Vec<f64> = components
        .iter()
        .map(|c| {
            let v = crate::matrix::resolvent_apply(
                ph.sub_intensity(),
                c.total_hazard,
                c.kappa + 1,
                ph.exit(),
            )?;
            let fact: f64 = (1..=c.kappa).map(|k| k as f64).product();
            Ok(fact * ph.pi().dot(&v))
        })
        .collect::<Result<_>>()?;
    if normalizers.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Numeric("degenerate mixture normalizer".into()));
    }

    let n_comp = components.len() as f64;
    let mut points = Vec::with_capacity(quad_nodes);
    for (&z, &wq) in nodes.iter().zip(&quad_w) {
        let fz = ph.density(z)?;
        let mut mix = 0.0;
        for (c, &d) in components.iter().zip(&normalizers) {
            mix += z.powi(c.kappa as i32) * (-z * c.total_hazard).exp() * fz / d;
        }
        points.push((z, wq * mix / n_comp));
    }
    WeightedSample::new(points)
}

/// Discretize the per-observation mixture of conditional frailty densities.
pub fn mixture_nodes(
    model: &FrailtyModel,
    data: &Dataset,
    opts: &FitOptions,
) -> Result<WeightedSample> {
    let components: Vec<MixtureComponent> = data
        .observations
        .iter()
        .map(|obs| {
            Ok(MixtureComponent {
                kappa: usize::from(obs.event),
                total_hazard: model.scaled_cum_hazard(obs.time, &obs.covariates)?,
            })
        })
        .collect::<Result<_>>()?;
    mixture_sample(&model.frailty, &components, opts.quad_nodes, opts.trunc_tail_mass)
}

/// One E+M cycle of the weighted PH EM on a discretized density.
///
/// Structural zeros of `T` are preserved: the transition statistic carries a
/// factor `T_kl`, so masked entries stay exactly zero.
pub fn weighted_ph_em_iteration(ph: &PhaseType, sample: &WeightedSample) -> Result<PhaseType> {
    let p = ph.dim();
    let pi = ph.pi();
    let sub = ph.sub_intensity();
    let exit = ph.exit();

    let mut b_stat = DVector::<f64>::zeros(p);
    let mut z_stat = DVector::<f64>::zeros(p);
    let mut exit_stat = DVector::<f64>::zeros(p);
    let mut trans_stat = DMatrix::<f64>::zeros(p, p);
    let mut total_w = 0.0;

    for &(z, w) in &sample.points {
        if w == 0.0 {
            continue;
        }
        let (expt, conv) = van_loan_conv(sub, exit, pi, z)?;
        let b_vec = &expt * exit; // exp(Tz) t
        let a_vec = expt.transpose() * pi; // (pi exp(Tz))'
        let f = pi.dot(&b_vec);
        if !(f > 0.0) {
            return Err(Error::Numeric(format!("vanishing density at node z = {z}")));
        }
        total_w += w;
        let scale = w / f;
        for k in 0..p {
            b_stat[k] += scale * pi[k] * b_vec[k];
            z_stat[k] += scale * conv[(k, k)];
            exit_stat[k] += scale * exit[k] * a_vec[k];
            for l in 0..p {
                if l != k {
                    trans_stat[(k, l)] += scale * sub[(k, l)] * conv[(l, k)];
                }
            }
        }
    }

    let mut new_pi = b_stat / total_w;
    // guard against roundoff drift before validation
    let s = new_pi.sum();
    new_pi /= s;

    let mut new_t = DMatrix::<f64>::zeros(p, p);
    let mut new_exit = DVector::<f64>::zeros(p);
    for k in 0..p {
        if !(z_stat[k] > 0.0) {
            return Err(Error::StateStarvation { state: k });
        }
        let mut row = 0.0;
        for l in 0..p {
            if l != k {
                new_t[(k, l)] = trans_stat[(k, l)] / z_stat[k];
                row += new_t[(k, l)];
            }
        }
        new_exit[k] = exit_stat[k] / z_stat[k];
        new_t[(k, k)] = -(row + new_exit[k]);
    }
    PhaseType::new(new_pi, new_t, ph.structure())
}

/// Weighted log-likelihood of a discretized density under `ph`.
pub fn weighted_loglik(ph: &PhaseType, sample: &WeightedSample) -> Result<f64> {
    let mut total = 0.0;
    for &(z, w) in &sample.points {
        if w > 0.0 {
            total += w * ph.density(z)?.ln();
        }
    }
    Ok(total)
}

fn pack_baseline(baseline: &BaselineHazard) -> Result<Vec<f64>> {
    match *baseline {
        BaselineHazard::Constant { rate } => Ok(vec![rate.ln()]),
        BaselineHazard::Gompertz { b, c } => Ok(vec![b.ln(), c]),
        BaselineHazard::Power { theta } => Ok(vec![theta.ln()]),
        BaselineHazard::Shifted { .. } => {
            Err(Error::Validation("shifted baselines are not fitted directly".into()))
        }
    }
}

fn unpack_baseline(template: &BaselineHazard, params: &[f64]) -> Result<BaselineHazard> {
    match template {
        BaselineHazard::Constant { .. } => BaselineHazard::constant(params[0].exp()),
        BaselineHazard::Gompertz { .. } => BaselineHazard::gompertz(params[0].exp(), params[1]),
        BaselineHazard::Power { .. } => BaselineHazard::power(params[0].exp()),
        BaselineHazard::Shifted { .. } => {
            Err(Error::Validation("shifted baselines are not fitted directly".into()))
        }
    }
}

/// Expected complete log-likelihood terms that depend on `(alpha, beta)`.
fn baseline_objective(
    data: &Dataset,
    ez: &[f64],
    baseline: &BaselineHazard,
    beta: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for (obs, &e) in data.observations.iter().zip(ez) {
        let lp: f64 = obs.covariates.iter().zip(beta).map(|(x, b)| x * b).sum();
        if obs.event {
            total += lp + baseline.hazard(obs.time)?.ln();
        }
        total -= e * lp.exp() * baseline.cum_hazard(obs.time)?;
    }
    Ok(total)
}

/// Joint numerical maximization of the baseline parameters and regression
/// coefficients given frailty expectations. Returns the incumbent with a
/// `stalled` flag when the search fails to improve.
pub fn maximize_baseline(
    data: &Dataset,
    ez: &[f64],
    baseline0: &BaselineHazard,
    beta0: &[f64],
    budget: usize,
) -> Result<(BaselineHazard, Vec<f64>, bool)> {
    if ez.len() != data.len() {
        return Err(Error::Dimension("expectations do not match dataset".into()));
    }
    if ez.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Data("frailty expectations must be positive".into()));
    }
    let n_base = pack_baseline(baseline0)?.len();
    let mut x0 = pack_baseline(baseline0)?;
    x0.extend_from_slice(beta0);

    let objective = |params: &[f64]| -> f64 {
        let baseline = match unpack_baseline(baseline0, &params[..n_base]) {
            Ok(b) => b,
            Err(_) => return f64::INFINITY,
        };
        match baseline_objective(data, ez, &baseline, &params[n_base..]) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };

    let incumbent_val = objective(&x0);
    let (best, best_val) = crate::optimize::nelder_mead(objective, &x0, 0.2, budget);
    if best_val >= incumbent_val {
        return Ok((baseline0.clone(), beta0.to_vec(), true));
    }
    let baseline = unpack_baseline(baseline0, &best[..n_base])?;
    Ok((baseline, best[n_base..].to_vec(), false))
}

pub(crate) fn initial_baseline(family: BaselineFamily, data: &Dataset) -> Result<BaselineHazard> {
    let events = data.event_count() as f64;
    let total_time: f64 = data.observations.iter().map(|o| o.time).sum();
    let rate = (events / total_time).max(1e-8);
    match family {
        BaselineFamily::Constant => BaselineHazard::constant(rate),
        BaselineFamily::Gompertz => BaselineHazard::gompertz(rate, 0.1),
        BaselineFamily::Power => BaselineHazard::power(1.0),
    }
}

/// Fit a PH frailty model by the nested EM. Restarts with a fresh seed (up to
/// 3 times) if a phase receives no mass in the inner EM.
pub fn fit(data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    data.validate()?;
    if data.event_count() == 0 {
        return Err(Error::Data(
            "dataset has no events; the baseline scale is unidentifiable".into(),
        ));
    }
    let mut last_err = None;
    for attempt in 0..3 {
        match fit_once(data, opts, opts.seed.wrapping_add(attempt)) {
            Ok(result) => return Ok(result),
            Err(e @ Error::StateStarvation { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn fit_once(data: &Dataset, opts: &FitOptions, seed: u64) -> Result<FitResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ph = PhaseType::random(opts.structure, opts.ph_dim, 1.0, &mut rng)?;
    let mut baseline = initial_baseline(opts.baseline, data)?;
    let mut beta = vec![0.0; data.covariate_width()];

    let mut model = FrailtyModel::new(ph.clone(), baseline.clone(), beta.clone())?;
    let mut trace = vec![model.loglikelihood(data)?];
    let mut converged = false;
    let mut iterations = 0;
    let mut steady = 0;

    for _ in 0..opts.max_outer_iter {
        let ez = estep_expectations(&model, data)?;
        let sample = mixture_nodes(&model, data, opts)?;

        let (new_baseline, new_beta, _stalled) =
            maximize_baseline(data, &ez, &baseline, &beta, opts.mstep_budget)?;
        baseline = new_baseline;
        beta = new_beta;

        for _ in 0..opts.inner_iter_per_outer {
            ph = weighted_ph_em_iteration(&ph, &sample)?;
        }

        model = FrailtyModel::new(ph.clone(), baseline.clone(), beta.clone())?;
        let ll = model.loglikelihood(data)?;
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

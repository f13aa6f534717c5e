//! Data generation for frailty models and nonparametric cumulative-hazard
//! estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineHazard;
use crate::data::{Dataset, Observation, StepFunction};
use crate::error::{Error, Result};
use crate::frailty::FrailtyModel;

/// Right-censoring mechanisms applied independently of the event time.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CensoringScheme {
    None,
    Fixed { time: f64 },
    Exponential { rate: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl CensoringScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CensoringScheme::None => Ok(()),
            CensoringScheme::Fixed { time } if time > 0.0 && time.is_finite() => Ok(()),
            CensoringScheme::Exponential { rate } if rate > 0.0 && rate.is_finite() => Ok(()),
            CensoringScheme::Uniform { lower, upper }
                if lower >= 0.0 && upper > lower && upper.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::Validation("invalid censoring scheme parameters".into())),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            CensoringScheme::None => f64::INFINITY,
            CensoringScheme::Fixed { time } => time,
            CensoringScheme::Exponential { rate } => {
                -(1.0 - rng.gen::<f64>()).ln() / rate
            }
            CensoringScheme::Uniform { lower, upper } => rng.gen_range(lower..upper),
        }
    }
}

/// Draw a lifetime given a frailty value: `Y = M^{-1}(E / (z e^{x beta}))`
/// with `E` standard exponential.
pub fn sample_lifetime<R: Rng>(
    baseline: &BaselineHazard,
    z: f64,
    linpred_exp: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(z > 0.0) || !(linpred_exp > 0.0) {
        return Err(Error::Domain("frailty and e^{x beta} must be positive".into()));
    }
    let e = -(1.0 - rng.gen::<f64>()).ln();
    baseline.inv_cum_hazard(e / (z * linpred_exp))
}

fn censor<R: Rng>(y: f64, scheme: &CensoringScheme, rng: &mut R) -> (f64, bool) {
    let c = scheme.draw(rng);
    if y <= c {
        (y, true)
    } else {
        (c, false)
    }
}

/// Sampler for the frailty variable used when generating data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FrailtyLaw {
    /// Phase-type frailty; the generated data follow the model exactly.
    Ph { model: FrailtyModel },
    /// Lognormal frailty `exp(N(mu, sigma^2))` over the given baseline.
    Lognormal {
        mu: f64,
        sigma: f64,
        baseline: BaselineHazard,
        #[serde(default)]
        beta: Vec<f64>,
    },
}

impl FrailtyLaw {
    fn baseline(&self) -> &BaselineHazard {
        match self {
            FrailtyLaw::Ph { model } => &model.baseline,
            FrailtyLaw::Lognormal { baseline, .. } => baseline,
        }
    }

    fn linpred_exp(&self, x: &[f64]) -> Result<f64> {
        match self {
            FrailtyLaw::Ph { model } => Ok(model.linear_predictor(x)?.exp()),
            FrailtyLaw::Lognormal { beta, .. } => {
                if beta.len() != x.len() {
                    return Err(Error::Dimension(format!(
                        "expected {} covariates, got {}",
                        beta.len(),
                        x.len()
                    )));
                }
                Ok(beta.iter().zip(x).map(|(b, xi)| b * xi).sum::<f64>().exp())
            }
        }
    }

    fn draw_frailty<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match self {
            FrailtyLaw::Ph { model } => Ok(model.frailty.sample(rng)),
            FrailtyLaw::Lognormal { mu, sigma, .. } => {
                let normal = Normal::new(*mu, *sigma)
                    .map_err(|e| Error::Validation(format!("lognormal parameters: {e}")))?;
                Ok(normal.sample(rng).exp())
            }
        }
    }
}

/// Simulate independent subjects with the given covariate rows. Each subject
/// gets an independent frailty draw.
pub fn simulate_dataset(
    law: &FrailtyLaw,
    covariates: &[Vec<f64>],
    censoring: &CensoringScheme,
    seed: u64,
) -> Result<Dataset> {
    censoring.validate()?;
    if covariates.is_empty() {
        return Err(Error::Data("no covariate rows to simulate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(covariates.len());
    for x in covariates {
        let z = law.draw_frailty(&mut rng)?;
        let lp = law.linpred_exp(x)?;
        let y = sample_lifetime(law.baseline(), z, lp, &mut rng)?;
        let (time, event) = censor(y, censoring, &mut rng);
        if !time.is_finite() {
            return Err(Error::Numeric(
                "simulated time is infinite; use a censoring scheme with bounded support".into(),
            ));
        }
        observations.push(Observation {
            time: time.max(1e-300),
            event,
            covariates: x.clone(),
            cluster: None,
        });
    }
    Dataset::new(observations)
}

/// Simulate clustered data under a shared PH frailty: one frailty draw per
/// cluster, applied to every member.
pub fn simulate_shared(
    model: &FrailtyModel,
    cluster_sizes: &[usize],
    censoring: &CensoringScheme,
    seed: u64,
) -> Result<Dataset> {
    censoring.validate()?;
    if cluster_sizes.is_empty() || cluster_sizes.contains(&0) {
        return Err(Error::Data("cluster sizes must be positive".into()));
    }
    if !model.beta.is_empty() {
        return Err(Error::Validation(
            "shared simulation does not take covariates".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::new();
    for (id, &size) in cluster_sizes.iter().enumerate() {
        let z = model.frailty.sample(&mut rng);
        for _ in 0..size {
            let y = sample_lifetime(&model.baseline, z, 1.0, &mut rng)?;
            let (time, event) = censor(y, censoring, &mut rng);
            if !time.is_finite() {
                return Err(Error::Numeric(
                    "simulated time is infinite; use a censoring scheme with bounded support"
                        .into(),
                ));
            }
            observations.push(Observation {
                time: time.max(1e-300),
                event,
                covariates: vec![],
                cluster: Some(id as u64),
            });
        }
    }
    Dataset::new(observations)
}

/// Two-group benchmark design: Gompertz baseline `b = 0.01`, `c = 1`,
/// lognormal frailty `exp(N(-0.35, 0.8^2))`, one binary covariate with effect
/// `beta = 0.5`, and no censoring.
pub fn two_group_dataset(per_group: usize, seed: u64) -> Result<Dataset> {
    let law = FrailtyLaw::Lognormal {
        mu: -0.35,
        sigma: 0.8,
        baseline: BaselineHazard::gompertz(0.01, 1.0)?,
        beta: vec![0.5],
    };
    let mut covariates = vec![vec![0.0]; per_group];
    covariates.extend(vec![vec![1.0]; per_group]);
    simulate_dataset(&law, &covariates, &CensoringScheme::None, seed)
}

fn distinct_time_table(data: &Dataset) -> Vec<(f64, usize, usize)> {
    let mut times: Vec<(f64, bool)> = data
        .observations
        .iter()
        .map(|o| (o.time, o.event))
        .collect();
    times.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // (time, events at time, at risk just before time)
    let n = times.len();
    let mut table = Vec::new();
    let mut i = 0;
    while i < n {
        let t = times[i].0;
        let mut d = 0;
        let mut j = i;
        while j < n && times[j].0 == t {
            if times[j].1 {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            table.push((t, d, n - i));
        }
        i = j;
    }
    table
}

/// Nelson–Aalen estimate of the cumulative hazard. Ties are aggregated;
/// subjects censored at an event time are kept in the risk set for that time.
pub fn nelson_aalen(data: &Dataset) -> Result<StepFunction> {
    data.validate()?;
    if data.event_count() == 0 {
        return Err(Error::Data("no events; cumulative hazard is identically zero".into()));
    }
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut acc = 0.0;
    for (t, d, r) in distinct_time_table(data) {
        acc += d as f64 / r as f64;
        knots.push(t);
        values.push(acc);
    }
    StepFunction::new(knots, values)
}

/// Kaplan–Meier estimate of the survival function, with the same tie
/// conventions as [`nelson_aalen`].
pub fn kaplan_meier(data: &Dataset) -> Result<StepFunction> {
    data.validate()?;
    if data.event_count() == 0 {
        return Err(Error::Data("no events; survival is identically one".into()));
    }
    // survival steps decrease, so bypass the non-decreasing check in
    // StepFunction::new; a leading knot at zero makes eval(0) = 1
    let mut knots = vec![0.0];
    let mut values = vec![1.0];
    let mut acc = 1.0;
    for (t, d, r) in distinct_time_table(data) {
        acc *= 1.0 - d as f64 / r as f64;
        knots.push(t);
        values.push(acc);
    }
    Ok(StepFunction { knots, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::phase_type::PhaseType;

    fn exp_model() -> FrailtyModel {
        FrailtyModel::without_covariates(
            PhaseType::erlang(1, 1.0).unwrap(),
            BaselineHazard::constant(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lifetime_inversion_examples() {
        // with a forced exponential draw the transform is deterministic;
        // check the quantile function instead via large-sample KS
        let model = exp_model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut times: Vec<f64> = (0..n)
            .map(|_| sample_lifetime(&model.baseline, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // frailty fixed at 1: plain exponential lifetimes
        let mut ks: f64 = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let emp = (i + 1) as f64 / n as f64;
            ks = ks.max((emp - (1.0 - (-t).exp())).abs());
        }
        assert!(ks < 0.01, "ks = {ks}");
    }

    #[test]
    fn simulated_ph_data_match_model_survival() {
        let model = exp_model();
        let law = FrailtyLaw::Ph {
            model: model.clone(),
        };
        let covs = vec![vec![]; 200_000];
        let data = simulate_dataset(&law, &covs, &CensoringScheme::None, 11).unwrap();
        for &y in &[0.5, 1.0, 2.0] {
            let emp = data.observations.iter().filter(|o| o.time > y).count() as f64
                / data.len() as f64;
            let th = model.survival(y, &[]).unwrap();
            assert_abs_diff_eq!(emp, th, epsilon = 0.01);
        }
    }

    #[test]
    fn covariate_effect_scales_hazard() {
        let model = FrailtyModel::new(
            PhaseType::erlang(1, 1.0).unwrap(),
            BaselineHazard::constant(1.0).unwrap(),
            vec![std::f64::consts::LN_2],
        )
        .unwrap();
        let law = FrailtyLaw::Ph {
            model: model.clone(),
        };
        let covs = vec![vec![1.0]; 100_000];
        let data = simulate_dataset(&law, &covs, &CensoringScheme::None, 3).unwrap();
        let emp = data.observations.iter().filter(|o| o.time > 1.0).count() as f64
            / data.len() as f64;
        // Pareto frailty mixture: S(1 | x=1) = 1/(1 + 2)
        assert_abs_diff_eq!(emp, 1.0 / 3.0, epsilon = 0.01);
    }

    #[test]
    fn censoring_schemes_behave() {
        let law = FrailtyLaw::Ph { model: exp_model() };
        let covs = vec![vec![]; 5000];
        let fixed =
            simulate_dataset(&law, &covs, &CensoringScheme::Fixed { time: 1.0 }, 5).unwrap();
        assert!(fixed.observations.iter().all(|o| o.time <= 1.0));
        assert!(fixed
            .observations
            .iter()
            .any(|o| !o.event && o.time == 1.0));
        let unif = simulate_dataset(
            &law,
            &covs,
            &CensoringScheme::Uniform {
                lower: 0.0,
                upper: 2.0,
            },
            5,
        )
        .unwrap();
        assert!(unif.observations.iter().any(|o| !o.event));
        assert!(unif
            .observations
            .iter()
            .filter(|o| !o.event)
            .all(|o| o.time < 2.0));
        assert!(simulate_dataset(&law, &covs, &CensoringScheme::None, 5)
            .unwrap()
            .observations
            .iter()
            .all(|o| o.event));
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let law = FrailtyLaw::Ph { model: exp_model() };
        let covs = vec![vec![]; 50];
        let a = simulate_dataset(&law, &covs, &CensoringScheme::None, 9).unwrap();
        let b = simulate_dataset(&law, &covs, &CensoringScheme::None, 9).unwrap();
        let c = simulate_dataset(&law, &covs, &CensoringScheme::None, 10).unwrap();
        assert_eq!(
            a.observations.iter().map(|o| o.time).collect::<Vec<_>>(),
            b.observations.iter().map(|o| o.time).collect::<Vec<_>>()
        );
        assert_ne!(
            a.observations.iter().map(|o| o.time).collect::<Vec<_>>(),
            c.observations.iter().map(|o| o.time).collect::<Vec<_>>()
        );
    }

    #[test]
    fn shared_clusters_are_positively_dependent() {
        let model = FrailtyModel::without_covariates(
            PhaseType::hyperexponential(&[0.5, 0.5], &[0.2, 5.0]).unwrap(),
            BaselineHazard::constant(1.0).unwrap(),
        )
        .unwrap();
        let sizes = vec![2usize; 30_000];
        let data = simulate_shared(&model, &sizes, &CensoringScheme::None, 21).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for pair in data.observations.chunks(2) {
            xs.push(pair[0].time.ln());
            ys.push(pair[1].time.ln());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n;
        assert!(cov > 0.1, "cov = {cov}");
        assert!(data.has_clusters());
        // marginal law is still the univariate model
        let emp = data.observations.iter().filter(|o| o.time > 1.0).count() as f64
            / data.len() as f64;
        assert_abs_diff_eq!(emp, model.survival(1.0, &[]).unwrap(), epsilon = 0.01);
    }

    #[test]
    fn two_group_design_shape() {
        let data = two_group_dataset(500, 1).unwrap();
        assert_eq!(data.len(), 1000);
        assert_eq!(
            data.observations
                .iter()
                .filter(|o| o.covariates == [1.0])
                .count(),
            500
        );
        assert_eq!(data.event_count(), 1000);
        // group 1 has proportionally higher hazard, hence shorter lives
        let mean = |g: f64| {
            data.observations
                .iter()
                .filter(|o| o.covariates == [g])
                .map(|o| o.time)
                .sum::<f64>()
                / 500.0
        };
        assert!(mean(1.0) < mean(0.0));
    }

    #[test]
    fn nelson_aalen_hand_example() {
        let data = Dataset::new(vec![
            Observation {
                time: 1.0,
                event: true,
                covariates: vec![],
                cluster: None,
            },
            Observation {
                time: 2.0,
                event: true,
                covariates: vec![],
                cluster: None,
            },
            Observation {
                time: 3.0,
                event: true,
                covariates: vec![],
                cluster: None,
            },
        ])
        .unwrap();
        let na = nelson_aalen(&data).unwrap();
        assert_abs_diff_eq!(na.eval(0.5), 0.0);
        assert_abs_diff_eq!(na.eval(1.0), 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(na.eval(2.5), 1.0 / 3.0 + 1.0 / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(na.eval(10.0), 1.0 / 3.0 + 1.0 / 2.0 + 1.0, epsilon = 1e-14);
    }

    #[test]
    fn nelson_aalen_tie_and_censoring_conventions() {
        let mk = |time: f64, event: bool| Observation {
            time,
            event,
            covariates: vec![],
            cluster: None,
        };
        // two events tie at t=1 with a censored subject at the same time:
        // all four are at risk, increment is 2/4
        let data =
            Dataset::new(vec![mk(1.0, true), mk(1.0, true), mk(1.0, false), mk(2.0, true)])
                .unwrap();
        let na = nelson_aalen(&data).unwrap();
        assert_abs_diff_eq!(na.eval(1.0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(na.eval(2.0), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn nelson_aalen_tracks_true_cumulative_hazard() {
        let model = exp_model();
        let law = FrailtyLaw::Ph {
            model: model.clone(),
        };
        let covs = vec![vec![]; 50_000];
        let data = simulate_dataset(
            &law,
            &covs,
            &CensoringScheme::Uniform {
                lower: 0.0,
                upper: 6.0,
            },
            13,
        )
        .unwrap();
        let na = nelson_aalen(&data).unwrap();
        for &y in &[0.5, 1.0, 2.0] {
            // population cumulative hazard of the mixture: -ln S(y) = ln(1+y)
            assert_abs_diff_eq!(na.eval(y), (1.0 + y).ln(), epsilon = 0.03);
        }
    }

    #[test]
    fn kaplan_meier_matches_exp_of_minus_na_roughly() {
        let law = FrailtyLaw::Ph { model: exp_model() };
        let covs = vec![vec![]; 20_000];
        let data =
            simulate_dataset(&law, &covs, &CensoringScheme::Fixed { time: 4.0 }, 29).unwrap();
        let km = kaplan_meier(&data).unwrap();
        let na = nelson_aalen(&data).unwrap();
        for &y in &[0.5, 1.5, 3.0] {
            assert_abs_diff_eq!(km.eval(y), (-na.eval(y)).exp(), epsilon = 0.01);
            assert_abs_diff_eq!(km.eval(y), 1.0 / (1.0 + y), epsilon = 0.02);
        }
        assert_abs_diff_eq!(km.eval(0.0), 1.0);
    }
}

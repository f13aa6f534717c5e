//! Shared frailty for clustered data: one frailty draw per cluster induces
//! positive within-cluster dependence. Simulate pairs, measure the dependence,
//! and refit with the clustered nested EM.
//!
//! Run with `cargo run --release --example shared_frailty`.

use phfrailty::estimation::{BaselineFamily, FitOptions};
use phfrailty::multivariate::{fit_shared, shared_estep, shared_survival};
use phfrailty::phase_type::PhStructure;
use phfrailty::simulation::{simulate_shared, CensoringScheme};
use phfrailty::{BaselineHazard, FrailtyModel, PhaseType, Result};

fn main() -> Result<()> {
    let truth = FrailtyModel::without_covariates(
        PhaseType::erlang(2, 2.0)?,
        BaselineHazard::constant(1.0)?,
    )?;
    let data = simulate_shared(&truth, &vec![2; 250], &CensoringScheme::None, 9)?;

    let pairs: Vec<(f64, f64)> = data
        .observations
        .chunks(2)
        .map(|c| (c[0].time, c[1].time))
        .collect();
    let n = pairs.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (pairs[i].0 - pairs[j].0) * (pairs[i].1 - pairs[j].1);
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let tau = (concordant - discordant) as f64 / (n as f64 * (n as f64 - 1.0) / 2.0);
    println!("{n} pairs, Kendall tau = {tau:.3}");

    // conditional frailty mean given a cluster's outcome
    let ez = shared_estep(&truth, &[0.5, 2.0], &[true, false])?;
    println!("E(Z | pair (0.5 event, 2.0 censored)) = {ez:.4}");

    let mut opts = FitOptions::new(2, PhStructure::General, BaselineFamily::Constant);
    opts.seed = 9;
    opts.max_outer_iter = 100;
    let result = fit_shared(&data, &opts)?;
    println!("fitted log-likelihood {:.3}", result.loglik);
    println!();
    println!("{:>6} {:>12} {:>12}", "y", "S_true(y,y)", "S_fit(y,y)");
    for i in 1..=5 {
        let y = 0.4 * i as f64;
        println!(
            "{y:>6.2} {:>12.5} {:>12.5}",
            shared_survival(&truth, &[y, y])?,
            shared_survival(&result.model, &[y, y])?
        );
    }
    Ok(())
}

//! Simulate right-censored data from a known PH frailty model and recover it
//! with the nested EM.
//!
//! Run with `cargo run --release --example fit_simulated`.

use phfrailty::estimation::{fit, BaselineFamily, FitOptions};
use phfrailty::phase_type::PhStructure;
use phfrailty::simulation::{simulate_dataset, CensoringScheme, FrailtyLaw};
use phfrailty::{BaselineHazard, FrailtyModel, PhaseType, Result};

fn main() -> Result<()> {
    let truth = FrailtyModel::without_covariates(
        PhaseType::erlang(2, 2.0)?,
        BaselineHazard::gompertz(0.2, 0.5)?,
    )?;
    let data = simulate_dataset(
        &FrailtyLaw::Ph {
            model: truth.clone(),
        },
        &vec![vec![]; 500],
        &CensoringScheme::Uniform {
            lower: 0.5,
            upper: 6.0,
        },
        42,
    )?;
    println!(
        "simulated n = {}, events = {}",
        data.len(),
        data.event_count()
    );

    let mut opts = FitOptions::new(2, PhStructure::General, BaselineFamily::Gompertz);
    opts.seed = 1;
    opts.max_outer_iter = 100;
    let result = fit(&data, &opts)?;

    println!(
        "log-likelihood {:.3} after {} iterations (converged: {})",
        result.loglik, result.iterations, result.converged
    );
    println!("fitted baseline: {:?}", result.model.baseline);
    println!();
    println!("{:>6} {:>10} {:>10}", "y", "S_true", "S_fitted");
    for i in 1..=6 {
        let y = 0.5 * i as f64;
        println!(
            "{y:>6.2} {:>10.5} {:>10.5}",
            truth.survival(y, &[])?,
            result.model.survival(y, &[])?
        );
    }
    Ok(())
}

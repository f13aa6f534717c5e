//! Nonparametric checks: compare the Nelson-Aalen cumulative-hazard estimate
//! and the Kaplan-Meier survival estimate of a censored sample against the
//! generating model.
//!
//! Run with `cargo run --release --example nonparametric_hazard`.

use phfrailty::simulation::{
    kaplan_meier, nelson_aalen, simulate_dataset, CensoringScheme, FrailtyLaw,
};
use phfrailty::{BaselineHazard, FrailtyModel, PhaseType, Result};

fn main() -> Result<()> {
    // exponential frailty over a unit baseline: S(y) = 1/(1+y)
    let model = FrailtyModel::without_covariates(
        PhaseType::erlang(1, 1.0)?,
        BaselineHazard::constant(1.0)?,
    )?;
    let data = simulate_dataset(
        &FrailtyLaw::Ph {
            model: model.clone(),
        },
        &vec![vec![]; 20_000],
        &CensoringScheme::Uniform {
            lower: 0.0,
            upper: 6.0,
        },
        13,
    )?;
    println!(
        "n = {}, censored = {}",
        data.len(),
        data.len() - data.event_count()
    );

    let na = nelson_aalen(&data)?;
    let km = kaplan_meier(&data)?;
    println!();
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "y", "NA", "-ln S(y)", "KM", "S(y)"
    );
    for i in 1..=6 {
        let y = 0.5 * i as f64;
        let s = model.survival(y, &[])?;
        println!(
            "{y:>6.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            na.eval(y),
            -s.ln(),
            km.eval(y),
            s
        );
    }
    Ok(())
}

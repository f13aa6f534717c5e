//! The remaining lifetime after surviving to age t is again a PH frailty
//! model: a proper phase-type frailty with a diagonally shifted sub-intensity
//! and the baseline shifted in time.
//!
//! Run with `cargo run --example residual_lifetime`.

use phfrailty::{BaselineHazard, FrailtyModel, PhaseType, Result};

fn main() -> Result<()> {
    let model = FrailtyModel::without_covariates(
        PhaseType::erlang(2, 2.0)?,
        BaselineHazard::gompertz(0.05, 0.8)?,
    )?;

    let t = 2.0;
    let residual = model.residual_model(t)?;
    println!("survived to t = {t}; S(t) = {:.5}", model.survival(t, &[])?);
    println!("residual frailty pi = {:?}", residual.frailty.pi().as_slice());
    println!("residual frailty mean = {:.5}", residual.frailty.mean()?);
    println!("(unconditional frailty mean = {:.5})", model.frailty.mean()?);

    // consistency: S_resid(y) * S(t) = S(t + y)
    println!();
    println!("{:>6} {:>12} {:>12}", "y", "S_resid(y)", "S(t+y)/S(t)");
    let st = model.survival(t, &[])?;
    for i in 1..=5 {
        let y = 0.5 * i as f64;
        println!(
            "{y:>6.2} {:>12.6} {:>12.6}",
            residual.survival(y, &[])?,
            model.survival(t + y, &[])? / st
        );
    }
    Ok(())
}

//! Build a small frailty model and print its survival, density, hazard, and
//! conditional frailty mean on a grid.
//!
//! Run with `cargo run --example evaluate_model`.

use phfrailty::{BaselineHazard, FrailtyModel, PhaseType, Result};

fn main() -> Result<()> {
    // Erlang(2) frailty with rate 2 over a Gompertz baseline, one covariate
    let model = FrailtyModel::new(
        PhaseType::erlang(2, 2.0)?,
        BaselineHazard::gompertz(0.05, 0.6)?,
        vec![0.5],
    )?;

    println!("frailty mean E(Z) = {:.4}", model.frailty.mean()?);
    println!();
    println!("{:>6} {:>10} {:>10} {:>10} {:>12}", "y", "S(y|x=0)", "f(y|x=0)", "h(y|x=0)", "E(Z|Y>y)");
    for i in 0..=10 {
        let y = 0.5 * i as f64;
        let s = model.survival(y, &[0.0])?;
        let (f, h) = if y > 0.0 {
            (model.density(y, &[0.0])?, model.hazard(y, &[0.0])?)
        } else {
            (f64::NAN, f64::NAN)
        };
        let ez = model.cond_frailty_mean_surviving(y, &[0.0])?;
        println!("{y:>6.2} {s:>10.5} {f:>10.5} {h:>10.5} {ez:>12.5}");
    }

    // the covariate scales the cumulative hazard by e^{x beta}
    let y = 2.0;
    println!();
    println!(
        "S({y}|x=0) = {:.5}, S({y}|x=1) = {:.5}",
        model.survival(y, &[0.0])?,
        model.survival(y, &[1.0])?
    );
    Ok(())
}

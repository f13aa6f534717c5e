//! Heavy-tail diagnostics: a Coxian frailty with a power cumulative hazard
//! gives a regularly varying lifetime (a matrix-Pareto law). The Jordan
//! structure of the dominant eigenvalue bounds the power-law exponent.
//!
//! Run with `cargo run --example heavy_tails`.

use nalgebra::{DMatrix, DVector};
use phfrailty::phase_type::PhStructure;
use phfrailty::{BaselineHazard, FrailtyModel, PhaseType, Result};

fn main() -> Result<()> {
    let t = DMatrix::from_row_slice(
        4,
        4,
        &[
            -19.6942, 16.2647, 0.0, 0.0, //
            0.0, -2.1502, 0.7218, 0.0, //
            0.0, 0.0, -0.5011, 0.5010, //
            0.0, 0.0, 0.0, -0.5011,
        ],
    );
    let pi = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    let model = FrailtyModel::without_covariates(
        PhaseType::new(pi, t, PhStructure::Coxian)?,
        BaselineHazard::power(1.3705)?,
    )?;

    let tail = model.tail_index()?;
    println!("dominant eigenvalue   {:.4}", tail.eigenvalue);
    println!("jordan block size     {}", tail.jordan_block);
    println!(
        "jordan-based exponent {:.4}",
        tail.regular_variation_index.unwrap()
    );

    // empirical log-log slope of the survival function far in the tail;
    // it settles at theta here because the density is positive at the origin
    println!();
    println!("{:>10} {:>12} {:>8}", "y", "S(y)", "slope");
    let mut prev: Option<(f64, f64)> = None;
    for exp in [2, 3, 4, 5, 6, 7, 8] {
        let y = 10f64.powi(exp);
        let s = model.survival(y, &[])?;
        let slope = prev
            .map(|(y0, s0)| (s0.ln() - s.ln()) / (y.ln() - y0.ln()))
            .map(|v| format!("{v:.4}"))
            .unwrap_or_default();
        println!("{y:>10.0e} {s:>12.4e} {slope:>8}");
        prev = Some((y, s));
    }
    Ok(())
}

//! Dense linear-algebra kernel: matrix exponential, resolvent powers, and the
//! block-matrix convolution integral behind the EM sufficient statistics.
//!
//! All model functionals reduce to expressions of the form
//! `v' (s I - T)^{-n} w` or `exp(T z)`, so this module is the only place that
//! touches factorizations directly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Padé(13) scaling-and-squaring threshold, from Higham (2005), Table 10.2.
const THETA_13: f64 = 5.371920351148152;

const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Compute `exp(A s)` by scaling-and-squaring with a degree-13 Padé approximant.
pub fn mat_exp(a: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    check_square_finite(a)?;
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("scale s must be >= 0, got {s}")));
    }
    let p = a.nrows();
    let b = a * s;
    if p == 1 {
        return Ok(DMatrix::from_element(1, 1, b[(0, 0)].exp()));
    }

    let norm = one_norm(&b);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let b = b / 2f64.powi(squarings as i32);

    let ident = DMatrix::<f64>::identity(p, p);
    let b2 = &b * &b;
    let b4 = &b2 * &b2;
    let b6 = &b2 * &b4;

    let u_inner = &b6 * (PADE_13[13] * &b6 + PADE_13[11] * &b4 + PADE_13[9] * &b2)
        + PADE_13[7] * &b6
        + PADE_13[5] * &b4
        + PADE_13[3] * &b2
        + PADE_13[1] * &ident;
    let u = &b * u_inner;
    let v = &b6 * (PADE_13[12] * &b6 + PADE_13[10] * &b4 + PADE_13[8] * &b2)
        + PADE_13[6] * &b6
        + PADE_13[4] * &b4
        + PADE_13[2] * &b2
        + PADE_13[0] * &ident;

    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Numeric("singular Padé denominator in mat_exp".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// `(s I - T)^{-n}` by `n` successive LU solves, reusing one factorization.
pub fn resolvent_power(t: &DMatrix<f64>, s: f64, n: usize) -> Result<DMatrix<f64>> {
    check_square_finite(t)?;
    if n == 0 {
        return Err(Error::Domain("resolvent power n must be >= 1".into()));
    }
    let p = t.nrows();
    let mut m = -t.clone();
    for k in 0..p {
        m[(k, k)] += s;
    }
    let lu = m.lu();
    let mut x = DMatrix::<f64>::identity(p, p);
    for _ in 0..n {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::Numeric("singular resolvent system".into()))?;
    }
    Ok(x)
}

/// Apply `(s I - T)^{-n}` to a column vector by repeated solves.
pub fn resolvent_apply(t: &DMatrix<f64>, s: f64, n: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_square_finite(t)?;
    if v.len() != t.nrows() {
        return Err(Error::Dimension(format!(
            "vector length {} does not match matrix dimension {}",
            v.len(),
            t.nrows()
        )));
    }
    let p = t.nrows();
    let mut m = -t.clone();
    for k in 0..p {
        m[(k, k)] += s;
    }
    let lu = m.lu();
    let mut x = v.clone();
    for _ in 0..n {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::Numeric("singular resolvent system".into()))?;
    }
    Ok(x)
}

/// Apply `(s I - T)^{-n}` on the left to a row vector (as a column of the transpose).
pub fn resolvent_apply_left(
    t: &DMatrix<f64>,
    s: f64,
    n: usize,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    resolvent_apply(&t.transpose(), s, n, v)
}

/// One `2p x 2p` exponential yielding `exp(T z)` together with the convolution
/// integral `J(z) = \int_0^z exp(T (z-u)) t pi exp(T u) du` (Van Loan's construction).
pub fn van_loan_conv(
    t: &DMatrix<f64>,
    exit: &DVector<f64>,
    pi: &DVector<f64>,
    z: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_square_finite(t)?;
    let p = t.nrows();
    if exit.len() != p || pi.len() != p {
        return Err(Error::Dimension(format!(
            "vector lengths {} / {} do not match matrix dimension {}",
            exit.len(),
            pi.len(),
            p
        )));
    }
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("z must be >= 0, got {z}")));
    }
    let mut block = DMatrix::<f64>::zeros(2 * p, 2 * p);
    block.view_mut((0, 0), (p, p)).copy_from(t);
    block.view_mut((p, p), (p, p)).copy_from(t);
    let outer = exit * pi.transpose();
    block.view_mut((0, p), (p, p)).copy_from(&outer);
    let e = mat_exp(&block, z)?;
    let expt = e.view((0, 0), (p, p)).into_owned();
    let conv = e.view((0, p), (p, p)).into_owned();
    Ok((expt, conv))
}

/// Largest real eigenvalue of `T` and the size of its largest Jordan block.
///
/// The block size is found as the smallest `m` for which the rank of
/// `(T - lambda I)^m` stabilizes, with singular values below `tol` (relative to
/// the norm of `T`) treated as zero. If the rank sequence disagrees with the
/// eigenvalue cluster around `lambda`, an ambiguity error carries the candidates.
pub fn dominant_eigen_structure(t: &DMatrix<f64>, tol: f64) -> Result<(f64, usize)> {
    check_square_finite(t)?;
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    let p = t.nrows();
    let norm = one_norm(t).max(f64::MIN_POSITIVE);
    let eigs = t.complex_eigenvalues();

    // Dominant eigenvalue of a sub-intensity matrix is real (Perron root of the
    // transient generator); pick the largest real part among near-real eigenvalues.
    let cluster_tol = tol * norm;
    let lambda = eigs
        .iter()
        .filter(|e| e.im.abs() <= cluster_tol)
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !lambda.is_finite() {
        return Err(Error::Numeric(
            "no real eigenvalue found for sub-intensity matrix".into(),
        ));
    }

    // Rank sequence of the normalized shifted matrix.
    let mut b = t.clone();
    for k in 0..p {
        b[(k, k)] -= lambda;
    }
    b /= norm;

    let rank_of = |m: &DMatrix<f64>| -> usize {
        let sv = m.clone().svd(false, false).singular_values;
        sv.iter().filter(|&&s| s > tol).count()
    };

    let mut power = b.clone();
    let mut prev_rank = rank_of(&power);
    let mut nullities = vec![p - prev_rank];
    let mut k = 0usize;
    for m in 1..=p {
        power = &power * &b;
        let r = rank_of(&power);
        nullities.push(p - r);
        if r == prev_rank {
            k = m;
            break;
        }
        prev_rank = r;
    }
    if k == 0 {
        return Err(Error::EigenAmbiguity {
            eigenvalue: lambda,
            candidates: (1..=p).collect(),
        });
    }
    // Total nullity at stabilization is the algebraic multiplicity of the
    // lambda-cluster. Computed eigenvalues of a size-m block scatter by about
    // norm * eps^(1/m), so the cluster radius must widen with the nullity.
    let total_nullity = *nullities.last().unwrap();
    let cluster_radius = norm * tol.powf(1.0 / total_nullity as f64);
    let cluster_size = eigs
        .iter()
        .filter(|e| ((e.re - lambda).powi(2) + e.im.powi(2)).sqrt() <= cluster_radius)
        .count();
    if total_nullity != cluster_size {
        return Err(Error::EigenAmbiguity {
            eigenvalue: lambda,
            candidates: vec![k, cluster_size],
        });
    }
    Ok((lambda, k))
}

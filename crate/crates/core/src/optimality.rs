//! Numerical checks of first- and second-order optimality.
//!
//! A unitary `A` is stationary in the diagonal sense when the gradient
//! factors as `D A` or `A D` with `D` real, positive and diagonal. Along a
//! Givens direction `(i, k)` the restricted objective has closed-form first
//! and second derivatives at `alpha = 0`, written here through the fourth
//! moments `M(a, b; c, d) = E[x_a x_b conj(x_c x_d)]` of the rows of `A y`:
//!
//! ```text
//! h'(0)  = 4 Re(M(i,i;i,k) - M(i,k;k,k))
//! h''(0) = 4 (2 Re M(k,k;i,i) + 4 M(i,k;i,k) - M(k,k;k,k) - M(i,i;i,i))
//! ```

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::learn::msp_step;
use crate::linalg::{dft_matrix, CMatrix, UnitaryTransform};
use crate::objective::{ObjectiveEvaluator, RowSpace};

/// Threshold below which a second derivative counts as strictly negative.
pub const NEGATIVE_CURVATURE_TOL: f64 = 1e-12;
/// Largest first derivative accepted at a critical point.
pub const FIRST_DERIVATIVE_TOL: f64 = 1e-8;
/// Largest `||msp_step(A) - A||_F` accepted for a fixed point.
pub const MSP_FIXED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    /// `||offdiag(grad A^H)||_F`
    pub residual_left: f64,
    /// `||offdiag(A^H grad)||_F`
    pub residual_right: f64,
    /// Largest `|Im|` on the diagonal of the better-matching factorization.
    pub diag_realness: f64,
    pub diag_min: f64,
    /// Real part of the diagonal of the better-matching factorization.
    pub diagonal: Vec<f64>,
    /// `||grad A^H - A grad^H||_F / (2 ||grad||_F)`; zero at every critical
    /// point on the unitary group, diagonal or not.
    pub skew_residual: f64,
    pub is_stationary: bool,
}

fn offdiag_norm(p: &CMatrix) -> f64 {
    let diag: f64 = p.diagonal().iter().map(|z| z.norm_sqr()).sum();
    (p.norm_squared() - diag).max(0.0).sqrt()
}

pub fn stationarity_check(
    ev: &ObjectiveEvaluator,
    a: &UnitaryTransform,
    tol: f64,
) -> Result<StationarityReport> {
    let grad = ev.gradient(a)?;
    let m = a.matrix();
    let left = &grad * m.adjoint();
    let right = m.adjoint() * &grad;
    let residual_left = offdiag_norm(&left);
    let residual_right = offdiag_norm(&right);
    let p = if residual_left <= residual_right { &left } else { &right };
    let diag = p.diagonal();
    let diag_realness = diag.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let diagonal: Vec<f64> = diag.iter().map(|z| z.re).collect();
    let diag_min = diagonal.iter().cloned().fold(f64::INFINITY, f64::min);
    let gnorm = grad.norm();
    let skew_residual = if gnorm > 0.0 {
        (&left - left.adjoint()).norm() / (2.0 * gnorm)
    } else {
        0.0
    };
    let is_stationary =
        residual_left.min(residual_right) <= tol && diag_realness <= tol && diag_min > 0.0;
    Ok(StationarityReport {
        residual_left,
        residual_right,
        diag_realness,
        diag_min,
        diagonal,
        skew_residual,
        is_stationary,
    })
}

/// `D_k = #{(l, m, n) in [0, B-1]^3 : l - m + n = k}` by enumeration.
pub fn delta_count_diagonal(b: usize) -> Vec<f64> {
    let mut d = vec![0.0; b];
    let b = b as i64;
    for l in 0..b {
        for m in 0..b {
            for n in 0..b {
                let k = l - m + n;
                if (0..b).contains(&k) {
                    d[k as usize] += 1.0;
                }
            }
        }
    }
    d
}

/// `B^2 + (B-1) B (2B-1) / 3`, the total of [`delta_count_diagonal`].
pub fn triple_count_total(b: usize) -> f64 {
    let b = b as f64;
    b * b + (b - 1.0) * b * (2.0 * b - 1.0) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCurvature {
    pub i: usize,
    pub k: usize,
    pub first_derivative: f64,
    pub second_derivative: f64,
    /// Second derivative along the rotation with `x_k` replaced by `j x_k`.
    /// Reported only; never part of the local-maximum test.
    pub phase_second_derivative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub pairs: Vec<PairCurvature>,
    pub max_abs_first: f64,
    pub max_second: f64,
    pub max_phase_second: f64,
    pub is_local_max: bool,
}

/// Derivatives of the Givens-restricted objective of pair `(i, k)` at 0.
pub fn pair_curvature(rs: &RowSpace, i: usize, k: usize) -> PairCurvature {
    let m = |a, b, c, d| rs.moment(a, b, c, d);
    let first = 4.0 * (m(i, i, i, k) - m(i, k, k, k)).re;
    let cross: Complex64 = m(k, k, i, i);
    let rest = 4.0 * m(i, k, i, k).re - m(k, k, k, k).re - m(i, i, i, i).re;
    PairCurvature {
        i,
        k,
        first_derivative: first,
        second_derivative: 4.0 * (2.0 * cross.re + rest),
        phase_second_derivative: 4.0 * (-2.0 * cross.re + rest),
    }
}

pub fn ca_curvature_check(ev: &ObjectiveEvaluator, a: &UnitaryTransform) -> Result<CurvatureReport> {
    let rs = ev.row_space(a.matrix())?;
    let n = rs.dim();
    let index: Vec<(usize, usize)> = (0..n)
        .flat_map(|k| ((k + 1)..n).map(move |i| (i, k)))
        .collect();
    let pairs: Vec<PairCurvature> = index
        .par_iter()
        .map(|&(i, k)| pair_curvature(&rs, i, k))
        .collect();
    let max_abs_first = pairs.iter().map(|p| p.first_derivative.abs()).fold(0.0, f64::max);
    let max_second = pairs
        .iter()
        .map(|p| p.second_derivative)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_phase_second = pairs
        .iter()
        .map(|p| p.phase_second_derivative)
        .fold(f64::NEG_INFINITY, f64::max);
    let is_local_max = max_abs_first <= FIRST_DERIVATIVE_TOL
        && pairs.iter().all(|p| p.second_derivative < -NEGATIVE_CURVATURE_TOL);
    Ok(CurvatureReport {
        pairs,
        max_abs_first,
        max_second,
        max_phase_second,
        is_local_max,
    })
}

/// Outcome of the optimality suite for one antenna count.
#[derive(Debug, Clone, PartialEq)]
pub struct DftCheck {
    pub antennas: usize,
    pub stationarity: StationarityReport,
    pub curvature: CurvatureReport,
    pub msp_deviation: f64,
    /// Largest deviation of `diag * B / 2` from the triple counts.
    pub count_deviation: f64,
    pub objective: f64,
}

impl DftCheck {
    pub fn msp_fixed(&self) -> bool {
        self.msp_deviation <= MSP_FIXED_TOL
    }

    pub fn passed(&self) -> bool {
        self.stationarity.is_stationary && self.curvature.is_local_max && self.msp_fixed()
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let b = self.antennas;
        let st = &self.stationarity;
        let cv = &self.curvature;
        let _ = writeln!(s, "B={b}");
        let _ = writeln!(s, "objective={}", self.objective);
        let _ = writeln!(s, "residual_left={:e}", st.residual_left);
        let _ = writeln!(s, "residual_right={:e}", st.residual_right);
        let _ = writeln!(s, "diag_realness={:e}", st.diag_realness);
        let _ = writeln!(s, "diag_min={}", st.diag_min);
        let _ = writeln!(s, "count_deviation={:e}", self.count_deviation);
        let _ = writeln!(s, "is_stationary={}", st.is_stationary);
        let _ = writeln!(s, "max_abs_first={:e}", cv.max_abs_first);
        let _ = writeln!(s, "max_second={}", cv.max_second);
        let _ = writeln!(s, "max_phase_second={}", cv.max_phase_second);
        let _ = writeln!(s, "is_local_max={}", cv.is_local_max);
        let _ = writeln!(s, "msp_deviation={:e}", self.msp_deviation);
        let _ = writeln!(s, "passed={}", self.passed());
        s
    }
}

/// Run the stationarity, curvature and MSP fixed-point checks for `A` under
/// the exact uniform single-path model.
pub fn verify_transform(a: &UnitaryTransform, tol: f64) -> Result<DftCheck> {
    let b = a.dim();
    let ev = ObjectiveEvaluator::exact_uniform(b)?;
    let stationarity = stationarity_check(&ev, a, tol)?;
    let curvature = ca_curvature_check(&ev, a)?;
    let msp_deviation = (msp_step(&ev, a)?.matrix() - a.matrix()).norm();
    let counts = delta_count_diagonal(b);
    let count_deviation = stationarity
        .diagonal
        .iter()
        .zip(&counts)
        .map(|(d, c)| (d * b as f64 / 2.0 - c).abs())
        .fold(0.0, f64::max);
    Ok(DftCheck {
        antennas: b,
        objective: ev.objective(a)?,
        stationarity,
        curvature,
        msp_deviation,
        count_deviation,
    })
}

/// [`verify_transform`] at `F_B` for every `B` in the list.
pub fn verify_dft_suite(antennas: &[usize]) -> Result<Vec<DftCheck>> {
    antennas
        .iter()
        .map(|&b| verify_transform(&dft_matrix(b)?, 1e-9))
        .collect()
}

/// CSV summary of a suite run (one row per `B`).
pub fn suite_csv(checks: &[DftCheck]) -> String {
    let mut s = String::from(
        "B,objective,residual_left,residual_right,diag_realness,diag_min,max_abs_first,max_second,max_phase_second,msp_deviation,passed\n",
    );
    for c in checks {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e},{},{:e},{},{},{:e},{}",
            c.antennas,
            c.objective,
            c.stationarity.residual_left,
            c.stationarity.residual_right,
            c.stationarity.diag_realness,
            c.stationarity.diag_min,
            c.curvature.max_abs_first,
            c.curvature.max_second,
            c.curvature.max_phase_second,
            c.msp_deviation,
            c.passed()
        );
    }
    s
}

//! Learning algorithms over the unitary group.
//!
//! * **MSP** (matching, stretching, projection): `A <- polar(grad g(A))`, i.e.
//!   projected gradient ascent with an infinite step.
//! * **CA** (coordinate ascent): sweeps over row pairs `(i, k)`, `i > k`,
//!   applying `A <- G(i, k, alpha) R(i, beta_i) R(k, beta_k) A` with the angles
//!   chosen to maximize the objective. Unitarity is preserved exactly.
//!
//! Restricted to one pair, the objective is a trigonometric polynomial: in
//! `alpha` it has harmonics `{0, 2, 4}`, in the relative phase
//! `phi = beta_k - beta_i` harmonics `{0, 1, 2}`. Eight equispaced samples
//! recover it exactly; the maximum is then located on a grid and polished with
//! Newton steps.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{load_matrix, MatrixFormat};
use crate::linalg::{
    dft_matrix, project_unitary, wrap_angle, CMatrix, GivensRotation, UnitaryTransform,
};
use crate::objective::{ObjectiveEvaluator, PairMoments, RowSpace};
use crate::optimality::stationarity_check;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Msp,
    Ca,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Msp => "msp",
            Algorithm::Ca => "ca",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Dft,
    Identity,
    RandomUnitary,
    FromFile(PathBuf),
    Given(UnitaryTransform),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub algorithm: Algorithm,
    /// MSP iterations or CA sweeps.
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub seed: u64,
    pub init: Init,
    /// Grid resolution for the inner CA maximization.
    pub grid_points: usize,
    pub newton_steps: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Msp,
            max_iterations: 500,
            convergence_tol: 1e-10,
            seed: 0,
            init: Init::Dft,
            grid_points: 64,
            newton_steps: 4,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config("convergence_tol must be positive".into()));
        }
        if self.grid_points < 9 {
            return Err(Error::Config("grid_points must be at least 9".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            grid_points: self.grid_points,
            newton_steps: self.newton_steps,
        }
    }

    fn initial_transform(&self, n: usize) -> Result<UnitaryTransform> {
        let a = match &self.init {
            Init::Dft => dft_matrix(n)?,
            Init::Identity => UnitaryTransform::identity(n)?,
            Init::RandomUnitary => UnitaryTransform::random(n, &mut rng_for(self.seed, &[0x1417]))?,
            Init::FromFile(path) => {
                let m = load_matrix(path, MatrixFormat::from_path(path))?;
                UnitaryTransform::new_reprojected(m)?
            }
            Init::Given(a) => a.clone(),
        };
        if a.dim() != n {
            return Err(Error::mismatch(format!("{n}x{n} initial transform"), format!("{0}x{0}", a.dim())));
        }
        Ok(a)
    }
}

/// Inner-maximization settings for CA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub grid_points: usize,
    pub newton_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_points: 64,
            newton_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnReport {
    pub algorithm: Algorithm,
    pub final_transform: UnitaryTransform,
    /// Objective at the initial point followed by one value per iteration/sweep.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// MSP only: relative skew residual of `grad A^H` at the final point.
    pub stationarity_residual: Option<f64>,
    /// CA only: smallest objective change over all applied pair updates.
    pub min_pair_delta: Option<f64>,
    /// CA only: number of pair updates applied.
    pub pair_updates: usize,
}

impl LearnReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }

    /// Flat `key=value` text.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "algorithm={}", self.algorithm.name());
        let _ = writeln!(s, "dim={}", self.final_transform.dim());
        let _ = writeln!(s, "iterations_run={}", self.iterations_run);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "initial_objective={}", self.objective_trace[0]);
        let _ = writeln!(s, "final_objective={}", self.final_objective());
        let _ = writeln!(s, "unitarity_deviation={:e}", self.final_transform.deviation());
        if let Some(r) = self.stationarity_residual {
            let _ = writeln!(s, "stationarity_residual={r:e}");
        }
        if let Some(d) = self.min_pair_delta {
            let _ = writeln!(s, "min_pair_delta={d:e}");
            let _ = writeln!(s, "pair_updates={}", self.pair_updates);
        }
        s
    }

    /// CSV objective trace with an `iteration,objective` header.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective\n");
        for (t, g) in self.objective_trace.iter().enumerate() {
            let _ = writeln!(s, "{t},{g}");
        }
        s
    }
}

/// One MSP iteration: `polar(grad g(A))`.
pub fn msp_step(ev: &ObjectiveEvaluator, a: &UnitaryTransform) -> Result<UnitaryTransform> {
    msp_step_at(ev, a, 0)
}

fn msp_step_at(
    ev: &ObjectiveEvaluator,
    a: &UnitaryTransform,
    iteration: usize,
) -> Result<UnitaryTransform> {
    let grad = ev.gradient(a)?;
    match project_unitary(&grad) {
        Err(Error::SingularInput { .. }) => Err(Error::DegenerateGradient { iteration }),
        other => other,
    }
}

const MSP_RETRIES: usize = 3;
const PERTURB_ANGLE: f64 = 1e-3;

/// Iterate [`msp_step`] until `||A_{t+1} - A_t||_F < tol` or the iteration cap.
///
/// A rank-deficient gradient is retried up to three times after nudging `A_t`
/// by a random Givens rotation of angle `1e-3`.
pub fn learn_msp(ev: &ObjectiveEvaluator, cfg: &LearnConfig) -> Result<LearnReport> {
    cfg.validate()?;
    let n = ev.dim();
    let mut a = cfg.initial_transform(n)?;
    let mut trace = vec![ev.objective(&a)?];
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..cfg.max_iterations {
        let next = match msp_step_at(ev, &a, t) {
            Ok(next) => next,
            Err(Error::DegenerateGradient { .. }) => {
                let mut recovered = None;
                for retry in 0..MSP_RETRIES {
                    let nudged = random_givens_nudge(&a, cfg.seed, t, retry)?;
                    if let Ok(next) = msp_step_at(ev, &nudged, t) {
                        recovered = Some(next);
                        break;
                    }
                }
                recovered.ok_or(Error::DegenerateGradient { iteration: t })?
            }
            Err(e) => return Err(e),
        };
        let step = (next.matrix() - a.matrix()).norm();
        a = next;
        trace.push(ev.objective(&a)?);
        iterations = t + 1;
        if step < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    let residual = stationarity_check(ev, &a, cfg.convergence_tol)?.skew_residual;
    Ok(LearnReport {
        algorithm: Algorithm::Msp,
        final_transform: a,
        objective_trace: trace,
        iterations_run: iterations,
        converged,
        stationarity_residual: Some(residual),
        min_pair_delta: None,
        pair_updates: 0,
    })
}

fn random_givens_nudge(
    a: &UnitaryTransform,
    seed: u64,
    iteration: usize,
    retry: usize,
) -> Result<UnitaryTransform> {
    let n = a.dim();
    if n < 2 {
        return Err(Error::DegenerateGradient { iteration });
    }
    let mut rng = rng_for(seed, &[0xDE6E, iteration as u64, retry as u64]);
    let i = rng.random_range(1..n);
    let k = rng.random_range(0..i);
    let mut m = a.matrix().clone();
    GivensRotation::new(i, k, PERTURB_ANGLE)?.apply_left(&mut m)?;
    UnitaryTransform::new_reprojected(m)
}

/// `c0 + c1 cos t + s1 sin t + c2 cos 2t + s2 sin 2t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigPoly {
    pub c0: f64,
    pub c1: f64,
    pub s1: f64,
    pub c2: f64,
    pub s2: f64,
}

impl TrigPoly {
    /// Exact fit from the eight samples `h(2 pi j / 8)`, `j = 0..7`.
    pub fn fit(samples: &[f64; 8]) -> Self {
        let mut p = TrigPoly {
            c0: samples.iter().sum::<f64>() / 8.0,
            c1: 0.0,
            s1: 0.0,
            c2: 0.0,
            s2: 0.0,
        };
        for (j, h) in samples.iter().enumerate() {
            let t = TAU * j as f64 / 8.0;
            p.c1 += h * t.cos() / 4.0;
            p.s1 += h * t.sin() / 4.0;
            p.c2 += h * (2.0 * t).cos() / 4.0;
            p.s2 += h * (2.0 * t).sin() / 4.0;
        }
        p
    }

    pub fn value(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        self.c0 + self.c1 * c + self.s1 * s + self.c2 * c2 + self.s2 * s2
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        -self.c1 * s + self.s1 * c - 2.0 * self.c2 * s2 + 2.0 * self.s2 * c2
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        -self.c1 * c - self.s1 * s - 4.0 * self.c2 * c2 - 4.0 * self.s2 * s2
    }

    fn amplitude(&self) -> f64 {
        self.c1.abs() + self.s1.abs() + self.c2.abs() + self.s2.abs()
    }

    /// Maximizer on `[0, range)`; ties go to the smallest angle and a
    /// constant polynomial returns 0.
    pub fn argmax(&self, range: f64, opts: FitOptions) -> f64 {
        let scale = self.c0.abs() + self.amplitude();
        if self.amplitude() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return 0.0;
        }
        let step = range / opts.grid_points as f64;
        let values: Vec<f64> = (0..opts.grid_points)
            .map(|g| self.value(step * g as f64))
            .collect();
        let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-12 * scale;
        let g = values
            .iter()
            .position(|v| *v >= best - tie)
            .expect("grid is non-empty");
        let t0 = step * g as f64;
        let v0 = values[g];

        let mut t = t0;
        for _ in 0..opts.newton_steps {
            let d2 = self.second_derivative(t);
            if !(d2 < 0.0) {
                break;
            }
            let next = t - self.derivative(t) / d2;
            if (next - t0).abs() > step {
                break;
            }
            t = next;
        }
        if self.value(t) > v0 + 1e-15 * scale {
            wrap_angle(t, range)
        } else {
            t0
        }
    }
}

/// Restricted objective of pair `(i, k)` in the rotation angle, as a
/// polynomial in `t = 2 alpha` (relative phase fixed to `phi`).
pub fn fit_alpha_poly(rs: &RowSpace, i: usize, k: usize, phi: f64) -> TrigPoly {
    alpha_poly(|a, p| rs.pair_value(i, k, a, p), phi)
}

fn alpha_poly(h: impl Fn(f64, f64) -> f64, phi: f64) -> TrigPoly {
    let mut samples = [0.0; 8];
    for (j, slot) in samples.iter_mut().enumerate() {
        *slot = h(PI * j as f64 / 8.0, phi);
    }
    TrigPoly::fit(&samples)
}

/// Restricted objective of pair `(i, k)` in the relative phase `phi` for a
/// fixed rotation angle.
pub fn fit_phase_poly(rs: &RowSpace, i: usize, k: usize, alpha: f64) -> TrigPoly {
    phase_poly(|a, p| rs.pair_value(i, k, a, p), alpha)
}

fn phase_poly(h: impl Fn(f64, f64) -> f64, alpha: f64) -> TrigPoly {
    let mut samples = [0.0; 8];
    for (j, slot) in samples.iter_mut().enumerate() {
        *slot = h(alpha, TAU * j as f64 / 8.0);
    }
    TrigPoly::fit(&samples)
}

fn check_pair(n: usize, i: usize, k: usize) -> Result<()> {
    if k >= i || i >= n {
        return Err(Error::Index(format!(
            "pair (i={i}, k={k}) needs 0 <= k < i < {n}"
        )));
    }
    Ok(())
}

fn best_alpha(pm: &PairMoments, opts: FitOptions) -> f64 {
    alpha_poly(|a, p| pm.value(a, p), 0.0).argmax(PI, opts) / 2.0
}

fn best_phase(pm: &PairMoments, alpha: f64, opts: FitOptions) -> f64 {
    phase_poly(|a, p| pm.value(a, p), alpha).argmax(TAU, opts)
}

/// Best Givens angle in `[0, pi/2)` for pair `(i, k)` of `A`.
pub fn ca_fit_alpha(
    ev: &ObjectiveEvaluator,
    a: &UnitaryTransform,
    i: usize,
    k: usize,
    opts: FitOptions,
) -> Result<f64> {
    check_pair(a.dim(), i, k)?;
    let rs = ev.row_space(a.matrix())?;
    Ok(best_alpha(&rs.pair_moments(i, k), opts))
}

/// Best phases `(beta_i, beta_k)` for pair `(i, k)` after rotating by `alpha`.
/// Only the relative phase matters, so `beta_i` is always 0.
pub fn ca_fit_phases(
    ev: &ObjectiveEvaluator,
    a: &UnitaryTransform,
    i: usize,
    k: usize,
    alpha: f64,
    opts: FitOptions,
) -> Result<(f64, f64)> {
    check_pair(a.dim(), i, k)?;
    let rs = ev.row_space(a.matrix())?;
    Ok((0.0, best_phase(&rs.pair_moments(i, k), alpha, opts)))
}

/// Apply `G(i, k, alpha) R(i, 0) R(k, phi)` to `A` in place.
pub fn apply_pair_update(a: &mut CMatrix, i: usize, k: usize, alpha: f64, phi: f64) -> Result<()> {
    let ph = num_complex::Complex64::from_polar(1.0, phi);
    for z in a.row_mut(k).iter_mut() {
        *z *= ph;
    }
    GivensRotation::new(i, k, alpha)?.apply_left(a)
}

/// Coordinate ascent. Pairs are visited with `k` ascending in the outer loop
/// and `i > k` ascending in the inner loop; an update is applied only when it
/// strictly improves the objective. Stops once a whole sweep improves the
/// objective by less than `convergence_tol`.
pub fn learn_ca(ev: &ObjectiveEvaluator, cfg: &LearnConfig) -> Result<LearnReport> {
    cfg.validate()?;
    let n = ev.dim();
    let opts = cfg.fit_options();
    let mut a = cfg.initial_transform(n)?.into_matrix();
    let mut rs = ev.row_space(&a)?;
    let mut g = rs.total();
    let mut trace = vec![g];
    let mut converged = false;
    let mut sweeps = 0;
    let mut min_delta = f64::INFINITY;
    let mut updates = 0;
    for sweep in 0..cfg.max_iterations {
        let before = g;
        for k in 0..n {
            for i in (k + 1)..n {
                let pm = rs.pair_moments(i, k);
                let alpha = best_alpha(&pm, opts);
                let phi = best_phase(&pm, alpha, opts);
                if alpha == 0.0 && phi == 0.0 {
                    continue;
                }
                let base = rs.pair_current(i, k);
                let candidate = pm.value(alpha, phi);
                if candidate <= base + 1e-14 * base.abs().max(1.0) {
                    continue;
                }
                rs.apply_pair(i, k, alpha, phi);
                apply_pair_update(&mut a, i, k, alpha, phi)?;
                min_delta = min_delta.min(rs.pair_current(i, k) - base);
                updates += 1;
            }
        }
        g = rs.total();
        trace.push(g);
        sweeps = sweep + 1;
        if g - before < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(LearnReport {
        algorithm: Algorithm::Ca,
        final_transform: UnitaryTransform::new_reprojected(a)?,
        objective_trace: trace,
        iterations_run: sweeps,
        converged,
        stationarity_residual: None,
        min_pair_delta: Some(if updates == 0 { 0.0 } else { min_delta }),
        pair_updates: updates,
    })
}

/// Dispatch on `cfg.algorithm`.
pub fn learn(ev: &ObjectiveEvaluator, cfg: &LearnConfig) -> Result<LearnReport> {
    match cfg.algorithm {
        Algorithm::Msp => learn_msp(ev, cfg),
        Algorithm::Ca => learn_ca(ev, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SampleSet;
    use crate::linalg::permutation_alignment_score;
    use crate::rng::rng_from_seed;
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn set_of(cols: &[&[Complex64]]) -> SampleSet {
        let n = cols[0].len();
        let m = CMatrix::from_fn(n, cols.len(), |r, s| cols[s][r]);
        SampleSet::uniform(m).unwrap()
    }

    fn hadamard_pair() -> ObjectiveEvaluator {
        let s = 1.0 / 2f64.sqrt();
        ObjectiveEvaluator::empirical(set_of(&[&[c(s, 0.), c(s, 0.)], &[c(s, 0.), c(-s, 0.)]]))
            .unwrap()
    }

    #[test]
    fn trig_fit_recovers_coefficients() {
        let p = TrigPoly { c0: 1.0, c1: -0.3, s1: 0.2, c2: 0.7, s2: -0.1 };
        let mut h = [0.0; 8];
        for (j, v) in h.iter_mut().enumerate() {
            *v = p.value(TAU * j as f64 / 8.0);
        }
        let q = TrigPoly::fit(&h);
        for (x, y) in [(p.c0, q.c0), (p.c1, q.c1), (p.s1, q.s1), (p.c2, q.c2), (p.s2, q.s2)] {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn argmax_matches_dense_search() {
        let p = TrigPoly { c0: 0.0, c1: 0.4, s1: -0.9, c2: 0.3, s2: 0.5 };
        let t = p.argmax(TAU, FitOptions::default());
        let brute = (0..200_000)
            .map(|g| TAU * g as f64 / 200_000.0)
            .fold((0.0, f64::NEG_INFINITY), |b, t| {
                let v = p.value(t);
                if v > b.1 { (t, v) } else { b }
            });
        assert!((t - brute.0).abs() < 1e-4);
        assert!(p.value(t) >= brute.1 - 1e-12);
        assert_eq!(TrigPoly { c0: 2.0, c1: 0.0, s1: 0.0, c2: 0.0, s2: 0.0 }.argmax(PI, FitOptions::default()), 0.0);
    }

    #[test]
    fn fitted_polynomial_matches_direct_evaluation() {
        let mut rng = rng_from_seed(77);
        let a = UnitaryTransform::random(5, &mut rng).unwrap();
        for ev in [
            ObjectiveEvaluator::exact_uniform(5).unwrap(),
            ObjectiveEvaluator::monte_carlo(crate::channel::ChannelModel::multipath(5, 2).unwrap(), 200, 4)
                .unwrap(),
        ] {
            let rs = ev.row_space(a.matrix()).unwrap();
            let pa = fit_alpha_poly(&rs, 3, 1, 0.0);
            let pp = fit_phase_poly(&rs, 3, 1, 0.3);
            for _ in 0..100 {
                let t: f64 = rng.random_range(0.0..TAU);
                let da = rs.pair_value(3, 1, t, 0.0);
                assert!((pa.value(2.0 * t) - da).abs() <= 1e-9 * da.abs());
                let dp = rs.pair_value(3, 1, 0.3, t);
                assert!((pp.value(t) - dp).abs() <= 1e-9 * dp.abs());
            }
        }
    }

    #[test]
    fn alpha_examples() {
        let ev = hadamard_pair();
        let i2 = UnitaryTransform::identity(2).unwrap();
        // Brute-force oracle over a fine grid of alpha.
        let rs = ev.row_space(i2.matrix()).unwrap();
        let brute = (0..10_000)
            .map(|g| FRAC_PI_2 * g as f64 / 10_000.0)
            .fold((0.0, f64::NEG_INFINITY), |b, t| {
                let v = rs.pair_value(1, 0, t, 0.0);
                if v > b.1 { (t, v) } else { b }
            });
        assert!((brute.0 - FRAC_PI_4).abs() < 1e-3);
        let alpha = ca_fit_alpha(&ev, &i2, 1, 0, FitOptions::default()).unwrap();
        assert!((alpha - FRAC_PI_4).abs() < 1e-12, "{alpha}");
        assert!((rs.pair_value(1, 0, alpha, 0.0) - 1.0).abs() < 1e-12);
        assert!((rs.pair_current(1, 0) - 0.5).abs() < 1e-15);

        let one_hot = ObjectiveEvaluator::empirical(set_of(&[&[c(1., 0.), c(0., 0.)]])).unwrap();
        assert_eq!(ca_fit_alpha(&one_hot, &i2, 1, 0, FitOptions::default()).unwrap(), 0.0);
        assert!(ca_fit_alpha(&one_hot, &i2, 0, 1, FitOptions::default()).is_err());
    }

    #[test]
    fn phase_examples() {
        let s = 1.0 / 2f64.sqrt();
        let ev = ObjectiveEvaluator::empirical(set_of(&[&[c(s, 0.), c(0., s)]])).unwrap();
        let i2 = UnitaryTransform::identity(2).unwrap();
        let (bi, bk) = ca_fit_phases(&ev, &i2, 1, 0, FRAC_PI_4, FitOptions::default()).unwrap();
        assert_eq!(bi, 0.0);
        // pi/2 and 3pi/2 both make the image 1-sparse; the smaller one wins.
        assert!((bk - FRAC_PI_2).abs() < 1e-12, "{bk}");
        let rs = ev.row_space(i2.matrix()).unwrap();
        assert!((rs.pair_value(1, 0, FRAC_PI_4, bk) - 1.0).abs() < 1e-12);

        let f = dft_matrix(4).unwrap();
        let exact = ObjectiveEvaluator::exact_uniform(4).unwrap();
        assert_eq!(ca_fit_phases(&exact, &f, 2, 1, 0.0, FitOptions::default()).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn dft_is_fixed_for_both_algorithms() {
        for b in [2usize, 4, 8] {
            let ev = ObjectiveEvaluator::exact_uniform(b).unwrap();
            let f = dft_matrix(b).unwrap();
            let next = msp_step(&ev, &f).unwrap();
            assert!((next.matrix() - f.matrix()).norm() < 1e-12);
            for k in 0..b {
                for i in (k + 1)..b {
                    assert_eq!(ca_fit_alpha(&ev, &f, i, k, FitOptions::default()).unwrap(), 0.0);
                }
            }
            let cfg = LearnConfig { convergence_tol: 1e-8, ..LearnConfig::default() };
            let rep = learn_msp(&ev, &cfg).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.iterations_run, 1);
            let rep = learn_ca(&ev, &LearnConfig { algorithm: Algorithm::Ca, ..cfg }).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.pair_updates, 0);
            assert_eq!(rep.final_transform, f);
        }
    }

    #[test]
    fn rank_one_gradient_is_degenerate() {
        let ev = ObjectiveEvaluator::empirical(set_of(&[&[c(1., 0.), c(0., 0.)]])).unwrap();
        let i2 = UnitaryTransform::identity(2).unwrap();
        assert!(matches!(msp_step(&ev, &i2), Err(Error::DegenerateGradient { iteration: 0 })));
        let cfg = LearnConfig { init: Init::Identity, ..LearnConfig::default() };
        assert!(matches!(learn_msp(&ev, &cfg), Err(Error::DegenerateGradient { iteration: 0 })));
    }

    #[test]
    fn config_validation() {
        let ev = ObjectiveEvaluator::exact_uniform(4).unwrap();
        let bad = LearnConfig { max_iterations: 0, ..LearnConfig::default() };
        assert!(matches!(learn_msp(&ev, &bad), Err(Error::Config(_))));
        let bad = LearnConfig { grid_points: 8, ..LearnConfig::default() };
        assert!(matches!(learn_ca(&ev, &bad), Err(Error::Config(_))));
        let bad = LearnConfig { convergence_tol: 0.0, ..LearnConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ca_solves_two_dim_example() {
        let ev = hadamard_pair();
        let cfg = LearnConfig {
            algorithm: Algorithm::Ca,
            init: Init::Identity,
            ..LearnConfig::default()
        };
        let rep = learn_ca(&ev, &cfg).unwrap();
        assert!((rep.final_objective() - 1.0).abs() < 1e-12);
        let g = GivensRotation::new(1, 0, FRAC_PI_4).unwrap().matrix(2).unwrap();
        assert!((permutation_alignment_score(&rep.final_transform, &g).unwrap() - 1.0).abs() < 1e-9);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn msp_recovers_sparse_dictionary() {
        let b = 6;
        let mut rng = rng_from_seed(1);
        let q = UnitaryTransform::random(b, &mut rng).unwrap();
        let s = 50 * b * b;
        let x = CMatrix::from_fn(b, s, |_, _| {
            if rng.random_bool(0.1) {
                crate::rng::complex_gaussian(&mut rng, 1.0)
            } else {
                c(0., 0.)
            }
        });
        let ev = ObjectiveEvaluator::empirical(SampleSet::uniform(q.matrix().adjoint() * x).unwrap())
            .unwrap();
        let cfg = LearnConfig { init: Init::RandomUnitary, seed: 3, ..LearnConfig::default() };
        let rep = learn_msp(&ev, &cfg).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(permutation_alignment_score(&rep.final_transform, &q).unwrap() >= 0.99);
    }

    #[test]
    fn report_serialization() {
        let ev = ObjectiveEvaluator::exact_uniform(3).unwrap();
        let rep = learn_msp(&ev, &LearnConfig::default()).unwrap();
        let kv = rep.to_key_value();
        assert!(kv.contains("algorithm=msp\n"));
        assert!(kv.contains("converged=true\n"));
        assert!(rep.trace_csv().starts_with("iteration,objective\n0,"));
    }
}

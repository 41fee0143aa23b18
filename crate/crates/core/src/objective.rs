//! Expected l4 objective `g(A) = E ||A y||_4^4` and its conjugate gradient.
//!
//! Two evaluation paths:
//!
//! * **Empirical** — a weighted sample set, `g = sum_s w_s ||A y_s||_4^4`.
//! * **Exact uniform** — `y = exp(j Omega b)` with `Omega ~ Unif(0, 2 pi)`.
//!   Integrating over `Omega` leaves only index quadruples with
//!   `l - m + n - p = 0`, so each row `a` of `A` contributes
//!   `sum_s |c(s)|^2` where `c = a * a` is its self-convolution.
//!
//! Gradients are Wirtinger derivatives with respect to `conj(A)`:
//! `2 E[(|Ay|^2 ∘ Ay) y^H]`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::channel::{sample, ChannelModel, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::{complex_mul, complex_mul_adjoint, CMatrix, UnitaryTransform};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalMode {
    Empirical(SampleSet),
    ExactUniform,
}

#[derive(Clone)]
struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Evaluates the objective and gradient for one data model.
#[derive(Clone)]
pub struct ObjectiveEvaluator {
    model: ChannelModel,
    mode: EvalMode,
    plan: Option<FftPlan>,
}

impl fmt::Debug for ObjectiveEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match &self.mode {
            EvalMode::Empirical(set) => format!("Empirical({}x{})", set.dim(), set.len()),
            EvalMode::ExactUniform => "ExactUniform".to_string(),
        };
        f.debug_struct("ObjectiveEvaluator")
            .field("dim", &self.dim())
            .field("mode", &mode)
            .finish()
    }
}

impl ObjectiveEvaluator {
    pub fn new(model: ChannelModel, mode: EvalMode) -> Result<Self> {
        let plan = match &mode {
            EvalMode::ExactUniform => {
                let ChannelModel::UniformSinglePath { antennas } = model else {
                    return Err(Error::ModeMismatch(
                        "exact evaluation requires the uniform single-path model".into(),
                    ));
                };
                let len = (2 * antennas - 1).next_power_of_two();
                let mut planner = FftPlanner::new();
                Some(FftPlan {
                    len,
                    forward: planner.plan_fft_forward(len),
                    inverse: planner.plan_fft_inverse(len),
                })
            }
            EvalMode::Empirical(set) => {
                if set.dim() != model.dim() {
                    return Err(Error::mismatch(model.dim(), set.dim()));
                }
                None
            }
        };
        Ok(Self { model, mode, plan })
    }

    /// Exact evaluator for the uniform single-path model with `antennas` elements.
    pub fn exact_uniform(antennas: usize) -> Result<Self> {
        Self::new(ChannelModel::uniform(antennas)?, EvalMode::ExactUniform)
    }

    /// Empirical evaluator over a stored sample set.
    pub fn empirical(set: SampleSet) -> Result<Self> {
        Self::new(ChannelModel::Empirical(set.clone()), EvalMode::Empirical(set))
    }

    /// Monte-Carlo evaluator: `count` draws of `model` frozen as a sample set.
    pub fn monte_carlo(model: ChannelModel, count: usize, seed: u64) -> Result<Self> {
        let set = sample(&model, count, seed)?;
        Self::new(model, EvalMode::Empirical(set))
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn mode(&self) -> &EvalMode {
        &self.mode
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, EvalMode::ExactUniform)
    }

    fn check(&self, a: &CMatrix) -> Result<()> {
        let n = self.dim();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::mismatch(
                format!("{n}x{n}"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        Ok(())
    }

    pub fn objective(&self, a: &UnitaryTransform) -> Result<f64> {
        self.objective_matrix(a.matrix())
    }

    /// Objective for an arbitrary square matrix (used off the group, e.g. by
    /// finite differences).
    pub fn objective_matrix(&self, a: &CMatrix) -> Result<f64> {
        self.check(a)?;
        Ok(match &self.mode {
            EvalMode::Empirical(set) => {
                let x = complex_mul(a, set.samples());
                x.column_iter()
                    .zip(set.weights())
                    .map(|(col, w)| {
                        w * col
                            .iter()
                            .map(|z| {
                                let p = z.norm_sqr();
                                p * p
                            })
                            .sum::<f64>()
                    })
                    .sum()
            }
            EvalMode::ExactUniform => {
                let plan = self.plan.as_ref().expect("exact mode has a plan");
                (0..a.nrows())
                    .map(|i| {
                        let spec = self.row_spectrum(plan, a, i);
                        // Parseval on the zero-padded self-convolution.
                        spec.iter()
                            .map(|z| {
                                let p = z.norm_sqr();
                                p * p
                            })
                            .sum::<f64>()
                            / plan.len as f64
                    })
                    .sum()
            }
        })
    }

    pub fn gradient(&self, a: &UnitaryTransform) -> Result<CMatrix> {
        self.gradient_matrix(a.matrix())
    }

    /// Conjugate Wirtinger gradient `d g / d conj(A)`.
    pub fn gradient_matrix(&self, a: &CMatrix) -> Result<CMatrix> {
        self.check(a)?;
        Ok(match &self.mode {
            EvalMode::Empirical(set) => {
                let y = set.samples();
                let mut x = complex_mul(a, y);
                for (s, w) in set.weights().iter().enumerate() {
                    for z in x.column_mut(s).iter_mut() {
                        *z *= 2.0 * w * z.norm_sqr();
                    }
                }
                complex_mul_adjoint(&x, y)
            }
            EvalMode::ExactUniform => {
                let plan = self.plan.as_ref().expect("exact mode has a plan");
                let n = a.nrows();
                let mut g = CMatrix::zeros(n, n);
                let scale = 2.0 / plan.len as f64;
                for i in 0..n {
                    let spec = self.row_spectrum(plan, a, i);
                    // corr(k) = sum_m conj(a_m) c(k + m) has spectrum C * conj(A_hat)
                    // with C = A_hat^2.
                    let mut buf: Vec<Complex64> =
                        spec.iter().map(|z| z * z * z.conj()).collect();
                    plan.inverse.process(&mut buf);
                    for k in 0..n {
                        g[(i, k)] = buf[k] * scale;
                    }
                }
                g
            }
        })
    }

    fn row_spectrum(&self, plan: &FftPlan, a: &CMatrix, i: usize) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); plan.len];
        for (k, slot) in buf.iter_mut().take(a.ncols()).enumerate() {
            *slot = a[(i, k)];
        }
        plan.forward.process(&mut buf);
        buf
    }

    /// Row representation of `A` under this evaluator's expectation: rows of
    /// `A Y` for empirical data, rows of `A` itself for the exact model.
    pub fn row_space(&self, a: &CMatrix) -> Result<RowSpace> {
        self.check(a)?;
        Ok(match &self.mode {
            EvalMode::Empirical(set) => {
                let x = complex_mul(a, set.samples());
                RowSpace {
                    rows: x.row_iter().map(|r| r.iter().cloned().collect()).collect(),
                    kind: RowKind::Weighted(set.weights().to_vec()),
                }
            }
            EvalMode::ExactUniform => RowSpace {
                rows: a.row_iter().map(|r| r.iter().cloned().collect()).collect(),
                kind: RowKind::SelfConvolution,
            },
        })
    }
}

/// Direct `O(B^3)` evaluation of the exact-uniform gradient,
/// `2 sum_{l - m + n = k} A_il conj(A_im) A_in`. Kept as a cross-check for the
/// FFT path.
pub fn exact_uniform_gradient_direct(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        let c = self_convolution(&a.row(i).iter().cloned().collect::<Vec<_>>());
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..n {
                acc += a[(i, m)].conj() * c[k + m];
            }
            g[(i, k)] = acc * 2.0;
        }
    }
    g
}

/// `c(s) = sum_{l + n = s} a_l b_n`, length `len(a) + len(b) - 1`.
pub fn convolution(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (l, x) in a.iter().enumerate() {
        for (n, y) in b.iter().enumerate() {
            c[l + n] += x * y;
        }
    }
    c
}

pub fn self_convolution(a: &[Complex64]) -> Vec<Complex64> {
    convolution(a, a)
}

#[derive(Debug, Clone, PartialEq)]
enum RowKind {
    Weighted(Vec<f64>),
    SelfConvolution,
}

/// The rows an objective decomposes over: `g = sum_i value(row_i)`.
///
/// Left-multiplying `A` by a matrix acting on a pair of rows acts identically
/// on these rows, which is what coordinate ascent and the curvature checks
/// rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpace {
    rows: Vec<Vec<Complex64>>,
    kind: RowKind,
}

impl RowSpace {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.rows[i]
    }

    /// Contribution of one row: `E |x|^4`.
    pub fn row_value(&self, r: &[Complex64]) -> f64 {
        match &self.kind {
            RowKind::Weighted(w) => r
                .iter()
                .zip(w)
                .map(|(z, w)| {
                    let p = z.norm_sqr();
                    w * p * p
                })
                .sum(),
            RowKind::SelfConvolution => self_convolution(r).iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| self.row_value(r)).sum()
    }

    /// Fourth moment `E[x_a x_b conj(x_c) conj(x_d)]` of four rows.
    pub fn moment(&self, a: usize, b: usize, c: usize, d: usize) -> Complex64 {
        let (ra, rb, rc, rd) = (&self.rows[a], &self.rows[b], &self.rows[c], &self.rows[d]);
        match &self.kind {
            RowKind::Weighted(w) => (0..ra.len())
                .map(|s| ra[s] * rb[s] * (rc[s] * rd[s]).conj() * w[s])
                .sum(),
            RowKind::SelfConvolution => {
                let ab = convolution(ra, rb);
                let cd = convolution(rc, rd);
                ab.iter().zip(&cd).map(|(x, y)| x * y.conj()).sum()
            }
        }
    }

    /// Value of rows `i` and `k` after `G(i, k, alpha) R(i, 0) R(k, phi)`.
    pub fn pair_value(&self, i: usize, k: usize, alpha: f64, phi: f64) -> f64 {
        let (s, c) = alpha.sin_cos();
        let ph = Complex64::from_polar(1.0, phi);
        let (zi, zk) = (&self.rows[i], &self.rows[k]);
        match &self.kind {
            RowKind::Weighted(w) => zi
                .iter()
                .zip(zk)
                .zip(w)
                .map(|((&a, &b), w)| {
                    let b = b * ph;
                    let u = (a * c + b * s).norm_sqr();
                    let v = (b * c - a * s).norm_sqr();
                    w * (u * u + v * v)
                })
                .sum(),
            RowKind::SelfConvolution => {
                let (u, v) = rotate_pair(zi, zk, c, s, ph);
                self.row_value(&u) + self.row_value(&v)
            }
        }
    }

    /// Closed-form restricted objective of pair `(i, k)`.
    pub fn pair_moments(&self, i: usize, k: usize) -> PairMoments {
        match &self.kind {
            RowKind::Weighted(w) => {
                let (mut m, (zi, zk)) = (PairMoments::default(), (&self.rows[i], &self.rows[k]));
                for ((a, b), w) in zi.iter().zip(zk).zip(w) {
                    let (p, q) = (a.norm_sqr(), b.norm_sqr());
                    let r = a * b.conj();
                    let (u, v) = ((p + q) / 2.0, (p - q) / 2.0);
                    m.uu += w * u * u;
                    m.vv += w * v * v;
                    m.rr += w * p * q;
                    m.r2 += r * r * w;
                    m.vr += r * (v * w);
                }
                m
            }
            RowKind::SelfConvolution => {
                let mm = |a, b, c, d| self.moment(a, b, c, d);
                let (pp, qq, pq) = (mm(i, i, i, i).re, mm(k, k, k, k).re, mm(i, k, i, k).re);
                PairMoments {
                    uu: (pp + 2.0 * pq + qq) / 4.0,
                    vv: (pp - 2.0 * pq + qq) / 4.0,
                    rr: pq,
                    r2: mm(i, i, k, k),
                    vr: (mm(i, i, i, k) - mm(i, k, k, k)) / 2.0,
                }
            }
        }
    }

    pub fn pair_current(&self, i: usize, k: usize) -> f64 {
        self.row_value(&self.rows[i]) + self.row_value(&self.rows[k])
    }

    /// Apply `G(i, k, alpha) R(i, 0) R(k, phi)` to the stored rows.
    pub fn apply_pair(&mut self, i: usize, k: usize, alpha: f64, phi: f64) {
        let (s, c) = alpha.sin_cos();
        let ph = Complex64::from_polar(1.0, phi);
        let (u, v) = rotate_pair(&self.rows[i], &self.rows[k], c, s, ph);
        self.rows[i] = u;
        self.rows[k] = v;
    }
}

/// Fourth moments of a row pair `(a, b)` that determine its restricted
/// objective. With `p = |a|^2`, `q = |b|^2`, `u = (p + q)/2`,
/// `v = (p - q)/2` and `r = a conj(b)`:
///
/// ```text
/// h(alpha, phi) = 2E[u^2] + E[v^2] + E[w^2]
///               + (E[v^2] - E[w^2]) cos 4 alpha + 2 E[v w] sin 4 alpha
/// ```
///
/// where `w = Re(r e^{-j phi})`, so `E[w^2] = (E|r|^2 + Re(E[r^2] e^{-2j phi}))/2`
/// and `E[v w] = Re(E[v r] e^{-j phi})`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    uu: f64,
    vv: f64,
    rr: f64,
    r2: Complex64,
    vr: Complex64,
}

impl PairMoments {
    /// Same quantity as [`RowSpace::pair_value`].
    pub fn value(&self, alpha: f64, phi: f64) -> f64 {
        let e1 = Complex64::from_polar(1.0, -phi);
        let ww = (self.rr + (self.r2 * e1 * e1).re) / 2.0;
        let vw = (self.vr * e1).re;
        let (s4, c4) = (4.0 * alpha).sin_cos();
        2.0 * self.uu + self.vv + ww + (self.vv - ww) * c4 + 2.0 * vw * s4
    }
}

fn rotate_pair(
    zi: &[Complex64],
    zk: &[Complex64],
    c: f64,
    s: f64,
    ph: Complex64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    zi.iter()
        .zip(zk)
        .map(|(&a, &b)| {
            let b = b * ph;
            (a * c + b * s, b * c - a * s)
        })
        .unzip()
}

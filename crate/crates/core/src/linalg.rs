//! Complex matrix primitives and unitary-group utilities.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. [`UnitaryTransform`] is the
//! checked wrapper used everywhere a matrix must live on the unitary group.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::complex_gaussian;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Maximum `||A^H A - I||_F` accepted when constructing a [`UnitaryTransform`].
pub const UNITARY_TOL: f64 = 1e-9;
/// Maximum drift that [`UnitaryTransform::new_reprojected`] repairs by projection.
pub const REPROJECT_TOL: f64 = 1e-6;
/// Relative singular-value floor below which polar projection is refused.
pub const RANK_TOL: f64 = 1e-12;

/// Return an error naming the first non-finite entry of `m`.
pub fn check_finite(m: &CMatrix) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// `||M^H M - I||_F` for a square matrix.
pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    let n = m.ncols();
    let mut g = m.adjoint() * m;
    for i in 0..n {
        g[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    g.norm()
}

/// An `N x N` complex matrix on the unitary group.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryTransform {
    matrix: CMatrix,
}

impl UnitaryTransform {
    /// Wrap `matrix`, rejecting it unless it is square, finite and unitary to
    /// within [`UNITARY_TOL`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::validate_shape(&matrix)?;
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { matrix })
    }

    /// Like [`UnitaryTransform::new`], but repairs accumulated drift up to
    /// [`REPROJECT_TOL`] by polar projection.
    pub fn new_reprojected(matrix: CMatrix) -> Result<Self> {
        Self::validate_shape(&matrix)?;
        let deviation = unitarity_deviation(&matrix);
        if deviation <= UNITARY_TOL {
            Ok(Self { matrix })
        } else if deviation <= REPROJECT_TOL {
            project_unitary(&matrix)
        } else {
            Err(Error::NotUnitary { deviation })
        }
    }

    fn validate_shape(matrix: &CMatrix) -> Result<()> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidDimension(format!(
                "unitary transform must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_finite(matrix)
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("N must be at least 1".into()));
        }
        Ok(Self {
            matrix: CMatrix::identity(n, n),
        })
    }

    /// Haar-distributed random unitary (polar factor of a complex Ginibre matrix).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("N must be at least 1".into()));
        }
        let g = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
        project_unitary(&g)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    /// Product `self * other`, which stays on the group.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::mismatch(self.dim(), other.dim()));
        }
        Self::new_reprojected(&self.matrix * &other.matrix)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }

    pub fn deviation(&self) -> f64 {
        unitarity_deviation(&self.matrix)
    }
}

/// Unitary DFT matrix with entry `(i, k) = exp(-j 2 pi i k / N) / sqrt(N)`.
pub fn dft_matrix(n: usize) -> Result<UnitaryTransform> {
    if n == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let m = CMatrix::from_fn(n, n, |i, k| {
        // Reduce i*k mod n first so large sizes keep full phase accuracy.
        let e = ((i * k) % n) as f64;
        Complex64::from_polar(scale, -TAU * e / n as f64)
    });
    Ok(UnitaryTransform { matrix: m })
}

/// Separable 2-D DFT `F_rows ⊗ F_cols` for vectorized planar-array data.
pub fn dft2_matrix(rows: usize, cols: usize) -> Result<UnitaryTransform> {
    let a = dft_matrix(rows)?;
    let b = dft_matrix(cols)?;
    Ok(UnitaryTransform {
        matrix: kron(a.matrix(), b.matrix()),
    })
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

/// `sum |M_ik|^4` (the fourth power of the l4 norm, no root taken).
fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

fn join(re: DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    re.zip_map(im, Complex64::new)
}

/// `a * b` through four real products, which nalgebra hands to an
/// optimized GEMM (its generic complex path is a plain triple loop).
pub fn complex_mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(re, &im)
}

/// `a * b^H` through four real products.
pub fn complex_mul_adjoint(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let (brt, bit) = (br.transpose(), bi.transpose());
    let re = &ar * &brt + &ai * &bit;
    let im = &ai * &brt - &ar * &bit;
    join(re, &im)
}

pub fn l4_norm(m: &CMatrix) -> f64 {
    l4_norm_slice(m.as_slice())
}

pub fn l4_norm_slice(entries: &[Complex64]) -> f64 {
    entries
        .iter()
        .map(|z| {
            let p = z.norm_sqr();
            p * p
        })
        .sum()
}

/// Real Givens rotation acting on rows `i > k`.
///
/// `G_ii = G_kk = cos(alpha)`, `G_ik = -G_ki = sin(alpha)`, identity elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    pub i: usize,
    pub k: usize,
    pub alpha: f64,
}

impl GivensRotation {
    pub fn new(i: usize, k: usize, alpha: f64) -> Result<Self> {
        if k >= i {
            return Err(Error::Index(format!(
                "Givens rotation needs k < i, got i={i}, k={k}"
            )));
        }
        Ok(Self { i, k, alpha })
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.i >= n {
            return Err(Error::Index(format!(
                "Givens row {} out of range for N={n}",
                self.i
            )));
        }
        Ok(())
    }

    pub fn matrix(&self, n: usize) -> Result<UnitaryTransform> {
        self.check_dim(n)?;
        let mut m = CMatrix::identity(n, n);
        let (s, c) = self.alpha.sin_cos();
        m[(self.i, self.i)] = c.into();
        m[(self.k, self.k)] = c.into();
        m[(self.i, self.k)] = s.into();
        m[(self.k, self.i)] = (-s).into();
        Ok(UnitaryTransform { matrix: m })
    }

    /// In-place `M <- G M`, touching only rows `i` and `k`.
    pub fn apply_left(&self, m: &mut CMatrix) -> Result<()> {
        self.check_dim(m.nrows())?;
        let (s, c) = self.alpha.sin_cos();
        for col in 0..m.ncols() {
            let xi = m[(self.i, col)];
            let xk = m[(self.k, col)];
            m[(self.i, col)] = xi * c + xk * s;
            m[(self.k, col)] = xk * c - xi * s;
        }
        Ok(())
    }
}

/// Diagonal phase rotation with `R_kk = exp(j beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRotation {
    pub k: usize,
    pub beta: f64,
}

impl PhaseRotation {
    /// `beta` is wrapped into `[0, 2 pi)`.
    pub fn new(k: usize, beta: f64) -> Self {
        Self {
            k,
            beta: wrap_angle(beta, TAU),
        }
    }

    pub fn matrix(&self, n: usize) -> Result<UnitaryTransform> {
        if self.k >= n {
            return Err(Error::Index(format!(
                "phase row {} out of range for N={n}",
                self.k
            )));
        }
        let mut m = CMatrix::identity(n, n);
        m[(self.k, self.k)] = Complex64::from_polar(1.0, self.beta);
        Ok(UnitaryTransform { matrix: m })
    }
}

/// Wrap `x` into `[0, period)`.
pub fn wrap_angle(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Nearest unitary matrix in Frobenius norm: the polar factor `U V^H` of `M`.
pub fn project_unitary(m: &CMatrix) -> Result<UnitaryTransform> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::InvalidDimension(format!(
            "projection needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    if !(largest > 0.0) || smallest <= RANK_TOL * largest {
        return Err(Error::SingularInput { smallest, largest });
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numeric("SVD factors missing".into())),
    };
    Ok(UnitaryTransform { matrix: u * v_t })
}

/// Similarity of two transforms modulo complex permutation, in `[0, 1]`.
///
/// Rows of `|A B^H|` are matched in order to their largest still-unmatched
/// column; the score is the mean matched magnitude. It is 1 exactly when
/// `A = C B` for a complex permutation `C`.
pub fn permutation_alignment_score(a: &UnitaryTransform, b: &UnitaryTransform) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::mismatch(a.dim(), b.dim()));
    }
    let n = a.dim();
    let m = a.matrix() * b.matrix().adjoint();
    let mut taken = vec![false; n];
    let mut total = 0.0;
    for r in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for (c, used) in taken.iter().enumerate() {
            if *used {
                continue;
            }
            let v = m[(r, c)].norm();
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((c, v));
            }
        }
        let (c, v) = best.expect("one column remains per row");
        taken[c] = true;
        total += v;
    }
    Ok(total / n as f64)
}

/// Random complex permutation: a row permutation with unit-modulus phases.
pub fn random_complex_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut c = CMatrix::zeros(n, n);
    for (r, &p) in perm.iter().enumerate() {
        c[(r, p)] = Complex64::from_polar(1.0, rng.random_range(0.0..TAU));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_split_products_match_complex_products() {
        let mut rng = crate::rng::rng_from_seed(12);
        let a = CMatrix::from_fn(5, 7, |_, _| complex_gaussian(&mut rng, 1.0));
        let b = CMatrix::from_fn(7, 3, |_, _| complex_gaussian(&mut rng, 1.0));
        let c = CMatrix::from_fn(4, 7, |_, _| complex_gaussian(&mut rng, 1.0));
        assert!((complex_mul(&a, &b) - &a * &b).norm() < 1e-12);
        assert!((complex_mul_adjoint(&a, &c) - &a * c.adjoint()).norm() < 1e-12);
    }
    use crate::rng::rng_from_seed;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn dft_small_sizes() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1.matrix()[(0, 0)], c(1.0, 0.0));

        let f2 = dft_matrix(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let want = CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)]);
        assert!(close(f2.matrix(), &want, 1e-15));

        let f8 = dft_matrix(8).unwrap();
        assert!(f8.deviation() <= 1e-12);
        assert!(matches!(dft_matrix(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn l4_norm_examples() {
        assert_eq!(l4_norm(&CMatrix::identity(4, 4)), 4.0);
        assert_eq!(l4_norm(&CMatrix::zeros(3, 3)), 0.0);
        let f2 = dft_matrix(2).unwrap();
        assert!((l4_norm(f2.matrix()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn givens_examples() {
        let g = GivensRotation::new(1, 0, 0.0).unwrap().matrix(2).unwrap();
        assert_eq!(g.matrix(), &CMatrix::identity(2, 2));

        let g = GivensRotation::new(1, 0, FRAC_PI_2).unwrap().matrix(2).unwrap();
        let v = g.apply(&CVector::from_vec(vec![c(1., 0.), c(0., 0.)]));
        assert!((v[0] - c(0., 0.)).norm() < 1e-15);
        assert!((v[1] - c(1., 0.)).norm() < 1e-15);

        let g = GivensRotation::new(2, 0, PI / 4.0).unwrap().matrix(3).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let m = g.matrix();
        assert!((m[(0, 0)].re - s).abs() < 1e-15 && (m[(2, 2)].re - s).abs() < 1e-15);
        assert!((m[(2, 0)].re - s).abs() < 1e-15 && (m[(0, 2)].re + s).abs() < 1e-15);
        assert_eq!(m[(1, 1)], c(1., 0.));
        assert_eq!(m[(1, 0)], c(0., 0.));
        assert_eq!(m[(1, 2)], c(0., 0.));

        assert!(GivensRotation::new(0, 1, 0.1).is_err());
        assert!(GivensRotation::new(1, 1, 0.1).is_err());
        assert!(GivensRotation::new(3, 1, 0.1).unwrap().matrix(3).is_err());
    }

    #[test]
    fn givens_apply_left_matches_matrix_product() {
        let mut rng = rng_from_seed(3);
        let a = UnitaryTransform::random(5, &mut rng).unwrap();
        let g = GivensRotation::new(4, 1, 0.37).unwrap();
        let mut m = a.matrix().clone();
        g.apply_left(&mut m).unwrap();
        let want = g.matrix(5).unwrap().matrix() * a.matrix();
        assert!(close(&m, &want, 1e-14));
    }

    #[test]
    fn phase_examples() {
        let r = PhaseRotation::new(0, 0.0).matrix(3).unwrap();
        assert_eq!(r.matrix(), &CMatrix::identity(3, 3));
        let r = PhaseRotation::new(1, PI).matrix(2).unwrap();
        assert!(close(
            r.matrix(),
            &CMatrix::from_diagonal(&CVector::from_vec(vec![c(1., 0.), c(-1., 0.)])),
            1e-15
        ));
        let r = PhaseRotation::new(0, FRAC_PI_2).matrix(2).unwrap();
        assert!(close(
            r.matrix(),
            &CMatrix::from_diagonal(&CVector::from_vec(vec![c(0., 1.), c(1., 0.)])),
            1e-15
        ));
        assert!(PhaseRotation::new(2, 0.1).matrix(2).is_err());
        assert!((PhaseRotation::new(0, -FRAC_PI_2).beta - 3.0 * FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let p = project_unitary(&(CMatrix::identity(3, 3) * c(2., 0.))).unwrap();
        assert!(close(p.matrix(), &CMatrix::identity(3, 3), 1e-14));

        let f2 = dft_matrix(2).unwrap();
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(3., 0.), c(0.5, 0.)]));
        let p = project_unitary(&(d * f2.matrix())).unwrap();
        assert!(close(p.matrix(), f2.matrix(), 1e-12));

        let mut rng = rng_from_seed(9);
        let q = UnitaryTransform::random(6, &mut rng).unwrap();
        let p = project_unitary(q.matrix()).unwrap();
        assert!(close(p.matrix(), q.matrix(), 1e-10));
    }

    #[test]
    fn projection_rejects_rank_deficient() {
        let mut m = CMatrix::identity(3, 3);
        m[(2, 2)] = c(0., 0.);
        assert!(matches!(project_unitary(&m), Err(Error::SingularInput { .. })));
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(f64::NAN, 0.);
        assert!(matches!(project_unitary(&m), Err(Error::NonFinite { row: 0, col: 1 })));
    }

    #[test]
    fn projection_is_nearest_among_random_unitaries() {
        let mut rng = rng_from_seed(21);
        let m = CMatrix::from_fn(4, 4, |_, _| complex_gaussian(&mut rng, 1.0));
        let p = project_unitary(&m).unwrap();
        let best = (p.matrix() - &m).norm();
        for _ in 0..200 {
            let q = UnitaryTransform::random(4, &mut rng).unwrap();
            assert!((q.matrix() - &m).norm() >= best - 1e-12);
        }
    }

    #[test]
    fn unitary_construction_tolerances() {
        let mut m = CMatrix::identity(3, 3);
        m[(0, 0)] = c(1.0 + 1e-8, 0.0);
        assert!(matches!(UnitaryTransform::new(m.clone()), Err(Error::NotUnitary { .. })));
        let fixed = UnitaryTransform::new_reprojected(m).unwrap();
        assert!(fixed.deviation() <= 1e-12);
        let mut m = CMatrix::identity(3, 3);
        m[(0, 0)] = c(1.1, 0.0);
        assert!(UnitaryTransform::new_reprojected(m).is_err());
        assert!(UnitaryTransform::new(CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn alignment_score_examples() {
        let mut rng = rng_from_seed(5);
        let b = UnitaryTransform::random(6, &mut rng).unwrap();
        assert!((permutation_alignment_score(&b, &b).unwrap() - 1.0).abs() < 1e-9);

        let cp = random_complex_permutation(6, &mut rng);
        let a = UnitaryTransform::new(cp * b.matrix()).unwrap();
        assert!((permutation_alignment_score(&a, &b).unwrap() - 1.0).abs() < 1e-9);

        let f8 = dft_matrix(8).unwrap();
        let i8 = UnitaryTransform::identity(8).unwrap();
        let s = permutation_alignment_score(&f8, &i8).unwrap();
        assert!((s - 1.0 / 8f64.sqrt()).abs() < 1e-12);

        assert!(permutation_alignment_score(&f8, &b).is_err());
    }

    #[test]
    fn kron_of_dfts_is_unitary() {
        let f = dft2_matrix(2, 4).unwrap();
        assert_eq!(f.dim(), 8);
        assert!(f.deviation() < 1e-12);
    }
}

//! Channel data: ULA steering vectors, stochastic channel models, and
//! weighted sample sets loaded from or written to disk.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{load_matrix, save_matrix, MatrixFormat};
use crate::linalg::{check_finite, CMatrix, CVector};
use crate::rng::{complex_gaussian, rng_for};

/// Maximum strongest/weakest column energy ratio under power control (6 dB).
pub const POWER_CONTROL_RATIO: f64 = 3.981_071_705_534_972; // 10^0.6

/// Uniform linear array with `antennas` elements at half-wavelength spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SteeringConfig {
    antennas: usize,
}

impl SteeringConfig {
    pub fn new(antennas: usize) -> Result<Self> {
        if antennas < 2 {
            return Err(Error::InvalidDimension(format!(
                "a ULA needs at least 2 antennas, got {antennas}"
            )));
        }
        Ok(Self { antennas })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// `p(omega)` with entry `n` equal to `exp(j omega n)`, `n = 0..B-1`.
pub fn steering_vector(cfg: SteeringConfig, omega: f64) -> CVector {
    let w = omega.rem_euclid(TAU);
    CVector::from_fn(cfg.antennas, |n, _| unit_phasor(w * n as f64))
}

fn unit_phasor(angle: f64) -> Complex64 {
    let (s, c) = angle.rem_euclid(TAU).sin_cos();
    Complex64::new(c, s)
}

/// A finite set of complex vectors (columns) with a probability mass on them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: CMatrix,
    weights: Vec<f64>,
}

impl SampleSet {
    /// Weights must be nonnegative with a positive sum; they are normalized.
    pub fn new(samples: CMatrix, weights: Vec<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "sample set must be non-empty, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if weights.len() != samples.ncols() {
            return Err(Error::mismatch(
                format!("{} weights", samples.ncols()),
                format!("{} weights", weights.len()),
            ));
        }
        check_finite(&samples)?;
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Parse(format!("invalid weight {w} at index {i}")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Parse("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { samples, weights })
    }

    pub fn uniform(samples: CMatrix) -> Result<Self> {
        let s = samples.ncols();
        Self::new(samples, vec![1.0; s.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column-per-sample matrix.
    pub fn samples(&self) -> &CMatrix {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, s: usize) -> CVector {
        self.samples.column(s).into_owned()
    }

    /// Subset by column indices, weights renormalized.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let samples = self.samples.select_columns(idx);
        let weights = idx.iter().map(|&i| self.weights[i]).collect();
        Self::new(samples, weights)
    }

    /// Weighted mean of `||y||_2^2`.
    pub fn mean_energy(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(s, w)| w * self.samples.column(s).norm_squared())
            .sum()
    }
}

/// Distribution of the data vectors `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// `y = exp(j Omega b)` with `Omega ~ Unif(0, 2 pi)` and `b = [0, .., B-1]`.
    UniformSinglePath { antennas: usize },
    /// `y = sum_l alpha_l p(omega_l)`, `alpha_l ~ CN(0, gain_scale)`,
    /// `omega_l ~ Unif(0, 2 pi)`, all i.i.d.
    MultiPath {
        antennas: usize,
        paths: usize,
        gain_scale: f64,
    },
    /// A stored sample set used as-is.
    Empirical(SampleSet),
}

impl ChannelModel {
    pub fn uniform(antennas: usize) -> Result<Self> {
        SteeringConfig::new(antennas)?;
        Ok(ChannelModel::UniformSinglePath { antennas })
    }

    /// Multipath model with unit average path energy (`gain_scale = 1/L`).
    pub fn multipath(antennas: usize, paths: usize) -> Result<Self> {
        SteeringConfig::new(antennas)?;
        if paths == 0 {
            return Err(Error::Config("multipath model needs L >= 1".into()));
        }
        Ok(ChannelModel::MultiPath {
            antennas,
            paths,
            gain_scale: 1.0 / paths as f64,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ChannelModel::UniformSinglePath { antennas } => *antennas,
            ChannelModel::MultiPath { antennas, .. } => *antennas,
            ChannelModel::Empirical(set) => set.dim(),
        }
    }

    /// One draw from the model using `rng`. Empirical models draw a stored
    /// column according to the weights.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        match self {
            ChannelModel::UniformSinglePath { antennas } => {
                let omega = rng.random_range(0.0..TAU);
                CVector::from_fn(*antennas, |n, _| unit_phasor(omega * n as f64))
            }
            ChannelModel::MultiPath {
                antennas,
                paths,
                gain_scale,
            } => {
                let cfg = SteeringConfig { antennas: *antennas };
                let mut h = CVector::zeros(*antennas);
                for _ in 0..*paths {
                    let alpha = complex_gaussian(rng, *gain_scale);
                    let omega = rng.random_range(0.0..TAU);
                    h += steering_vector(cfg, omega) * alpha;
                }
                h
            }
            ChannelModel::Empirical(set) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = set.len() - 1;
                for (s, w) in set.weights().iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = s;
                        break;
                    }
                }
                set.column(pick)
            }
        }
    }
}

/// Draw `count` samples with uniform weights. Sample `s` uses a stream seeded
/// from `(seed, s)`, so the output does not depend on the thread count.
///
/// For [`ChannelModel::Empirical`] the stored set is returned unchanged and
/// `count` is ignored.
pub fn sample(model: &ChannelModel, count: usize, seed: u64) -> Result<SampleSet> {
    if let ChannelModel::Empirical(set) = model {
        return Ok(set.clone());
    }
    if count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let n = model.dim();
    let columns: Vec<CVector> = (0..count)
        .into_par_iter()
        .map(|s| model.draw(&mut rng_for(seed, &[s as u64])))
        .collect();
    let mut m = CMatrix::zeros(n, count);
    for (s, col) in columns.iter().enumerate() {
        m.set_column(s, col);
    }
    SampleSet::uniform(m)
}

/// Path of the optional weights sidecar: `<path>.weights.csv`.
pub fn weights_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".weights.csv");
    PathBuf::from(name)
}

/// Load a column-per-sample matrix; weights come from the sidecar when present
/// and default to uniform otherwise.
pub fn load_samples(path: &Path, format: MatrixFormat) -> Result<SampleSet> {
    let m = load_matrix(path, format)?;
    let side = weights_sidecar(path);
    if side.exists() {
        let mut weights = Vec::new();
        for (i, line) in BufReader::new(File::open(&side)?).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let w = t.parse::<f64>().map_err(|_| {
                Error::Parse(format!("bad weight {t:?} on line {} of {}", i + 1, side.display()))
            })?;
            weights.push(w);
        }
        SampleSet::new(m, weights)
    } else {
        SampleSet::uniform(m)
    }
}

/// Save samples; a weights sidecar is written only for non-uniform weights.
pub fn save_samples(set: &SampleSet, path: &Path, format: MatrixFormat) -> Result<()> {
    save_matrix(path, set.samples(), format)?;
    let s = set.len() as f64;
    let uniform = set.weights().iter().all(|w| (w * s - 1.0).abs() <= 1e-12);
    let side = weights_sidecar(path);
    if uniform {
        if side.exists() {
            std::fs::remove_file(side)?;
        }
    } else {
        let mut w = BufWriter::new(File::create(side)?);
        for x in set.weights() {
            writeln!(w, "{x}")?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Seeded disjoint train/test partition; both parts are renormalized.
pub fn split_train_test(
    set: &SampleSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let s = set.len();
    if s < 2 {
        return Err(Error::Config("need at least 2 samples to split".into()));
    }
    let mut idx: Vec<usize> = (0..s).collect();
    idx.shuffle(&mut rng_for(seed, &[0x5711]));
    let n_train = ((train_fraction * s as f64).round() as usize).clamp(1, s - 1);
    let (train, test) = idx.split_at(n_train);
    Ok((set.select(train)?, set.select(test)?))
}

/// Re-insert zero rows for missing antennas. `missing` lists row indices of the
/// padded `full_dim` layout.
pub fn pad_missing_antennas(set: &SampleSet, missing: &[usize], full_dim: usize) -> Result<SampleSet> {
    let mut is_missing = vec![false; full_dim];
    for &m in missing {
        if m >= full_dim {
            return Err(Error::Index(format!("missing antenna {m} >= {full_dim}")));
        }
        if is_missing[m] {
            return Err(Error::Config(format!("missing antenna {m} listed twice")));
        }
        is_missing[m] = true;
    }
    if full_dim - missing.len() != set.dim() {
        return Err(Error::mismatch(
            format!("{} present antennas", full_dim - missing.len()),
            format!("{} rows", set.dim()),
        ));
    }
    let mut out = CMatrix::zeros(full_dim, set.len());
    let mut src = 0;
    for (r, miss) in is_missing.iter().enumerate() {
        if !miss {
            out.set_row(r, &set.samples().row(src));
            src += 1;
        }
    }
    SampleSet::new(out, set.weights().to_vec())
}

/// Enforce the power-control cap: columns stronger than
/// [`POWER_CONTROL_RATIO`] times the weakest column are scaled down to it.
pub fn apply_power_control(h: &mut CMatrix) {
    let energies: Vec<f64> = h.column_iter().map(|c| c.norm_squared()).collect();
    let weakest = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(weakest > 0.0) {
        return;
    }
    let cap = weakest * POWER_CONTROL_RATIO;
    for (u, e) in energies.iter().enumerate() {
        if *e > cap {
            let s = (cap / e).sqrt();
            h.column_mut(u).scale_mut(s);
        }
    }
}

/// `B x U` channel matrix whose columns are independent draws from `model`.
///
/// Empirical models contribute `U` distinct stored columns (with replacement
/// only when the set holds fewer than `U`).
pub fn synthesize_mimo_channel(
    antennas: usize,
    users: usize,
    model: &ChannelModel,
    seed: u64,
    power_control: bool,
) -> Result<CMatrix> {
    if model.dim() != antennas {
        return Err(Error::mismatch(
            format!("{antennas} antennas"),
            format!("model dimension {}", model.dim()),
        ));
    }
    if users == 0 {
        return Err(Error::InvalidDimension("need at least one user".into()));
    }
    let mut rng = rng_for(seed, &[0xC4A7]);
    let mut h = CMatrix::zeros(antennas, users);
    match model {
        ChannelModel::Empirical(set) if set.len() >= users => {
            let picks = index::sample(&mut rng, set.len(), users);
            for (u, s) in picks.iter().enumerate() {
                h.set_column(u, &set.samples().column(s));
            }
        }
        _ => {
            for u in 0..users {
                h.set_column(u, &model.draw(&mut rng));
            }
        }
    }
    if power_control {
        apply_power_control(&mut h);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dft_matrix;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn near(v: &CVector, want: &[Complex64]) -> bool {
        v.iter().zip(want).all(|(a, b)| (a - b).norm() < 1e-15)
    }

    #[test]
    fn steering_examples() {
        let one = c(1., 0.);
        assert!(near(&steering_vector(SteeringConfig::new(4).unwrap(), 0.0), &[one; 4]));
        assert!(near(
            &steering_vector(SteeringConfig::new(2).unwrap(), PI),
            &[one, c(-1., 0.)]
        ));
        assert!(near(
            &steering_vector(SteeringConfig::new(3).unwrap(), FRAC_PI_2),
            &[one, c(0., 1.), c(-1., 0.)]
        ));
        assert!(SteeringConfig::new(1).is_err());
    }

    #[test]
    fn steering_energy_is_b() {
        let cfg = SteeringConfig::new(7).unwrap();
        for k in 0..50 {
            let p = steering_vector(cfg, -10.0 + 0.43 * k as f64);
            assert!((p.norm_squared() - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_samples_are_geometric_unit_modulus() {
        let model = ChannelModel::uniform(8).unwrap();
        let set = sample(&model, 100, 3).unwrap();
        assert_eq!((set.dim(), set.len()), (8, 100));
        assert!(set.weights().iter().all(|w| (w - 0.01).abs() < 1e-15));
        let f = dft_matrix(8).unwrap();
        for s in 0..set.len() {
            let y = set.column(s);
            assert!(y.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
            assert_eq!(y[0], c(1., 0.));
            for n in 2..8 {
                assert!((y[n] - y[1].powu(n as u32)).norm() < 1e-12);
            }
            assert!(((f.matrix() * &y).norm_squared() - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multipath_mean_energy() {
        let model = ChannelModel::multipath(8, 4).unwrap();
        let set = sample(&model, 100_000, 11).unwrap();
        let e = set.mean_energy();
        assert!((e - 8.0).abs() <= 0.03 * 8.0, "{e}");
        let uni = sample(&ChannelModel::uniform(8).unwrap(), 100_000, 1).unwrap();
        assert!((uni.mean_energy() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = ChannelModel::multipath(6, 2).unwrap();
        assert_eq!(sample(&model, 50, 9).unwrap(), sample(&model, 50, 9).unwrap());
        assert_ne!(sample(&model, 50, 9).unwrap(), sample(&model, 50, 10).unwrap());
        let set = sample(&model, 5, 1).unwrap();
        let emp = ChannelModel::Empirical(set.clone());
        assert_eq!(sample(&emp, 999, 4).unwrap(), set);
    }

    #[test]
    fn split_examples() {
        let set = sample(&ChannelModel::uniform(4).unwrap(), 10, 0).unwrap();
        let (tr, te) = split_train_test(&set, 0.8, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!((tr.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(split_train_test(&set, 0.8, 5).unwrap(), (tr, te));
        assert!(split_train_test(&set, 0.0, 5).is_err());
        assert!(split_train_test(&set, 1.0, 5).is_err());
    }

    #[test]
    fn split_partitions_indices() {
        // Tag each sample by its index in entry 0 so we can recover the partition.
        let m = CMatrix::from_fn(2, 100, |r, s| c(if r == 0 { s as f64 } else { 1.0 }, 0.));
        let set = SampleSet::uniform(m).unwrap();
        let (a, b) = split_train_test(&set, 0.5, 17).unwrap();
        let mut seen: Vec<usize> = a
            .samples()
            .row(0)
            .iter()
            .chain(b.samples().row(0).iter())
            .map(|z| z.re as usize)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn mimo_channel_examples() {
        let model = ChannelModel::uniform(8).unwrap();
        let h = synthesize_mimo_channel(8, 2, &model, 1, false).unwrap();
        assert!(h.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));

        let mp1 = ChannelModel::multipath(8, 1).unwrap();
        let h = synthesize_mimo_channel(8, 1, &mp1, 4, false).unwrap();
        let ratio = h[(1, 0)] / h[(0, 0)];
        for n in 0..8 {
            assert!((h[(n, 0)] - h[(0, 0)] * ratio.powu(n as u32)).norm() < 1e-10);
        }

        assert!(synthesize_mimo_channel(4, 2, &model, 1, false).is_err());
    }

    #[test]
    fn power_control_caps_ratio() {
        let model = ChannelModel::multipath(16, 3).unwrap();
        for seed in 0..50 {
            let h = synthesize_mimo_channel(16, 8, &model, seed, true).unwrap();
            let e: Vec<f64> = h.column_iter().map(|c| c.norm_squared()).collect();
            let max = e.iter().cloned().fold(0.0, f64::max);
            let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min <= POWER_CONTROL_RATIO * (1.0 + 1e-12));
        }
        assert!((POWER_CONTROL_RATIO - 10f64.powf(0.6)).abs() < 1e-14);
    }

    #[test]
    fn padding_inserts_zero_rows() {
        let m = CMatrix::from_fn(3, 2, |r, s| c((r + 1) as f64, s as f64));
        let set = SampleSet::uniform(m).unwrap();
        let p = pad_missing_antennas(&set, &[1, 4], 5).unwrap();
        assert_eq!(p.dim(), 5);
        assert_eq!(p.samples()[(1, 0)], c(0., 0.));
        assert_eq!(p.samples()[(4, 1)], c(0., 0.));
        assert_eq!(p.samples()[(2, 1)], c(2., 1.));
        assert!(pad_missing_antennas(&set, &[1], 5).is_err());
        assert!(pad_missing_antennas(&set, &[1, 1], 5).is_err());
    }

    #[test]
    fn sample_set_validation() {
        let m = CMatrix::from_element(2, 2, c(1., 0.));
        assert!(SampleSet::new(m.clone(), vec![1.0]).is_err());
        assert!(SampleSet::new(m.clone(), vec![1.0, -1.0]).is_err());
        assert!(SampleSet::new(m.clone(), vec![0.0, 0.0]).is_err());
        let s = SampleSet::new(m, vec![1.0, 3.0]).unwrap();
        assert_eq!(s.weights(), &[0.25, 0.75]);
    }
}

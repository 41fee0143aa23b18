//! Uplink massive MU-MIMO bit-error-rate simulation.
//!
//! Per trial: draw `H` (`B x U`), send Gray-mapped unit-energy symbols,
//! receive `r = H s + n` with the noise level set from the trial's channel so
//! that `||H||_F^2 / (B N0)` equals the target SNR, estimate the channel,
//! detect, and count bit errors. Beamspace processing works on `A H` and
//! `A r` for the configured unitary `A`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{synthesize_mimo_channel, ChannelModel, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, CMatrix, CVector, UnitaryTransform};
use crate::objective::ObjectiveEvaluator;
use crate::rng::{complex_gaussian, rng_for, sub_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constellation {
    Qpsk,
    Qam16,
}

const QAM16_SCALE: f64 = 0.316_227_766_016_837_94; // 1/sqrt(10)

impl Constellation {
    pub fn name(&self) -> &'static str {
        match self {
            Constellation::Qpsk => "qpsk",
            Constellation::Qam16 => "16qam",
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
        }
    }

    fn axis_bits(&self) -> usize {
        self.bits_per_symbol() / 2
    }

    fn axis_level(&self, bits: &[u8]) -> f64 {
        match self {
            Constellation::Qpsk => (1.0 - 2.0 * bits[0] as f64) * FRAC_1_SQRT_2,
            Constellation::Qam16 => {
                let level = match (bits[0], bits[1]) {
                    (0, 0) => -3.0,
                    (0, 1) => -1.0,
                    (1, 1) => 1.0,
                    _ => 3.0,
                };
                level * QAM16_SCALE
            }
        }
    }

    fn axis_decide(&self, x: f64, out: &mut [u8]) {
        match self {
            Constellation::Qpsk => out[0] = (x < 0.0) as u8,
            Constellation::Qam16 => {
                let x = x / QAM16_SCALE;
                out[0] = (x > 0.0) as u8;
                out[1] = (x.abs() < 2.0) as u8;
            }
        }
    }

    /// Gray-mapped point for `bits_per_symbol` bits: the first half labels
    /// the real axis, the second half the imaginary axis.
    pub fn map(&self, bits: &[u8]) -> Complex64 {
        let h = self.axis_bits();
        Complex64::new(self.axis_level(&bits[..h]), self.axis_level(&bits[h..]))
    }

    /// Hard decision (nearest point) written as bits into `out`.
    pub fn demap(&self, z: Complex64, out: &mut [u8]) {
        let h = self.axis_bits();
        self.axis_decide(z.re, &mut out[..h]);
        self.axis_decide(z.im, &mut out[h..]);
    }

    pub fn points(&self) -> Vec<Complex64> {
        let n = self.bits_per_symbol();
        (0..1usize << n)
            .map(|v| {
                let bits: Vec<u8> = (0..n).map(|b| ((v >> (n - 1 - b)) & 1) as u8).collect();
                self.map(&bits)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detector {
    AntennaLmmse,
    BeamspaceLmmse,
    /// LMMSE on the `ceil(density B)` strongest beamspace rows.
    BeamspaceLe { density: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    PerfectCsi,
    PilotLs,
    PilotLsDenoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub antennas: usize,
    pub users: usize,
    pub constellation: Constellation,
    pub snr_grid_db: Vec<f64>,
    pub trials_per_snr: usize,
    pub detector: Detector,
    pub estimator: Estimator,
    pub transform: UnitaryTransform,
    pub seed: u64,
    pub power_control: bool,
}

impl SimConfig {
    /// QPSK, perfect CSI, antenna-domain LMMSE, DFT beamspace.
    pub fn new(antennas: usize, users: usize, snr_grid_db: Vec<f64>, trials: usize) -> Result<Self> {
        Ok(Self {
            antennas,
            users,
            constellation: Constellation::Qpsk,
            snr_grid_db,
            trials_per_snr: trials,
            detector: Detector::AntennaLmmse,
            estimator: Estimator::PerfectCsi,
            transform: dft_matrix(antennas)?,
            seed: 0,
            power_control: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.users > self.antennas {
            return Err(Error::InvalidDimension(format!(
                "need 1 <= users <= antennas, got U={} B={}",
                self.users, self.antennas
            )));
        }
        if self.trials_per_snr == 0 {
            return Err(Error::Config("trials_per_snr must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid holds a non-finite value".into()));
        }
        if let Detector::BeamspaceLe { density } = self.detector {
            check_density(density)?;
        }
        if self.transform.dim() != self.antennas {
            return Err(Error::mismatch(
                format!("{0}x{0} transform", self.antennas),
                format!("{0}x{0}", self.transform.dim()),
            ));
        }
        Ok(())
    }

    /// Flat `key=value` echo of the configuration.
    pub fn describe(&self) -> Vec<(String, String)> {
        let detector = match self.detector {
            Detector::AntennaLmmse => "antenna-lmmse".to_string(),
            Detector::BeamspaceLmmse => "beamspace-lmmse".to_string(),
            Detector::BeamspaceLe { density } => format!("beamspace-le:{density}"),
        };
        let estimator = match self.estimator {
            Estimator::PerfectCsi => "perfect",
            Estimator::PilotLs => "pilot-ls",
            Estimator::PilotLsDenoise => "pilot-ls-denoise",
        };
        vec![
            ("antennas".into(), self.antennas.to_string()),
            ("users".into(), self.users.to_string()),
            ("constellation".into(), self.constellation.name().into()),
            ("trials_per_snr".into(), self.trials_per_snr.to_string()),
            ("detector".into(), detector),
            ("estimator".into(), estimator.into()),
            ("seed".into(), self.seed.to_string()),
            ("power_control".into(), self.power_control.to_string()),
        ]
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must lie in (0, 1], got {density}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// Sum over trials of `||H s||^2`.
    pub signal_energy: f64,
    /// Sum over trials of `||n||^2`.
    pub noise_energy: f64,
}

impl BerPoint {
    /// `10 log10(signal / noise)` as actually realized.
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (self.signal_energy / self.noise_energy).log10()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerReport {
    pub config: Vec<(String, String)>,
    pub points: Vec<BerPoint>,
}

impl BerReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str("snr_db,bits,errors,ber\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.snr_db, p.bits, p.errors, p.ber);
        }
        s
    }
}

/// `ceil(density B)` clamped to `[1, B]`.
pub fn le_rows(antennas: usize, density: f64) -> usize {
    ((density * antennas as f64).ceil() as usize).clamp(1, antennas)
}

/// Keep the strongest rows of `h_beam` (by squared row norm, ties to the
/// lower index) and the matching entries of `r_beam`. Kept rows stay in
/// their original order. Returns the kept row indices as well.
pub fn le_reduce(
    h_beam: &CMatrix,
    r_beam: &CVector,
    density: f64,
) -> Result<(CMatrix, CVector, Vec<usize>)> {
    check_density(density)?;
    let b = h_beam.nrows();
    if r_beam.len() != b {
        return Err(Error::mismatch(format!("{b} received entries"), r_beam.len()));
    }
    let keep = le_rows(b, density);
    let energy: Vec<f64> = h_beam.row_iter().map(|r| r.norm_squared()).collect();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&x, &y| energy[y].total_cmp(&energy[x]).then(x.cmp(&y)));
    let mut rows = order[..keep].to_vec();
    rows.sort_unstable();
    let h = h_beam.select_rows(&rows);
    let r = r_beam.select_rows(&rows);
    Ok((h, r, rows))
}

/// `(H^H H + (N0/Es) I)^{-1} H^H r` (before slicing).
pub fn lmmse_estimate(h: &CMatrix, r: &CVector, n0: f64, es: f64) -> Result<CVector> {
    let u = h.ncols();
    if h.nrows() < u {
        return Err(Error::InvalidDimension(format!(
            "LMMSE needs at least {u} rows, got {}",
            h.nrows()
        )));
    }
    if r.len() != h.nrows() {
        return Err(Error::mismatch(format!("{} received entries", h.nrows()), r.len()));
    }
    let hh = h.adjoint();
    let mut gram = &hh * h;
    let reg = Complex64::new(n0 / es, 0.0);
    for d in 0..u {
        gram[(d, d)] += reg;
    }
    let rhs = &hh * r;
    if let Some(ch) = gram.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    gram.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("regularized Gram matrix is singular".into()))
}

/// LMMSE estimate followed by nearest-point slicing.
pub fn lmmse_detect(
    h: &CMatrix,
    r: &CVector,
    n0: f64,
    es: f64,
    constellation: Constellation,
) -> Result<Vec<Complex64>> {
    let est = lmmse_estimate(h, r, n0, es)?;
    let bps = constellation.bits_per_symbol();
    let mut bits = vec![0u8; bps];
    Ok(est
        .iter()
        .map(|z| {
            constellation.demap(*z, &mut bits);
            constellation.map(&bits)
        })
        .collect())
}

/// Soft-thresholding threshold minimizing SURE for `z` observed in complex
/// Gaussian noise of variance `sigma2` per entry. The candidates are 0 and
/// every `|z_b|`.
pub fn sure_threshold(z: &[Complex64], sigma2: f64) -> f64 {
    let n = z.len();
    if n == 0 || !(sigma2 > 0.0) {
        return 0.0;
    }
    let mut mags: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    mags.sort_by(f64::total_cmp);
    // suffix sums over entries strictly above the candidate
    let mut inv_suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        let inv = if mags[j] > 0.0 { 1.0 / mags[j] } else { 0.0 };
        inv_suffix[j] = inv_suffix[j + 1] + inv;
    }
    let sure = |tau: f64, below_sq: f64, first_above: usize| {
        let above = (n - first_above) as f64;
        -(n as f64) * sigma2
            + below_sq
            + above * tau * tau
            + sigma2 * (2.0 * above - tau * inv_suffix[first_above])
    };
    // tau = 0: entries with |z| > 0 are "above"
    let zeros = mags.iter().take_while(|m| **m == 0.0).count();
    let mut best = (sure(0.0, 0.0, zeros), 0.0);
    let mut below_sq = 0.0;
    let mut j = 0;
    while j < n {
        let tau = mags[j];
        while j < n && mags[j] <= tau {
            below_sq += mags[j] * mags[j];
            j += 1;
        }
        let v = sure(tau, below_sq, j);
        if v < best.0 {
            best = (v, tau);
        }
    }
    best.1
}

/// Complex soft-thresholding `z max(0, 1 - tau/|z|)` in place.
pub fn soft_threshold(z: &mut [Complex64], tau: f64) {
    for v in z.iter_mut() {
        let m = v.norm();
        *v = if m > tau { *v * (1.0 - tau / m) } else { Complex64::new(0.0, 0.0) };
    }
}

/// Denoise each column of `h_est` in the beamspace of `a` by SURE-tuned
/// soft-thresholding.
pub fn denoise_beamspace(h_est: &CMatrix, a: &UnitaryTransform, n0: f64) -> CMatrix {
    let mut beam = a.matrix() * h_est;
    for mut col in beam.column_iter_mut() {
        let v = col.as_mut_slice();
        let tau = sure_threshold(v, n0);
        soft_threshold(v, tau);
    }
    a.matrix().adjoint() * beam
}

/// Unitary `U x U` DFT pilots, least-squares estimate, optional beamspace
/// denoising. Noise is drawn from `rng`.
pub fn estimate_channel_pilot<R: Rng + ?Sized>(
    h_true: &CMatrix,
    a: &UnitaryTransform,
    n0: f64,
    denoise: bool,
    rng: &mut R,
) -> Result<CMatrix> {
    let (b, u) = h_true.shape();
    if u > b {
        return Err(Error::InvalidDimension(format!("U={u} exceeds B={b}")));
    }
    if a.dim() != b {
        return Err(Error::mismatch(format!("{b}x{b} transform"), format!("{0}x{0}", a.dim())));
    }
    let p = dft_matrix(u)?.into_matrix();
    let mut y = h_true * &p;
    if n0 > 0.0 {
        for z in y.iter_mut() {
            *z += complex_gaussian(rng, n0);
        }
    }
    let ls = y * p.adjoint();
    Ok(if denoise && n0 > 0.0 { denoise_beamspace(&ls, a, n0) } else { ls })
}

struct TrialOutcome {
    errors: u64,
    signal: f64,
    noise: f64,
}

fn run_trial(
    cfg: &SimConfig,
    source: &ChannelModel,
    snr_index: usize,
    trial: usize,
) -> Result<TrialOutcome> {
    let (b, u) = (cfg.antennas, cfg.users);
    let snr = 10f64.powf(cfg.snr_grid_db[snr_index] / 10.0);
    // Channels are shared across SNR points; bits and noise are not.
    let h = synthesize_mimo_channel(b, u, source, sub_seed(cfg.seed, &[0xC4, trial as u64]), cfg.power_control)?;
    let mut rng = rng_for(cfg.seed, &[snr_index as u64, trial as u64]);
    let c = cfg.constellation;
    let bps = c.bits_per_symbol();
    let bits: Vec<u8> = (0..u * bps).map(|_| rng.random_range(0..2u8)).collect();
    let s = CVector::from_iterator(u, bits.chunks(bps).map(|ch| c.map(ch)));
    let hs = &h * &s;
    let n0 = h.norm_squared() / (b as f64 * snr);
    let noise = CVector::from_fn(b, |_, _| complex_gaussian(&mut rng, n0));
    let r = &hs + &noise;

    let h_est = match cfg.estimator {
        Estimator::PerfectCsi => h.clone(),
        Estimator::PilotLs => estimate_channel_pilot(&h, &cfg.transform, n0, false, &mut rng)?,
        Estimator::PilotLsDenoise => estimate_channel_pilot(&h, &cfg.transform, n0, true, &mut rng)?,
    };
    let a = cfg.transform.matrix();
    let s_hat = match cfg.detector {
        Detector::AntennaLmmse => lmmse_detect(&h_est, &r, n0, 1.0, c)?,
        Detector::BeamspaceLmmse => lmmse_detect(&(a * &h_est), &(a * &r), n0, 1.0, c)?,
        Detector::BeamspaceLe { density } => {
            let (hr, rr, _) = le_reduce(&(a * &h_est), &(a * &r), density)?;
            lmmse_detect(&hr, &rr, n0, 1.0, c)?
        }
    };
    let mut decided = vec![0u8; bps];
    let mut errors = 0;
    for (z, sent) in s_hat.iter().zip(bits.chunks(bps)) {
        c.demap(*z, &mut decided);
        errors += decided.iter().zip(sent).filter(|(x, y)| x != y).count() as u64;
    }
    Ok(TrialOutcome {
        errors,
        signal: hs.norm_squared(),
        noise: noise.norm_squared(),
    })
}

/// Monte-Carlo BER over the SNR grid. Deterministic for a given seed,
/// independent of the thread count.
pub fn simulate_ber(cfg: &SimConfig, source: &ChannelModel) -> Result<BerReport> {
    cfg.validate()?;
    if source.dim() != cfg.antennas {
        return Err(Error::mismatch(
            format!("{} antennas", cfg.antennas),
            format!("channel dimension {}", source.dim()),
        ));
    }
    let mut points = Vec::with_capacity(cfg.snr_grid_db.len());
    for (si, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = (0..cfg.trials_per_snr)
            .into_par_iter()
            .map(|t| run_trial(cfg, source, si, t))
            .collect::<Result<_>>()?;
        let errors: u64 = outcomes.iter().map(|o| o.errors).sum();
        let bits = (cfg.trials_per_snr * cfg.users * cfg.constellation.bits_per_symbol()) as u64;
        points.push(BerPoint {
            snr_db,
            bits,
            errors,
            ber: errors as f64 / bits as f64,
            signal_energy: outcomes.iter().map(|o| o.signal).sum(),
            noise_energy: outcomes.iter().map(|o| o.noise).sum(),
        });
    }
    Ok(BerReport {
        config: cfg.describe(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityEntry {
    pub name: String,
    pub l4: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub dft_l4: f64,
    pub entries: Vec<SparsityEntry>,
}

impl SparsityReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# dft_l4={}\ntransform,l4,ratio\n", self.dft_l4);
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.name, e.l4, e.ratio);
        }
        s
    }
}

/// Mean weighted `||A y||_4^4` over `test` for each named transform, with the
/// ratio against the DFT of the same size.
pub fn sparsity_report(
    test: &SampleSet,
    transforms: &[(String, UnitaryTransform)],
) -> Result<SparsityReport> {
    let ev = ObjectiveEvaluator::empirical(test.clone())?;
    let dft_l4 = ev.objective(&dft_matrix(test.dim())?)?;
    let entries = transforms
        .iter()
        .map(|(name, a)| {
            let l4 = ev.objective(a)?;
            Ok(SparsityEntry {
                name: name.clone(),
                l4,
                ratio: l4 / dft_l4,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SparsityReport { dft_l4, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constellations_are_gray_and_unit_energy() {
        for con in [Constellation::Qpsk, Constellation::Qam16] {
            let pts = con.points();
            assert_eq!(pts.len(), 1 << con.bits_per_symbol());
            let es: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((es - 1.0).abs() < 1e-12);
            let dmin = pts
                .iter()
                .flat_map(|p| pts.iter().map(move |q| (p - q).norm()))
                .filter(|d| *d > 1e-12)
                .fold(f64::INFINITY, f64::min);
            let n = con.bits_per_symbol();
            for (v, p) in pts.iter().enumerate() {
                // nearest neighbors differ in exactly one bit
                for (w, q) in pts.iter().enumerate() {
                    if ((p - q).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((v ^ w).count_ones(), 1, "{con:?} {v} {w}");
                    }
                }
                let mut out = vec![0u8; n];
                con.demap(*p, &mut out);
                let back = out.iter().fold(0usize, |acc, b| (acc << 1) | *b as usize);
                assert_eq!(back, v);
            }
        }
        let s = FRAC_1_SQRT_2;
        assert_eq!(Constellation::Qpsk.map(&[0, 1]), c(s, -s));
        assert_eq!(Constellation::Qam16.map(&[1, 0, 0, 1]), c(3.0 * QAM16_SCALE, -QAM16_SCALE));
    }

    #[test]
    fn lmmse_examples() {
        let mut rng = rng_from_seed(2);
        let f = dft_matrix(4).unwrap().into_matrix();
        let s = CVector::from_vec(Constellation::Qpsk.points());
        let r = &f * &s;
        let est = lmmse_estimate(&f, &r, 0.0, 1.0).unwrap();
        let direct = f.adjoint() * &r;
        assert!((est - direct).norm() < 1e-12);

        let e1 = CMatrix::from_fn(3, 1, |r, _| c((r == 0) as u8 as f64, 0.0));
        for p in Constellation::Qam16.points() {
            let r = CVector::from_fn(3, |i, _| if i == 0 { p } else { c(0., 0.) });
            assert_eq!(lmmse_detect(&e1, &r, 0.0, 1.0, Constellation::Qam16).unwrap(), vec![p]);
        }

        let h = CMatrix::from_fn(16, 4, |_, _| complex_gaussian(&mut rng, 1.0));
        let pts = Constellation::Qam16.points();
        let s = CVector::from_fn(4, |i, _| pts[(5 * i + 3) % 16]);
        let det = lmmse_detect(&h, &(&h * &s), 0.0, 1.0, Constellation::Qam16).unwrap();
        assert_eq!(det, s.as_slice().to_vec());
    }

    #[test]
    fn le_reduce_examples() {
        let mut rng = rng_from_seed(3);
        let h = CMatrix::from_fn(8, 2, |_, _| complex_gaussian(&mut rng, 1.0));
        let r = CVector::from_fn(8, |_, _| complex_gaussian(&mut rng, 1.0));
        let (hr, rr, rows) = le_reduce(&h, &r, 1.0).unwrap();
        assert_eq!((hr, rr, rows), (h.clone(), r.clone(), (0..8).collect::<Vec<_>>()));
        assert_eq!(le_reduce(&h, &r, 0.125).unwrap().2.len(), 1);
        assert_eq!(le_rows(256, 0.125), 32);

        let mut one = CMatrix::zeros(8, 2);
        one[(5, 1)] = c(0.3, 0.0);
        for d in [0.125, 0.4, 1.0] {
            assert!(le_reduce(&one, &r, d).unwrap().2.contains(&5));
        }
        // ties resolved toward lower indices
        assert_eq!(le_reduce(&CMatrix::zeros(8, 1), &r, 0.25).unwrap().2, vec![0, 1]);
        assert!(le_reduce(&h, &r, 0.0).is_err());
    }

    /// SURE by direct evaluation of every candidate.
    fn sure_direct(z: &[Complex64], sigma2: f64, tau: f64) -> f64 {
        let n = z.len() as f64;
        -n * sigma2
            + z.iter()
                .map(|v| {
                    let m = v.norm();
                    m.min(tau).powi(2) + if m > tau { sigma2 * (2.0 - tau / m) } else { 0.0 }
                })
                .sum::<f64>()
    }

    #[test]
    fn sure_threshold_minimizes_direct_sure() {
        let mut rng = rng_from_seed(4);
        for trial in 0..50 {
            let mut z: Vec<Complex64> = (0..32).map(|_| complex_gaussian(&mut rng, 0.2)).collect();
            z[trial % 32] += c(3.0, -1.0);
            let tau = sure_threshold(&z, 0.2);
            let best = std::iter::once(0.0)
                .chain(z.iter().map(|v| v.norm()))
                .map(|t| sure_direct(&z, 0.2, t))
                .fold(f64::INFINITY, f64::min);
            assert!((sure_direct(&z, 0.2, tau) - best).abs() < 1e-9);
        }
        assert_eq!(sure_threshold(&[], 1.0), 0.0);
    }

    #[test]
    fn pilot_estimation() {
        let mut rng = rng_from_seed(5);
        let f = dft_matrix(16).unwrap();
        let h = CMatrix::from_fn(16, 4, |_, _| complex_gaussian(&mut rng, 1.0));
        let est = estimate_channel_pilot(&h, &f, 0.0, true, &mut rng).unwrap();
        assert!((est - &h).norm() < 1e-12);

        // 1-sparse beamspace columns at 10 dB
        let b = 64;
        let f = dft_matrix(b).unwrap();
        let mut wins = 0;
        for t in 0..1000 {
            let mut beam = CMatrix::zeros(b, 1);
            beam[(t % b, 0)] = complex_gaussian(&mut rng, b as f64);
            let h = f.matrix().adjoint() * beam;
            let n0 = h.norm_squared() / (b as f64 * 10.0);
            let mut r1 = rng_for(9, &[t as u64]);
            let mut r2 = rng_for(9, &[t as u64]);
            let ls = estimate_channel_pilot(&h, &f, n0, false, &mut r1).unwrap();
            let dn = estimate_channel_pilot(&h, &f, n0, true, &mut r2).unwrap();
            if (dn - &h).norm() <= (ls - &h).norm() {
                wins += 1;
            }
        }
        assert!(wins >= 950, "{wins}");
    }

    #[test]
    fn beamspace_lmmse_matches_antenna_domain() {
        let model = ChannelModel::multipath(16, 3).unwrap();
        let mut cfg = SimConfig::new(16, 4, vec![-5.0, 5.0, 15.0], 300).unwrap();
        cfg.seed = 11;
        let ant = simulate_ber(&cfg, &model).unwrap();
        cfg.detector = Detector::BeamspaceLmmse;
        let beam = simulate_ber(&cfg, &model).unwrap();
        cfg.detector = Detector::BeamspaceLe { density: 1.0 };
        let le = simulate_ber(&cfg, &model).unwrap();
        for ((a, b), l) in ant.points.iter().zip(&beam.points).zip(&le.points) {
            assert_eq!(a.errors, b.errors);
            assert_eq!(b.errors, l.errors);
        }
        assert!(ant.points.windows(2).all(|w| w[1].errors <= w[0].errors));
    }

    #[test]
    fn high_snr_is_error_free() {
        let model = ChannelModel::multipath(16, 3).unwrap();
        let mut cfg = SimConfig::new(16, 4, vec![60.0], 12_500).unwrap();
        cfg.detector = Detector::BeamspaceLmmse;
        let rep = simulate_ber(&cfg, &model).unwrap();
        assert_eq!(rep.points[0].bits, 100_000);
        assert!(rep.points[0].ber <= 1e-4);
    }

    #[test]
    fn energy_accounting_and_determinism() {
        let model = ChannelModel::uniform(8).unwrap();
        let mut cfg = SimConfig::new(8, 2, vec![0.0, 10.0], 10_000).unwrap();
        cfg.estimator = Estimator::PilotLsDenoise;
        cfg.detector = Detector::BeamspaceLe { density: 0.5 };
        let rep = simulate_ber(&cfg, &model).unwrap();
        for p in &rep.points {
            let target = 10f64.powf(p.snr_db / 10.0);
            let measured = p.signal_energy / p.noise_energy;
            assert!((measured / target - 1.0).abs() < 0.02, "{} vs {target}", measured);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| simulate_ber(&cfg, &model)).unwrap();
        assert_eq!(serial, rep);
        assert!(rep.to_csv().starts_with("# antennas=8\n"));
    }

    #[test]
    fn config_errors() {
        let model = ChannelModel::uniform(4).unwrap();
        let mut cfg = SimConfig::new(4, 5, vec![0.0], 1).unwrap();
        assert!(simulate_ber(&cfg, &model).is_err());
        cfg.users = 2;
        cfg.snr_grid_db.clear();
        assert!(matches!(simulate_ber(&cfg, &model), Err(Error::Config(_))));
        cfg.snr_grid_db = vec![0.0];
        assert!(matches!(
            simulate_ber(&cfg, &ChannelModel::uniform(5).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sparsity_ratios() {
        let set = crate::channel::sample(&ChannelModel::uniform(4).unwrap(), 20_000, 1).unwrap();
        let rep = sparsity_report(
            &set,
            &[
                ("dft".into(), dft_matrix(4).unwrap()),
                ("identity".into(), UnitaryTransform::identity(4).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(rep.entries[0].ratio, 1.0);
        // B^2 / T(B) = 16/44
        assert!((rep.entries[1].ratio - 16.0 / 44.0).abs() < 0.01);
    }
}

//! From shuttling solutions to sampled voltage waveforms: spline
//! interpolation, time mapping, resampling and FIR pre-compensation.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::CubicSpline;

/// Tolerance on the tap sum of a kernel.
const TAP_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirKernel {
    pub taps: Vec<f64>,
    /// Tap spacing in seconds.
    pub tap_spacing: f64,
    /// Factor applied to make the taps sum to one.
    pub renormalization: f64,
}

impl FirKernel {
    /// Kernel from taps, scaled to unit sum.
    pub fn new(taps: Vec<f64>, tap_spacing: f64) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|k| !k.is_finite()) {
            return Err(Error::arg("kernel taps must be finite and nonempty"));
        }
        if !(tap_spacing > 0.0) {
            return Err(Error::arg("tap spacing must be positive"));
        }
        let sum: f64 = taps.iter().sum();
        if !(sum.abs() > 0.0) {
            return Err(Error::arg("kernel taps sum to zero"));
        }
        let factor = 1.0 / sum;
        Ok(FirKernel {
            taps: taps.iter().map(|k| k * factor).collect(),
            tap_spacing,
            renormalization: factor,
        })
    }

    pub fn identity(tap_spacing: f64) -> Self {
        FirKernel {
            taps: vec![1.0],
            tap_spacing,
            renormalization: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.taps.iter().sum();
        if (sum - 1.0).abs() > TAP_SUM_TOL {
            return Err(Error::arg(format!("kernel taps sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Causal convolution with the input held at its first sample before
    /// the start.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        (0..input.len())
            .map(|i| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(j, k)| k * input[i.saturating_sub(j)])
                    .sum()
            })
            .collect()
    }

    /// Reads a single-column CSV of taps or step-response samples.
    pub fn load_csv(path: &Path, tap_spacing: f64, step_response: bool) -> Result<Self> {
        let values = read_column(path)?;
        if step_response {
            kernel_from_step_response(&values, tap_spacing)
        } else {
            FirKernel::new(values, tap_spacing)
        }
    }
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Some(field) = rec.iter().last() else { continue };
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            // header line
            Err(_) if out.is_empty() => {}
            Err(e) => return Err(Error::Config(format!("{}: {field:?}: {e}", path.display()))),
        }
    }
    Ok(out)
}

/// Taps `k_j = s_j - s_{j-1}` from a recorded unit-step response, scaled
/// to unit sum.
pub fn kernel_from_step_response(step: &[f64], tap_spacing: f64) -> Result<FirKernel> {
    let Some(&last) = step.last() else {
        return Err(Error::arg("empty step response"));
    };
    if !(last > 0.0) {
        return Err(Error::arg(format!("step response settles at {last}, expected a positive level")));
    }
    let tail = &step[step.len() - (step.len() / 10).max(2).min(step.len())..];
    let slope = (tail[tail.len() - 1] - tail[0]) / (tail.len() - 1).max(1) as f64;
    if slope.abs() > 1e-4 * last {
        log::warn!("step response has not settled: residual slope {slope:e} per sample");
    }
    let taps: Vec<f64> = step
        .iter()
        .scan(0.0, |prev, &s| {
            let k = s - *prev;
            *prev = s;
            Some(k)
        })
        .collect();
    let kernel = FirKernel::new(taps, tap_spacing)?;
    if (kernel.renormalization - 1.0).abs() > 1e-12 {
        log::info!("kernel renormalized by {}", kernel.renormalization);
    }
    Ok(kernel)
}

/// Causal gamma-shaped low-pass: `k_j ~ x exp(-x)` with
/// `x = (j - onset) / scale` for `j >= onset`.
pub fn gamma_lowpass(len: usize, onset: usize, scale: f64, tap_spacing: f64) -> Result<FirKernel> {
    let taps = (0..len)
        .map(|j| {
            if j < onset {
                0.0
            } else {
                let x = (j - onset) as f64 / scale;
                x * (-x).exp()
            }
        })
        .collect();
    FirKernel::new(taps, tap_spacing)
}

/// The 70-tap low-pass used by the examples: onset 16, scale 2, mean delay
/// of about 20 samples.
pub fn lowpass_fixture() -> FirKernel {
    gamma_lowpass(70, 16, 2.0, 1.0).expect("fixture kernel is valid")
}

/// `M x M` kernel matrix for a causal filter whose input is held at its
/// first sample before the start: row `i` has tap `j` at column
/// `max(i - j, 0)`.
pub fn build_kernel_matrix(kernel: &FirKernel, m: usize) -> Result<DMatrix<f64>> {
    if m <= kernel.len() {
        return Err(Error::arg(format!(
            "kernel matrix size {m} must exceed the kernel length {}",
            kernel.len()
        )));
    }
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for (j, tap) in kernel.taps.iter().enumerate() {
            k[(i, i.saturating_sub(j))] += tap;
        }
    }
    Ok(k)
}

/// `sin^2(pi tau / 2)`: zero slope at both ends.
pub fn sigmoid_map(tau: f64) -> f64 {
    (PI * tau / 2.0).sin().powi(2)
}

/// Mapping of normalized time onto the path parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMap {
    Linear,
    #[default]
    SinSquared,
}

impl TimeMap {
    pub fn apply(self, tau: f64) -> f64 {
        match self {
            TimeMap::Linear => tau,
            TimeMap::SinSquared => sigmoid_map(tau),
        }
    }
}

/// Natural cubic spline per channel on the uniform grid `tau in [0, 1]`.
pub fn interpolate_solution(channels: &[Vec<f64>]) -> Result<Vec<CubicSpline>> {
    channels
        .iter()
        .map(|c| {
            if c.len() < 2 {
                return Err(Error::arg("interpolation needs at least two steps"));
            }
            CubicSpline::uniform(0.0, 1.0, c)
        })
        .collect()
}

/// Samples `V(f(tau_t))` at `tau_t = (t - 1/2) / T_out`, `t = 1..=T_out`.
pub fn map_and_resample(channels: &[CubicSpline], map: impl Fn(f64) -> f64, t_out: usize) -> Result<Vec<Vec<f64>>> {
    if t_out == 0 {
        return Err(Error::arg("resampling needs at least one output sample"));
    }
    check_map(&map)?;
    let taus: Vec<f64> = (1..=t_out).map(|t| map((t as f64 - 0.5) / t_out as f64)).collect();
    Ok(channels.iter().map(|s| taus.iter().map(|&x| s.eval(x)).collect()).collect())
}

fn check_map(map: &impl Fn(f64) -> f64) -> Result<()> {
    let (f0, f1) = (map(0.0), map(1.0));
    if (f0).abs() > 1e-12 || (f1 - 1.0).abs() > 1e-12 {
        return Err(Error::arg(format!("time map must send 0 to 0 and 1 to 1, got {f0} and {f1}")));
    }
    let n = 1000;
    let mut prev = f0;
    for i in 1..=n {
        let f = map(i as f64 / n as f64);
        if !(f >= prev - 1e-12) {
            return Err(Error::arg(format!("time map is not monotone near tau = {}", i as f64 / n as f64)));
        }
        prev = f;
    }
    Ok(())
}

/// Sampled voltage channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub channels: Vec<String>,
    /// Samples per channel.
    pub samples: Vec<Vec<f64>>,
    /// Sample period in seconds.
    pub sample_period: f64,
}

impl Waveform {
    pub fn new(channels: Vec<String>, samples: Vec<Vec<f64>>, sample_period: f64) -> Result<Self> {
        let w = Waveform {
            channels,
            samples,
            sample_period,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.samples.len() {
            return Err(Error::arg("one name per channel required"));
        }
        let len = self.len();
        if self.samples.iter().any(|s| s.len() != len) {
            return Err(Error::arg("waveform channels differ in length"));
        }
        if self.samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("waveform has non-finite samples"));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::arg("sample period must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with a time column followed by one column per channel.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["time".to_string()];
        header.extend(self.channels.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![(i as f64 * self.sample_period).to_string()];
            row.extend(self.samples.iter().map(|s| s[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let bad = |e: String| Error::Config(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() < 2 {
            return Err(bad("need a time column and at least one channel".into()));
        }
        let channels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut samples = vec![Vec::new(); channels.len()];
        let mut times = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("{f:?}: {e}"))))
                .collect::<Result<_>>()?;
            times.push(vals[0]);
            for (c, v) in samples.iter_mut().zip(&vals[1..]) {
                c.push(*v);
            }
        }
        let period = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        Waveform::new(channels, samples, period)
    }
}

/// Pre-ramp of one channel and how well it reproduces the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreRamp {
    /// Input samples including the padding, length `T + 2S`.
    pub input: Vec<f64>,
    /// Filtered input, length `T + 2S`.
    pub filtered: Vec<f64>,
    /// Max |filtered - desired| over the unpadded samples.
    pub max_deviation: f64,
    /// Max |filtered - endpoint value| over the padded samples.
    pub padding_deviation: f64,
    /// Max |input_{i+1} - input_i|.
    pub max_slew: f64,
}

/// Regularized inversion `(K^T K + w W) v~ = K^T v` with `W` the
/// first-difference penalty, after padding the desired samples with `S`
/// copies of each endpoint.
pub fn invert_filter(desired: &[f64], kernel: &FirKernel, padding: usize, w: f64) -> Result<PreRamp> {
    let inv = FilterInverse::new(kernel, desired.len(), padding, w)?;
    inv.apply(desired)
}

/// Factorized inversion for a fixed kernel, length, padding and
/// regularization; reused across channels.
pub struct FilterInverse {
    kernel_matrix: DMatrix<f64>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    len: usize,
    padding: usize,
}

impl FilterInverse {
    pub fn new(kernel: &FirKernel, len: usize, padding: usize, w: f64) -> Result<Self> {
        if !(w >= 0.0) {
            return Err(Error::arg(format!("regularization weight must be nonnegative, got {w}")));
        }
        if len == 0 {
            return Err(Error::arg("desired waveform is empty"));
        }
        kernel.validate()?;
        let m = len + 2 * padding;
        let k = build_kernel_matrix(kernel, m)?;
        let mut normal = k.transpose() * &k;
        for i in 0..m {
            let d = if i == 0 || i == m - 1 { 1.0 } else { 2.0 };
            normal[(i, i)] += w * d;
            if i + 1 < m {
                normal[(i, i + 1)] -= w;
                normal[(i + 1, i)] -= w;
            }
        }
        let factor = normal.cholesky().ok_or_else(|| {
            Error::Singular(format!("filter inversion is singular at w = {w}; use a larger regularization weight"))
        })?;
        Ok(FilterInverse {
            kernel_matrix: k,
            factor,
            len,
            padding,
        })
    }

    pub fn apply(&self, desired: &[f64]) -> Result<PreRamp> {
        if desired.len() != self.len {
            return Err(Error::arg(format!("expected {} samples, got {}", self.len, desired.len())));
        }
        let s = self.padding;
        let (first, last) = (desired[0], desired[desired.len() - 1]);
        let padded: Vec<f64> = std::iter::repeat(first)
            .take(s)
            .chain(desired.iter().copied())
            .chain(std::iter::repeat(last).take(s))
            .collect();
        let v = DVector::from_vec(padded.clone());
        let rhs = self.kernel_matrix.transpose() * &v;
        let input = self.factor.solve(&rhs);
        let filtered = &self.kernel_matrix * &input;
        let m = padded.len();
        let dev = |range: std::ops::Range<usize>| range.map(|i| (filtered[i] - padded[i]).abs()).fold(0.0, f64::max);
        Ok(PreRamp {
            max_deviation: dev(s..m - s),
            padding_deviation: dev(0..s).max(dev(m - s..m)),
            max_slew: input.as_slice().windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max),
            input: input.as_slice().to_vec(),
            filtered: filtered.as_slice().to_vec(),
        })
    }
}

/// Report of a multichannel inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub max_deviation: f64,
    pub padding_deviation: f64,
    pub max_slew: f64,
    pub slew_limit: Option<f64>,
    pub slew_violated: bool,
}

/// Pre-ramps for every channel of `desired`.
pub fn invert_waveform(
    desired: &Waveform,
    kernel: &FirKernel,
    padding: usize,
    w: f64,
    slew_limit: Option<f64>,
) -> Result<(Waveform, InversionReport)> {
    desired.validate()?;
    let inv = FilterInverse::new(kernel, desired.len(), padding, w)?;
    let ramps: Vec<PreRamp> = desired.samples.par_iter().map(|c| inv.apply(c)).collect::<Result<_>>()?;
    let max_slew = ramps.iter().map(|r| r.max_slew).fold(0.0, f64::max);
    let slew_violated = slew_limit.is_some_and(|l| max_slew > l);
    if slew_violated {
        log::warn!("pre-ramp slew {max_slew} V per sample exceeds the limit {}", slew_limit.unwrap());
    }
    let report = InversionReport {
        max_deviation: ramps.iter().map(|r| r.max_deviation).fold(0.0, f64::max),
        padding_deviation: ramps.iter().map(|r| r.padding_deviation).fold(0.0, f64::max),
        max_slew,
        slew_limit,
        slew_violated,
    };
    let out = Waveform::new(
        desired.channels.clone(),
        ramps.into_iter().map(|r| r.input).collect(),
        desired.sample_period,
    )?;
    Ok((out, report))
}

/// Builds the desired waveform from per-step voltages `V[t * N + n]`:
/// spline interpolation, `map`, resampling to `t_out` samples.
pub fn waveform_from_solution(
    electrodes: usize,
    voltages: &[f64],
    map: impl Fn(f64) -> f64,
    t_out: usize,
    sample_period: f64,
) -> Result<Waveform> {
    if electrodes == 0 || voltages.len() % electrodes != 0 {
        return Err(Error::arg("voltages do not split into whole steps"));
    }
    let steps = voltages.len() / electrodes;
    let channels: Vec<Vec<f64>> = (0..electrodes)
        .map(|n| (0..steps).map(|t| voltages[t * electrodes + n]).collect())
        .collect();
    let splines = interpolate_solution(&channels)?;
    let samples = map_and_resample(&splines, map, t_out)?;
    Waveform::new((0..electrodes).map(|n| format!("V{n}")).collect(), samples, sample_period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_map(0.0), 0.0);
        assert_relative_eq!(sigmoid_map(0.5), 0.5, epsilon = 1e-15);
        assert_relative_eq!(sigmoid_map(1.0), 1.0, epsilon = 1e-15);
        let h = 1e-6;
        assert!((sigmoid_map(h) - sigmoid_map(0.0)) / h < 1e-5);
        assert!((sigmoid_map(1.0) - sigmoid_map(1.0 - h)) / h < 1e-5);
    }

    #[test]
    fn spline_channels() {
        let s = interpolate_solution(&[vec![2.0; 5], vec![0.0, 1.0, 2.0, 3.0, 4.0]]).unwrap();
        for x in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert_relative_eq!(s[0].eval(x), 2.0, epsilon = 1e-14);
            assert_relative_eq!(s[1].eval(x), 4.0 * x, epsilon = 1e-13);
        }
        assert!(interpolate_solution(&[vec![1.0]]).is_err());

        // off-knot error falls roughly as the fourth power of the spacing
        let err = |t: usize| {
            let vals: Vec<f64> = (0..t).map(|i| (2.0 * PI * i as f64 / (t - 1) as f64).sin()).collect();
            let s = CubicSpline::uniform(0.0, 1.0, &vals).unwrap();
            (0..500)
                .map(|i| 0.2 + 0.6 * i as f64 / 499.0)
                .map(|x| (s.eval(x) - (2.0 * PI * x).sin()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(21), err(41));
        assert!(e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn identity_map_recovers_midpoints() {
        let vals = [0.0, 1.0, 4.0, 9.0, 16.0];
        let s = interpolate_solution(&[vals.to_vec()]).unwrap();
        let out = map_and_resample(&s, |x| x, 4).unwrap();
        for (t, v) in out[0].iter().enumerate() {
            assert_relative_eq!(*v, s[0].eval((t as f64 + 0.5) / 4.0));
        }
        assert!(map_and_resample(&s, |x| (3.0 * PI * x).sin().abs(), 4).is_err());
        assert!(map_and_resample(&s, |x| x * x * 2.0, 4).is_err());
    }

    #[test]
    fn step_response_kernels() {
        let k = kernel_from_step_response(&[1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(k.taps, vec![1.0, 0.0, 0.0, 0.0]);

        let a: f64 = 0.8;
        let step: Vec<f64> = (1..=200).map(|j| 1.0 - a.powi(j)).collect();
        let k = kernel_from_step_response(&step, 1.0).unwrap();
        let norm = 1.0 - a.powi(200);
        for (j, tap) in k.taps.iter().enumerate() {
            assert_relative_eq!(*tap, (1.0 - a) * a.powi(j as i32) / norm, max_relative = 1e-12);
        }

        let k = kernel_from_step_response(&[0.45, 0.9, 0.9, 0.9], 1.0).unwrap();
        assert_relative_eq!(k.renormalization, 1.0 / 0.9, max_relative = 1e-14);
        assert_relative_eq!(k.taps.iter().sum::<f64>(), 1.0, epsilon = 1e-15);

        assert!(kernel_from_step_response(&[0.5, -0.2], 1.0).is_err());
    }

    #[test]
    fn kernel_matrix_examples() {
        let k = build_kernel_matrix(&FirKernel::identity(1.0), 5).unwrap();
        assert_eq!(k, DMatrix::identity(5, 5));

        let kern = FirKernel::new(vec![0.3, 0.7], 1.0).unwrap();
        let k = build_kernel_matrix(&kern, 4).unwrap();
        let (k1, k2) = (kern.taps[0], kern.taps[1]);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            k1 + k2, 0.0, 0.0, 0.0,
            k2, k1, 0.0, 0.0,
            0.0, k2, k1, 0.0,
            0.0, 0.0, k2, k1,
        ]);
        assert_eq!(k, expected);
        assert!(build_kernel_matrix(&kern, 2).is_err());

        let k = build_kernel_matrix(&lowpass_fixture(), 100).unwrap();
        for i in 0..100 {
            assert!((k.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_matrix_matches_convolution() {
        let kern = lowpass_fixture();
        let x: Vec<f64> = (0..120).map(|i| (i as f64 * 0.1).sin()).collect();
        let k = build_kernel_matrix(&kern, 120).unwrap();
        let y = &k * DVector::from_vec(x.clone());
        for (a, b) in y.iter().zip(kern.apply(&x)) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn fixture_kernel_shape() {
        let k = lowpass_fixture();
        assert_eq!(k.len(), 70);
        k.validate().unwrap();
        let delay: f64 = k.taps.iter().enumerate().map(|(j, t)| j as f64 * t).sum();
        assert!((delay - 20.0).abs() < 0.5, "delay {delay}");
        assert!(k.taps[..16].iter().all(|t| *t == 0.0));
    }

    #[test]
    fn identity_kernel_inversion() {
        let v: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
        let r = invert_filter(&v, &FirKernel::identity(1.0), 5, 1e-14).unwrap();
        for (a, b) in r.input[5..35].iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
        // a delayed kernel never reaches the last input samples
        assert!(matches!(
            invert_filter(&v, &gamma_lowpass(8, 2, 1.0, 1.0).unwrap(), 5, 0.0),
            Err(Error::Singular(_))
        ));
        assert!(invert_filter(&v, &FirKernel::identity(1.0), 5, -1.0).is_err());
    }

    #[test]
    fn constant_waveform_stays_constant() {
        let k = lowpass_fixture();
        for w in [1e-3, 0.1, 10.0] {
            let r = invert_filter(&[1.5; 50], &k, 25, w).unwrap();
            for x in &r.input {
                assert_relative_eq!(*x, 1.5, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn inversion_minimizes_the_objective() {
        let kern = gamma_lowpass(10, 2, 1.5, 1.0).unwrap();
        let desired: Vec<f64> = (0..20).map(|i| sigmoid_map(i as f64 / 19.0)).collect();
        let (s, w) = (5, 0.3);
        let r = invert_filter(&desired, &kern, s, w).unwrap();
        let padded: Vec<f64> = std::iter::repeat(desired[0])
            .take(s)
            .chain(desired.iter().copied())
            .chain(std::iter::repeat(desired[19]).take(s))
            .collect();
        let k = build_kernel_matrix(&kern, padded.len()).unwrap();
        let f = |x: &[f64]| {
            let y = &k * DVector::from_column_slice(x);
            let fit: f64 = y.iter().zip(&padded).map(|(a, b)| (a - b).powi(2)).sum();
            let reg: f64 = x.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum();
            fit + w * reg
        };
        let h = 1e-5;
        for i in 0..r.input.len() {
            let (mut p, mut m) = (r.input.clone(), r.input.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&p) - f(&m)) / (2.0 * h)).abs() < 1e-7, "component {i}");
        }
    }

    #[test]
    fn smaller_weight_fits_better() {
        let k = lowpass_fixture();
        let desired: Vec<f64> = (1..=50).map(|t| sigmoid_map((t as f64 - 0.5) / 50.0)).collect();
        let mut last = f64::INFINITY;
        for w in [10.0, 1.0, 0.1, 0.01] {
            let r = invert_filter(&desired, &k, 25, w).unwrap();
            assert!(r.max_deviation < last);
            last = r.max_deviation;
        }
    }

    #[test]
    fn resampling_error_is_second_order() {
        // T steps resampled at 10 T against the mapped analytic channel
        let err = |t: usize| {
            let vals: Vec<f64> = (0..t).map(|i| (PI * i as f64 / (t - 1) as f64).cos()).collect();
            let s = interpolate_solution(&[vals]).unwrap();
            let t_out = 10 * t;
            map_and_resample(&s, sigmoid_map, t_out).unwrap()[0]
                .iter()
                .enumerate()
                .map(|(k, v)| (v - (PI * sigmoid_map((k as f64 + 0.5) / t_out as f64)).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(21), err(41));
        assert!(e1 < 1e-2 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    proptest! {
        #[test]
        fn inversion_is_linear(a in prop::collection::vec(-1.0f64..1.0, 20), b in prop::collection::vec(-1.0f64..1.0, 20), s in -2.0f64..2.0) {
            let k = gamma_lowpass(8, 1, 1.0, 1.0).unwrap();
            let inv = FilterInverse::new(&k, 20, 4, 0.1).unwrap();
            let ra = inv.apply(&a).unwrap();
            let rb = inv.apply(&b).unwrap();
            let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
            let rc = inv.apply(&c).unwrap();
            for i in 0..rc.input.len() {
                prop_assert!((rc.input[i] - ra.input[i] - s * rb.input[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn waveform_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::new(vec!["a".into(), "b".into()], vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.25, 0.125]], 0.5)
            .unwrap();
        let p = dir.path().join("w.csv");
        w.write_csv(&p).unwrap();
        assert_eq!(Waveform::read_csv(&p).unwrap(), w);
        assert!(Waveform::new(vec!["a".into()], vec![vec![1.0], vec![2.0]], 1.0).is_err());
    }
}

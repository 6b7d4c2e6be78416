//! MFCC baseline features: Hamming-windowed power spectrum, triangular mel
//! filterbank, log compression, orthonormal DCT-II, regression deltas and
//! context stacking.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{structural, Result};
use crate::signal::{frame_count, ms_to_samples, SampleStream};
use crate::tensor::Tensor2;

/// Filterbank energies are clamped here before the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CepstralConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub num_coeffs: usize,
    pub num_mel_filters: usize,
    pub fft_size: usize,
    /// Frames on each side used by one regression derivative.
    pub delta_context: usize,
    /// Total frames concatenated into a classifier input (odd).
    pub stack_context: usize,
}

impl Default for CepstralConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            shift_ms: 10.0,
            num_coeffs: 13,
            num_mel_filters: 26,
            fft_size: 512,
            delta_context: 2,
            stack_context: 9,
        }
    }
}

impl CepstralConfig {
    pub fn validate(&self, rate: u32) -> Result<()> {
        if self.num_coeffs == 0 || self.num_coeffs > self.num_mel_filters {
            return Err(structural(format!(
                "num_coeffs {} must be in [1, num_mel_filters = {}]",
                self.num_coeffs, self.num_mel_filters
            )));
        }
        let win = ms_to_samples(self.window_ms, rate)?;
        if self.fft_size < win {
            return Err(structural(format!("fft_size {} is below the {win}-sample window", self.fft_size)));
        }
        if self.stack_context.is_multiple_of(2) {
            return Err(structural(format!("stack_context {} must be odd", self.stack_context)));
        }
        Ok(())
    }

    /// Per-frame dimension after deltas and stacking (351 for the defaults).
    pub fn output_dim(&self) -> usize {
        3 * self.num_coeffs * self.stack_context
    }
}

/// Per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Tensor2,
}

impl FeatureSequence {
    pub fn dim(&self) -> usize {
        self.frames.channels()
    }

    pub fn len(&self) -> usize {
        self.frames.frames()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.frames() == 0
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular unit-peak filters on the FFT bins, centers evenly spaced on the
/// mel scale between 0 Hz and Nyquist. Row `m` holds filter `m`'s weight for
/// each of the `fft_size / 2 + 1` bins.
pub fn mel_filterbank(num_filters: usize, fft_size: usize, rate: u32) -> Tensor2 {
    let nyquist = f64::from(rate) / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..num_filters + 2).map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64)).collect();
    let bins = fft_size / 2 + 1;
    let mut bank = Tensor2::zeros(num_filters, bins);
    for m in 0..num_filters {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * f64::from(rate) / fft_size as f64;
            let w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            bank.set(m, k, w);
        }
    }
    bank
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Orthonormal DCT-II of `x`, keeping the first `keep` coefficients.
pub fn dct2(x: &[f64], keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..keep)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Mel filterbank energies, one row per 10 ms frame.
///
/// Frame `f` analyses the window centered on sample `f * shift + shift / 2`,
/// the same centers the raw-window path uses, with edge replication.
pub fn filterbank_energies(stream: &SampleStream, cfg: &CepstralConfig) -> Result<Tensor2> {
    cfg.validate(stream.rate)?;
    let win = ms_to_samples(cfg.window_ms, stream.rate)?;
    let shift = ms_to_samples(cfg.shift_ms, stream.rate)?;
    if stream.len() < win {
        return Err(structural(format!(
            "stream of {} samples is shorter than one {win}-sample analysis window",
            stream.len()
        )));
    }
    let frames = frame_count(stream.len(), shift);
    let bank = mel_filterbank(cfg.num_mel_filters, cfg.fft_size, stream.rate);
    let window = hamming(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut power = vec![0.0; cfg.fft_size / 2 + 1];
    let mut out = Tensor2::zeros(frames, cfg.num_mel_filters);
    for f in 0..frames {
        let start = (f * shift + shift / 2) as isize - (win / 2) as isize;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (k, w) in window.iter().enumerate() {
            buf[k].re = w * stream.clamped(start + k as isize);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for m in 0..cfg.num_mel_filters {
            let e = bank.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            out.set(f, m, e);
        }
    }
    Ok(out)
}

/// Static cepstra: log (floored) mel energies through a truncated DCT-II.
pub fn compute_static_cepstra(stream: &SampleStream, cfg: &CepstralConfig) -> Result<FeatureSequence> {
    let energies = filterbank_energies(stream, cfg)?;
    let mut out = Tensor2::zeros(energies.frames(), cfg.num_coeffs);
    for (f, row) in energies.rows().enumerate() {
        let logs: Vec<f64> = row.iter().map(|e| e.max(LOG_FLOOR).ln()).collect();
        out.row_mut(f).copy_from_slice(&dct2(&logs, cfg.num_coeffs));
    }
    Ok(FeatureSequence { frames: out })
}

/// Regression derivative over +/- `context` frames with edge replication.
pub fn deltas(x: &Tensor2, context: usize) -> Tensor2 {
    let (frames, dim) = x.shape();
    let mut out = Tensor2::zeros(frames, dim);
    if frames == 0 || context == 0 {
        return out;
    }
    let denom: f64 = 2.0 * (1..=context).map(|d| (d * d) as f64).sum::<f64>();
    let last = frames as isize - 1;
    let at = |t: isize| x.row(t.clamp(0, last) as usize);
    for t in 0..frames as isize {
        let row = out.row_mut(t as usize);
        for d in 1..=context as isize {
            let (next, prev) = (at(t + d), at(t - d));
            for c in 0..dim {
                row[c] += d as f64 * (next[c] - prev[c]);
            }
        }
        row.iter_mut().for_each(|v| *v /= denom);
    }
    out
}

/// Appends first and second derivatives: `[static | delta | delta-delta]`.
pub fn append_deltas(statics: &FeatureSequence, cfg: &CepstralConfig) -> Result<FeatureSequence> {
    if statics.dim() != cfg.num_coeffs {
        return Err(structural(format!("static features have dim {}, expected {}", statics.dim(), cfg.num_coeffs)));
    }
    let d1 = deltas(&statics.frames, cfg.delta_context);
    let d2 = deltas(&d1, cfg.delta_context);
    let frames = statics.len();
    let dim = statics.dim();
    let mut out = Tensor2::zeros(frames, 3 * dim);
    for t in 0..frames {
        let row = out.row_mut(t);
        row[..dim].copy_from_slice(statics.frames.row(t));
        row[dim..2 * dim].copy_from_slice(d1.row(t));
        row[2 * dim..].copy_from_slice(d2.row(t));
    }
    Ok(FeatureSequence { frames: out })
}

/// Concatenates each frame with its `(context - 1) / 2` neighbours on each side.
pub fn stack_context(feats: &FeatureSequence, context: usize) -> Result<FeatureSequence> {
    if context.is_multiple_of(2) {
        return Err(structural(format!("stack context {context} must be odd")));
    }
    let (frames, dim) = feats.frames.shape();
    let half = (context / 2) as isize;
    let last = frames as isize - 1;
    let mut out = Tensor2::zeros(frames, dim * context);
    for t in 0..frames as isize {
        let row = out.row_mut(t as usize);
        for (j, off) in (-half..=half).enumerate() {
            let src = feats.frames.row((t + off).clamp(0, last) as usize);
            row[j * dim..(j + 1) * dim].copy_from_slice(src);
        }
    }
    Ok(FeatureSequence { frames: out })
}

/// Full baseline pipeline: statics, deltas, stacking.
pub fn cepstral_features(stream: &SampleStream, cfg: &CepstralConfig) -> Result<FeatureSequence> {
    let statics = compute_static_cepstra(stream, cfg)?;
    let dynamic = append_deltas(&statics, cfg)?;
    stack_context(&dynamic, cfg.stack_context)
}

/// Per-column mean and variance normalization over all frames (population
/// standard deviation). Columns with standard deviation below 1e-8 become 0.
pub fn normalize_columns(x: &mut Tensor2) {
    let (frames, channels) = x.shape();
    if frames == 0 {
        return;
    }
    for c in 0..channels {
        let mean = (0..frames).map(|t| x.get(t, c)).sum::<f64>() / frames as f64;
        let var = (0..frames).map(|t| (x.get(t, c) - mean).powi(2)).sum::<f64>() / frames as f64;
        let std = var.sqrt();
        for t in 0..frames {
            let v = if std < crate::signal::DEGENERATE_STD { 0.0 } else { (x.get(t, c) - mean) / std };
            x.set(t, c, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, amp: f64, n: usize) -> SampleStream {
        let samples = (0..n).map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32).collect();
        SampleStream::new(samples, 16000).unwrap()
    }

    fn seq(rows: &[Vec<f64>]) -> FeatureSequence {
        FeatureSequence { frames: Tensor2::from_rows(rows).unwrap() }
    }

    #[test]
    fn silence_gives_identical_floor_frames() {
        let cfg = CepstralConfig::default();
        let s = SampleStream::new(vec![0.0; 1600], 16000).unwrap();
        let c = compute_static_cepstra(&s, &cfg).unwrap();
        assert_eq!(c.frames.shape(), (10, 13));
        let expected = dct2(&vec![LOG_FLOOR.ln(); cfg.num_mel_filters], 13);
        for row in c.frames.rows() {
            assert_eq!(row, expected.as_slice());
        }
    }

    #[test]
    fn tone_peaks_in_filter_nearest_its_frequency() {
        let cfg = CepstralConfig::default();
        let e = filterbank_energies(&tone(1000.0, 0.5, 4800), &cfg).unwrap();
        // independent center computation: evenly spaced mel points, inverted directly
        let top = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        let centers: Vec<f64> = (1..=26).map(|i| 700.0 * (10f64.powf(top * i as f64 / 27.0 / 2595.0) - 1.0)).collect();
        let nearest =
            centers.iter().enumerate().min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs())).unwrap().0;
        for row in e.rows().skip(2).take(20) {
            assert_eq!(crate::tensor::argmax(row), nearest);
        }
    }

    #[test]
    fn too_short_and_bad_configs() {
        let cfg = CepstralConfig::default();
        let s = SampleStream::new(vec![0.0; 399], 16000).unwrap();
        assert!(compute_static_cepstra(&s, &cfg).is_err());
        let bad = CepstralConfig { num_coeffs: 30, ..cfg.clone() };
        assert!(bad.validate(16000).is_err());
        let bad = CepstralConfig { fft_size: 256, ..cfg.clone() };
        assert!(bad.validate(16000).is_err());
        let bad = CepstralConfig { stack_context: 4, ..cfg };
        assert!(bad.validate(16000).is_err());
    }

    #[test]
    fn column_normalization() {
        let mut x = Tensor2::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        normalize_columns(&mut x);
        assert_eq!(x, Tensor2::from_rows(&[[-1.0, 0.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn deltas_of_constant_and_ramp() {
        let cfg = CepstralConfig { num_coeffs: 2, ..Default::default() };
        let constant = seq(&vec![vec![3.0, -1.0]; 7]);
        let out = append_deltas(&constant, &cfg).unwrap();
        assert_eq!(out.dim(), 6);
        for row in out.frames.rows() {
            assert!(row[2..].iter().all(|&v| v == 0.0));
        }
        let slope = 0.75;
        let ramp = seq(&(0..10).map(|t| vec![slope * t as f64, 1.0 - slope * t as f64]).collect::<Vec<_>>());
        let d = deltas(&ramp.frames, 2);
        for t in 2..8 {
            assert!((d.get(t, 0) - slope).abs() < 1e-12);
            assert!((d.get(t, 1) + slope).abs() < 1e-12);
        }
        let single = seq(&[vec![4.0, 5.0]]);
        let out = append_deltas(&single, &cfg).unwrap();
        assert_eq!(out.frames.row(0), &[4.0, 5.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(append_deltas(&seq(&[vec![1.0]]), &cfg).is_err());
    }

    #[test]
    fn stacking_examples() {
        let f = seq(&(0..5).map(|t| vec![t as f64; 39]).collect::<Vec<_>>());
        assert_eq!(stack_context(&f, 9).unwrap().dim(), 351);
        assert_eq!(stack_context(&f, 1).unwrap(), f);
        assert!(stack_context(&f, 4).is_err());
        let one = seq(&[vec![1.0, 2.0]]);
        let s = stack_context(&one, 9).unwrap();
        assert_eq!(s.frames.row(0), [1.0, 2.0].repeat(9).as_slice());
    }

    #[test]
    fn canonical_pipeline_dim() {
        let cfg = CepstralConfig::default();
        let f = cepstral_features(&tone(440.0, 0.3, 3200), &cfg).unwrap();
        assert_eq!(f.frames.shape(), (20, 351));
        assert_eq!(cfg.output_dim(), 351);
        assert!(f.frames.is_finite());
    }

    #[test]
    fn scaling_the_waveform_shifts_only_c0() {
        let cfg = CepstralConfig::default();
        // broadband so no filter sits on the log floor
        let mut state = 12345u32;
        let noise: Vec<f32> = (0..3200)
            .map(|_| {
                state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                (state >> 8) as f32 / (1u32 << 24) as f32 - 0.5
            })
            .collect();
        let a = SampleStream::new(noise, 16000).unwrap();
        // a power of two keeps the f32 scaling exact
        let scale = 4.0f64;
        let b = SampleStream::new(a.samples.iter().map(|v| v * scale as f32).collect(), 16000).unwrap();
        let ca = compute_static_cepstra(&a, &cfg).unwrap();
        let cb = compute_static_cepstra(&b, &cfg).unwrap();
        let offset = dct2(&vec![2.0 * scale.ln(); cfg.num_mel_filters], 13);
        assert!(offset[1..].iter().all(|v| v.abs() < 1e-12));
        for t in 0..ca.len() {
            for (k, off) in offset.iter().enumerate() {
                let diff = cb.frames.get(t, k) - ca.frames.get(t, k);
                assert!((diff - off).abs() < 1e-6, "frame {t} coeff {k}: {diff} vs {off}");
            }
        }
    }

    proptest! {
        #[test]
        fn stacking_center_block_recovers_input(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..12),
            half in 0usize..5,
        ) {
            let f = seq(&rows);
            let c = 2 * half + 1;
            let s = stack_context(&f, c).unwrap();
            for (t, r) in rows.iter().enumerate() {
                prop_assert_eq!(&s.frames.row(t)[half * 3..half * 3 + 3], r.as_slice());
            }
        }

        #[test]
        fn pipeline_is_finite(xs in prop::collection::vec(-1.0f32..1.0, 400..1200)) {
            let s = SampleStream::new(xs, 16000).unwrap();
            let f = cepstral_features(&s, &CepstralConfig::default()).unwrap();
            prop_assert!(f.frames.is_finite());
        }
    }
}

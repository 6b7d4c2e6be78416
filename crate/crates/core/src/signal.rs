//! Turning sample streams into labeled, normalized raw-input windows.

use crate::error::{structural, Result};

/// Canonical frame shift: one labeled example every 10 ms.
pub const FRAME_SHIFT_MS: f64 = 10.0;

/// Windows whose standard deviation falls below this are mapped to zeros.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<f32>,
    pub rate: u32,
}

impl SampleStream {
    pub fn new(samples: Vec<f32>, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(structural("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(structural("sample stream is empty"));
        }
        Ok(Self { samples, rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at `i`, replicating the edge samples outside `[0, len)`.
    pub fn clamped(&self, i: isize) -> f64 {
        let last = self.samples.len() as isize - 1;
        f64::from(self.samples[i.clamp(0, last) as usize])
    }
}

/// One class label per 10 ms frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabeling {
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl FrameLabeling {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(structural("labeling needs at least one class"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(structural(format!("label {l} at frame {i} is outside [0, {num_classes})")));
        }
        Ok(Self { labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A span of samples centered on one frame, with that frame's label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    pub samples: Vec<f64>,
    pub label: usize,
    /// Sample index of the window center.
    pub center: usize,
}

/// Converts a duration to a whole number of samples, rejecting fractional results.
pub fn ms_to_samples(ms: f64, rate: u32) -> Result<usize> {
    let exact = ms * f64::from(rate) / 1000.0;
    let rounded = exact.round();
    if exact.is_nan() || exact <= 0.0 || (exact - rounded).abs() > 1e-9 {
        return Err(structural(format!("{ms} ms at {rate} Hz is not a positive whole number of samples")));
    }
    Ok(rounded as usize)
}

/// Number of whole frames of `shift` samples in a stream.
pub fn frame_count(num_samples: usize, shift: usize) -> usize {
    num_samples / shift
}

/// Extracts one window of `w_in_ms` per `shift_ms` frame, centered on the
/// frame; samples outside the stream replicate the nearest edge sample.
///
/// Windows are returned unnormalized; see [`normalize_window`].
pub fn frame_stream(
    stream: &SampleStream,
    labeling: &FrameLabeling,
    w_in_ms: f64,
    shift_ms: f64,
) -> Result<Vec<RawWindow>> {
    if w_in_ms < shift_ms {
        return Err(structural(format!("window {w_in_ms} ms is shorter than shift {shift_ms} ms")));
    }
    let win = ms_to_samples(w_in_ms, stream.rate)?;
    let shift = ms_to_samples(shift_ms, stream.rate)?;
    let frames = frame_count(stream.len(), shift);
    if frames == 0 {
        return Err(structural(format!("stream of {} samples holds no {shift}-sample frame", stream.len())));
    }
    if labeling.len() != frames {
        return Err(structural(format!("labeling has {} frames but the stream holds {frames}", labeling.len())));
    }
    let half = (win / 2) as isize;
    Ok(labeling
        .labels
        .iter()
        .enumerate()
        .map(|(f, &label)| {
            let center = f * shift + shift / 2;
            let start = center as isize - half;
            let samples = (0..win as isize).map(|k| stream.clamped(start + k)).collect();
            RawWindow { samples, label, center }
        })
        .collect())
}

/// Rescales a window to zero mean and unit population standard deviation.
/// Windows with (near) zero spread become all zeros.
pub fn normalize_window(mut window: RawWindow) -> RawWindow {
    normalize_in_place(&mut window.samples);
    window
}

pub fn normalize_in_place(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        xs.iter_mut().for_each(|x| *x = 0.0);
    } else {
        xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
    }
}

/// Framing followed by per-window normalization.
pub fn normalized_windows(stream: &SampleStream, labeling: &FrameLabeling, w_in_ms: f64) -> Result<Vec<RawWindow>> {
    Ok(frame_stream(stream, labeling, w_in_ms, FRAME_SHIFT_MS)?.into_iter().map(normalize_window).collect())
}

//! Shape propagation and parameter counting.

use std::fmt;

use super::layers::window_count;
use super::{ClassifierKind, NetworkConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShape {
    pub input_frames: usize,
    pub conv_frames: usize,
    pub pool_frames: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    /// `(frames, channels)` of one input example.
    pub input: (usize, usize),
    pub stages: Vec<StageShape>,
    /// Flattened size fed to the classifier.
    pub classifier_input: usize,
}

impl fmt::Display for ShapeTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input: {} frames x {} channels", self.input.0, self.input.1)?;
        for (i, s) in self.stages.iter().enumerate() {
            writeln!(
                f,
                "stage {}: {} -> conv {} -> pool {} frames x {} channels",
                i + 1,
                s.input_frames,
                s.conv_frames,
                s.pool_frames,
                s.channels
            )?;
        }
        write!(f, "classifier input: {}", self.classifier_input)
    }
}

/// Frames after each convolution (`floor((T - kW) / dW) + 1`) and pooling
/// (`floor((T' - kW_mp) / stride) + 1`), and the classifier input size.
pub fn output_shape(cfg: &NetworkConfig) -> Result<ShapeTrace> {
    let input = cfg.input.shape()?;
    let (mut frames, mut channels) = input;
    let mut stages = Vec::with_capacity(cfg.stages.len());
    for (i, s) in cfg.stages.iter().enumerate() {
        let stage = i + 1;
        let conv_frames = window_count(frames, s.kw, s.dw).ok_or_else(|| Error::Stage {
            stage,
            msg: format!("convolution width {} exceeds the {frames} frames reaching it", s.kw),
        })?;
        let pool_frames = window_count(conv_frames, s.pool_kw, s.pool_stride).ok_or_else(|| Error::Stage {
            stage,
            msg: format!("pooling width {} exceeds the {conv_frames} convolution frames", s.pool_kw),
        })?;
        stages.push(StageShape { input_frames: frames, conv_frames, pool_frames, channels: s.d_out });
        frames = pool_frames;
        channels = s.d_out;
    }
    Ok(ShapeTrace { input, stages, classifier_input: frames * channels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountConvention {
    WeightsOnly,
    WithBiases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub conv_weights: usize,
    pub conv_biases: usize,
    pub classifier_weights: usize,
    pub classifier_biases: usize,
}

impl ParamCount {
    pub fn conv(&self, c: CountConvention) -> usize {
        match c {
            CountConvention::WeightsOnly => self.conv_weights,
            CountConvention::WithBiases => self.conv_weights + self.conv_biases,
        }
    }

    pub fn classifier(&self, c: CountConvention) -> usize {
        match c {
            CountConvention::WeightsOnly => self.classifier_weights,
            CountConvention::WithBiases => self.classifier_weights + self.classifier_biases,
        }
    }

    pub fn total(&self, c: CountConvention) -> usize {
        self.conv(c) + self.classifier(c)
    }
}

pub fn param_count(cfg: &NetworkConfig) -> Result<ParamCount> {
    let trace = output_shape(cfg)?;
    let mut count = ParamCount::default();
    let mut d_in = trace.input.1;
    for s in &cfg.stages {
        count.conv_weights += s.kw * d_in * s.d_out;
        count.conv_biases += s.d_out;
        d_in = s.d_out;
    }
    let k = cfg.classifier.num_classes;
    let n = trace.classifier_input;
    match cfg.classifier.kind {
        ClassifierKind::Slp => {
            count.classifier_weights = n * k;
            count.classifier_biases = k;
        }
        ClassifierKind::Mlp => {
            let h = cfg.classifier.hidden_units;
            count.classifier_weights = n * h + h * k;
            count.classifier_biases = h + k;
        }
    }
    Ok(count)
}

/// Per-stage `(dW, pool_stride)` choices for [`search_strides`].
#[derive(Debug, Clone)]
pub struct StrideSpace {
    pub first_dw: std::ops::RangeInclusive<usize>,
    pub other_dw: std::ops::RangeInclusive<usize>,
    /// Also try pooling strides below the pooling width.
    pub overlapping_pools: bool,
}

impl Default for StrideSpace {
    fn default() -> Self {
        Self { first_dw: 1..=30, other_dw: 1..=1, overlapping_pools: false }
    }
}

/// Every stride assignment in `space` for which `cfg`'s classifier input is
/// exactly `target`. Kernel widths, filters and pooling widths come from `cfg`;
/// results list `(dW, pool_stride)` per stage.
pub fn search_strides(cfg: &NetworkConfig, target: usize, space: &StrideSpace) -> Result<Vec<Vec<(usize, usize)>>> {
    let (frames, _) = cfg.input.shape()?;
    let mut found = Vec::new();
    let mut chosen = Vec::with_capacity(cfg.stages.len());
    search(cfg, 0, frames, target, space, &mut chosen, &mut found);
    Ok(found)
}

fn search(
    cfg: &NetworkConfig,
    stage: usize,
    frames: usize,
    target: usize,
    space: &StrideSpace,
    chosen: &mut Vec<(usize, usize)>,
    found: &mut Vec<Vec<(usize, usize)>>,
) {
    let Some(spec) = cfg.stages.get(stage) else {
        let channels = cfg.stages.last().map_or(1, |s| s.d_out);
        if frames * channels == target {
            found.push(chosen.clone());
        }
        return;
    };
    let dws = if stage == 0 { space.first_dw.clone() } else { space.other_dw.clone() };
    let strides: Vec<usize> = if space.overlapping_pools { (1..=spec.pool_kw).collect() } else { vec![spec.pool_kw] };
    for dw in dws {
        let Some(conv) = window_count(frames, spec.kw, dw) else { continue };
        for &ps in &strides {
            let Some(pooled) = window_count(conv, spec.pool_kw, ps) else { continue };
            chosen.push((dw, ps));
            search(cfg, stage + 1, pooled, target, space, chosen, found);
            chosen.pop();
        }
    }
}

//! The neural engine: convolution, temporal max-pooling, tanh and linear
//! layers, the softmax log-likelihood, backpropagation, stochastic gradient
//! ascent with early stopping, and shape / capacity arithmetic.

mod config;
pub mod gradcheck;
pub mod grid;
pub mod layers;
pub mod loss;
mod model;
pub mod shape;
pub mod train;

pub use config::{parse_key_values, KeyValues};
pub use grid::{grid_search, Grid, GridEntry, GridReport};
pub use model::{ConvParams, DenseParams, Network, Parameters, Trace};
pub use shape::{output_shape, param_count, search_strides, CountConvention, ParamCount, ShapeTrace, StageShape};
pub use train::{sgd_train, sgd_train_with, EpochRecord, TrainingLog};

use crate::error::{structural, Result};
use crate::signal::ms_to_samples;
use crate::tensor::Tensor2;

/// Filter stage hyper-parameters: a convolution followed by max-pooling and tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvStageSpec {
    /// Kernel width in input frames (samples for the first stage on raw input).
    pub kw: usize,
    /// Shift between successive convolution windows.
    pub dw: usize,
    /// Number of filters.
    pub d_out: usize,
    pub pool_kw: usize,
    pub pool_stride: usize,
}

impl ConvStageSpec {
    /// A stage with non-overlapping pooling.
    pub fn new(kw: usize, dw: usize, d_out: usize, pool_kw: usize) -> Self {
        Self { kw, dw, d_out, pool_kw, pool_stride: pool_kw }
    }

    fn validate(&self, stage: usize) -> Result<()> {
        let fields = [
            ("kw", self.kw),
            ("dw", self.dw),
            ("d_out", self.d_out),
            ("pool_kw", self.pool_kw),
            ("pool_stride", self.pool_stride),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(crate::Error::Stage { stage, msg: format!("{name} must be at least 1") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    /// Single linear layer.
    Slp,
    /// One tanh hidden layer.
    Mlp,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Slp => "slp",
            ClassifierKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// Only meaningful for [`ClassifierKind::Mlp`].
    pub hidden_units: usize,
    pub num_classes: usize,
}

impl ClassifierSpec {
    pub fn slp(num_classes: usize) -> Self {
        Self { kind: ClassifierKind::Slp, hidden_units: 0, num_classes }
    }

    pub fn mlp(hidden_units: usize, num_classes: usize) -> Self {
        Self { kind: ClassifierKind::Mlp, hidden_units, num_classes }
    }
}

/// What the first layer is fed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSpec {
    /// A normalized window of `w_in_ms` of samples: `(samples, 1)`.
    Raw { w_in_ms: f64, rate: u32 },
    /// `context` stacked cepstral frames of `dim` values each: `(context, dim)`.
    Cepstral { context: usize, dim: usize },
}

impl InputSpec {
    pub fn raw(w_in_ms: f64) -> Self {
        InputSpec::Raw { w_in_ms, rate: 16000 }
    }

    /// `(frames, channels)` of one input example.
    pub fn shape(&self) -> Result<(usize, usize)> {
        match *self {
            InputSpec::Raw { w_in_ms, rate } => Ok((ms_to_samples(w_in_ms, rate)?, 1)),
            InputSpec::Cepstral { context, dim } => {
                if context == 0 || dim == 0 {
                    return Err(structural("cepstral input needs positive context and dim"));
                }
                Ok((context, dim))
            }
        }
    }
}

/// Complete description of a network and how to train it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input: InputSpec,
    pub stages: Vec<ConvStageSpec>,
    pub classifier: ClassifierSpec,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

pub const MAX_STAGES: usize = 5;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

impl NetworkConfig {
    pub fn new(input: InputSpec, stages: Vec<ConvStageSpec>, classifier: ClassifierSpec) -> Self {
        Self { input, stages, classifier, learning_rate: DEFAULT_LEARNING_RATE, seed: 0, max_epochs: 20, patience: 3 }
    }

    /// Checks field ranges and that every stage leaves at least one frame.
    pub fn validate(&self) -> Result<()> {
        if self.stages.len() > MAX_STAGES {
            return Err(structural(format!("{} filter stages exceed the maximum of {MAX_STAGES}", self.stages.len())));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate(i + 1)?;
        }
        if self.classifier.num_classes < 2 {
            return Err(structural("classifier needs at least 2 classes"));
        }
        if self.classifier.kind == ClassifierKind::Mlp && self.classifier.hidden_units == 0 {
            return Err(structural("mlp classifier needs hidden_units > 0"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(structural(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        output_shape(self).map(|_| ())
    }

    /// Samples per raw window, when the input is raw.
    pub fn window_samples(&self) -> Option<usize> {
        match self.input {
            InputSpec::Raw { .. } => self.input.shape().ok().map(|s| s.0),
            InputSpec::Cepstral { .. } => None,
        }
    }
}

/// A network input paired with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor2,
    pub label: usize,
}

/// Per-frame class posteriors; every row is a probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSequence {
    pub probs: Tensor2,
}

impl PosteriorSequence {
    /// Softmax of each row of network scores, floored at the smallest
    /// positive normal so log-posteriors stay finite.
    pub fn from_scores(scores: &Tensor2) -> Result<Self> {
        let mut probs = Tensor2::zeros(scores.frames(), scores.channels());
        for t in 0..scores.frames() {
            let p = loss::softmax(scores.row(t))?;
            for (dst, v) in probs.row_mut(t).iter_mut().zip(p) {
                *dst = v.max(f64::MIN_POSITIVE);
            }
        }
        Ok(Self { probs })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.channels()
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.probs.argmax_rows()
    }
}

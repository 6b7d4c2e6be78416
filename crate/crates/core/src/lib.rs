//! Raw-waveform acoustic modeling.
//!
//! The pipeline learns phone-class posteriors directly from normalized speech
//! samples with stacked convolution / max-pooling / tanh filter stages and a
//! linear (SLP) or one-hidden-layer (MLP) classifier, then decodes phone
//! sequences with a minimum-duration HMM Viterbi search.
//!
//! - [`signal`]: framing and per-window normalization of sample streams.
//! - [`features`]: the MFCC baseline (mel filterbank, DCT, deltas, context stacking).
//! - [`net`]: layers, likelihood, backpropagation, SGD training, shape and capacity arithmetic.
//! - [`decoder`]: class priors, scaled likelihoods and Viterbi decoding.
//! - [`eval`]: frame accuracy, phone error rate and reports.
//! - [`corpus`]: synthetic frame-labeled corpora and their on-disk format.

pub mod binio;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod net;
pub mod seed;
pub mod signal;
pub mod tensor;

pub use corpus::{SplitManifest, SyntheticPhoneModel, Utterance};
pub use decoder::{ClassPriors, HmmTopology, PhoneSequence};
pub use error::{Error, Result};
pub use eval::ScoreReport;
pub use features::{CepstralConfig, FeatureSequence};
pub use net::{
    ClassifierKind, ClassifierSpec, ConvStageSpec, Example, InputSpec, Network, NetworkConfig, Parameters,
    PosteriorSequence,
};
pub use signal::{FrameLabeling, RawWindow, SampleStream};
pub use tensor::Tensor2;

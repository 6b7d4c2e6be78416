use std::path::Path;

use rand::Rng;

use super::layers::{
    conv_backward_impl, conv_forward, linear_backward, linear_forward, maxpool_backward, maxpool_forward,
    tanh_backward_in_place, tanh_forward,
};
use super::{output_shape, ClassifierKind, NetworkConfig, PosteriorSequence};
use crate::binio::{Reader, Writer};
use crate::error::{structural, Error, Result};
use crate::seed::{self, Stream};
use crate::tensor::{read_tensor, write_tensor, Tensor2};

/// One filter stage's convolution: `d_out x (kW * d_in)` weights and a bias per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

/// A fully connected layer: `out x in` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

/// All trainable values. `head` holds one layer for an SLP, two (hidden,
/// output) for an MLP. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub stages: Vec<ConvParams>,
    pub head: Vec<DenseParams>,
}

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl Parameters {
    /// Weights and biases uniform in `+/- 1/sqrt(fan_in)`, drawn from the
    /// config seed's init stream.
    pub fn init(cfg: &NetworkConfig) -> Result<Self> {
        Self::build(cfg, |rows, cols, rng| {
            let bound = 1.0 / (cols as f64).sqrt();
            let w = Tensor2::from_vec(rows, cols, uniform(rng, rows * cols, bound)).expect("sized");
            (w, uniform(rng, rows, bound))
        })
    }

    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        Self::build(cfg, |rows, cols, _| (Tensor2::zeros(rows, cols), vec![0.0; rows]))
    }

    fn build(
        cfg: &NetworkConfig,
        mut make: impl FnMut(usize, usize, &mut rand_chacha::ChaCha8Rng) -> (Tensor2, Vec<f64>),
    ) -> Result<Self> {
        let trace = output_shape(cfg)?;
        let mut rng = seed::rng(cfg.seed, Stream::Init);
        let mut d_in = trace.input.1;
        let mut stages = Vec::with_capacity(cfg.stages.len());
        for s in &cfg.stages {
            let (weights, bias) = make(s.d_out, s.kw * d_in, &mut rng);
            stages.push(ConvParams { weights, bias });
            d_in = s.d_out;
        }
        let k = cfg.classifier.num_classes;
        let n_in = trace.classifier_input;
        let head = match cfg.classifier.kind {
            ClassifierKind::Slp => vec![make(k, n_in, &mut rng)],
            ClassifierKind::Mlp => {
                let h = cfg.classifier.hidden_units;
                vec![make(h, n_in, &mut rng), make(k, h, &mut rng)]
            }
        }
        .into_iter()
        .map(|(weights, bias)| DenseParams { weights, bias })
        .collect();
        Ok(Self { stages, head })
    }

    /// Every `(weights, bias)` pair, stages first.
    pub fn layers(&self) -> impl Iterator<Item = (&Tensor2, &[f64])> {
        self.stages
            .iter()
            .map(|s| (&s.weights, s.bias.as_slice()))
            .chain(self.head.iter().map(|d| (&d.weights, d.bias.as_slice())))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = (&mut Tensor2, &mut Vec<f64>)> {
        self.stages
            .iter_mut()
            .map(|s| (&mut s.weights, &mut s.bias))
            .chain(self.head.iter_mut().map(|d| (&mut d.weights, &mut d.bias)))
    }

    /// `self += step * other`, layer by layer.
    pub fn add_scaled(&mut self, other: &Parameters, step: f64) {
        for ((w, b), (ow, ob)) in self.layers_mut().zip(other.layers()) {
            for (x, y) in w.as_mut_slice().iter_mut().zip(ow.as_slice()) {
                *x += step * y;
            }
            for (x, y) in b.iter_mut().zip(ob) {
                *x += step * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|(w, b)| w.is_finite() && b.iter().all(|v| v.is_finite()))
    }

    /// All values flattened, layer by layer (weights then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers().flat_map(|(w, b)| w.as_slice().iter().chain(b).copied().collect::<Vec<_>>()).collect()
    }

    /// Inverse of [`Parameters::to_flat`] into an existing layout.
    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for (w, b) in self.layers_mut() {
            w.as_mut_slice().iter_mut().chain(b.iter_mut()).for_each(|v| *v = it.next().expect("flat length"));
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each stage (the example itself, then each stage's tanh output).
    stage_inputs: Vec<Tensor2>,
    /// Conv output frame count and pooling argmax per stage.
    pools: Vec<(usize, Vec<usize>)>,
    /// Flattened classifier input.
    features: Vec<f64>,
    /// MLP hidden activations (after tanh).
    hidden: Option<Vec<f64>>,
    pub scores: Vec<f64>,
}

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: Parameters,
}

impl Network {
    /// Freshly initialized network.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config)?;
        Ok(Self { config, params })
    }

    pub fn with_params(config: NetworkConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        let expected = Parameters::zeros(&config)?;
        let same_shapes = expected.layers().count() == params.layers().count()
            && expected
                .layers()
                .zip(params.layers())
                .all(|((ew, eb), (w, b))| ew.shape() == w.shape() && eb.len() == b.len());
        if !same_shapes {
            return Err(structural("parameter shapes do not match the network configuration"));
        }
        Ok(Self { config, params })
    }

    pub fn num_classes(&self) -> usize {
        self.config.classifier.num_classes
    }

    /// Class scores for one input.
    pub fn forward(&self, input: &Tensor2) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.scores)
    }

    /// Conv -> pool -> tanh per stage, frame-major flatten, then the classifier.
    pub fn forward_trace(&self, input: &Tensor2) -> Result<Trace> {
        let expected = self.config.input.shape()?;
        if input.shape() != expected {
            return Err(Error::Stage {
                stage: 0,
                msg: format!("input shaped {:?}, network expects {:?}", input.shape(), expected),
            });
        }
        let mut stage_inputs = vec![input.clone()];
        let mut pools = Vec::with_capacity(self.config.stages.len());
        for (i, (spec, p)) in self.config.stages.iter().zip(&self.params.stages).enumerate() {
            let stage_err = |e: Error| Error::Stage { stage: i + 1, msg: e.to_string() };
            let x = stage_inputs.last().expect("non-empty");
            let conv = conv_forward(x, &p.weights, &p.bias, spec.kw, spec.dw).map_err(stage_err)?;
            let (pooled, argmax) = maxpool_forward(&conv, spec.pool_kw, spec.pool_stride).map_err(stage_err)?;
            pools.push((conv.frames(), argmax));
            stage_inputs.push(tanh_forward(&pooled));
        }
        let features = stage_inputs.last().expect("non-empty").as_slice().to_vec();
        let (hidden, scores) = match self.params.head.as_slice() {
            [out] => (None, linear_forward(&features, &out.weights, &out.bias)?),
            [hid, out] => {
                let mut h = linear_forward(&features, &hid.weights, &hid.bias)?;
                h.iter_mut().for_each(|v| *v = v.tanh());
                let s = linear_forward(&h, &out.weights, &out.bias)?;
                (Some(h), s)
            }
            _ => return Err(structural("classifier must have one or two layers")),
        };
        Ok(Trace { stage_inputs, pools, features, hidden, scores })
    }

    /// Gradient of a scalar with respect to every parameter, given its
    /// gradient with respect to the scores of `trace`.
    pub fn backward(&self, trace: &Trace, grad_scores: &[f64]) -> Result<Parameters> {
        let mut head = Vec::with_capacity(self.params.head.len());
        let grad_features = match (self.params.head.as_slice(), &trace.hidden) {
            ([out], None) => {
                let g = linear_backward(&trace.features, &out.weights, grad_scores)?;
                head.push(DenseParams { weights: g.weights, bias: g.bias });
                g.input
            }
            ([hid, out], Some(h)) => {
                let g_out = linear_backward(h, &out.weights, grad_scores)?;
                let mut gh = g_out.input;
                tanh_backward_in_place(h, &mut gh);
                let g_hid = linear_backward(&trace.features, &hid.weights, &gh)?;
                head.push(DenseParams { weights: g_hid.weights, bias: g_hid.bias });
                head.push(DenseParams { weights: g_out.weights, bias: g_out.bias });
                g_hid.input
            }
            _ => return Err(structural("trace does not match the classifier")),
        };

        let n = self.config.stages.len();
        let mut stages = Vec::with_capacity(n);
        let last = &trace.stage_inputs[n];
        let mut grad = Tensor2::from_vec(last.frames(), last.channels(), grad_features)?;
        for i in (0..n).rev() {
            let spec = &self.config.stages[i];
            let p = &self.params.stages[i];
            let out = &trace.stage_inputs[i + 1];
            tanh_backward_in_place(out.as_slice(), grad.as_mut_slice());
            let (conv_frames, argmax) = &trace.pools[i];
            let grad_conv = maxpool_backward(argmax, &grad, *conv_frames)?;
            let (gw, gb, gi) =
                conv_backward_impl(&trace.stage_inputs[i], &p.weights, spec.kw, spec.dw, &grad_conv, i > 0)?;
            stages.push(ConvParams { weights: gw, bias: gb });
            if let Some(gi) = gi {
                grad = gi;
            }
        }
        stages.reverse();
        Ok(Parameters { stages, head })
    }

    /// Scores for a batch of inputs, one row each.
    pub fn scores(&self, inputs: &[Tensor2]) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(inputs.len(), self.num_classes());
        for (t, x) in inputs.iter().enumerate() {
            out.row_mut(t).copy_from_slice(&self.forward(x)?);
        }
        Ok(out)
    }

    pub fn posteriors(&self, inputs: &[Tensor2]) -> Result<PosteriorSequence> {
        PosteriorSequence::from_scores(&self.scores(inputs)?)
    }

    pub fn predict(&self, input: &Tensor2) -> Result<usize> {
        Ok(crate::tensor::argmax(&self.forward(input)?))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RCNNCKPT";
const CHECKPOINT_VERSION: u32 = 1;

impl Network {
    /// Checkpoint layout: magic `RCNNCKPT`, u32 version, 32-byte SHA-256 of
    /// the canonical config text, the config text (u32 length + bytes),
    /// u32 layer count, then per layer the weight tensor and the bias
    /// (each u64 rows, u64 cols, row-major f64), little-endian.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.bytes(&self.config.hash());
        w.string(&self.config.to_config_string());
        w.u32(self.params.layers().count() as u32);
        for (weights, bias) in self.params.layers() {
            write_tensor(&mut w, weights);
            write_tensor(&mut w, &Tensor2::from_vec(1, bias.len(), bias.to_vec()).expect("sized"));
        }
        w.into_inner()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(CHECKPOINT_MAGIC, "checkpoint", CHECKPOINT_VERSION)?;
        let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let text = r.string()?;
        let config = NetworkConfig::parse(&text)?;
        if config.hash() != hash {
            return Err(Error::ConfigHashMismatch);
        }
        let mut params = Parameters::zeros(&config)?;
        let n = r.u32()? as usize;
        if n != params.layers().count() {
            return Err(r.error(format!("{n} layers stored, config describes {}", params.layers().count())));
        }
        for (w, b) in params.layers_mut() {
            let at = r.offset();
            let tw = read_tensor(&mut r)?;
            let tb = read_tensor(&mut r)?;
            if tw.shape() != w.shape() || tb.shape() != (1, b.len()) {
                return Err(Error::Read { offset: at, msg: "layer shape disagrees with config".into() });
            }
            *w = tw;
            *b = tb.into_vec();
        }
        r.finish()?;
        Ok(Self { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }

    /// Loads a checkpoint and requires it to have been written for `expected`.
    pub fn load_for(path: impl AsRef<Path>, expected: &NetworkConfig) -> Result<Self> {
        let net = Self::load(path)?;
        if net.config.hash() != expected.hash() {
            return Err(Error::ConfigHashMismatch);
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::{central_diff, rel_error};
    use crate::net::loss::nll_value_and_grad;
    use crate::net::{ClassifierSpec, ConvStageSpec, InputSpec};
    use rand::SeedableRng;

    fn small_cfg(kind: ClassifierKind) -> NetworkConfig {
        let classifier = match kind {
            ClassifierKind::Slp => ClassifierSpec::slp(3),
            ClassifierKind::Mlp => ClassifierSpec::mlp(6, 3),
        };
        let mut cfg = NetworkConfig::new(
            InputSpec::Raw { w_in_ms: 5.0, rate: 8000 },
            vec![ConvStageSpec { kw: 5, dw: 2, d_out: 4, pool_kw: 3, pool_stride: 2 }, ConvStageSpec::new(3, 1, 3, 2)],
            classifier,
        );
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn whole_network_gradient_matches_finite_differences() {
        for kind in [ClassifierKind::Slp, ClassifierKind::Mlp] {
            let net = Network::new(small_cfg(kind)).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            let x = Tensor2::column((0..40).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let trace = net.forward_trace(&x).unwrap();
            let (_, g) = nll_value_and_grad(&trace.scores, 1).unwrap();
            let grads = net.backward(&trace, &g).unwrap();
            let mut probe = net.clone();
            let numeric = central_diff(&net.params.to_flat(), 1e-5, |v| {
                probe.params.set_flat(v);
                nll_value_and_grad(&probe.forward(&x).unwrap(), 1).unwrap().0
            });
            let err = rel_error(&grads.to_flat(), &numeric);
            assert!(err < 1e-4, "{kind:?}: {err}");
        }
    }

    #[test]
    fn single_stage_full_width_collapses_to_linear_map() {
        // one filter spanning the window, no pooling: score_c = w_c * tanh(m . x + b0) + b_c
        let mut cfg = NetworkConfig::new(
            InputSpec::Cepstral { context: 4, dim: 1 },
            vec![ConvStageSpec::new(4, 1, 1, 1)],
            ClassifierSpec::slp(2),
        );
        cfg.seed = 1;
        let mut net = Network::new(cfg).unwrap();
        net.params.stages[0].weights = Tensor2::from_rows(&[[0.1, 0.2, 0.3, 0.4]]).unwrap();
        net.params.stages[0].bias = vec![0.0];
        net.params.head[0].weights = Tensor2::from_rows(&[[1.0], [-1.0]]).unwrap();
        net.params.head[0].bias = vec![0.0, 0.0];
        let x = Tensor2::column(vec![1.0, -1.0, 0.5, 0.25]);
        let z: f64 = 0.1 - 0.2 + 0.15 + 0.1;
        assert_eq!(net.forward(&x).unwrap(), vec![z.tanh(), -z.tanh()]);
    }

    #[test]
    fn input_shape_errors_name_the_stage() {
        let net = Network::new(small_cfg(ClassifierKind::Slp)).unwrap();
        match net.forward(&Tensor2::column(vec![0.0; 39])) {
            Err(Error::Stage { stage: 0, .. }) => {}
            other => panic!("expected stage error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_and_hash_check() {
        let net = Network::new(small_cfg(ClassifierKind::Mlp)).unwrap();
        let bytes = net.to_checkpoint_bytes();
        assert_eq!(Network::from_checkpoint_bytes(&bytes).unwrap(), net);
        assert!(matches!(Network::from_checkpoint_bytes(&bytes[..bytes.len() - 3]), Err(Error::Read { .. })));
        // flip a hash byte
        let mut bad = bytes.clone();
        bad[12] ^= 0xff;
        assert!(matches!(Network::from_checkpoint_bytes(&bad), Err(Error::ConfigHashMismatch)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        net.save(&path).unwrap();
        let mut other = net.config.clone();
        other.learning_rate = 0.5;
        assert!(matches!(Network::load_for(&path, &other), Err(Error::ConfigHashMismatch)));
        assert_eq!(Network::load_for(&path, &net.config).unwrap(), net);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Parameters::init(&small_cfg(ClassifierKind::Slp)).unwrap();
        assert_eq!(a, Parameters::init(&small_cfg(ClassifierKind::Slp)).unwrap());
        let bound = 1.0 / (5.0f64).sqrt();
        assert!(a.stages[0].weights.as_slice().iter().all(|v| v.abs() <= bound));
    }
}

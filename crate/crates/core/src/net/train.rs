//! Per-example stochastic gradient ascent on the log-likelihood, with early
//! stopping on validation frame accuracy.

use std::fmt;

use rand::seq::SliceRandom;

use super::loss::nll_value_and_grad;
use super::{Example, Network, NetworkConfig};
use crate::error::{structural, Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example log-likelihood over the epoch's updates.
    pub mean_loglik: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0 if no epoch improved on the
    /// initial parameters).
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

impl fmt::Display for TrainingLog {
    /// One line per epoch: `epoch mean_loglik valid_accuracy`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.epochs {
            writeln!(f, "{} {:.6} {:.6}", e.epoch, e.mean_loglik, e.valid_accuracy)?;
        }
        Ok(())
    }
}

/// Fraction of examples whose highest score is their label.
pub fn accuracy(net: &Network, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(structural("accuracy of an empty example set"));
    }
    let mut hits = 0usize;
    for ex in examples {
        if net.predict(&ex.input)? == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

pub fn sgd_train(cfg: &NetworkConfig, train: &[Example], valid: &[Example]) -> Result<(Network, TrainingLog)> {
    sgd_train_with(cfg, train, valid, |_| {})
}

/// Trains from a fresh initialization, calling `on_epoch` after each epoch.
///
/// Examples are visited in a fresh seeded shuffle each epoch and every
/// example takes one ascent step of `learning_rate` times its gradient.
/// Returns the parameters of the best validation epoch.
pub fn sgd_train_with(
    cfg: &NetworkConfig,
    train: &[Example],
    valid: &[Example],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network, TrainingLog)> {
    if train.is_empty() || valid.is_empty() {
        return Err(structural("training needs non-empty train and validation sets"));
    }
    let k = cfg.classifier.num_classes;
    if let Some(ex) = train.iter().chain(valid).find(|ex| ex.label >= k) {
        return Err(structural(format!("label {} out of range for {k} classes", ex.label)));
    }
    let mut net = Network::new(cfg.clone())?;
    let mut rng = seed::rng(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = TrainingLog { best_accuracy: accuracy(&net, valid)?, ..Default::default() };
    let mut best = net.params.clone();
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = &train[i];
            let trace = net.forward_trace(&ex.input)?;
            let (loglik, grad) = nll_value_and_grad(&trace.scores, ex.label)?;
            if !loglik.is_finite() {
                return Err(Error::Divergence { epoch, index: i, value: loglik });
            }
            total += loglik;
            let grads = net.backward(&trace, &grad)?;
            net.params.add_scaled(&grads, cfg.learning_rate);
        }
        if !net.params.is_finite() {
            return Err(Error::Divergence { epoch, index: train.len(), value: f64::NAN });
        }
        let record =
            EpochRecord { epoch, mean_loglik: total / train.len() as f64, valid_accuracy: accuracy(&net, valid)? };
        on_epoch(&record);
        log.epochs.push(record);
        if record.valid_accuracy > log.best_accuracy {
            log.best_accuracy = record.valid_accuracy;
            log.best_epoch = epoch;
            best.clone_from(&net.params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    net.params = best;
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ClassifierSpec, InputSpec};
    use crate::tensor::Tensor2;
    use rand::{Rng, SeedableRng};

    fn linear_cfg(dim: usize, lr: f64) -> NetworkConfig {
        let mut cfg = NetworkConfig::new(InputSpec::Cepstral { context: 1, dim }, vec![], ClassifierSpec::slp(2));
        cfg.learning_rate = lr;
        cfg.max_epochs = 30;
        cfg.patience = 5;
        cfg.seed = 3;
        cfg
    }

    /// Two classes on either side of the hyperplane `x . u = 0`, with a margin.
    fn separable(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = [1.0, -2.0, 0.5, 1.0];
        (0..n)
            .map(|i| {
                let label = i % 2;
                loop {
                    let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let s: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
                    if s.abs() > 0.3 && (s > 0.0) == (label == 1) {
                        return Example { input: Tensor2::from_vec(1, 4, x).unwrap(), label };
                    }
                }
            })
            .collect()
    }

    #[test]
    fn separable_classes_reach_full_accuracy() {
        let (net, log) = sgd_train(&linear_cfg(4, 0.1), &separable(200, 1), &separable(100, 2)).unwrap();
        assert_eq!(log.best_accuracy, 1.0);
        assert_eq!(accuracy(&net, &separable(100, 2)).unwrap(), 1.0);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = linear_cfg(4, 0.0);
        let (net, log) = sgd_train(&cfg, &separable(20, 1), &separable(10, 2)).unwrap();
        assert_eq!(net.params, Network::new(cfg).unwrap().params);
        let first = log.epochs[0].valid_accuracy;
        assert!(log.epochs.iter().all(|e| e.valid_accuracy == first));
        assert_eq!(log.best_epoch, 0);
    }

    #[test]
    fn single_example_likelihood_rises_monotonically() {
        let cfg = linear_cfg(4, 0.05);
        let ex = &separable(1, 4)[0];
        let mut net = Network::new(cfg.clone()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..100 {
            let trace = net.forward_trace(&ex.input).unwrap();
            let (l, g) = nll_value_and_grad(&trace.scores, ex.label).unwrap();
            assert!(l > prev, "{l} <= {prev}");
            prev = l;
            let grads = net.backward(&trace, &g).unwrap();
            net.params.add_scaled(&grads, cfg.learning_rate);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = linear_cfg(4, 0.1);
        let (a, la) = sgd_train(&cfg, &separable(50, 1), &separable(20, 2)).unwrap();
        let (b, lb) = sgd_train(&cfg, &separable(50, 1), &separable(20, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = linear_cfg(4, 1e306);
        let mut train = separable(10, 1);
        train[0].input.as_mut_slice()[0] = 1e300;
        match sgd_train(&cfg, &train, &separable(4, 2)) {
            Err(Error::Divergence { epoch: 1, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_sets_and_bad_labels() {
        let cfg = linear_cfg(4, 0.1);
        assert!(sgd_train(&cfg, &[], &separable(2, 1)).is_err());
        let mut bad = separable(2, 1);
        bad[0].label = 7;
        assert!(sgd_train(&cfg, &bad, &separable(2, 1)).is_err());
    }

    #[test]
    fn log_lines() {
        let log = TrainingLog {
            epochs: vec![EpochRecord { epoch: 1, mean_loglik: -0.5, valid_accuracy: 0.75 }],
            best_epoch: 1,
            best_accuracy: 0.75,
        };
        assert_eq!(log.to_string(), "1 -0.500000 0.750000\n");
    }
}

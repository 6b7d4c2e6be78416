use proptest::prelude::*;
use rawcnn::corpus::{dataset_examples, default_phone_models, generate_corpus, utterance_inputs, CorpusSpec};
use rawcnn::decoder::{decode_posteriors, estimate_priors};
use rawcnn::eval::{corpus_edit_counts, frame_accuracy};
use rawcnn::net::{output_shape, sgd_train, train::accuracy};
use rawcnn::{ClassifierSpec, ConvStageSpec, HmmTopology, InputSpec, Network, NetworkConfig, Tensor2};

fn small_corpus(noise: f64, seed: u64) -> rawcnn::corpus::Corpus {
    let spec = CorpusSpec { num_utts: 40, min_frames: 20, max_frames: 30, rate: 16000, seed };
    generate_corpus(&default_phone_models(3, noise), &spec).unwrap()
}

fn raw_config() -> NetworkConfig {
    let mut cfg = NetworkConfig::new(
        InputSpec::raw(110.0),
        vec![ConvStageSpec::new(30, 10, 12, 3), ConvStageSpec::new(5, 1, 12, 3)],
        ClassifierSpec::slp(3),
    );
    cfg.learning_rate = 0.01;
    cfg.max_epochs = 6;
    cfg.seed = 2;
    cfg
}

#[test]
fn raw_waveform_pipeline_decodes_clean_speech() {
    let corpus = small_corpus(0.0, 1);
    let cfg = raw_config();
    let (train, valid, test) = (corpus.train(), corpus.valid(), corpus.test());
    let (net, log) =
        sgd_train(&cfg, &dataset_examples(&cfg, &train).unwrap(), &dataset_examples(&cfg, &valid).unwrap()).unwrap();
    assert!(log.best_accuracy > 0.9, "{log}");

    let priors = estimate_priors(train.labelings(), 3).unwrap();
    let topo = HmmTopology::new(3);
    let (mut predicted, mut labels, mut hyps) = (Vec::new(), Vec::new(), Vec::new());
    for u in &test.utterances {
        let post = net.posteriors(&utterance_inputs(&cfg, u).unwrap()).unwrap();
        predicted.extend(post.argmax());
        labels.extend_from_slice(&u.labeling.labels);
        hyps.push(decode_posteriors(&post, &priors, &topo).unwrap().sequence.phones);
    }
    assert!(frame_accuracy(&predicted, &labels).unwrap() > 0.9);
    let edits =
        corpus_edit_counts(hyps.iter().zip(&test.utterances).map(|(h, u)| (&h[..], &u.reference.phones[..]))).unwrap();
    assert!(edits.per() < 0.2, "PER {}", edits.per());
}

#[test]
fn checkpoint_reload_gives_identical_posteriors() {
    let corpus = small_corpus(0.3, 2);
    let mut cfg = raw_config();
    cfg.max_epochs = 1;
    let ex = dataset_examples(&cfg, &corpus.train()).unwrap();
    let (net, _) = sgd_train(&cfg, &ex, &ex[..50]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    net.save(&path).unwrap();
    let back = Network::load_for(&path, &cfg).unwrap();
    let inputs: Vec<Tensor2> = ex[..20].iter().map(|e| e.input.clone()).collect();
    assert_eq!(net.posteriors(&inputs).unwrap(), back.posteriors(&inputs).unwrap());
    let mut other = cfg.clone();
    other.seed += 1;
    assert!(Network::load_for(&path, &other).is_err());
}

#[test]
fn cepstral_baseline_learns() {
    let corpus = small_corpus(0.3, 3);
    let mut cfg = NetworkConfig::new(InputSpec::Cepstral { context: 9, dim: 39 }, vec![], ClassifierSpec::mlp(30, 3));
    cfg.learning_rate = 0.01;
    cfg.max_epochs = 5;
    let train = dataset_examples(&cfg, &corpus.train()).unwrap();
    let valid = dataset_examples(&cfg, &corpus.valid()).unwrap();
    let (net, log) = sgd_train(&cfg, &train, &valid).unwrap();
    assert!(log.best_accuracy > 0.8, "{log}");
    assert_eq!(accuracy(&net, &valid).unwrap(), log.best_accuracy);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The forward pass produces exactly the shape the calculator predicts,
    /// for architectures drawn from the tuning ranges.
    #[test]
    fn forward_matches_shape_calculator(
        w_in in 10usize..=70,
        kw1 in 10usize..=90,
        dw1 in 1usize..=10,
        kwn in 1usize..=11,
        filters in 20usize..=40,
        pool in 2usize..=6,
        stages in 1usize..=3,
    ) {
        let specs = (0..stages)
            .map(|i| if i == 0 { ConvStageSpec::new(kw1, dw1, filters, pool) } else { ConvStageSpec::new(kwn, 1, filters, pool) })
            .collect();
        let cfg = NetworkConfig::new(InputSpec::raw(10.0 * w_in as f64), specs, ClassifierSpec::slp(4));
        match output_shape(&cfg) {
            Ok(shape) => {
                let net = Network::new(cfg.clone()).unwrap();
                let input = Tensor2::zeros(shape.input.0, 1);
                let trace = net.forward_trace(&input).unwrap();
                prop_assert_eq!(trace.scores.len(), 4);
                let last = shape.stages.last().unwrap();
                prop_assert_eq!(last.pool_frames * last.channels, shape.classifier_input);
                prop_assert!(Network::new(cfg).is_ok());
            }
            Err(e) => {
                let is_stage = matches!(e, rawcnn::Error::Stage { .. });
                prop_assert!(is_stage);
            }
        }
    }
}

//! Synthetic frame-labeled corpora standing in for recorded speech.
//!
//! Each phone class is a recipe of sinusoidal partials plus white noise.
//! An utterance is a random phone sequence (no phone follows itself), each
//! phone held for a random number of 10 ms frames, rendered segment by
//! segment with fresh random phases.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::binio::{Reader, Writer};
use crate::decoder::PhoneSequence;
use crate::error::{structural, Result};
use crate::features::{cepstral_features, normalize_columns, CepstralConfig};
use crate::net::{Example, InputSpec, NetworkConfig};
use crate::seed::{self, Stream};
use crate::signal::{ms_to_samples, normalized_windows, FrameLabeling, SampleStream, FRAME_SHIFT_MS};
use crate::tensor::Tensor2;

/// Minimum frames any phone may last (the decoder's per-phone state count).
pub const MIN_PHONE_FRAMES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPhoneModel {
    /// `(frequency Hz, amplitude)` pairs.
    pub partials: Vec<(f64, f64)>,
    /// Standard deviation of additive white noise.
    pub noise: f64,
    pub min_frames: usize,
    pub max_frames: usize,
}

impl SyntheticPhoneModel {
    fn validate(&self, class: usize, rate: u32) -> Result<()> {
        let nyquist = f64::from(rate) / 2.0;
        if let Some((f, _)) = self.partials.iter().find(|(f, _)| !(*f > 0.0 && *f < nyquist)) {
            return Err(structural(format!("class {class}: partial {f} Hz outside (0, {nyquist})")));
        }
        if self.min_frames < MIN_PHONE_FRAMES || self.max_frames < self.min_frames {
            return Err(structural(format!(
                "class {class}: duration range {}..={} frames must start at {MIN_PHONE_FRAMES} or more",
                self.min_frames, self.max_frames
            )));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(structural(format!("class {class}: noise level must be non-negative")));
        }
        Ok(())
    }

    /// Mean duration in frames under the uniform duration draw.
    pub fn mean_frames(&self) -> f64 {
        (self.min_frames + self.max_frames) as f64 / 2.0
    }
}

/// Lowest fundamental of [`default_phone_models`], in Hz.
pub const LADDER_BASE_HZ: f64 = 300.0;
/// Fundamental spacing between neighbouring classes, in Hz.
pub const LADDER_STEP_HZ: f64 = 60.0;

/// A ladder of `num_classes` harmonic recipes: class `c` has fundamental
/// `300 + 60 c` Hz plus its second harmonic. Neighbouring classes are close
/// enough that a single short filter cannot tell them apart.
pub fn default_phone_models(num_classes: usize, noise: f64) -> Vec<SyntheticPhoneModel> {
    (0..num_classes)
        .map(|c| {
            let f0 = LADDER_BASE_HZ + LADDER_STEP_HZ * c as f64;
            SyntheticPhoneModel {
                partials: vec![(f0, 0.6), (2.0 * f0, 0.4)],
                noise,
                min_frames: MIN_PHONE_FRAMES,
                max_frames: 8,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub stream: SampleStream,
    pub labeling: FrameLabeling,
    pub reference: PhoneSequence,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.labeling.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    /// Lines `train <ids...>`, `valid <ids...>`, `test <ids...>`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, ids) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            let _ = writeln!(s, "{name} {}", ids.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let ids: Vec<String> = it.clone().skip(1).map(String::from).collect();
            match it.next() {
                Some("train") => m.train = ids,
                Some("valid") => m.valid = ids,
                Some("test") => m.test = ids,
                other => return Err(structural(format!("unknown split {other:?} in manifest"))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() || self.valid.is_empty() {
            return Err(structural("manifest needs non-empty train and valid splits"));
        }
        let mut all: Vec<&String> = self.train.iter().chain(&self.valid).chain(&self.test).collect();
        all.sort();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(structural("manifest splits overlap"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub num_classes: usize,
    pub utterances: Vec<Utterance>,
    pub manifest: SplitManifest,
}

impl Corpus {
    fn select(&self, ids: &[String]) -> Dataset {
        let utterances = ids.iter().filter_map(|id| self.utterances.iter().find(|u| &u.id == id).cloned()).collect();
        Dataset { num_classes: self.num_classes, utterances }
    }

    pub fn train(&self) -> Dataset {
        self.select(&self.manifest.train)
    }

    pub fn valid(&self) -> Dataset {
        self.select(&self.manifest.valid)
    }

    pub fn test(&self) -> Dataset {
        self.select(&self.manifest.test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub num_utts: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub rate: u32,
    pub seed: u64,
}

/// Draws every utterance from its own seed derived from `spec.seed`, then
/// splits 80/10/10 by utterance order.
pub fn generate_corpus(models: &[SyntheticPhoneModel], spec: &CorpusSpec) -> Result<Corpus> {
    if models.is_empty() {
        return Err(structural("corpus needs at least one phone class"));
    }
    if models.len() > usize::from(u16::MAX) {
        return Err(structural("too many classes for 16-bit labels"));
    }
    for (c, m) in models.iter().enumerate() {
        m.validate(c, spec.rate)?;
    }
    if spec.min_frames < MIN_PHONE_FRAMES || spec.max_frames < spec.min_frames {
        return Err(structural(format!(
            "utterance length range {}..={} frames cannot hold a {MIN_PHONE_FRAMES}-frame phone",
            spec.min_frames, spec.max_frames
        )));
    }
    if spec.num_utts < 2 {
        return Err(structural("corpus needs at least 2 utterances for train and valid splits"));
    }
    let shift = ms_to_samples(FRAME_SHIFT_MS, spec.rate)?;
    let utterances =
        (0..spec.num_utts).map(|i| render_utterance(models, spec, shift, i)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = utterances.iter().map(|u| u.id.clone()).collect();
    let n = ids.len();
    let n_train = (n * 8 / 10).max(1);
    let n_valid = (n / 10).max(1).min(n - n_train);
    let manifest = SplitManifest {
        train: ids[..n_train].to_vec(),
        valid: ids[n_train..n_train + n_valid].to_vec(),
        test: ids[n_train + n_valid..].to_vec(),
    };
    Ok(Corpus { num_classes: models.len(), utterances, manifest })
}

fn render_utterance(
    models: &[SyntheticPhoneModel],
    spec: &CorpusSpec,
    shift: usize,
    index: usize,
) -> Result<Utterance> {
    let mut rng = seed::rng(seed::derive(spec.seed, index as u64), Stream::Data);
    let k = models.len();
    let total = rng.gen_range(spec.min_frames..=spec.max_frames);
    let mut labels = Vec::with_capacity(total);
    let mut prev: Option<usize> = None;
    while labels.len() < total {
        let phone = match prev {
            None => rng.gen_range(0..k),
            Some(_) if k == 1 => 0,
            Some(p) => {
                // uniform over the other classes
                let q = rng.gen_range(0..k - 1);
                if q >= p {
                    q + 1
                } else {
                    q
                }
            }
        };
        let m = &models[phone];
        let remaining = total - labels.len();
        let mut dur = rng.gen_range(m.min_frames..=m.max_frames);
        // never leave a tail too short to be a phone
        if dur >= remaining || remaining - dur < MIN_PHONE_FRAMES {
            dur = remaining;
        }
        labels.extend(std::iter::repeat_n(phone, dur));
        prev = Some(phone);
    }

    let mut samples = Vec::with_capacity(total * shift);
    let reference = PhoneSequence::from_frame_labels(&labels);
    for (&phone, len) in reference.phones.iter().zip(reference.segment_lengths(total)) {
        let m = &models[phone];
        let phases: Vec<f64> = m.partials.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        for n in 0..len * shift {
            let t = n as f64 / f64::from(spec.rate);
            let mut v: f64 =
                m.partials.iter().zip(&phases).map(|(&(f, a), ph)| a * (2.0 * PI * f * t + ph).sin()).sum();
            if m.noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += m.noise * z;
            }
            samples.push(v as f32);
        }
    }
    Ok(Utterance {
        id: format!("utt{index:05}"),
        stream: SampleStream::new(samples, spec.rate)?,
        labeling: FrameLabeling::new(labels, k)?,
        reference,
    })
}

/// Frame-level stationary class distribution of the phone sampler: phones
/// are visited uniformly, so frame shares follow mean durations.
pub fn stationary_frame_distribution(models: &[SyntheticPhoneModel]) -> Vec<f64> {
    let total: f64 = models.iter().map(SyntheticPhoneModel::mean_frames).sum();
    models.iter().map(|m| m.mean_frames() / total).collect()
}

/// Utterances of one split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub num_classes: usize,
    pub utterances: Vec<Utterance>,
}

const DATASET_MAGIC: &[u8; 8] = b"RCNNDATA";
const DATASET_VERSION: u32 = 1;

impl Dataset {
    /// Layout (little-endian): magic `RCNNDATA`, u32 version, u32 class
    /// count, u32 record count, then per utterance {u32 id length, id bytes,
    /// u32 rate, u64 sample count, f32 samples, u64 frame count, u16 labels,
    /// u32 segment count, (u16 phone, u32 start frame) per segment}.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.u32(self.num_classes as u32);
        w.u32(self.utterances.len() as u32);
        for u in &self.utterances {
            w.string(&u.id);
            w.u32(u.stream.rate);
            w.u64(u.stream.samples.len() as u64);
            u.stream.samples.iter().for_each(|&s| w.f32(s));
            w.u64(u.labeling.labels.len() as u64);
            u.labeling.labels.iter().for_each(|&l| w.u16(l as u16));
            w.u32(u.reference.phones.len() as u32);
            for (&p, &b) in u.reference.phones.iter().zip(&u.reference.boundaries) {
                w.u16(p as u16);
                w.u32(b as u32);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(DATASET_MAGIC, "dataset", DATASET_VERSION)?;
        let num_classes = r.u32()? as usize;
        let count = r.u32()?;
        let mut utterances = Vec::new();
        for _ in 0..count {
            let id = r.string()?;
            let at = r.offset();
            let rate = r.u32()?;
            let n = r.count(4)?;
            let samples = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let stream =
                SampleStream::new(samples, rate).map_err(|e| crate::Error::Read { offset: at, msg: e.to_string() })?;
            let at = r.offset();
            let n = r.count(2)?;
            let labels = (0..n).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
            let labeling = FrameLabeling::new(labels, num_classes)
                .map_err(|e| crate::Error::Read { offset: at, msg: e.to_string() })?;
            let segs = r.u32()?;
            let mut reference = PhoneSequence::default();
            for _ in 0..segs {
                reference.phones.push(usize::from(r.u16()?));
                reference.boundaries.push(r.u32()? as usize);
            }
            utterances.push(Utterance { id, stream, labeling, reference });
        }
        r.finish()?;
        Ok(Self { num_classes, utterances })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn labelings(&self) -> impl Iterator<Item = &FrameLabeling> {
        self.utterances.iter().map(|u| &u.labeling)
    }

    pub fn num_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::num_frames).sum()
    }
}

/// Network inputs for every frame of `utt` as `cfg` expects them: normalized
/// raw windows, or stacked cepstral frames (normalized per utterance and
/// dimension) reshaped to `(context, dim)`.
pub fn utterance_inputs(cfg: &NetworkConfig, utt: &Utterance) -> Result<Vec<Tensor2>> {
    match cfg.input {
        InputSpec::Raw { w_in_ms, rate } => {
            if rate != utt.stream.rate {
                return Err(structural(format!(
                    "network expects {rate} Hz, utterance {} is {} Hz",
                    utt.id, utt.stream.rate
                )));
            }
            Ok(normalized_windows(&utt.stream, &utt.labeling, w_in_ms)?
                .into_iter()
                .map(|w| Tensor2::column(w.samples))
                .collect())
        }
        InputSpec::Cepstral { context, dim } => {
            let ccfg = CepstralConfig { stack_context: context, ..CepstralConfig::default() };
            if 3 * ccfg.num_coeffs != dim {
                return Err(structural(format!(
                    "cepstral frames have {} values, config says {dim}",
                    3 * ccfg.num_coeffs
                )));
            }
            let mut feats = cepstral_features(&utt.stream, &ccfg)?;
            normalize_columns(&mut feats.frames);
            if feats.len() != utt.num_frames() {
                return Err(structural(format!("{} feature frames for {} labels", feats.len(), utt.num_frames())));
            }
            feats.frames.rows().map(|row| Tensor2::from_vec(context, dim, row.to_vec())).collect()
        }
    }
}

/// Labeled examples for every frame of every utterance.
pub fn dataset_examples(cfg: &NetworkConfig, data: &Dataset) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(data.num_frames());
    for u in &data.utterances {
        let inputs = utterance_inputs(cfg, u)?;
        out.extend(inputs.into_iter().zip(&u.labeling.labels).map(|(input, &label)| Example { input, label }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn spec(num_utts: usize, seed: u64) -> CorpusSpec {
        CorpusSpec { num_utts, min_frames: 20, max_frames: 40, rate: 16000, seed }
    }

    #[test]
    fn single_class_noise_free_is_a_pure_tone() {
        let models =
            vec![SyntheticPhoneModel { partials: vec![(500.0, 1.0)], noise: 0.0, min_frames: 3, max_frames: 8 }];
        let c = generate_corpus(&models, &spec(3, 1)).unwrap();
        for u in &c.utterances {
            assert!(u.labeling.labels.iter().all(|&l| l == 0));
            assert_eq!(u.reference.phones, vec![0]);
            assert_eq!(u.stream.len(), u.num_frames() * 160);
            let peak = u.stream.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert!(peak <= 1.0 && peak > 0.99);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let models = default_phone_models(5, 0.3);
        assert_eq!(generate_corpus(&models, &spec(12, 7)).unwrap(), generate_corpus(&models, &spec(12, 7)).unwrap());
        assert_ne!(generate_corpus(&models, &spec(12, 7)).unwrap(), generate_corpus(&models, &spec(12, 8)).unwrap());
    }

    #[test]
    fn labels_reconstruct_references_and_respect_durations() {
        let c = generate_corpus(&default_phone_models(4, 0.1), &spec(30, 3)).unwrap();
        for u in &c.utterances {
            assert_eq!(PhoneSequence::from_frame_labels(&u.labeling.labels), u.reference);
            assert!(u.reference.segment_lengths(u.num_frames()).iter().all(|&n| n >= MIN_PHONE_FRAMES));
            assert!(u.reference.phones.windows(2).all(|w| w[0] != w[1]));
        }
        assert_eq!((c.manifest.train.len(), c.manifest.valid.len(), c.manifest.test.len()), (24, 3, 3));
        c.manifest.validate().unwrap();
        assert_eq!(SplitManifest::parse(&c.manifest.to_text()).unwrap(), c.manifest);
    }

    #[test]
    fn class_frequencies_follow_the_stationary_distribution() {
        let mut models = default_phone_models(5, 0.0);
        // uneven durations make the frame distribution non-uniform
        models[0].max_frames = 12;
        models[3].min_frames = 5;
        let c = generate_corpus(&models, &spec(200, 11)).unwrap();
        let mut counts = [0usize; 5];
        c.utterances.iter().flat_map(|u| &u.labeling.labels).for_each(|&l| counts[l] += 1);
        let total: usize = counts.iter().sum();
        for (count, p) in counts.iter().zip(stationary_frame_distribution(&models)) {
            let observed = *count as f64 / total as f64;
            assert!((observed - p).abs() <= 0.2 * p, "{observed} vs {p}");
        }
    }

    /// Magnitude spectrum of each 10 ms frame by direct DFT.
    fn frame_spectra(u: &Utterance) -> Vec<Vec<f64>> {
        let n = 160;
        u.stream
            .samples
            .chunks(n)
            .map(|frame| {
                (1..n / 2)
                    .map(|k| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for (t, &x) in frame.iter().enumerate() {
                            let a = 2.0 * PI * (k * t) as f64 / n as f64;
                            re += f64::from(x) * a.cos();
                            im -= f64::from(x) * a.sin();
                        }
                        re.hypot(im)
                    })
                    .collect()
            })
            .collect()
    }

    fn nearest_centroid_accuracy(noise: f64) -> f64 {
        let c = generate_corpus(&default_phone_models(5, noise), &spec(40, 9)).unwrap();
        let (train, test) = c.utterances.split_at(30);
        let mut sums = vec![vec![0.0; 79]; 5];
        let mut counts = vec![0usize; 5];
        for u in train {
            for (x, &l) in frame_spectra(u).iter().zip(&u.labeling.labels) {
                sums[l].iter_mut().zip(x).for_each(|(s, v)| *s += v);
                counts[l] += 1;
            }
        }
        let centroids: Vec<Vec<f64>> =
            sums.iter().zip(&counts).map(|(s, &n)| s.iter().map(|v| v / n as f64).collect()).collect();
        let (mut hits, mut total) = (0, 0);
        for u in test {
            for (x, &l) in frame_spectra(u).iter().zip(&u.labeling.labels) {
                let dist = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let best = (0..5).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap();
                hits += usize::from(best == l);
                total += 1;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn noise_dial_lowers_separability() {
        let acc: Vec<f64> = [0.0, 2.0, 6.0].iter().map(|&n| nearest_centroid_accuracy(n)).collect();
        assert!(acc[0] > 0.95, "{acc:?}");
        assert!(acc[0] > acc[1] && acc[1] > acc[2], "{acc:?}");
    }

    #[test]
    fn unsatisfiable_constraints() {
        let mut m = default_phone_models(2, 0.0);
        m[1].min_frames = 2;
        assert!(generate_corpus(&m, &spec(5, 1)).is_err());
        let m = default_phone_models(2, 0.0);
        let bad = CorpusSpec { min_frames: 2, ..spec(5, 1) };
        assert!(generate_corpus(&m, &bad).is_err());
        let m = default_phone_models(70, 0.0);
        assert!(generate_corpus(&m, &spec(5, 1)).is_err());
    }

    #[test]
    fn dataset_round_trip_truncation_and_version() {
        let c = generate_corpus(&default_phone_models(3, 0.2), &spec(4, 5)).unwrap();
        let d = Dataset { num_classes: 3, utterances: c.utterances };
        let bytes = d.to_bytes();
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
        for cut in [0, 10, 20, bytes.len() / 2, bytes.len() - 1] {
            match Dataset::from_bytes(&bytes[..cut]) {
                Err(Error::Read { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(Dataset::from_bytes(&v2), Err(Error::Version { found: 2, .. })));
        let empty = Dataset { num_classes: 3, utterances: vec![] };
        assert_eq!(Dataset::from_bytes(&empty.to_bytes()).unwrap(), empty);
    }

    #[test]
    fn examples_for_both_input_kinds() {
        let c = generate_corpus(&default_phone_models(3, 0.1), &spec(3, 2)).unwrap();
        let d = c.train();
        let raw = NetworkConfig::new(InputSpec::raw(30.0), vec![], crate::net::ClassifierSpec::slp(3));
        let ex = dataset_examples(&raw, &d).unwrap();
        assert_eq!(ex.len(), d.num_frames());
        assert_eq!(ex[0].input.shape(), (480, 1));
        let cep =
            NetworkConfig::new(InputSpec::Cepstral { context: 9, dim: 39 }, vec![], crate::net::ClassifierSpec::slp(3));
        let ex = dataset_examples(&cep, &d).unwrap();
        assert_eq!(ex[0].input.shape(), (9, 39));
        assert_eq!(ex.len(), d.num_frames());
    }
}

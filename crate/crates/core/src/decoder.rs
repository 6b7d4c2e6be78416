//! Hybrid HMM decoding: posteriors become scaled likelihoods by dividing out
//! class priors, and a Viterbi search finds the best phone segmentation in
//! which every phone spans at least `states_per_phone` frames.
//!
//! Every state of a phone emits that phone's per-frame score and all
//! transitions cost nothing, so the search is an exact maximization over
//! legal segmentations.

use std::fmt;

use crate::error::{structural, Result};
use crate::net::PosteriorSequence;
use crate::signal::FrameLabeling;
use crate::tensor::Tensor2;

/// Class prior probabilities, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPriors {
    pub priors: Vec<f64>,
}

impl ClassPriors {
    pub fn uniform(num_classes: usize) -> Self {
        Self { priors: vec![1.0 / num_classes as f64; num_classes] }
    }

    /// Whitespace-separated values.
    pub fn to_text(&self) -> String {
        let mut s = self.priors.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(" ");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let priors = text
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| structural(format!("invalid prior `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        if priors.is_empty() || priors.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(structural("priors must be non-empty and in (0, 1]"));
        }
        Ok(Self { priors })
    }
}

/// Add-one smoothed class frequencies: `(count_i + 1) / (N + K)`.
pub fn estimate_priors<'a>(
    labelings: impl IntoIterator<Item = &'a FrameLabeling>,
    num_classes: usize,
) -> Result<ClassPriors> {
    let mut counts = vec![0usize; num_classes];
    let mut total = 0usize;
    for l in labelings {
        for &c in &l.labels {
            if c >= num_classes {
                return Err(structural(format!("label {c} out of range for {num_classes} classes")));
            }
            counts[c] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(structural("priors need at least one labeled frame"));
    }
    let denom = (total + num_classes) as f64;
    Ok(ClassPriors { priors: counts.iter().map(|&c| (c + 1) as f64 / denom).collect() })
}

/// `log p(i | x_t) - log prior_i`.
pub fn scale_likelihoods(posteriors: &PosteriorSequence, priors: &ClassPriors) -> Result<Tensor2> {
    let k = posteriors.num_classes();
    if priors.priors.len() != k {
        return Err(structural(format!("{} priors for {k} posterior classes", priors.priors.len())));
    }
    let log_priors: Vec<f64> = priors.priors.iter().map(|p| p.ln()).collect();
    let mut out = posteriors.probs.clone();
    for t in 0..out.frames() {
        for (v, lp) in out.row_mut(t).iter_mut().zip(&log_priors) {
            *v = v.ln() - lp;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HmmTopology {
    pub num_phones: usize,
    /// Minimum frames per phone; each state can only advance or, in the last
    /// state, loop.
    pub states_per_phone: usize,
}

impl HmmTopology {
    pub fn new(num_phones: usize) -> Self {
        Self { num_phones, states_per_phone: 3 }
    }
}

/// Decoded phones and the frame each segment starts at.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhoneSequence {
    pub phones: Vec<usize>,
    pub boundaries: Vec<usize>,
}

impl PhoneSequence {
    /// Run-length collapse of frame labels.
    pub fn from_frame_labels(labels: &[usize]) -> Self {
        let mut seq = Self::default();
        for (t, &l) in labels.iter().enumerate() {
            if seq.phones.last() != Some(&l) || t == 0 {
                seq.phones.push(l);
                seq.boundaries.push(t);
            }
        }
        seq
    }

    /// Inverse of the `phones | boundaries` display form.
    pub fn parse(text: &str) -> Result<Self> {
        let (phones, bounds) =
            text.split_once('|').ok_or_else(|| structural(format!("missing `|` in phone sequence {text:?}")))?;
        let nums = |part: &str| -> Result<Vec<usize>> {
            part.split_whitespace()
                .map(|v| v.parse().map_err(|_| structural(format!("bad index {v:?} in phone sequence"))))
                .collect()
        };
        let seq = Self { phones: nums(phones)?, boundaries: nums(bounds)? };
        if seq.phones.len() != seq.boundaries.len() || seq.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(structural(format!("inconsistent phone sequence {text:?}")));
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    /// Segment lengths given the total frame count.
    pub fn segment_lengths(&self, total_frames: usize) -> Vec<usize> {
        self.boundaries
            .iter()
            .zip(self.boundaries.iter().skip(1).chain(std::iter::once(&total_frames)))
            .map(|(a, b)| b - a)
            .collect()
    }

    /// Expands back to one label per frame.
    pub fn to_frame_labels(&self, total_frames: usize) -> Vec<usize> {
        self.phones
            .iter()
            .zip(self.segment_lengths(total_frames))
            .flat_map(|(&p, n)| std::iter::repeat_n(p, n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoding {
    pub sequence: PhoneSequence,
    /// Sum of the frame scores along the chosen segmentation, accumulated
    /// from the first frame to the last.
    pub score: f64,
}

impl fmt::Display for PhoneSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let phones: Vec<String> = self.phones.iter().map(|p| p.to_string()).collect();
        let bounds: Vec<String> = self.boundaries.iter().map(|b| b.to_string()).collect();
        write!(f, "{} | {}", phones.join(" "), bounds.join(" "))
    }
}

/// Best segmentation of `log_likes` (frames x phones) under `topo`.
///
/// Among equally scoring segmentations the result is the smallest under the
/// frame-by-frame order on (phone label, starts-a-new-segment), so lower
/// phone indices win and a phone is never split into repeats of itself when
/// continuing it scores the same.
pub fn viterbi_decode(log_likes: &Tensor2, topo: &HmmTopology) -> Result<Decoding> {
    let (frames, k) = log_likes.shape();
    let s = topo.states_per_phone;
    if k != topo.num_phones {
        return Err(structural(format!("{k} score columns for {} phones", topo.num_phones)));
    }
    if s == 0 || k == 0 {
        return Err(structural("topology needs at least one phone and one state per phone"));
    }
    if frames < s {
        return Err(structural(format!("{frames} frames cannot hold a {s}-state phone")));
    }
    let idx = |p: usize, j: usize| p * s + j;
    let n = k * s;

    // best[t][state]: best score of frames t.. given `state` at frame t,
    // including frame t's emission
    let mut best = vec![f64::NEG_INFINITY; frames * n];
    for p in 0..k {
        best[(frames - 1) * n + idx(p, s - 1)] = log_likes.get(frames - 1, p);
    }
    for t in (0..frames - 1).rev() {
        let (cur, next) = best.split_at_mut((t + 1) * n);
        let cur = &mut cur[t * n..];
        let next = &next[..n];
        let enter = (0..k).map(|q| next[idx(q, 0)]).fold(f64::NEG_INFINITY, f64::max);
        for p in 0..k {
            let e = log_likes.get(t, p);
            for j in 0..s - 1 {
                cur[idx(p, j)] = e + next[idx(p, j + 1)];
            }
            cur[idx(p, s - 1)] = e + next[idx(p, s - 1)].max(enter);
        }
    }

    // forward greedy: smallest admissible choice at every frame
    let mut state = (0..k)
        .map(|p| idx(p, 0))
        .fold(None, |acc: Option<usize>, st| match acc {
            Some(b) if best[b] >= best[st] => Some(b),
            _ => Some(st),
        })
        .expect("k > 0");
    if best[state] == f64::NEG_INFINITY {
        return Err(structural("no segmentation has a finite score"));
    }
    let mut seq = PhoneSequence { phones: vec![state / s], boundaries: vec![0] };
    let mut score = log_likes.get(0, state / s);
    for t in 1..frames {
        let row = &best[t * n..(t + 1) * n];
        let (p, j) = (state / s, state % s);
        state = if j < s - 1 {
            idx(p, j + 1)
        } else {
            // candidates in order: (label, continuing before new segment)
            let target = row[idx(p, s - 1)].max((0..k).map(|q| row[idx(q, 0)]).fold(f64::NEG_INFINITY, f64::max));
            let mut choice = None;
            for q in 0..k {
                if q == p && row[idx(p, s - 1)] == target {
                    choice = Some(idx(p, s - 1));
                    break;
                }
                if row[idx(q, 0)] == target {
                    choice = Some(idx(q, 0));
                    break;
                }
            }
            choice.expect("target is attained")
        };
        if state % s == 0 {
            seq.phones.push(state / s);
            seq.boundaries.push(t);
        }
        score += log_likes.get(t, state / s);
    }
    Ok(Decoding { sequence: seq, score })
}

/// Posteriors to decoded phones: scale by priors, then Viterbi.
pub fn decode_posteriors(posteriors: &PosteriorSequence, priors: &ClassPriors, topo: &HmmTopology) -> Result<Decoding> {
    viterbi_decode(&scale_likelihoods(posteriors, priors)?, topo)
}

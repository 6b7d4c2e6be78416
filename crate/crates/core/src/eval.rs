//! Frame accuracy, phone error rate and result reports.

use std::fmt;

use crate::error::{structural, Result};
use crate::net::{CountConvention, ParamCount};

pub fn frame_accuracy(predicted: &[usize], reference: &[usize]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(structural(format!(
            "{} predicted labels for {} reference labels",
            predicted.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(structural("frame accuracy of an empty sequence"));
    }
    let hits = predicted.iter().zip(reference).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / reference.len() as f64)
}

/// Edit operation counts of a minimum-cost alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn per(&self) -> f64 {
        self.errors() as f64 / self.reference_len as f64
    }
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
        self.reference_len += o.reference_len;
    }
}

/// Unit-cost Levenshtein alignment of `hyp` against `reference`.
///
/// Among minimum-cost alignments the one with the fewest insertions plus
/// deletions (so the most substitutions) is counted.
pub fn align(hyp: &[usize], reference: &[usize]) -> Result<EditCounts> {
    if reference.is_empty() {
        return Err(structural("phone error rate needs a non-empty reference"));
    }
    let (n, m) = (reference.len(), hyp.len());
    // cell = (edit cost, insertions + deletions); lexicographic minimum
    let mut dp = vec![(0usize, 0usize); (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[at(i, 0)] = (i, i);
    }
    for j in 0..=m {
        dp[at(0, j)] = (j, j);
    }
    for i in 1..=n {
        for j in 1..=m {
            let (c, g) = dp[at(i - 1, j - 1)];
            let diag = if reference[i - 1] == hyp[j - 1] { (c, g) } else { (c + 1, g) };
            let (c, g) = dp[at(i - 1, j)];
            let del = (c + 1, g + 1);
            let (c, g) = dp[at(i, j - 1)];
            let ins = (c + 1, g + 1);
            dp[at(i, j)] = diag.min(del).min(ins);
        }
    }
    let mut counts = EditCounts { reference_len: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[at(i, j)];
        if i > 0 && j > 0 {
            let (c, g) = dp[at(i - 1, j - 1)];
            let same = reference[i - 1] == hyp[j - 1];
            if (same && here == (c, g)) || (!same && here == (c + 1, g)) {
                counts.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 {
            let (c, g) = dp[at(i - 1, j)];
            if here == (c + 1, g + 1) {
                counts.deletions += 1;
                i -= 1;
                continue;
            }
        }
        counts.insertions += 1;
        j -= 1;
    }
    Ok(counts)
}

/// `(PER, S, D, I)` for one hypothesis / reference pair.
pub fn phone_error_rate(hyp: &[usize], reference: &[usize]) -> Result<(f64, usize, usize, usize)> {
    let c = align(hyp, reference)?;
    Ok((c.per(), c.substitutions, c.deletions, c.insertions))
}

/// Corpus-level counts: total errors over total reference length.
pub fn corpus_edit_counts<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>) -> Result<EditCounts> {
    let mut total = EditCounts::default();
    for (hyp, reference) in pairs {
        total += align(hyp, reference)?;
    }
    if total.reference_len == 0 {
        return Err(structural("corpus has no reference phones"));
    }
    Ok(total)
}

/// One results row: features, filter stages, capacity, classifier, scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub features: String,
    pub conv_layers: usize,
    pub classifier: String,
    pub params: ParamCount,
    pub frame_accuracy: f64,
    pub edits: EditCounts,
}

impl ScoreReport {
    pub fn per(&self) -> f64 {
        self.edits.per()
    }

    /// Machine-readable `key = value` form.
    pub fn to_key_values(&self) -> String {
        let na = |v: usize| if self.conv_layers == 0 { "na".to_string() } else { v.to_string() };
        format!(
            "features = {}\nconv_layers = {}\nconv_params = {}\nconv_params_with_biases = {}\n\
             classifier = {}\nclassifier_params = {}\nclassifier_params_with_biases = {}\n\
             frame_accuracy = {:?}\nper = {:?}\nsubstitutions = {}\ndeletions = {}\ninsertions = {}\n\
             reference_phones = {}\n",
            self.features,
            na(self.conv_layers),
            na(self.params.conv(CountConvention::WeightsOnly)),
            na(self.params.conv(CountConvention::WithBiases)),
            self.classifier,
            self.params.classifier(CountConvention::WeightsOnly),
            self.params.classifier(CountConvention::WithBiases),
            self.frame_accuracy,
            self.per(),
            self.edits.substitutions,
            self.edits.deletions,
            self.edits.insertions,
            self.edits.reference_len,
        )
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let conv = if self.conv_layers == 0 {
            "na".to_string()
        } else {
            format!("{} ({} params)", self.conv_layers, self.params.conv(CountConvention::WeightsOnly))
        };
        writeln!(f, "features:        {}", self.features)?;
        writeln!(f, "conv layers:     {conv}")?;
        writeln!(
            f,
            "classifier:      {} ({} params)",
            self.classifier,
            self.params.classifier(CountConvention::WeightsOnly)
        )?;
        writeln!(f, "frame accuracy:  {:.2} %", 100.0 * self.frame_accuracy)?;
        write!(
            f,
            "PER:             {:.2} % (S={} D={} I={} N={})",
            100.0 * self.per(),
            self.edits.substitutions,
            self.edits.deletions,
            self.edits.insertions,
            self.edits.reference_len
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain recursive edit distance.
    fn distance(a: &[usize], b: &[usize]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = distance(ra, rb) + usize::from(x != y);
                sub.min(distance(ra, b) + 1).min(distance(a, rb) + 1)
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(frame_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(frame_accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(frame_accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(frame_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn per_examples() {
        assert_eq!(phone_error_rate(&[1, 2, 3], &[1, 2, 3]).unwrap(), (0.0, 0, 0, 0));
        assert_eq!(phone_error_rate(&[], &[1, 2, 3, 4]).unwrap(), (1.0, 0, 4, 0));
        let (per, s, d, i) = phone_error_rate(&[0, 2], &[0, 1, 2]).unwrap();
        assert_eq!((s, d, i), (0, 1, 0));
        assert!((per - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(distance(&[0, 2], &[0, 1, 2]), 1);
        assert!(phone_error_rate(&[1], &[]).is_err());
        // two substitutions rather than a deletion and an insertion
        assert_eq!(phone_error_rate(&[2, 1], &[1, 2]).unwrap(), (1.0, 2, 0, 0));
        // insertions can push PER above 1
        assert_eq!(phone_error_rate(&[1, 1, 1], &[1]).unwrap().0, 2.0);
    }

    #[test]
    fn corpus_aggregation_is_not_a_mean_of_rates() {
        let a = (vec![9usize], vec![1usize]);
        let b = (vec![1, 2, 3], vec![1, 2, 3]);
        let c = corpus_edit_counts([(&a.0[..], &a.1[..]), (&b.0[..], &b.1[..])]).unwrap();
        assert_eq!(c.per(), 0.25);
    }

    #[test]
    fn report_formats() {
        let r = ScoreReport {
            features: "MFCC".into(),
            conv_layers: 0,
            classifier: "slp".into(),
            params: ParamCount { classifier_weights: 14_040, classifier_biases: 40, ..Default::default() },
            frame_accuracy: 0.5,
            edits: EditCounts { substitutions: 1, deletions: 0, insertions: 0, reference_len: 4 },
        };
        let kv = r.to_key_values();
        assert!(kv.contains("conv_params = na\n"));
        assert!(kv.contains("classifier_params = 14040\n"));
        assert!(kv.contains("per = 0.25\n"));
        assert!(r.to_string().contains("PER:             25.00 %"));
    }

    proptest! {
        #[test]
        fn alignment_cost_is_the_edit_distance(
            h in prop::collection::vec(0usize..4, 0..8),
            r in prop::collection::vec(0usize..4, 1..8),
        ) {
            let c = align(&h, &r).unwrap();
            prop_assert_eq!(c.errors(), distance(&h, &r));
            prop_assert_eq!(r.len() - c.deletions - c.substitutions, h.len() - c.insertions - c.substitutions);
        }

        #[test]
        fn scores_invariant_under_relabeling(
            h in prop::collection::vec(0usize..4, 1..10),
            r in prop::collection::vec(0usize..4, 1..10),
        ) {
            let perm = [2usize, 0, 3, 1];
            let ph: Vec<usize> = h.iter().map(|&x| perm[x]).collect();
            let pr: Vec<usize> = r.iter().map(|&x| perm[x]).collect();
            prop_assert_eq!(align(&h, &r).unwrap(), align(&ph, &pr).unwrap());
            let n = h.len().min(r.len());
            prop_assert_eq!(frame_accuracy(&h[..n], &r[..n]).unwrap(), frame_accuracy(&ph[..n], &pr[..n]).unwrap());
        }
    }
}

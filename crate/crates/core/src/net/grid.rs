//! Grid search over filter-stage hyper-parameters.

use std::cmp::Ordering;
use std::fmt;

use super::shape::{param_count, CountConvention, ParamCount};
use super::train::{sgd_train, TrainingLog};
use super::{ConvStageSpec, Example, InputSpec, KeyValues, NetworkConfig};
use crate::error::{structural, Result};

/// Tuning ranges for each hyper-parameter, as (min, max).
pub mod ranges {
    pub const W_IN_MS: (f64, f64) = (100.0, 700.0);
    pub const FIRST_KW_SAMPLES: (usize, usize) = (10, 90);
    pub const OTHER_KW_FRAMES: (usize, usize) = (1, 11);
    pub const FILTERS: (usize, usize) = (20, 100);
    pub const POOL_KW: (usize, usize) = (2, 6);
}

/// Cartesian grid of architectures sharing a base config (classifier,
/// learning rate, epochs, seed). Every candidate's stages use the listed
/// first-stage width/shift, a common later-stage width, a common filter
/// count and a common pooling width (non-overlapping).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base: NetworkConfig,
    pub w_in_ms: Vec<f64>,
    pub num_stages: Vec<usize>,
    pub first_kw: Vec<usize>,
    pub first_dw: Vec<usize>,
    pub other_kw: Vec<usize>,
    pub filters: Vec<usize>,
    pub pool_kw: Vec<usize>,
}

impl Grid {
    /// A grid holding exactly `cfg`'s architecture.
    pub fn singleton(cfg: &NetworkConfig) -> Self {
        let w_in = match cfg.input {
            InputSpec::Raw { w_in_ms, .. } => w_in_ms,
            InputSpec::Cepstral { .. } => 0.0,
        };
        let first = cfg.stages.first().copied().unwrap_or(ConvStageSpec::new(1, 1, 1, 1));
        let later = cfg.stages.get(1).copied().unwrap_or(first);
        Self {
            base: cfg.clone(),
            w_in_ms: vec![w_in],
            num_stages: vec![cfg.stages.len()],
            first_kw: vec![first.kw],
            first_dw: vec![first.dw],
            other_kw: vec![later.kw],
            filters: vec![first.d_out],
            pool_kw: vec![first.pool_kw],
        }
    }

    /// Base config keys plus comma-separated `grid.*` lists, e.g.
    /// `grid.stages = 1, 2, 3` or `grid.pool_kw = 2, 3`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let base = NetworkConfig::from_key_values(kv)?;
        let base_w = match base.input {
            InputSpec::Raw { w_in_ms, .. } => w_in_ms,
            InputSpec::Cepstral { .. } => return Err(kv.error("input", "grid search runs on raw input")),
        };
        let need = |key: &str| -> Result<Vec<usize>> {
            kv.list(key)?.ok_or_else(|| kv.error(key, format!("missing `{key}`")))
        };
        Ok(Self {
            w_in_ms: kv.list("grid.w_in_ms")?.unwrap_or_else(|| vec![base_w]),
            num_stages: need("grid.stages")?,
            first_kw: need("grid.first_kw")?,
            first_dw: kv.list("grid.first_dw")?.unwrap_or_else(|| vec![1]),
            other_kw: need("grid.other_kw")?,
            filters: need("grid.filters")?,
            pool_kw: need("grid.pool_kw")?,
            base,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&super::parse_key_values(text)?)
    }

    /// All candidate configs (structurally valid or not), in grid order.
    pub fn expand(&self) -> Vec<NetworkConfig> {
        let mut out = Vec::new();
        for &w in &self.w_in_ms {
            for &n in &self.num_stages {
                for &kw1 in &self.first_kw {
                    for &dw1 in &self.first_dw {
                        for &kwn in &self.other_kw {
                            for &d in &self.filters {
                                for &p in &self.pool_kw {
                                    let mut cfg = self.base.clone();
                                    if let InputSpec::Raw { rate, .. } = cfg.input {
                                        cfg.input = InputSpec::Raw { w_in_ms: w, rate };
                                    }
                                    cfg.stages = (0..n)
                                        .map(|i| {
                                            if i == 0 {
                                                ConvStageSpec::new(kw1, dw1, d, p)
                                            } else {
                                                ConvStageSpec::new(kwn, 1, d, p)
                                            }
                                        })
                                        .collect();
                                    if !out.contains(&cfg) {
                                        out.push(cfg);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Grid values that fall outside the tuning ranges.
    pub fn out_of_range(&self) -> Vec<String> {
        let mut notes = Vec::new();
        let mut check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            if v < lo || v > hi {
                notes.push(format!("{name} = {v} outside [{lo}, {hi}]"));
            }
        };
        let f = |(a, b): (usize, usize)| (a as f64, b as f64);
        self.w_in_ms.iter().for_each(|&v| check("w_in_ms", v, ranges::W_IN_MS));
        self.first_kw.iter().for_each(|&v| check("first_kw", v as f64, f(ranges::FIRST_KW_SAMPLES)));
        self.other_kw.iter().for_each(|&v| check("other_kw", v as f64, f(ranges::OTHER_KW_FRAMES)));
        self.filters.iter().for_each(|&v| check("filters", v as f64, f(ranges::FILTERS)));
        self.pool_kw.iter().for_each(|&v| check("pool_kw", v as f64, f(ranges::POOL_KW)));
        notes
    }
}

#[derive(Debug, Clone)]
pub struct GridEntry {
    pub config: NetworkConfig,
    /// Best validation frame accuracy, or why the candidate could not be trained.
    pub outcome: std::result::Result<f64, String>,
    pub params: Option<ParamCount>,
    pub log: Option<TrainingLog>,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub entries: Vec<GridEntry>,
    /// Index of the selected entry.
    pub best: usize,
}

impl GridReport {
    pub fn best_config(&self) -> &NetworkConfig {
        &self.entries[self.best].config
    }
}

impl fmt::Display for GridReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# candidate stages w_in_ms kw1/dw1 kwn filters pool conv_params classifier_params valid_acc")?;
        for (i, e) in self.entries.iter().enumerate() {
            let c = &e.config;
            let w_in = match c.input {
                InputSpec::Raw { w_in_ms, .. } => w_in_ms,
                InputSpec::Cepstral { .. } => 0.0,
            };
            let first = c.stages.first();
            let (conv, cls) = e
                .params
                .map_or((0, 0), |p| (p.conv(CountConvention::WeightsOnly), p.classifier(CountConvention::WeightsOnly)));
            let outcome = match &e.outcome {
                Ok(acc) => format!("{acc:.6}"),
                Err(msg) => format!("error: {msg}"),
            };
            writeln!(
                f,
                "{}{} {} {} {}/{} {} {} {} {} {} {}",
                if i == self.best { "*" } else { " " },
                i,
                c.stages.len(),
                w_in,
                first.map_or(0, |s| s.kw),
                first.map_or(0, |s| s.dw),
                c.stages.get(1).map_or(0, |s| s.kw),
                first.map_or(0, |s| s.d_out),
                first.map_or(0, |s| s.pool_kw),
                conv,
                cls,
                outcome
            )?;
        }
        Ok(())
    }
}

/// Trains every candidate and selects the best validation frame accuracy;
/// ties go to fewer total parameters (weights + biases), then to the
/// lexicographically smaller canonical config text.
///
/// `data` materializes the train / validation examples a candidate needs
/// (raw window length differs between candidates). Candidates whose shapes
/// are invalid or whose data cannot be built are reported, not fatal.
pub fn grid_search<F>(candidates: &[NetworkConfig], mut data: F) -> Result<GridReport>
where
    F: FnMut(&NetworkConfig) -> Result<(Vec<Example>, Vec<Example>)>,
{
    if candidates.is_empty() {
        return Err(structural("grid search over an empty grid"));
    }
    let mut entries = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        let entry = match cfg.validate().and_then(|_| param_count(cfg)) {
            Err(e) => GridEntry { config: cfg.clone(), outcome: Err(e.to_string()), params: None, log: None },
            Ok(params) => match data(cfg).and_then(|(tr, va)| sgd_train(cfg, &tr, &va)) {
                Ok((_, log)) => GridEntry {
                    config: cfg.clone(),
                    outcome: Ok(log.best_accuracy),
                    params: Some(params),
                    log: Some(log),
                },
                Err(e) => {
                    GridEntry { config: cfg.clone(), outcome: Err(e.to_string()), params: Some(params), log: None }
                }
            },
        };
        entries.push(entry);
    }
    let best = select(&entries).ok_or_else(|| structural("no grid candidate could be trained"))?;
    Ok(GridReport { entries, best })
}

fn select(entries: &[GridEntry]) -> Option<usize> {
    let key = |e: &GridEntry| {
        let total = e.params.map_or(usize::MAX, |p| p.total(CountConvention::WithBiases));
        (e.outcome.clone().ok(), total, e.config.to_config_string())
    };
    entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.outcome.is_ok())
        .min_by(|(_, a), (_, b)| {
            let (acc_a, tot_a, txt_a) = key(a);
            let (acc_b, tot_b, txt_b) = key(b);
            acc_b.partial_cmp(&acc_a).unwrap_or(Ordering::Equal).then(tot_a.cmp(&tot_b)).then(txt_a.cmp(&txt_b))
        })
        .map(|(i, _)| i)
}

//! Per-pair caption similarity: tokenization, METEOR (exact and stem stages),
//! per-pair CIDEr with corpus IDF, and a slot for externally computed scores
//! such as SPICE.
//!
//! Every sub-score lies in `[0, 1]`; CIDEr is reported without the customary
//! x10 factor so that the caption accuracy term stays a bounded average.

mod cider;
mod meteor;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};
use crate::types::Caption;

pub use cider::{cider_pair, IdfTable, CIDER_MAX_N, CIDER_SIGMA};
pub use meteor::{align, meteor_lite, Alignment};

/// Lowercases, turns every non-alphanumeric character into a separator and
/// splits on whitespace.
pub fn tokenize(s: &str) -> Vec<String> {
    let cleaned: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Snowball English stem of a lowercase token.
pub fn stem(token: &str) -> String {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER
        .get_or_init(|| Stemmer::create(Algorithm::English))
        .stem(token)
        .into_owned()
}

/// Caption sub-metrics that can be enabled for caption accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubMetric {
    Meteor,
    Cider,
    /// Precomputed per-pair scores from a sidecar file (e.g. SPICE).
    External,
    /// 1 for identical token sequences, else 0.
    Exact,
}

impl fmt::Display for SubMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubMetric::Meteor => "meteor",
            SubMetric::Cider => "cider",
            SubMetric::External => "external",
            SubMetric::Exact => "exact",
        })
    }
}

impl FromStr for SubMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "meteor" => Ok(SubMetric::Meteor),
            "cider" => Ok(SubMetric::Cider),
            "external" | "spice" => Ok(SubMetric::External),
            "exact" => Ok(SubMetric::Exact),
            other => Err(Error::InvalidParam(format!(
                "unknown caption metric '{other}'"
            ))),
        }
    }
}

/// Ordered, de-duplicated set of enabled sub-metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSet(Vec<SubMetric>);

impl MetricSet {
    pub fn new(metrics: impl IntoIterator<Item = SubMetric>) -> Result<Self> {
        let mut v: Vec<SubMetric> = metrics.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(Error::InvalidParam(
                "at least one caption metric is required".into(),
            ));
        }
        Ok(MetricSet(v))
    }

    pub fn contains(&self, m: SubMetric) -> bool {
        self.0.contains(&m)
    }

    pub fn metrics(&self) -> &[SubMetric] {
        &self.0
    }

    /// Number of averaged sub-metrics.
    pub fn divisor(&self) -> usize {
        self.0.len()
    }
}

impl Default for MetricSet {
    fn default() -> Self {
        MetricSet(vec![SubMetric::Meteor, SubMetric::Cider])
    }
}

impl FromStr for MetricSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricSet::new(
            s.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(SubMetric::from_str)
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

impl fmt::Display for MetricSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&names.join(","))
    }
}

/// Identifies a prediction/ground-truth pair for external scores.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairKey {
    pub video_id: String,
    /// Canonical observation index of the predicted detection.
    pub pred_obs: usize,
    pub gt_track: u32,
}

/// Source of externally computed per-pair caption scores.
pub trait ExternalScorer: Sync {
    /// `None` when the pair is unknown to the scorer.
    fn score(&self, key: &PairKey) -> Option<f64>;
}

/// Sidecar-backed external scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    scores: HashMap<PairKey, f64>,
}

impl ExternalScores {
    pub fn insert(&mut self, key: PairKey, score: f64) {
        self.scores.insert(key, score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl ExternalScorer for ExternalScores {
    fn score(&self, key: &PairKey) -> Option<f64> {
        self.scores.get(key).copied()
    }
}

/// Sub-scores of one caption pair; absent entries were not enabled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaptionScore {
    pub meteor: Option<f64>,
    pub cider: Option<f64>,
    pub external: Option<f64>,
    pub exact: Option<f64>,
}

impl CaptionScore {
    pub fn present(&self) -> impl Iterator<Item = f64> {
        [self.meteor, self.cider, self.external, self.exact]
            .into_iter()
            .flatten()
    }

    /// Mean of the enabled sub-scores.
    pub fn mean(&self) -> f64 {
        let (sum, n) = self
            .present()
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Looks up an external score; a missing or out-of-range value is an error
/// naming the pair.
pub fn external_score(scorer: &dyn ExternalScorer, key: &PairKey) -> Result<f64> {
    let fail = |reason: String| Error::ExternalScore {
        video_id: key.video_id.clone(),
        pred_obs: key.pred_obs,
        gt_track: key.gt_track,
        reason,
    };
    let v = scorer
        .score(key)
        .ok_or_else(|| fail("no score for pair".into()))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(fail(format!("score {v} outside [0,1]")));
    }
    Ok(v)
}

/// Scores one pair with every enabled sub-metric. External scores are looked
/// up by `key`; a missing or out-of-range value is an error naming the pair.
pub fn score_pair(
    pred: &Caption,
    reference: &Caption,
    idf: &IdfTable,
    metrics: &MetricSet,
    external: Option<(&dyn ExternalScorer, &PairKey)>,
) -> Result<CaptionScore> {
    let mut out = CaptionScore::default();
    if metrics.contains(SubMetric::Meteor) {
        out.meteor = Some(meteor_lite(pred, reference));
    }
    if metrics.contains(SubMetric::Cider) {
        out.cider = Some(cider_pair(pred, reference, idf));
    }
    if metrics.contains(SubMetric::Exact) {
        out.exact = Some(if pred.tokens == reference.tokens {
            1.0
        } else {
            0.0
        });
    }
    if metrics.contains(SubMetric::External) {
        let (scorer, key) = external.ok_or_else(|| {
            Error::Scorer("external metric enabled but no external scores supplied".into())
        })?;
        out.external = Some(external_score(scorer, key)?);
    }
    Ok(out)
}

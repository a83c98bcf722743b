//! Likelihood-based spatial grounding: in every frame, pick the candidate box
//! maximizing `score * exp(-NLL(query | candidate))`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{grounding_ious, GroundingIous, Span};
use crate::geometry::BBox;
use crate::types::VideoRecord;

/// Identifies one candidate observation for a caption scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CandidateKey<'a> {
    pub video_id: &'a str,
    pub frame: u32,
    /// Canonical observation index within the video.
    pub observation: usize,
}

/// Negative log-likelihood of a query caption given a candidate.
pub trait CaptionScorer: Sync {
    fn nll(&self, candidate: CandidateKey<'_>, query_id: &str) -> Result<f64>;
}

fn check_nll(v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::Scorer(format!(
            "negative log-likelihood {v} is not finite and nonnegative"
        )))
    }
}

/// Scores read from a likelihood table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableScorer {
    table: HashMap<(String, usize, String), (u32, f64)>,
}

impl TableScorer {
    pub fn insert(
        &mut self,
        video_id: &str,
        frame: u32,
        observation: usize,
        query_id: &str,
        nll: f64,
    ) -> Result<()> {
        let nll = check_nll(nll)?;
        self.table.insert(
            (video_id.to_owned(), observation, query_id.to_owned()),
            (frame, nll),
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl CaptionScorer for TableScorer {
    fn nll(&self, c: CandidateKey<'_>, query_id: &str) -> Result<f64> {
        let missing = || {
            Error::Scorer(format!(
                "no likelihood for video {}, frame {}, observation {}, query {query_id}",
                c.video_id, c.frame, c.observation
            ))
        };
        let &(frame, nll) = self
            .table
            .get(&(c.video_id.to_owned(), c.observation, query_id.to_owned()))
            .ok_or_else(missing)?;
        if frame != c.frame {
            return Err(Error::Scorer(format!(
                "likelihood table places observation {} of video {} at frame {frame}, not {}",
                c.observation, c.video_id, c.frame
            )));
        }
        Ok(nll)
    }
}

/// The same NLL for every candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformScorer(pub f64);

impl CaptionScorer for UniformScorer {
    fn nll(&self, _: CandidateKey<'_>, _: &str) -> Result<f64> {
        check_nll(self.0)
    }
}

/// Whether a candidate's NLL comes from its own frame or from its whole
/// track (mean over the track's observations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NllMode {
    #[default]
    PerFrame,
    PerTrack,
}

impl FromStr for NllMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-frame" => Ok(NllMode::PerFrame),
            "per-track" => Ok(NllMode::PerTrack),
            other => Err(Error::InvalidParam(format!(
                "unknown grounding mode '{other}'"
            ))),
        }
    }
}

impl fmt::Display for NllMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NllMode::PerFrame => "per-frame",
            NllMode::PerTrack => "per-track",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSelection {
    pub frame: u32,
    /// Index into the frame's candidate list.
    pub selected: usize,
    pub bbox: BBox,
    /// `score * exp(-nll)` of every candidate.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingResult {
    pub frames: Vec<FrameSelection>,
}

impl GroundingResult {
    pub fn boxes(&self) -> BTreeMap<u32, BBox> {
        self.frames.iter().map(|f| (f.frame, f.bbox)).collect()
    }
}

/// Candidates of one frame with their NLLs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCandidates {
    pub frame: u32,
    pub boxes: Vec<(BBox, f64)>,
    pub nll: Vec<f64>,
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(k);
        }
    }
    best
}

pub fn select_boxes(frames: &[FrameCandidates]) -> Result<GroundingResult> {
    let mut out = Vec::new();
    for f in frames {
        if f.boxes.len() != f.nll.len() {
            return Err(Error::Dimension(format!(
                "frame {}: {} candidates but {} likelihoods",
                f.frame,
                f.boxes.len(),
                f.nll.len()
            )));
        }
        let values: Vec<f64> = f
            .boxes
            .iter()
            .zip(&f.nll)
            .map(|((_, s), l)| s * (-l).exp())
            .collect();
        if let Some(k) = argmax(&values) {
            out.push(FrameSelection {
                frame: f.frame,
                selected: k,
                bbox: f.boxes[k].0,
                values,
            });
        }
    }
    Ok(GroundingResult { frames: out })
}

/// A grounding query with its ground-truth span and boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub video_id: String,
    pub caption: String,
    pub span: Span,
    pub boxes: BTreeMap<u32, BBox>,
}

/// Selects one box per frame of the query's ground-truth span from the
/// predicted detections and scores the selection.
pub fn ground_and_score(
    pred: &VideoRecord,
    query: &Query,
    scorer: &dyn CaptionScorer,
    mode: NllMode,
) -> Result<(GroundingResult, GroundingIous)> {
    if pred.video_id != query.video_id {
        return Err(Error::VideoMismatch(
            pred.video_id.clone(),
            query.video_id.clone(),
        ));
    }
    let frames = pred.frames();
    let key = |frame: u32, observation: usize| CandidateKey {
        video_id: &pred.video_id,
        frame,
        observation,
    };

    let track_nll = match mode {
        NllMode::PerFrame => None,
        NllMode::PerTrack => {
            let mut sums = vec![(0.0, 0usize); pred.trajectories.len()];
            for (k, o) in pred.observations().into_iter().enumerate() {
                let v = scorer.nll(key(o.frame, k), &query.query_id)?;
                sums[o.track].0 += v;
                sums[o.track].1 += 1;
            }
            Some(
                sums.into_iter()
                    .map(|(s, n)| s / n.max(1) as f64)
                    .collect::<Vec<_>>(),
            )
        }
    };

    let mut offsets = Vec::with_capacity(frames.len());
    let mut acc = 0;
    for f in &frames {
        offsets.push(acc);
        acc += f.len();
    }
    let mut candidates = Vec::new();
    for t in query.span.frames() {
        let Some(obs) = frames.get(t as usize) else {
            continue;
        };
        let mut fc = FrameCandidates {
            frame: t,
            boxes: Vec::with_capacity(obs.len()),
            nll: Vec::with_capacity(obs.len()),
        };
        for (j, o) in obs.iter().enumerate() {
            let d = pred.detection(*o);
            fc.boxes.push((d.bbox, d.score));
            fc.nll.push(match &track_nll {
                Some(per_track) => per_track[o.track],
                None => scorer.nll(key(t, offsets[t as usize] + j), &query.query_id)?,
            });
        }
        candidates.push(fc);
    }
    let result = select_boxes(&candidates)?;
    let ious = grounding_ious(&result.boxes(), query.span, &query.boxes, query.span);
    Ok((result, ious))
}

//! Spatial, temporal and spatio-temporal grounding IoUs. Spans are inclusive
//! frame ranges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidParam(format!(
                "span [{start},{end}] is reversed"
            )));
        }
        Ok(Span { start, end })
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intersection(&self, other: &Span) -> Option<Span> {
        let (s, e) = (self.start.max(other.start), self.end.min(other.end));
        (s <= e).then_some(Span { start: s, end: e })
    }

    /// Frames covered by either span (the spans need not touch).
    pub fn union_len(&self, other: &Span) -> u32 {
        self.len() + other.len() - self.intersection(other).map_or(0, |i| i.len())
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

impl TryFrom<[u32; 2]> for Span {
    type Error = Error;

    fn try_from(v: [u32; 2]) -> Result<Self> {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [u32; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundingIous {
    pub s_iou: f64,
    pub t_iou: f64,
    pub v_iou: f64,
}

fn frame_iou(pred: &BTreeMap<u32, BBox>, gt: &BTreeMap<u32, BBox>, t: u32) -> f64 {
    match (pred.get(&t), gt.get(&t)) {
        (Some(p), Some(g)) => iou(p, g),
        _ => 0.0,
    }
}

pub fn grounding_ious(
    pred_boxes: &BTreeMap<u32, BBox>,
    pred_span: Span,
    gt_boxes: &BTreeMap<u32, BBox>,
    gt_span: Span,
) -> GroundingIous {
    let s_iou = gt_span
        .frames()
        .map(|t| frame_iou(pred_boxes, gt_boxes, t))
        .sum::<f64>()
        / gt_span.len() as f64;
    let union = pred_span.union_len(&gt_span) as f64;
    let (inter, v_sum) = match pred_span.intersection(&gt_span) {
        Some(i) => (
            i.len() as f64,
            i.frames()
                .map(|t| frame_iou(pred_boxes, gt_boxes, t))
                .sum::<f64>(),
        ),
        None => (0.0, 0.0),
    };
    GroundingIous {
        s_iou,
        t_iou: inter / union,
        v_iou: v_sum / union,
    }
}

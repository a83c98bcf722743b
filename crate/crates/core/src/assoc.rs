//! Association matrices and trajectory formation.
//!
//! An association matrix scores every pair of object observations in a video
//! (all frames pooled). [`assign_identities`] turns it into trajectory ids by
//! greedily extracting the longest remaining track; [`build_gt_association`]
//! builds the binary training target from ground-truth trajectories and
//! [`iou_tracker`] is the online IoU-linking baseline.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::lap::max_weight_assignment;
use crate::types::{Detection, VideoRecord};

/// Default binarization threshold for [`assign_identities`].
pub const DEFAULT_THETA: f64 = 0.5;

/// Square `M x M` association scores plus the frame of each observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AssocMatrix {
    values: Vec<f64>,
    frame_of: Vec<u32>,
}

impl AssocMatrix {
    /// `values` is row-major `M x M` with `M = frame_of.len()`.
    pub fn new(values: Vec<f64>, frame_of: Vec<u32>) -> Result<Self> {
        let m = frame_of.len();
        if values.len() != m * m {
            return Err(Error::Dimension(format!(
                "association matrix has {} values, expected {m}x{m}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite association value {v}")));
        }
        Ok(AssocMatrix { values, frame_of })
    }

    pub fn from_rows(rows: &[Vec<f64>], frame_of: Vec<u32>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(Error::Dimension("association matrix is not square".into()));
        }
        AssocMatrix::new(rows.concat(), frame_of)
    }

    pub fn dim(&self) -> usize {
        self.frame_of.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_of(&self) -> &[u32] {
        &self.frame_of
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.dim();
        (0..m).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Trajectory identity (>= 1) of every observation, in matrix order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityAssignment {
    pub ids: Vec<u32>,
}

impl IdentityAssignment {
    pub fn num_tracks(&self) -> usize {
        self.ids.iter().copied().max().unwrap_or(0) as usize
    }

    /// Observation indices of each identity.
    pub fn groups(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in self.ids.iter().enumerate() {
            groups.entry(id).or_default().push(i);
        }
        groups
    }
}

/// Symmetrizes with an elementwise max, zeroes same-frame pairs and sets the
/// diagonal to 1.
pub fn preprocess(a: &AssocMatrix) -> AssocMatrix {
    let m = a.dim();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            values[i * m + j] = if i == j {
                1.0
            } else if a.frame_of[i] == a.frame_of[j] {
                0.0
            } else {
                a.get(i, j).max(a.get(j, i))
            };
        }
    }
    AssocMatrix {
        values,
        frame_of: a.frame_of.clone(),
    }
}

/// Greedy identity assignment.
///
/// The preprocessed matrix is binarized at `theta`. Each round takes the row
/// with the most candidates (lowest index on ties), keeps at most one
/// candidate per frame (highest association score, lowest index on ties),
/// gives the kept observations a fresh id and removes their rows and columns.
/// Every observation ends up with an id since the diagonal always survives
/// binarization.
pub fn assign_identities(a: &AssocMatrix, theta: f64) -> Result<IdentityAssignment> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParam(format!(
            "theta must lie in (0,1), got {theta}"
        )));
    }
    let a = preprocess(a);
    let m = a.dim();
    let mut live: Vec<bool> = a.values.iter().map(|&v| v >= theta).collect();
    let mut track_len: Vec<usize> = (0..m)
        .map(|i| live[i * m..(i + 1) * m].iter().filter(|&&b| b).count())
        .collect();
    let mut ids = vec![0u32; m];
    let mut next_id = 0u32;
    let mut best_in_frame: BTreeMap<u32, usize> = BTreeMap::new();

    loop {
        let mut anchor = 0;
        for i in 1..m {
            if track_len[i] > track_len[anchor] {
                anchor = i;
            }
        }
        if m == 0 || track_len[anchor] == 0 {
            break;
        }

        best_in_frame.clear();
        for j in 0..m {
            if !live[anchor * m + j] {
                continue;
            }
            let f = a.frame_of[j];
            match best_in_frame.get(&f) {
                Some(&k) if a.get(anchor, k) >= a.get(anchor, j) => {}
                _ => {
                    best_in_frame.insert(f, j);
                }
            }
        }

        next_id += 1;
        for &k in best_in_frame.values() {
            ids[k] = next_id;
            for r in 0..m {
                if std::mem::take(&mut live[r * m + k]) {
                    track_len[r] -= 1;
                }
            }
            for c in 0..m {
                if std::mem::take(&mut live[k * m + c]) {
                    track_len[k] -= 1;
                }
            }
        }
    }

    Ok(IdentityAssignment { ids })
}

/// Per-frame optimal matching maximizing total IoU; pairs below `iou_thresh`
/// are never matched. Returns `(pred index, gt index)` pairs.
pub(crate) fn match_boxes(pred: &[BBox], gt: &[BBox], iou_thresh: f64) -> Vec<(usize, usize)> {
    let cols = gt.len();
    let ious: Vec<f64> = pred
        .iter()
        .flat_map(|p| gt.iter().map(move |g| iou(p, g)))
        .collect();
    let eligible = |v: f64| v >= iou_thresh && v > 0.0;
    let scores: Vec<f64> = ious
        .iter()
        .map(|&v| if eligible(v) { v } else { 0.0 })
        .collect();
    max_weight_assignment(&scores, pred.len(), cols)
        .into_iter()
        .filter(|&(p, g)| eligible(ious[p * cols + g]))
        .collect()
}

/// Binary target association for predicted boxes `pred[frame]`.
///
/// Observation order is frame-major, list order within a frame. Entry `(i,j)`
/// is 1 iff both observations matched the same ground-truth trajectory, or
/// `i == j`.
pub fn build_gt_association(pred: &[Vec<BBox>], gt: &VideoRecord, iou_thresh: f64) -> AssocMatrix {
    let gt_frames = gt.frames();
    let mut frame_of = Vec::new();
    let mut owner: Vec<Option<usize>> = Vec::new();
    for (t, boxes) in pred.iter().enumerate() {
        let gt_obs: &[_] = gt_frames.get(t).map(Vec::as_slice).unwrap_or(&[]);
        let gt_boxes: Vec<BBox> = gt_obs.iter().map(|&o| gt.detection(o).bbox).collect();
        let mut matched = vec![None; boxes.len()];
        for (p, g) in match_boxes(boxes, &gt_boxes, iou_thresh) {
            matched[p] = Some(gt_obs[g].track);
        }
        frame_of.extend(std::iter::repeat_n(t as u32, boxes.len()));
        owner.extend(matched);
    }
    let m = frame_of.len();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let same = i == j || matches!((owner[i], owner[j]), (Some(a), Some(b)) if a == b);
            if same {
                values[i * m + j] = 1.0;
            }
        }
    }
    AssocMatrix { values, frame_of }
}

/// Online IoU tracker: each frame is matched against the previous frame only.
///
/// Ids are returned in frame-major order of `frames`. Tracks that find no
/// match terminate; unmatched detections open new tracks.
pub fn iou_tracker(frames: &[Vec<Detection>], match_thresh: f64) -> IdentityAssignment {
    let mut ids = Vec::new();
    let mut prev: Vec<(BBox, u32)> = Vec::new();
    let mut next_id = 0u32;
    for dets in frames {
        let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
        let prev_boxes: Vec<BBox> = prev.iter().map(|p| p.0).collect();
        let mut frame_ids = vec![0u32; boxes.len()];
        for (c, p) in match_boxes(&boxes, &prev_boxes, match_thresh) {
            frame_ids[c] = prev[p].1;
        }
        for id in frame_ids.iter_mut().filter(|id| **id == 0) {
            next_id += 1;
            *id = next_id;
        }
        prev = boxes
            .iter()
            .copied()
            .zip(frame_ids.iter().copied())
            .collect();
        ids.extend(frame_ids);
    }
    IdentityAssignment { ids }
}

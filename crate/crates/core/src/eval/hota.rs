//! HOTA-style matching and the detection/association accuracy terms.
//!
//! Matching runs in two passes. The first pass accumulates, for every
//! (gt track, pred track) pair, a soft co-occurrence count from per-frame IoUs
//! normalized by the frame's row and column sums, and turns it into a global
//! alignment score. The second pass solves, per frame, the assignment that
//! maximizes `alignment * IoU` (plus a small IoU tie-break term). That
//! matching does not depend on the localization threshold; a threshold `alpha`
//! only discards matched pairs with IoU below it, so the number of true
//! positives can only shrink as `alpha` grows.

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::lap::max_weight_assignment;
use crate::types::{ObsRef, VideoRecord};

/// Weight of the raw IoU added to `alignment * IoU` in the matching
/// objective; only decides between near-equal alignments.
pub const IOU_TIE_WEIGHT: f64 = 1e-6;

/// Slack used when comparing an IoU with a localization threshold.
pub const ALPHA_EPS: f64 = f64::EPSILON;

/// One matched pair of the threshold-free matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub gt: ObsRef,
    pub pred: ObsRef,
    /// Canonical observation index of the prediction within its video.
    pub pred_obs: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatches {
    pub pairs: Vec<MatchedPair>,
    pub num_gt: usize,
    pub num_pred: usize,
}

/// Threshold-free matching of a whole video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMatching {
    pub frames: Vec<FrameMatches>,
    /// Detections per gt trajectory (indexed like `gt.trajectories`).
    pub gt_len: Vec<u32>,
    /// Detections per pred trajectory.
    pub pred_len: Vec<u32>,
}

pub(crate) fn check_pair(pred: &VideoRecord, gt: &VideoRecord) -> Result<()> {
    if pred.video_id != gt.video_id {
        return Err(Error::VideoMismatch(
            pred.video_id.clone(),
            gt.video_id.clone(),
        ));
    }
    if pred.num_frames != gt.num_frames {
        return Err(Error::Invalid(format!(
            "video {}: {} predicted frames vs {} ground-truth frames",
            gt.video_id, pred.num_frames, gt.num_frames
        )));
    }
    Ok(())
}

/// Global alignment score of every (gt track, pred track) pair, row-major
/// over gt tracks.
fn global_alignment(
    pred: &VideoRecord,
    gt: &VideoRecord,
    pred_frames: &[Vec<ObsRef>],
    gt_frames: &[Vec<ObsRef>],
    gt_len: &[u32],
    pred_len: &[u32],
) -> Vec<f64> {
    let (ng, np) = (gt.trajectories.len(), pred.trajectories.len());
    let mut potential = vec![0.0; ng * np];
    for (g_obs, p_obs) in gt_frames.iter().zip(pred_frames) {
        if g_obs.is_empty() || p_obs.is_empty() {
            continue;
        }
        let sim: Vec<f64> = g_obs
            .iter()
            .flat_map(|&g| {
                p_obs
                    .iter()
                    .map(move |&p| iou(&gt.detection(g).bbox, &pred.detection(p).bbox))
            })
            .collect();
        let cols = p_obs.len();
        let row_sum: Vec<f64> = sim.chunks(cols).map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..cols)
            .map(|c| sim.iter().skip(c).step_by(cols).sum())
            .collect();
        for (r, &g) in g_obs.iter().enumerate() {
            for (c, &p) in p_obs.iter().enumerate() {
                let s = sim[r * cols + c];
                let denom = row_sum[r] + col_sum[c] - s;
                if denom > f64::EPSILON {
                    potential[g.track * np + p.track] += s / denom;
                }
            }
        }
    }
    (0..ng * np)
        .map(|k| {
            let (g, p) = (k / np, k % np);
            let denom = gt_len[g] as f64 + pred_len[p] as f64 - potential[k];
            if denom > 0.0 {
                potential[k] / denom
            } else {
                0.0
            }
        })
        .collect()
}

/// Threshold-free per-frame matching. Pairs with zero IoU are never kept.
pub fn optimal_matching(pred: &VideoRecord, gt: &VideoRecord) -> Result<VideoMatching> {
    check_pair(pred, gt)?;
    let gt_frames = gt.frames();
    let pred_frames = pred.frames();
    let gt_len: Vec<u32> = gt.trajectories.iter().map(|t| t.len() as u32).collect();
    let pred_len: Vec<u32> = pred.trajectories.iter().map(|t| t.len() as u32).collect();
    let align = global_alignment(pred, gt, &pred_frames, &gt_frames, &gt_len, &pred_len);
    let np = pred.trajectories.len();

    let mut pred_obs_index = 0usize;
    let mut frames = Vec::with_capacity(gt_frames.len());
    for (g_obs, p_obs) in gt_frames.iter().zip(&pred_frames) {
        let base = pred_obs_index;
        pred_obs_index += p_obs.len();
        let mut fm = FrameMatches {
            pairs: Vec::new(),
            num_gt: g_obs.len(),
            num_pred: p_obs.len(),
        };
        if !g_obs.is_empty() && !p_obs.is_empty() {
            let cols = p_obs.len();
            let ious: Vec<f64> = g_obs
                .iter()
                .flat_map(|&g| {
                    p_obs
                        .iter()
                        .map(move |&p| iou(&gt.detection(g).bbox, &pred.detection(p).bbox))
                })
                .collect();
            let scores: Vec<f64> = ious
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let (g, p) = (g_obs[k / cols], p_obs[k % cols]);
                    align[g.track * np + p.track] * v + IOU_TIE_WEIGHT * v
                })
                .collect();
            for (r, c) in max_weight_assignment(&scores, g_obs.len(), cols) {
                let v = ious[r * cols + c];
                if v > 0.0 {
                    fm.pairs.push(MatchedPair {
                        gt: g_obs[r],
                        pred: p_obs[c],
                        pred_obs: base + c,
                        iou: v,
                    });
                }
            }
        }
        frames.push(fm);
    }
    Ok(VideoMatching {
        frames,
        gt_len,
        pred_len,
    })
}

/// Matches of one frame at a fixed localization threshold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatchSet {
    /// `(pred, gt)` pairs.
    pub pairs: Vec<(ObsRef, ObsRef)>,
    pub false_positives: Vec<ObsRef>,
    pub false_negatives: Vec<ObsRef>,
}

/// Bijective per-frame matching at threshold `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub alpha: f64,
    pub frames: Vec<FrameMatchSet>,
}

impl MatchSet {
    pub fn tp(&self) -> usize {
        self.frames.iter().map(|f| f.pairs.len()).sum()
    }

    pub fn fp(&self) -> usize {
        self.frames.iter().map(|f| f.false_positives.len()).sum()
    }

    pub fn fn_count(&self) -> usize {
        self.frames.iter().map(|f| f.false_negatives.len()).sum()
    }
}

pub(crate) fn passes(iou: f64, alpha: f64) -> bool {
    iou >= alpha - ALPHA_EPS
}

/// Matching at one threshold, derived from [`optimal_matching`].
pub fn match_at_alpha(pred: &VideoRecord, gt: &VideoRecord, alpha: f64) -> Result<MatchSet> {
    let vm = optimal_matching(pred, gt)?;
    let gt_frames = gt.frames();
    let pred_frames = pred.frames();
    let frames = vm
        .frames
        .iter()
        .zip(gt_frames.iter().zip(&pred_frames))
        .map(|(fm, (g_obs, p_obs))| {
            let pairs: Vec<(ObsRef, ObsRef)> = fm
                .pairs
                .iter()
                .filter(|m| passes(m.iou, alpha))
                .map(|m| (m.pred, m.gt))
                .collect();
            FrameMatchSet {
                false_positives: p_obs
                    .iter()
                    .filter(|p| !pairs.iter().any(|(q, _)| q == *p))
                    .copied()
                    .collect(),
                false_negatives: g_obs
                    .iter()
                    .filter(|g| !pairs.iter().any(|(_, h)| h == *g))
                    .copied()
                    .collect(),
                pairs,
            }
        })
        .collect();
    Ok(MatchSet { alpha, frames })
}

/// `|TP| / (|TP| + |FP| + |FN|)`, 1 for an empty video.
pub fn det_a(m: &MatchSet) -> f64 {
    det_a_counts(m.tp(), m.fp(), m.fn_count())
}

pub(crate) fn det_a_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        tp as f64 / denom as f64
    }
}

/// Sum over true positives of their track pair's Ass-IoU, plus the TP count.
pub(crate) fn ass_iou_sum(
    pairs: impl IntoIterator<Item = (usize, usize)>,
    gt_len: &[u32],
    pred_len: &[u32],
) -> (f64, usize) {
    let np = pred_len.len();
    let mut counts = vec![0u32; gt_len.len() * np];
    for (g, p) in pairs {
        counts[g * np + p] += 1;
    }
    let mut sum = 0.0;
    let mut tp = 0usize;
    for (k, &tpa) in counts.iter().enumerate() {
        if tpa == 0 {
            continue;
        }
        let (g, p) = (k / np, k % np);
        let union = gt_len[g] + pred_len[p] - tpa;
        sum += tpa as f64 * (tpa as f64 / union as f64);
        tp += tpa as usize;
    }
    (sum, tp)
}

/// Mean Ass-IoU over true positives, where
/// `Ass-IoU = TPA / (TPA + FPA + FNA)` for the pair's tracks. Returns 1 when
/// there are no true positives.
pub fn ass_a(m: &MatchSet, pred: &VideoRecord, gt: &VideoRecord) -> f64 {
    let gt_len: Vec<u32> = gt.trajectories.iter().map(|t| t.len() as u32).collect();
    let pred_len: Vec<u32> = pred.trajectories.iter().map(|t| t.len() as u32).collect();
    let pairs = m
        .frames
        .iter()
        .flat_map(|f| f.pairs.iter().map(|(p, g)| (g.track, p.track)));
    let (sum, tp) = ass_iou_sum(pairs, &gt_len, &pred_len);
    if tp == 0 {
        1.0
    } else {
        sum / tp as f64
    }
}

//! Frame-level mAP-METEOR.
//!
//! Every frame with at least one ground-truth box is scored on its own. For
//! each (IoU, METEOR) threshold pair, predictions are visited by descending
//! score and claim the unmatched ground truth with the highest IoU among
//! those clearing both thresholds. Ground truth without a caption accepts any
//! caption (its METEOR is taken as 1). AP is the area under the all-points
//! interpolated precision/recall curve; the threshold grid is averaged per
//! frame, then frames are averaged.

use std::collections::HashMap;

use serde::Serialize;

use super::hota::check_pair;
use crate::capmetrics::meteor_lite;
use crate::error::Result;
use crate::geometry::iou;
use crate::types::VideoRecord;

pub const APM_IOU_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
pub const APM_METEOR_THRESHOLDS: [f64; 5] = [0.0, 0.05, 0.1, 0.15, 0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct ApmConfig {
    pub iou_thresholds: Vec<f64>,
    pub meteor_thresholds: Vec<f64>,
}

impl Default for ApmConfig {
    fn default() -> Self {
        ApmConfig {
            iou_thresholds: APM_IOU_THRESHOLDS.to_vec(),
            meteor_thresholds: APM_METEOR_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApmCell {
    pub iou_threshold: f64,
    pub meteor_threshold: f64,
    /// Mean AP over scored frames at this threshold pair.
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApmReport {
    pub ap_m: f64,
    pub grid: Vec<ApmCell>,
    /// Frames containing at least one ground-truth box.
    pub frames_scored: usize,
}

/// All-points interpolated AP of a ranked list of TP flags against `npos`
/// positives.
pub fn average_precision(ranked_tp: &[bool], npos: usize) -> f64 {
    if npos == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(ranked_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in ranked_tp.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    ranked_tp
        .iter()
        .zip(&precision)
        .filter(|(hit, _)| **hit)
        .map(|(_, p)| p / npos as f64)
        .sum()
}

/// Per-frame AP for every threshold cell (row-major: IoU outer, METEOR inner)
/// summed over the video's scored frames, plus the number of those frames.
pub(crate) fn video_apm(
    pred: &VideoRecord,
    gt: &VideoRecord,
    cfg: &ApmConfig,
) -> Result<(Vec<f64>, usize)> {
    check_pair(pred, gt)?;
    let cells = cfg.iou_thresholds.len() * cfg.meteor_thresholds.len();
    let mut sums = vec![0.0; cells];
    let mut frames_scored = 0;
    let mut meteor_cache: HashMap<(String, usize), f64> = HashMap::new();

    for (g_obs, p_obs) in gt.frames().iter().zip(pred.frames().iter()) {
        if g_obs.is_empty() {
            continue;
        }
        frames_scored += 1;
        let mut order: Vec<usize> = (0..p_obs.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (
                pred.detection(p_obs[a]).score,
                pred.detection(p_obs[b]).score,
            );
            sb.total_cmp(&sa)
        });
        let ng = g_obs.len();
        let mut ious = Vec::with_capacity(order.len() * ng);
        let mut meteors = Vec::with_capacity(order.len() * ng);
        for &k in &order {
            let p = p_obs[k];
            let pbox = pred.detection(p).bbox;
            let pcap = pred.trajectories[p.track].effective_caption(p.det);
            for &g in g_obs {
                ious.push(iou(&pbox, &gt.detection(g).bbox));
                let m = match (&gt.trajectories[g.track].caption, pcap) {
                    (None, _) => 1.0,
                    (Some(_), None) => 0.0,
                    (Some(gc), Some(pc)) => *meteor_cache
                        .entry((pc.raw.clone(), g.track))
                        .or_insert_with(|| meteor_lite(pc, gc)),
                };
                meteors.push(m);
            }
        }

        let mut cell = 0;
        for &t_iou in &cfg.iou_thresholds {
            for &t_met in &cfg.meteor_thresholds {
                let mut taken = vec![false; ng];
                let ranked: Vec<bool> = (0..order.len())
                    .map(|r| {
                        let mut best: Option<usize> = None;
                        for g in 0..ng {
                            let (v, m) = (ious[r * ng + g], meteors[r * ng + g]);
                            if taken[g] || v < t_iou || m < t_met {
                                continue;
                            }
                            if best.is_none_or(|b| v > ious[r * ng + b]) {
                                best = Some(g);
                            }
                        }
                        match best {
                            Some(g) => {
                                taken[g] = true;
                                true
                            }
                            None => false,
                        }
                    })
                    .collect();
                sums[cell] += average_precision(&ranked, ng);
                cell += 1;
            }
        }
    }
    Ok((sums, frames_scored))
}

pub(crate) fn finish_apm(sums: &[f64], frames: usize, cfg: &ApmConfig) -> ApmReport {
    let mut grid = Vec::with_capacity(sums.len());
    let mut k = 0;
    for &t_iou in &cfg.iou_thresholds {
        for &t_met in &cfg.meteor_thresholds {
            grid.push(ApmCell {
                iou_threshold: t_iou,
                meteor_threshold: t_met,
                ap: if frames == 0 {
                    0.0
                } else {
                    sums[k] / frames as f64
                },
            });
            k += 1;
        }
    }
    let ap_m = if grid.is_empty() {
        0.0
    } else {
        grid.iter().map(|c| c.ap).sum::<f64>() / grid.len() as f64
    };
    ApmReport {
        ap_m,
        grid,
        frames_scored: frames,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::types::{Detection, Trajectory};

    fn one_frame(gt_caption: Option<&str>, pred_x: f64) -> (VideoRecord, VideoRecord) {
        let mut gt_t = Trajectory::new(1, vec![Detection::new(0, BBox::new(0., 0., 10., 10.))]);
        if let Some(c) = gt_caption {
            gt_t = gt_t.with_caption(c);
        }
        let pred_t = Trajectory::new(
            1,
            vec![Detection::new(0, BBox::new(pred_x, 0., pred_x + 10., 10.)).with_score(0.9)],
        )
        .with_caption("a dog runs on grass");
        (
            VideoRecord::new("v", 1).with_trajectory(pred_t),
            VideoRecord::new("v", 1).with_trajectory(gt_t),
        )
    }

    fn apm(pred: &VideoRecord, gt: &VideoRecord) -> f64 {
        let cfg = ApmConfig::default();
        let (s, f) = video_apm(pred, gt, &cfg).unwrap();
        finish_apm(&s, f, &cfg).ap_m
    }

    #[test]
    fn ap_of_ranked_lists() {
        assert_eq!(average_precision(&[true], 1), 1.0);
        assert_eq!(average_precision(&[false, true], 1), 0.5);
        // precision at hits: 1, 2/3 -> envelope keeps 2/3 for the second
        assert!((average_precision(&[true, false, true], 2) - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&[], 3), 0.0);
    }

    #[test]
    fn exact_caption_high_iou_scores_one() {
        let (mut pred, gt) = one_frame(Some("a dog runs on grass"), 1.0);
        assert_eq!(apm(&pred, &gt), 1.0);
        // an uncaptioned prediction fails every captioned cell above 0
        pred.trajectories[0].caption = None;
        assert!((apm(&pred, &gt) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn low_iou_passes_only_the_loosest_threshold() {
        // IoU = 52/148 ~ 0.351 needs x offset: (10-x)*10 / (200 - (10-x)*10)
        let x = 10.0 - 2.0 * 200.0 * 0.35 / (10.0 * 1.35) / 2.0;
        let (pred, gt) = one_frame(Some("a dog runs on grass"), x);
        let v = iou(
            &pred.trajectories[0].detections[0].bbox,
            &gt.trajectories[0].detections[0].bbox,
        );
        assert!((v - 0.35).abs() < 1e-9, "{v}");
        assert!((apm(&pred, &gt) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn uncaptioned_gt_accepts_any_caption() {
        let (pred, gt) = one_frame(None, 1.0);
        assert_eq!(apm(&pred, &gt), 1.0);
    }
}

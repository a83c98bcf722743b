//! Domain records shared by every module.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::capmetrics::tokenize;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// A caption and its deterministic tokenization.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Caption {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Caption {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw);
        Caption { raw, tokens }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Debug for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Caption({:?})", self.raw)
    }
}

impl From<&str> for Caption {
    fn from(s: &str) -> Self {
        Caption::new(s)
    }
}

impl From<String> for Caption {
    fn from(s: String) -> Self {
        Caption::new(s)
    }
}

/// One object observation in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
    pub track_id: Option<u32>,
    pub caption: Option<Caption>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox) -> Self {
        Detection {
            frame,
            bbox,
            score: 1.0,
            track_id: None,
            caption: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn with_track(mut self, id: u32) -> Self {
        self.track_id = Some(id);
        self
    }

    pub fn with_caption(mut self, caption: impl Into<Caption>) -> Self {
        self.caption = Some(caption.into());
        self
    }
}

/// Detections sharing one identity, ordered by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub track_id: u32,
    pub detections: Vec<Detection>,
    pub caption: Option<Caption>,
}

impl Trajectory {
    pub fn new(track_id: u32, detections: Vec<Detection>) -> Self {
        let detections = detections
            .into_iter()
            .map(|d| Detection {
                track_id: Some(track_id),
                ..d
            })
            .collect();
        Trajectory {
            track_id,
            detections,
            caption: None,
        }
    }

    pub fn with_caption(mut self, caption: impl Into<Caption>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Caption used when scoring detection `det`: the detection-level caption
    /// if present, otherwise the trajectory caption.
    pub fn effective_caption(&self, det: usize) -> Option<&Caption> {
        self.detections[det]
            .caption
            .as_ref()
            .or(self.caption.as_ref())
    }
}

/// Position of one observation inside a [`VideoRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObsRef {
    pub track: usize,
    pub det: usize,
    pub frame: u32,
}

/// All trajectories of one video, for either predictions or ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub num_frames: u32,
    pub trajectories: Vec<Trajectory>,
}

impl VideoRecord {
    pub fn new(video_id: impl Into<String>, num_frames: u32) -> Self {
        VideoRecord {
            video_id: video_id.into(),
            num_frames,
            trajectories: Vec::new(),
        }
    }

    pub fn with_trajectory(mut self, t: Trajectory) -> Self {
        self.trajectories.push(t);
        self
    }

    pub fn num_detections(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("video {}: {msg}", self.video_id)));
        if self.num_frames == 0 {
            return bad("num_frames must be >= 1".into());
        }
        let mut ids = HashSet::new();
        for t in &self.trajectories {
            if t.track_id == 0 {
                return bad("track ids must be positive".into());
            }
            if !ids.insert(t.track_id) {
                return bad(format!("duplicate track id {}", t.track_id));
            }
            let mut prev: Option<u32> = None;
            for d in &t.detections {
                if d.frame >= self.num_frames {
                    return bad(format!(
                        "track {} has frame {} >= num_frames {}",
                        t.track_id, d.frame, self.num_frames
                    ));
                }
                if prev.is_some_and(|p| p >= d.frame) {
                    return bad(format!(
                        "track {} frames not strictly increasing at {}",
                        t.track_id, d.frame
                    ));
                }
                prev = Some(d.frame);
                if !d.bbox.is_valid() {
                    return bad(format!(
                        "track {} frame {}: invalid box",
                        t.track_id, d.frame
                    ));
                }
                if !(0.0..=1.0).contains(&d.score) {
                    return bad(format!(
                        "track {} frame {}: score {} outside [0,1]",
                        t.track_id, d.frame, d.score
                    ));
                }
                if d.track_id.is_some_and(|id| id != t.track_id) {
                    return bad(format!("track {} holds a foreign detection", t.track_id));
                }
            }
        }
        Ok(())
    }

    /// Observations in canonical order: by frame, then by trajectory position.
    ///
    /// Association matrices, feature matrices, likelihood tables and external
    /// score sidecars all index observations in this order.
    pub fn observations(&self) -> Vec<ObsRef> {
        let mut obs: Vec<ObsRef> = self
            .trajectories
            .iter()
            .enumerate()
            .flat_map(|(ti, t)| {
                t.detections.iter().enumerate().map(move |(di, d)| ObsRef {
                    track: ti,
                    det: di,
                    frame: d.frame,
                })
            })
            .collect();
        obs.sort_by_key(|o| (o.frame, o.track));
        obs
    }

    /// Observations grouped per frame (canonical order within a frame).
    pub fn frames(&self) -> Vec<Vec<ObsRef>> {
        let mut frames = vec![Vec::new(); self.num_frames as usize];
        for o in self.observations() {
            if let Some(f) = frames.get_mut(o.frame as usize) {
                f.push(o);
            }
        }
        frames
    }

    pub fn detection(&self, o: ObsRef) -> &Detection {
        &self.trajectories[o.track].detections[o.det]
    }

    /// Flattens to detections in canonical order, each carrying its track id.
    /// Trajectory captions are not part of the flat form.
    pub fn flatten(&self) -> Vec<Detection> {
        self.observations()
            .into_iter()
            .map(|o| {
                let mut d = self.detection(o).clone();
                d.track_id = Some(self.trajectories[o.track].track_id);
                d
            })
            .collect()
    }

    /// Groups flat detections by track id (ascending) and frame.
    pub fn from_detections(
        video_id: impl Into<String>,
        num_frames: u32,
        detections: impl IntoIterator<Item = Detection>,
    ) -> Result<Self> {
        let mut groups: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        for d in detections {
            let id = d
                .track_id
                .ok_or_else(|| Error::Invalid("detection without track id".into()))?;
            groups.entry(id).or_default().push(d);
        }
        let trajectories = groups
            .into_iter()
            .map(|(id, mut dets)| {
                dets.sort_by_key(|d| d.frame);
                Trajectory::new(id, dets)
            })
            .collect();
        let v = VideoRecord {
            video_id: video_id.into(),
            num_frames,
            trajectories,
        };
        v.validate()?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VideoRecord {
        let bx = BBox::new(0., 0., 1., 1.);
        VideoRecord::new("v", 4)
            .with_trajectory(Trajectory::new(
                2,
                vec![Detection::new(1, bx), Detection::new(3, bx)],
            ))
            .with_trajectory(Trajectory::new(
                5,
                vec![Detection::new(0, bx), Detection::new(1, bx).with_score(0.5)],
            ))
    }

    #[test]
    fn canonical_order_is_frame_major() {
        let obs = sample().observations();
        let order: Vec<(u32, usize)> = obs.iter().map(|o| (o.frame, o.track)).collect();
        assert_eq!(order, vec![(0, 1), (1, 0), (1, 1), (3, 0)]);
    }

    #[test]
    fn flatten_regroup_round_trip() {
        let v = sample();
        let back = VideoRecord::from_detections("v", 4, v.flatten()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn validation_catches_invariant_violations() {
        let bx = BBox::new(0., 0., 1., 1.);
        let dup_frame = VideoRecord::new("v", 3).with_trajectory(Trajectory::new(
            1,
            vec![Detection::new(1, bx), Detection::new(1, bx)],
        ));
        assert!(dup_frame.validate().is_err());
        let out_of_range = VideoRecord::new("v", 2)
            .with_trajectory(Trajectory::new(1, vec![Detection::new(2, bx)]));
        assert!(out_of_range.validate().is_err());
        let bad_score = VideoRecord::new("v", 2).with_trajectory(Trajectory::new(
            1,
            vec![Detection::new(0, bx).with_score(1.5)],
        ));
        assert!(bad_score.validate().is_err());
        let inverted = VideoRecord::new("v", 2).with_trajectory(Trajectory::new(
            1,
            vec![Detection::new(0, BBox::new(2., 0., 1., 1.))],
        ));
        assert!(inverted.validate().is_err());
        assert!(sample().validate().is_ok());
    }

    #[test]
    fn detection_caption_overrides_track_caption() {
        let bx = BBox::new(0., 0., 1., 1.);
        let t = Trajectory::new(
            1,
            vec![
                Detection::new(0, bx),
                Detection::new(1, bx).with_caption("a cat"),
            ],
        )
        .with_caption("a dog");
        assert_eq!(t.effective_caption(0).unwrap().raw, "a dog");
        assert_eq!(t.effective_caption(1).unwrap().raw, "a cat");
    }
}

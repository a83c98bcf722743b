//! Seeded synthetic scenarios: exact ground truth plus a perturbed copy as
//! prediction.
//!
//! The generator is ChaCha8 seeded with `seed`, one stream per video
//! (`set_stream(video index)`). Every random draw is made whatever the rates
//! are, so two configurations with the same seed differ only where a rate
//! threshold flips a decision; raising a rate only adds perturbations.
//!
//! Per video the ground truth draws, for each object: start and end frame,
//! width, height, position, velocity and a subject/verb/place caption. The
//! prediction then draws, per object: an id-switch decision and cut point, a
//! caption-corruption decision and replacement subject, and per detection a
//! drop decision, four standard normals for jitter and a score. Finally each
//! frame draws a false-positive decision, box and caption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::types::{Caption, Detection, Trajectory, VideoRecord};

pub const FRAME_WIDTH: f64 = 640.0;
pub const FRAME_HEIGHT: f64 = 480.0;

pub const SUBJECTS: [&str; 8] = [
    "a man",
    "a woman",
    "a dog",
    "a cat",
    "a red car",
    "a child",
    "a horse",
    "a bird",
];
pub const VERBS: [&str; 5] = ["walks", "runs", "sits", "jumps", "stands"];
pub const PLACES: [&str; 5] = [
    "on the grass",
    "near the road",
    "in the water",
    "by the tree",
    "on the street",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_videos: usize,
    pub frames_per_video: u32,
    pub objects_per_video: usize,
    /// Box corner noise as a fraction of the box width/height.
    pub box_jitter_sigma: f64,
    pub drop_rate: f64,
    /// Probability per frame of one spurious detection.
    pub false_positive_rate: f64,
    /// Probability per track of splitting it into two identities.
    pub id_switch_rate: f64,
    /// Probability per track of a caption with a different subject.
    pub caption_corruption_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            num_videos: 4,
            frames_per_video: 20,
            objects_per_video: 3,
            box_jitter_sigma: 0.0,
            drop_rate: 0.0,
            false_positive_rate: 0.0,
            id_switch_rate: 0.0,
            caption_corruption_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("drop_rate", self.drop_rate),
            ("false_positive_rate", self.false_positive_rate),
            ("id_switch_rate", self.id_switch_rate),
            ("caption_corruption_rate", self.caption_corruption_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParam(format!("{name} = {r} outside [0,1]")));
            }
        }
        if !(self.box_jitter_sigma >= 0.0 && self.box_jitter_sigma.is_finite()) {
            return Err(Error::InvalidParam(
                "box_jitter_sigma must be finite and >= 0".into(),
            ));
        }
        if self.frames_per_video == 0 {
            return Err(Error::InvalidParam("frames_per_video must be >= 1".into()));
        }
        Ok(())
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn rounded(b: BBox) -> BBox {
    BBox::new(round2(b.x1), round2(b.y1), round2(b.x2), round2(b.y2))
}

struct Object {
    start: u32,
    end: u32,
    w: f64,
    h: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    subject: usize,
    verb: usize,
    place: usize,
}

fn caption(subject: usize, verb: usize, place: usize) -> String {
    format!("{} {} {}", SUBJECTS[subject], VERBS[verb], PLACES[place])
}

fn draw_object(rng: &mut ChaCha8Rng, frames: u32) -> Object {
    let quarter = frames / 4;
    let start = rng.random_range(0..=quarter);
    let end = rng.random_range((frames - 1 - quarter).max(start)..frames);
    let w = rng.random_range(30.0..80.0);
    let h = rng.random_range(30.0..80.0);
    Object {
        start,
        end,
        w,
        h,
        x: rng.random_range(0.0..FRAME_WIDTH - w),
        y: rng.random_range(0.0..FRAME_HEIGHT - h),
        vx: rng.random_range(-3.0..3.0),
        vy: rng.random_range(-3.0..3.0),
        subject: rng.random_range(0..SUBJECTS.len()),
        verb: rng.random_range(0..VERBS.len()),
        place: rng.random_range(0..PLACES.len()),
    }
}

fn video(cfg: &SynthConfig, index: usize) -> (VideoRecord, VideoRecord) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let frames = cfg.frames_per_video;
    let video_id = format!("synth{index:04}");

    let objects: Vec<Object> = (0..cfg.objects_per_video)
        .map(|_| draw_object(&mut rng, frames))
        .collect();
    let mut gt = VideoRecord::new(video_id.clone(), frames);
    for (k, o) in objects.iter().enumerate() {
        let dets = (o.start..=o.end)
            .map(|t| {
                let dt = (t - o.start) as f64;
                let b = BBox::from_xywh(o.x + o.vx * dt, o.y + o.vy * dt, o.w, o.h);
                Detection::new(t, rounded(b))
            })
            .collect();
        gt.trajectories.push(
            Trajectory::new(k as u32 + 1, dets).with_caption(caption(o.subject, o.verb, o.place)),
        );
    }

    let mut pred = VideoRecord::new(video_id, frames);
    let mut tails = Vec::new();
    let mut next_id = cfg.objects_per_video as u32 + 1;
    for (t, o) in gt.trajectories.iter().zip(&objects) {
        let switch = rng.random::<f64>() < cfg.id_switch_rate;
        let cut = rng.random_range(1..t.len().max(2));
        let corrupt = rng.random::<f64>() < cfg.caption_corruption_rate;
        let shift = rng.random_range(0..SUBJECTS.len() - 1);
        let subject = if corrupt {
            (o.subject + 1 + shift) % SUBJECTS.len()
        } else {
            o.subject
        };
        let cap = Caption::new(caption(subject, o.verb, o.place));

        let mut head = Vec::new();
        let mut tail = Vec::new();
        for (j, d) in t.detections.iter().enumerate() {
            let dropped = rng.random::<f64>() < cfg.drop_rate;
            let n: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let score = rng.random_range(0.5..=1.0);
            if dropped {
                continue;
            }
            let (bw, bh) = (d.bbox.width(), d.bbox.height());
            let s = cfg.box_jitter_sigma;
            let x1 = d.bbox.x1 + s * bw * n[0];
            let y1 = d.bbox.y1 + s * bh * n[1];
            let x2 = (d.bbox.x2 + s * bw * n[2]).max(x1 + 1.0);
            let y2 = (d.bbox.y2 + s * bh * n[3]).max(y1 + 1.0);
            let det = Detection::new(d.frame, rounded(BBox::new(x1, y1, x2, y2))).with_score(score);
            if switch && t.len() >= 2 && j >= cut {
                tail.push(det);
            } else {
                head.push(det);
            }
        }
        if !head.is_empty() {
            pred.trajectories
                .push(Trajectory::new(t.track_id, head).with_caption(cap.clone()));
        }
        if !tail.is_empty() {
            tails.push(Trajectory::new(next_id, tail).with_caption(cap));
            next_id += 1;
        }
    }
    pred.trajectories.extend(tails);

    for t in 0..frames {
        let spurious = rng.random::<f64>() < cfg.false_positive_rate;
        let w = rng.random_range(30.0..80.0);
        let h = rng.random_range(30.0..80.0);
        let x = rng.random_range(0.0..FRAME_WIDTH - w);
        let y = rng.random_range(0.0..FRAME_HEIGHT - h);
        let score = rng.random_range(0.0..0.5);
        let c = caption(
            rng.random_range(0..SUBJECTS.len()),
            rng.random_range(0..VERBS.len()),
            rng.random_range(0..PLACES.len()),
        );
        if spurious {
            let det = Detection::new(t, rounded(BBox::from_xywh(x, y, w, h))).with_score(score);
            pred.trajectories
                .push(Trajectory::new(next_id, vec![det]).with_caption(c));
            next_id += 1;
        }
    }
    (gt, pred)
}

/// Generates `(ground truth, prediction)` video lists.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<VideoRecord>, Vec<VideoRecord>)> {
    cfg.validate()?;
    Ok((0..cfg.num_videos).map(|v| video(cfg, v)).unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_scores(v: &mut [VideoRecord]) {
        for r in v {
            for t in &mut r.trajectories {
                for d in &mut t.detections {
                    d.score = 1.0;
                }
            }
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = SynthConfig {
            box_jitter_sigma: 0.05,
            drop_rate: 0.1,
            false_positive_rate: 0.2,
            id_switch_rate: 0.5,
            caption_corruption_rate: 0.5,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        for v in a.0.iter().chain(&a.1) {
            v.validate().unwrap();
        }
    }

    #[test]
    fn zero_rates_copy_ground_truth() {
        let (gt, mut pred) = generate(&SynthConfig::default()).unwrap();
        strip_scores(&mut pred);
        assert_eq!(gt, pred);
    }

    #[test]
    fn full_drop_removes_everything() {
        let cfg = SynthConfig {
            drop_rate: 1.0,
            ..Default::default()
        };
        let (_, pred) = generate(&cfg).unwrap();
        assert!(pred.iter().all(|v| v.num_detections() == 0));
    }

    #[test]
    fn ground_truth_ignores_rates() {
        let cfg = SynthConfig {
            box_jitter_sigma: 0.1,
            id_switch_rate: 1.0,
            ..Default::default()
        };
        assert_eq!(
            generate(&cfg).unwrap().0,
            generate(&SynthConfig::default()).unwrap().0
        );
    }

    #[test]
    fn corrupted_captions_change_subject() {
        let cfg = SynthConfig {
            caption_corruption_rate: 1.0,
            ..Default::default()
        };
        let (gt, pred) = generate(&cfg).unwrap();
        for (g, p) in gt.iter().zip(&pred) {
            for (a, b) in g.trajectories.iter().zip(&p.trajectories) {
                assert_ne!(a.caption, b.caption);
            }
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let cfg = SynthConfig {
            drop_rate: 1.5,
            ..Default::default()
        };
        assert!(generate(&cfg).is_err());
    }
}

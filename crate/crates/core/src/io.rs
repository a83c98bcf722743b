//! File formats.
//!
//! * dataset: JSON list of `{video_id, num_frames, tracks: [{track_id,
//!   caption?, boxes: [{frame, box: [x1,y1,x2,y2], score?, caption?}]}]}`
//! * association matrix: `{video_id, frame_of, values, dim}` (one object or a
//!   list), values row-major `dim x dim`
//! * feature matrix: `{video_id, frame_of?, values, dim: [rows, cols]}`
//! * identities: `{video_id, ids, num_tracks}`
//! * queries: JSON list of `{query_id, video_id, caption, span: [s, e],
//!   boxes: {frame: box}}`
//! * external scores: CSV `video_id,pred_observation_index,gt_track_id,score`
//! * likelihood table: CSV `video_id,frame,observation_index,query_id,nll`
//!
//! Observation indices always refer to the canonical order of
//! [`VideoRecord::observations`]. JSON syntax errors report line and column.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::aggregate::FeatureMatrix;
use crate::assoc::{AssocMatrix, IdentityAssignment};
use crate::capmetrics::{ExternalScores, PairKey};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ground::{Query, TableScorer};
use crate::types::{Caption, Detection, Trajectory, VideoRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BoxEntry {
    frame: u32,
    #[serde(rename = "box")]
    bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrackEntry {
    track_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
    boxes: Vec<BoxEntry>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VideoEntry {
    video_id: String,
    num_frames: u32,
    tracks: Vec<TrackEntry>,
    #[serde(flatten, skip_serializing)]
    extra: BTreeMap<String, serde_json::Value>,
}

fn reject_unknown(
    extra: &BTreeMap<String, serde_json::Value>,
    at: impl FnOnce() -> String,
) -> Result<()> {
    match extra.keys().next() {
        Some(k) => Err(Error::Invalid(format!("unknown field '{k}' in {}", at()))),
        None => Ok(()),
    }
}

impl VideoEntry {
    fn into_record(self, strict: bool) -> Result<VideoRecord> {
        if strict {
            reject_unknown(&self.extra, || format!("video {}", self.video_id))?;
        }
        let mut v = VideoRecord::new(self.video_id, self.num_frames);
        for t in self.tracks {
            if strict {
                reject_unknown(&t.extra, || {
                    format!("video {} track {}", v.video_id, t.track_id)
                })?;
            }
            let mut dets = Vec::with_capacity(t.boxes.len());
            for b in t.boxes {
                if strict {
                    reject_unknown(&b.extra, || {
                        format!(
                            "video {} track {} frame {}",
                            v.video_id, t.track_id, b.frame
                        )
                    })?;
                }
                let mut d = Detection::new(b.frame, b.bbox).with_score(b.score.unwrap_or(1.0));
                d.caption = b.caption.map(Caption::new);
                dets.push(d);
            }
            let mut tr = Trajectory::new(t.track_id, dets);
            tr.caption = t.caption.map(Caption::new);
            v.trajectories.push(tr);
        }
        v.validate()?;
        Ok(v)
    }

    fn from_record(v: &VideoRecord) -> Self {
        VideoEntry {
            video_id: v.video_id.clone(),
            num_frames: v.num_frames,
            tracks: v
                .trajectories
                .iter()
                .map(|t| TrackEntry {
                    track_id: t.track_id,
                    caption: t.caption.as_ref().map(|c| c.raw.clone()),
                    boxes: t
                        .detections
                        .iter()
                        .map(|d| BoxEntry {
                            frame: d.frame,
                            bbox: d.bbox,
                            score: Some(d.score),
                            caption: d.caption.as_ref().map(|c| c.raw.clone()),
                            extra: BTreeMap::new(),
                        })
                        .collect(),
                    extra: BTreeMap::new(),
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

/// Parses and validates a dataset file. With `strict`, unknown fields are
/// errors; otherwise they are ignored.
pub fn parse_dataset(text: &str, strict: bool) -> Result<Vec<VideoRecord>> {
    let entries: Vec<VideoEntry> = serde_json::from_str(text)?;
    entries.into_iter().map(|e| e.into_record(strict)).collect()
}

pub fn dataset_to_string(videos: &[VideoRecord]) -> Result<String> {
    let entries: Vec<VideoEntry> = videos.iter().map(VideoEntry::from_record).collect();
    Ok(serde_json::to_string_pretty(&entries)? + "\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

fn one_or_many<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    // parse as a value first so syntax errors keep their position
    let value: serde_json::Value = serde_json::from_str(text)?;
    let parsed: OneOrMany<T> = serde_json::from_value(value)?;
    Ok(match parsed {
        OneOrMany::Many(v) => v,
        OneOrMany::One(x) => vec![x],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssocFile {
    pub video_id: String,
    pub frame_of: Vec<u32>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl AssocFile {
    pub fn matrix(&self) -> Result<AssocMatrix> {
        if self.frame_of.len() != self.dim || self.values.len() != self.dim * self.dim {
            return Err(Error::Dimension(format!(
                "video {}: dim {} with {} frame entries and {} values",
                self.video_id,
                self.dim,
                self.frame_of.len(),
                self.values.len()
            )));
        }
        AssocMatrix::new(self.values.clone(), self.frame_of.clone())
    }

    pub fn from_matrix(video_id: &str, a: &AssocMatrix) -> Self {
        AssocFile {
            video_id: video_id.to_owned(),
            frame_of: a.frame_of().to_vec(),
            dim: a.dim(),
            values: a.values().to_vec(),
        }
    }
}

pub fn parse_assoc(text: &str) -> Result<Vec<AssocFile>> {
    let files: Vec<AssocFile> = one_or_many(text)?;
    for f in &files {
        f.matrix()?;
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFile {
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_of: Option<Vec<u32>>,
    pub dim: [usize; 2],
    pub values: Vec<f64>,
}

impl FeatureFile {
    pub fn matrix(&self) -> Result<FeatureMatrix> {
        if let Some(f) = &self.frame_of {
            if f.len() != self.dim[0] {
                return Err(Error::Dimension(format!(
                    "video {}: {} rows but {} frame entries",
                    self.video_id,
                    self.dim[0],
                    f.len()
                )));
            }
        }
        FeatureMatrix::new(self.values.clone(), self.dim[0], self.dim[1])
    }

    pub fn from_matrix(video_id: &str, frame_of: Option<Vec<u32>>, f: &FeatureMatrix) -> Self {
        FeatureFile {
            video_id: video_id.to_owned(),
            frame_of,
            dim: [f.rows(), f.cols()],
            values: f.values().to_vec(),
        }
    }
}

pub fn parse_features(text: &str) -> Result<Vec<FeatureFile>> {
    let files: Vec<FeatureFile> = one_or_many(text)?;
    for f in &files {
        f.matrix()?;
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityFile {
    pub video_id: String,
    pub ids: Vec<u32>,
    pub num_tracks: usize,
}

impl IdentityFile {
    pub fn new(video_id: &str, a: &IdentityAssignment) -> Self {
        IdentityFile {
            video_id: video_id.to_owned(),
            ids: a.ids.clone(),
            num_tracks: a.num_tracks(),
        }
    }
}

pub fn parse_identities(text: &str) -> Result<Vec<IdentityFile>> {
    one_or_many(text)
}

/// Per-track trajectory features from hard aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFeatures {
    pub video_id: String,
    pub m: usize,
    pub tracks: BTreeMap<u32, Vec<f64>>,
}

pub fn parse_queries(text: &str) -> Result<Vec<Query>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    Ok(serde_json::from_value(value)?)
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Invalid(format!("line {}: {e}", p.line())),
        None => Error::Invalid(e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct ExternalRow {
    video_id: String,
    pred_observation_index: usize,
    gt_track_id: u32,
    score: f64,
}

pub fn parse_external_scores(text: &str) -> Result<ExternalScores> {
    let mut out = ExternalScores::default();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for (k, row) in rdr.deserialize::<ExternalRow>().enumerate() {
        let r = row.map_err(csv_error)?;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::Invalid(format!(
                "line {}: score {} outside [0,1]",
                k + 2,
                r.score
            )));
        }
        out.insert(
            PairKey {
                video_id: r.video_id,
                pred_obs: r.pred_observation_index,
                gt_track: r.gt_track_id,
            },
            r.score,
        );
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct LikelihoodRow {
    video_id: String,
    frame: u32,
    observation_index: usize,
    query_id: String,
    nll: f64,
}

pub fn parse_likelihood_table(text: &str) -> Result<TableScorer> {
    let mut out = TableScorer::default();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for (k, row) in rdr.deserialize::<LikelihoodRow>().enumerate() {
        let r = row.map_err(csv_error)?;
        out.insert(
            &r.video_id,
            r.frame,
            r.observation_index,
            &r.query_id,
            r.nll,
        )
        .map_err(|e| Error::Invalid(format!("line {}: {e}", k + 2)))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DATASET: &str = r#"[
      {"video_id": "v1", "num_frames": 3, "tracks": [
        {"track_id": 1, "caption": "a dog runs", "boxes": [
          {"frame": 0, "box": [0, 0, 10, 10], "score": 0.9},
          {"frame": 2, "box": [1, 0, 11, 10], "caption": "a dog stops"}
        ]},
        {"track_id": 4, "boxes": [{"frame": 1, "box": [20, 20, 30, 30]}]}
      ]}
    ]"#;

    #[test]
    fn dataset_round_trip() {
        let v = parse_dataset(DATASET, true).unwrap();
        assert_eq!(v[0].trajectories.len(), 2);
        assert_eq!(
            v[0].trajectories[0].detections[1]
                .caption
                .as_ref()
                .unwrap()
                .raw,
            "a dog stops"
        );
        assert_eq!(v[0].trajectories[1].detections[0].score, 1.0);
        let text = dataset_to_string(&v).unwrap();
        assert_eq!(parse_dataset(&text, true).unwrap(), v);
        assert_eq!(
            dataset_to_string(&parse_dataset(&text, true).unwrap()).unwrap(),
            text
        );
    }

    #[test]
    fn strict_mode_rejects_unknown_fields() {
        let text = DATASET.replace("\"score\": 0.9", "\"score\": 0.9, \"label\": 3");
        assert!(parse_dataset(&text, false).is_ok());
        let err = parse_dataset(&text, true).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_dataset("[\n  {\"video_id\": }\n]", false).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn semantic_errors_are_reported() {
        let text = DATASET.replace("\"frame\": 2", "\"frame\": 5");
        assert!(parse_dataset(&text, false).is_err());
    }

    #[test]
    fn assoc_round_trip_and_checks() {
        let text = r#"{"video_id": "v", "frame_of": [0, 1], "dim": 2, "values": [1, 0.8, 0.8, 1]}"#;
        let files = parse_assoc(text).unwrap();
        let a = files[0].matrix().unwrap();
        assert_eq!(a.get(0, 1), 0.8);
        let again = serde_json::to_string(&AssocFile::from_matrix("v", &a)).unwrap();
        assert_eq!(parse_assoc(&again).unwrap(), files);
        assert!(parse_assoc(
            r#"{"video_id": "v", "frame_of": [0], "dim": 2, "values": [1, 0, 0, 1]}"#
        )
        .is_err());
        assert!(parse_assoc(&format!("[{text}, {text}]")).unwrap().len() == 2);
    }

    #[test]
    fn features_round_trip() {
        let text = r#"{"video_id": "v", "dim": [2, 3], "values": [1, 2, 3, 4, 5, 6]}"#;
        let files = parse_features(text).unwrap();
        let f = files[0].matrix().unwrap();
        assert_eq!(f.row(1), &[4.0, 5.0, 6.0]);
        assert!(parse_features(r#"{"video_id": "v", "dim": [2, 2], "values": [1]}"#).is_err());
    }

    #[test]
    fn sidecars() {
        let ext = parse_external_scores(
            "video_id,pred_observation_index,gt_track_id,score\nv,0,1,0.5\nv,1,1,0.25\n",
        )
        .unwrap();
        assert_eq!(ext.len(), 2);
        let err =
            parse_external_scores("video_id,pred_observation_index,gt_track_id,score\nv,0,1,2\n")
                .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_external_scores(
            "video_id,pred_observation_index,gt_track_id,score\nv,x,1,0.2\n"
        )
        .is_err());

        let t =
            parse_likelihood_table("video_id,frame,observation_index,query_id,nll\nv,0,0,q,1.5\n")
                .unwrap();
        assert_eq!(t.len(), 1);
        assert!(parse_likelihood_table(
            "video_id,frame,observation_index,query_id,nll\nv,0,0,q,-1\n"
        )
        .is_err());
    }

    #[test]
    fn queries_parse() {
        let q = parse_queries(r#"[{"query_id": "q1", "video_id": "v", "caption": "a dog", "span": [1, 2], "boxes": {"1": [0, 0, 5, 5], "2": [0, 0, 5, 5]}}]"#).unwrap();
        assert_eq!(q[0].span.len(), 2);
        assert_eq!(q[0].boxes.len(), 2);
        assert!(parse_queries(
            r#"[{"query_id": "q1", "video_id": "v", "caption": "a", "span": [3, 2], "boxes": {}}]"#
        )
        .is_err());
    }
}

//! Captioned tracking evaluation (CHOTA and its DetA/AssA/CapA components),
//! frame-level mAP-METEOR and grounding IoUs.
//!
//! Videos are evaluated independently, possibly in parallel, and their
//! per-threshold counts are pooled in video-id order, so the report does not
//! depend on the number of workers or on the order videos were supplied in.

mod apm;
mod grounding;
mod hota;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::capmetrics::{
    external_score, score_pair, ExternalScorer, IdfTable, MetricSet, PairKey, SubMetric,
};
use crate::error::{Error, Result};
use crate::types::{Caption, VideoRecord};

pub use apm::{
    average_precision, ApmCell, ApmConfig, ApmReport, APM_IOU_THRESHOLDS, APM_METEOR_THRESHOLDS,
};
pub use grounding::{grounding_ious, GroundingIous, Span};
pub use hota::{
    ass_a, det_a, match_at_alpha, optimal_matching, FrameMatchSet, FrameMatches, MatchSet,
    MatchedPair, VideoMatching, ALPHA_EPS, IOU_TIE_WEIGHT,
};

/// Localization thresholds the accuracies are integrated over.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid(Vec<f64>);

impl AlphaGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidParam("alpha grid is empty".into()));
        }
        if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidParam("alphas must lie in (0,1)".into()));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam(
                "alphas must be strictly increasing".into(),
            ));
        }
        Ok(AlphaGrid(alphas))
    }

    pub fn alphas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid((1..20).map(|k| k as f64 / 20.0).collect())
    }
}

impl FromStr for AlphaGrid {
    type Err = Error;

    /// Comma-separated values, e.g. `0.3,0.5,0.7`.
    fn from_str(s: &str) -> Result<Self> {
        let alphas = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParam(format!("bad alpha '{}'", p.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        AlphaGrid::new(alphas)
    }
}

/// How CapA treats the localization threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CapaMode {
    /// CapA computed at every alpha of the grid and averaged.
    #[default]
    Integrated,
    /// CapA computed once, from the matches at this threshold.
    Single(f64),
}

impl fmt::Display for CapaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapaMode::Integrated => f.write_str("integrated"),
            CapaMode::Single(a) => write!(f, "single:{a}"),
        }
    }
}

impl FromStr for CapaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "integrated" {
            return Ok(CapaMode::Integrated);
        }
        let a = s
            .strip_prefix("single:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::InvalidParam(format!("bad CapA mode '{s}' (integrated | single:<alpha>)"))
            })?;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParam(format!("CapA alpha {a} outside (0,1)")));
        }
        Ok(CapaMode::Single(a))
    }
}

/// Caption scoring setup shared by all videos.
#[derive(Clone, Default)]
pub struct CaptionConfig<'a> {
    pub metrics: MetricSet,
    pub external: Option<&'a dyn ExternalScorer>,
}

impl fmt::Debug for CaptionConfig<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CaptionConfig")
            .field("metrics", &self.metrics.to_string())
            .field("external", &self.external.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    pub grid: AlphaGrid,
    pub captions: CaptionConfig<'a>,
    pub capa: CapaMode,
    /// Worker threads; 0 uses the available parallelism.
    pub jobs: usize,
}

/// `sqrt(DetA * AssA)`.
pub fn hota_score(det_a: f64, ass_a: f64) -> f64 {
    (det_a * ass_a).sqrt()
}

/// `cbrt(DetA * AssA * CapA)`.
pub fn chota_score(det_a: f64, ass_a: f64, cap_a: f64) -> f64 {
    (det_a * ass_a * cap_a).cbrt()
}

/// HOTA and CHOTA from components; without a CapA, CHOTA falls back to HOTA.
pub fn combine(det_a: f64, ass_a: f64, cap_a: Option<f64>) -> (f64, f64) {
    let hota = hota_score(det_a, ass_a);
    (hota, cap_a.map_or(hota, |c| chota_score(det_a, ass_a, c)))
}

/// Scores caption pairs for one evaluation run.
pub(crate) struct CaptionJudge<'a> {
    metrics: MetricSet,
    internal: Option<MetricSet>,
    external: Option<&'a dyn ExternalScorer>,
    idf: IdfTable,
}

impl<'a> CaptionJudge<'a> {
    fn new(cfg: &CaptionConfig<'a>, gt: &[&VideoRecord]) -> Result<Self> {
        let internal = MetricSet::new(
            cfg.metrics
                .metrics()
                .iter()
                .copied()
                .filter(|m| *m != SubMetric::External),
        )
        .ok();
        let uses_external = cfg.metrics.contains(SubMetric::External);
        if uses_external && cfg.external.is_none() {
            return Err(Error::Scorer(
                "external metric enabled but no external scores supplied".into(),
            ));
        }
        let idf = if cfg.metrics.contains(SubMetric::Cider) {
            IdfTable::build(
                gt.iter()
                    .flat_map(|v| v.trajectories.iter().filter_map(|t| t.caption.as_ref())),
            )
        } else {
            IdfTable::default()
        };
        Ok(CaptionJudge {
            metrics: cfg.metrics.clone(),
            internal,
            external: if uses_external { cfg.external } else { None },
            idf,
        })
    }

    /// Mean of the enabled sub-scores for one matched pair. A prediction
    /// without any caption scores 0 on the caption-based sub-metrics.
    fn score(
        &self,
        pred: Option<&Caption>,
        gt: &Caption,
        gt_track: usize,
        key: impl FnOnce() -> PairKey,
        cache: &mut HashMap<(String, usize), f64>,
    ) -> Result<f64> {
        let mut sum = match (&self.internal, pred) {
            (Some(internal), Some(pc)) => match cache.get(&(pc.raw.clone(), gt_track)) {
                Some(v) => *v,
                None => {
                    let v: f64 = score_pair(pc, gt, &self.idf, internal, None)?
                        .present()
                        .sum();
                    cache.insert((pc.raw.clone(), gt_track), v);
                    v
                }
            },
            _ => 0.0,
        };
        if let Some(scorer) = self.external {
            sum += external_score(scorer, &key())?;
        }
        Ok(sum / self.metrics.divisor() as f64)
    }
}

/// Counts of one video (or a pool of videos) at every evaluated threshold.
#[derive(Debug, Clone, PartialEq)]
struct Counts {
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
    ass_sum: Vec<f64>,
    cap_sum: Vec<f64>,
    tp_prime: Vec<usize>,
    gt_captions: usize,
    num_gt: usize,
    num_pred: usize,
}

impl Counts {
    fn zeros(n: usize) -> Self {
        Counts {
            tp: vec![0; n],
            fp: vec![0; n],
            fn_: vec![0; n],
            ass_sum: vec![0.0; n],
            cap_sum: vec![0.0; n],
            tp_prime: vec![0; n],
            gt_captions: 0,
            num_gt: 0,
            num_pred: 0,
        }
    }

    fn add(&mut self, o: &Counts) {
        for k in 0..self.tp.len() {
            self.tp[k] += o.tp[k];
            self.fp[k] += o.fp[k];
            self.fn_[k] += o.fn_[k];
            self.ass_sum[k] += o.ass_sum[k];
            self.cap_sum[k] += o.cap_sum[k];
            self.tp_prime[k] += o.tp_prime[k];
        }
        self.gt_captions += o.gt_captions;
        self.num_gt += o.num_gt;
        self.num_pred += o.num_pred;
    }
}

/// `thresholds` is the grid, optionally followed by the single CapA alpha.
fn video_counts(
    pred: &VideoRecord,
    gt: &VideoRecord,
    thresholds: &[f64],
    judge: &CaptionJudge,
) -> Result<Counts> {
    let vm = optimal_matching(pred, gt)?;
    let n = thresholds.len();
    let mut c = Counts::zeros(n);
    c.num_gt = gt.num_detections();
    c.num_pred = pred.num_detections();
    c.gt_captions = gt
        .trajectories
        .iter()
        .filter(|t| t.caption.is_some())
        .count();

    let mut cache = HashMap::new();
    let mut pair_scores = Vec::new();
    for fm in &vm.frames {
        for m in &fm.pairs {
            let gt_t = &gt.trajectories[m.gt.track];
            let score = match &gt_t.caption {
                Some(gc) => Some(judge.score(
                    pred.trajectories[m.pred.track].effective_caption(m.pred.det),
                    gc,
                    m.gt.track,
                    || PairKey {
                        video_id: gt.video_id.clone(),
                        pred_obs: m.pred_obs,
                        gt_track: gt_t.track_id,
                    },
                    &mut cache,
                )?),
                None => None,
            };
            pair_scores.push(score);
        }
    }

    for (k, &alpha) in thresholds.iter().enumerate() {
        let mut tp = 0;
        let mut cap_sum = 0.0;
        let mut tp_prime = 0;
        let mut pairs = Vec::new();
        let mut idx = 0;
        for fm in &vm.frames {
            for m in &fm.pairs {
                if hota::passes(m.iou, alpha) {
                    tp += 1;
                    pairs.push((m.gt.track, m.pred.track));
                    if let Some(s) = pair_scores[idx] {
                        cap_sum += s;
                        tp_prime += 1;
                    }
                }
                idx += 1;
            }
        }
        c.ass_sum[k] = hota::ass_iou_sum(pairs, &vm.gt_len, &vm.pred_len).0;
        c.tp[k] = tp;
        c.fp[k] = c.num_pred - tp;
        c.fn_[k] = c.num_gt - tp;
        c.cap_sum[k] = cap_sum;
        c.tp_prime[k] = tp_prime;
    }
    Ok(c)
}

/// Caption accuracy over matched pairs of `m`; `None` when `gt` has no
/// captioned trajectory.
pub fn cap_a(
    m: &MatchSet,
    pred: &VideoRecord,
    gt: &VideoRecord,
    captions: &CaptionConfig,
) -> Result<Option<f64>> {
    if gt.trajectories.iter().all(|t| t.caption.is_none()) {
        return Ok(None);
    }
    let judge = CaptionJudge::new(captions, &[gt])?;
    let canonical: HashMap<_, usize> = pred
        .observations()
        .into_iter()
        .enumerate()
        .map(|(i, o)| (o, i))
        .collect();
    let mut cache = HashMap::new();
    let (mut sum, mut n) = (0.0, 0usize);
    for f in &m.frames {
        for (p, g) in &f.pairs {
            let gt_t = &gt.trajectories[g.track];
            if let Some(gc) = &gt_t.caption {
                sum += judge.score(
                    pred.trajectories[p.track].effective_caption(p.det),
                    gc,
                    g.track,
                    || PairKey {
                        video_id: gt.video_id.clone(),
                        pred_obs: canonical[p],
                        gt_track: gt_t.track_id,
                    },
                    &mut cache,
                )?;
                n += 1;
            }
        }
    }
    Ok(Some(if n == 0 { 0.0 } else { sum / n as f64 }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub det_a: f64,
    pub ass_a: f64,
    /// No true positives at this alpha; `ass_a` is reported as 1.
    pub ass_a_undefined: bool,
    pub cap_a: Option<f64>,
    pub hota: f64,
    pub chota: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp_prime: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub det_a: f64,
    pub ass_a: f64,
    pub cap_a: Option<f64>,
    pub hota: f64,
    pub chota: f64,
    pub num_gt_dets: usize,
    pub num_pred_dets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub chota: f64,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub cap_a: Option<f64>,
    /// No ground-truth captions anywhere: CapA is undefined and CHOTA = HOTA.
    pub cap_a_undefined: bool,
    pub capa_mode: String,
    pub cap_metrics: String,
    pub cap_divisor: usize,
    pub num_videos: usize,
    pub num_gt_dets: usize,
    pub num_pred_dets: usize,
    pub alphas: Vec<AlphaRow>,
    pub per_video: Vec<VideoSummary>,
    pub warnings: Vec<String>,
    pub ap_m: Option<ApmReport>,
}

impl EvalReport {
    /// Flat `key=value` lines for scripting.
    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
        let mut lines = vec![
            format!("chota={:.6}", self.chota),
            format!("hota={:.6}", self.hota),
            format!("det_a={:.6}", self.det_a),
            format!("ass_a={:.6}", self.ass_a),
            format!("cap_a={}", opt(self.cap_a)),
            format!("cap_a_undefined={}", self.cap_a_undefined),
            format!("capa_mode={}", self.capa_mode),
            format!("cap_metrics={}", self.cap_metrics),
            format!("cap_divisor={}", self.cap_divisor),
            format!("num_videos={}", self.num_videos),
            format!("num_gt_dets={}", self.num_gt_dets),
            format!("num_pred_dets={}", self.num_pred_dets),
            format!("warnings={}", self.warnings.len()),
        ];
        if let Some(a) = &self.ap_m {
            lines.push(format!("ap_m={:.6}", a.ap_m));
        }
        lines.join("\n") + "\n"
    }
}

struct Components {
    rows: Vec<AlphaRow>,
    det_a: f64,
    ass_a: f64,
    cap_a: Option<f64>,
}

fn finish(c: &Counts, grid: &[f64], capa: CapaMode) -> Components {
    let cap_at = |k: usize| -> Option<f64> {
        if c.gt_captions == 0 {
            None
        } else if c.tp_prime[k] == 0 {
            Some(0.0)
        } else {
            Some(c.cap_sum[k] / c.tp_prime[k] as f64)
        }
    };
    let single = match capa {
        CapaMode::Integrated => None,
        CapaMode::Single(_) => Some(cap_at(grid.len())),
    };
    let rows: Vec<AlphaRow> = grid
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let det = hota::det_a_counts(c.tp[k], c.fp[k], c.fn_[k]);
            let ass = if c.tp[k] == 0 {
                1.0
            } else {
                c.ass_sum[k] / c.tp[k] as f64
            };
            let cap = single.unwrap_or_else(|| cap_at(k));
            let (hota, chota) = combine(det, ass, cap);
            AlphaRow {
                alpha,
                det_a: det,
                ass_a: ass,
                ass_a_undefined: c.tp[k] == 0,
                cap_a: cap,
                hota,
                chota,
                tp: c.tp[k],
                fp: c.fp[k],
                fn_: c.fn_[k],
                tp_prime: c.tp_prime[k],
            }
        })
        .collect();
    let n = grid.len() as f64;
    let mean = |f: &dyn Fn(&AlphaRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let det_a = mean(&|r| r.det_a);
    let ass_a = mean(&|r| r.ass_a);
    let cap_a = match single {
        Some(v) => v,
        None if c.gt_captions == 0 => None,
        None => Some(mean(&|r| r.cap_a.unwrap_or(0.0))),
    };
    Components {
        rows,
        det_a,
        ass_a,
        cap_a,
    }
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        b = b.num_threads(jobs);
    }
    b.build()
        .map_err(|e| Error::InvalidParam(format!("cannot start worker pool: {e}")))
}

/// Pairs every ground-truth video with its prediction, sorted by video id.
/// Missing predictions become empty videos; both cases are reported as
/// warnings.
type Paired = Vec<(VideoRecord, VideoRecord)>;

pub(crate) fn pair_videos(
    pred: &[VideoRecord],
    gt: &[VideoRecord],
) -> Result<(Paired, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut by_id: BTreeMap<&str, &VideoRecord> = BTreeMap::new();
    for p in pred {
        p.validate()?;
        if by_id.insert(&p.video_id, p).is_some() {
            return Err(Error::Invalid(format!(
                "duplicate predicted video '{}'",
                p.video_id
            )));
        }
    }
    let mut seen = HashSet::new();
    let mut gt_sorted: Vec<&VideoRecord> = gt.iter().collect();
    gt_sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut pairs = Vec::with_capacity(gt.len());
    for g in gt_sorted {
        g.validate()?;
        if !seen.insert(g.video_id.as_str()) {
            return Err(Error::Invalid(format!(
                "duplicate ground-truth video '{}'",
                g.video_id
            )));
        }
        let p = match by_id.get(g.video_id.as_str()) {
            Some(p) => (*p).clone(),
            None => {
                warnings.push(format!(
                    "video '{}' has no prediction; counted as all false negatives",
                    g.video_id
                ));
                VideoRecord::new(g.video_id.clone(), g.num_frames)
            }
        };
        pairs.push((p, g.clone()));
    }
    for id in by_id.keys() {
        if !seen.contains(id) {
            warnings.push(format!(
                "predicted video '{id}' has no ground truth; ignored"
            ));
        }
    }
    Ok((pairs, warnings))
}

/// CHOTA evaluation of a prediction set against ground truth.
pub fn chota(pred: &[VideoRecord], gt: &[VideoRecord], opts: &EvalOptions) -> Result<EvalReport> {
    let (pairs, mut warnings) = pair_videos(pred, gt)?;
    let gt_refs: Vec<&VideoRecord> = pairs.iter().map(|(_, g)| g).collect();
    let judge = CaptionJudge::new(&opts.captions, &gt_refs)?;
    let grid = opts.grid.alphas();
    let mut thresholds = grid.to_vec();
    if let CapaMode::Single(a) = opts.capa {
        thresholds.push(a);
    }

    let per_video: Vec<Counts> = thread_pool(opts.jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(p, g)| video_counts(p, g, &thresholds, &judge))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut pooled = Counts::zeros(thresholds.len());
    let mut summaries = Vec::with_capacity(per_video.len());
    for ((_, g), c) in pairs.iter().zip(&per_video) {
        pooled.add(c);
        let comp = finish(c, grid, opts.capa);
        let (hota, chota) = combine(comp.det_a, comp.ass_a, comp.cap_a);
        summaries.push(VideoSummary {
            video_id: g.video_id.clone(),
            det_a: comp.det_a,
            ass_a: comp.ass_a,
            cap_a: comp.cap_a,
            hota,
            chota,
            num_gt_dets: c.num_gt,
            num_pred_dets: c.num_pred,
        });
    }

    let comp = finish(&pooled, grid, opts.capa);
    let (hota, chota) = combine(comp.det_a, comp.ass_a, comp.cap_a);
    if comp.cap_a.is_none() {
        warnings.push("no ground-truth captions: CapA undefined, CHOTA reported as HOTA".into());
    }
    if comp.rows.iter().any(|r| r.ass_a_undefined) {
        warnings.push("no true positives at some alphas: AssA reported as 1 there".into());
    }
    Ok(EvalReport {
        chota,
        hota,
        det_a: comp.det_a,
        ass_a: comp.ass_a,
        cap_a: comp.cap_a,
        cap_a_undefined: comp.cap_a.is_none(),
        capa_mode: opts.capa.to_string(),
        cap_metrics: opts.captions.metrics.to_string(),
        cap_divisor: opts.captions.metrics.divisor(),
        num_videos: pairs.len(),
        num_gt_dets: pooled.num_gt,
        num_pred_dets: pooled.num_pred,
        alphas: comp.rows,
        per_video: summaries,
        warnings,
        ap_m: None,
    })
}

/// Frame-level mAP-METEOR over all videos.
pub fn ap_m(
    pred: &[VideoRecord],
    gt: &[VideoRecord],
    cfg: &ApmConfig,
    jobs: usize,
) -> Result<ApmReport> {
    let (pairs, _) = pair_videos(pred, gt)?;
    let per_video = thread_pool(jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(p, g)| apm::video_apm(p, g, cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut sums = vec![0.0; cfg.iou_thresholds.len() * cfg.meteor_thresholds.len()];
    let mut frames = 0;
    for (s, f) in &per_video {
        for (a, b) in sums.iter_mut().zip(s) {
            *a += b;
        }
        frames += f;
    }
    Ok(apm::finish_apm(&sums, frames, cfg))
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use densevoc::aggregate::{hard_aggregate, soft_aggregate, DEFAULT_HARD_SAMPLES};
use densevoc::assoc::{assign_identities, iou_tracker, IdentityAssignment, DEFAULT_THETA};
use densevoc::capmetrics::{ExternalScores, MetricSet};
use densevoc::eval::{self, AlphaGrid, ApmConfig, CapaMode, CaptionConfig, EvalOptions};
use densevoc::ground::{ground_and_score, NllMode};
use densevoc::io;
use densevoc::losses::{gradient_suite, GradCheck};
use densevoc::synth::{generate, SynthConfig};
use densevoc::{BBox, Detection, VideoRecord};

#[derive(Parser)]
#[command(
    name = "densevoc",
    version,
    about = "Dense video object captioning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Worker threads (0 = all cores).
    #[arg(long, env = "DENSEVOC_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Reject unknown fields in dataset files.
    #[arg(long)]
    strict: bool,
    /// Output directory for report.json and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 unless the condition holds, e.g. `chota>=0.5`.
    #[arg(long)]
    gate: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// CHOTA (DetA, AssA, CapA) of predictions against ground truth.
    EvalChota {
        gt: PathBuf,
        pred: PathBuf,
        /// Comma-separated localization thresholds.
        #[arg(long)]
        alphas: Option<String>,
        /// Comma-separated caption sub-metrics: meteor, cider, external (spice), exact.
        #[arg(long, default_value = "meteor,cider")]
        cap_metrics: String,
        /// `integrated` or `single:<alpha>`.
        #[arg(long, default_value = "integrated")]
        capa_alpha: String,
        /// CSV of precomputed pair scores for the external sub-metric.
        #[arg(long)]
        external_scores: Option<PathBuf>,
        /// Also compute frame mAP-METEOR.
        #[arg(long)]
        with_apm: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Frame-level mAP-METEOR.
    EvalApm {
        gt: PathBuf,
        pred: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// CHOTA and HOTA from DetA, AssA and CapA values.
    Combine {
        /// JSON file with det_a, ass_a and optionally cap_a.
        #[arg(long, conflicts_with_all = ["det", "ass", "cap"])]
        components: Option<PathBuf>,
        #[arg(long)]
        det: Option<f64>,
        #[arg(long)]
        ass: Option<f64>,
        #[arg(long)]
        cap: Option<f64>,
    },
    /// Greedy identity assignment from association matrices.
    TrackAssign {
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-link detections with the online IoU tracker.
    TrackIou {
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        thresh: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Trajectory feature aggregation.
    Aggregate {
        features: PathBuf,
        /// Association matrix file (soft mode, or hard mode without --ids).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Identity file (hard mode).
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AggMode::Soft)]
        mode: AggMode,
        #[arg(long, default_value_t = DEFAULT_HARD_SAMPLES)]
        m: usize,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spatial grounding of queries with a likelihood table.
    Ground {
        pred: PathBuf,
        queries: PathBuf,
        table: PathBuf,
        #[arg(long, default_value = "per-frame")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Synthetic ground truth and perturbed predictions.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        num_videos: usize,
        #[arg(long, default_value_t = 20)]
        frames: u32,
        #[arg(long, default_value_t = 3)]
        objects: usize,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        fp_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        id_switch_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        caption_corruption_rate: f64,
        #[arg(long)]
        out_gt: PathBuf,
        #[arg(long)]
        out_pred: PathBuf,
    },
    /// Check analytic loss gradients against finite differences.
    VerifyLosses {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Convert flat `frame,id,x,y,w,h,score` rows (1-based frames) to a dataset file.
    Convert {
        input: PathBuf,
        #[arg(long)]
        video_id: String,
        /// Defaults to the last frame present.
        #[arg(long)]
        num_frames: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AggMode {
    Soft,
    Hard,
}

#[derive(Debug)]
struct GateFailed(String);

impl std::fmt::Display for GateFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gate failed: {}", self.0)
    }
}

impl std::error::Error for GateFailed {}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_dataset(path: &Path, strict: bool) -> Result<Vec<VideoRecord>> {
    io::parse_dataset(&read(path)?, strict).with_context(|| format!("{}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_report(dir: Option<&Path>, report: &impl serde::Serialize, summary: &str) -> Result<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(report)? + "\n",
        )?;
        fs::write(dir.join("summary.txt"), summary)?;
    }
    print!("{summary}");
    Ok(())
}

/// Checks `key>=value`, `key<=value`, `key>value` or `key<value` against the
/// summary lines.
fn check_gates(gates: &[String], summary: &str) -> Result<()> {
    for g in gates {
        let (key, op, rhs) = ["<=", ">=", "<", ">"]
            .iter()
            .find_map(|op| g.split_once(op).map(|(k, v)| (k.trim(), *op, v.trim())))
            .with_context(|| format!("bad gate '{g}'"))?;
        let limit: f64 = rhs
            .parse()
            .with_context(|| format!("bad gate value in '{g}'"))?;
        let value: f64 = summary
            .lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .with_context(|| format!("gate key '{key}' not in summary"))?
            .parse()
            .with_context(|| format!("gate key '{key}' is not numeric"))?;
        let ok = match op {
            "<=" => value <= limit,
            ">=" => value >= limit,
            "<" => value < limit,
            _ => value > limit,
        };
        if !ok {
            return Err(GateFailed(format!("{key}={value} does not satisfy {op}{limit}")).into());
        }
    }
    Ok(())
}

fn apm_summary(r: &eval::ApmReport) -> String {
    format!("ap_m={:.6}\nframes_scored={}\n", r.ap_m, r.frames_scored)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EvalChota {
            gt,
            pred,
            alphas,
            cap_metrics,
            capa_alpha,
            external_scores,
            with_apm,
            common,
        } => {
            let gt_v = read_dataset(&gt, common.strict)?;
            let pred_v = read_dataset(&pred, common.strict)?;
            let external: Option<ExternalScores> = external_scores
                .as_deref()
                .map(|p| {
                    io::parse_external_scores(&read(p)?).with_context(|| format!("{}", p.display()))
                })
                .transpose()?;
            let opts = EvalOptions {
                grid: match alphas {
                    Some(a) => a.parse::<AlphaGrid>()?,
                    None => AlphaGrid::default(),
                },
                captions: CaptionConfig {
                    metrics: cap_metrics.parse::<MetricSet>()?,
                    external: external.as_ref().map(|e| e as _),
                },
                capa: capa_alpha.parse::<CapaMode>()?,
                jobs: common.jobs,
            };
            let mut report = eval::chota(&pred_v, &gt_v, &opts)?;
            if with_apm {
                report.ap_m = Some(eval::ap_m(
                    &pred_v,
                    &gt_v,
                    &ApmConfig::default(),
                    common.jobs,
                )?);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let summary = report.summary();
            write_report(common.out.as_deref(), &report, &summary)?;
            check_gates(&common.gate, &summary)
        }
        Command::EvalApm { gt, pred, common } => {
            let gt_v = read_dataset(&gt, common.strict)?;
            let pred_v = read_dataset(&pred, common.strict)?;
            let report = eval::ap_m(&pred_v, &gt_v, &ApmConfig::default(), common.jobs)?;
            let summary = apm_summary(&report);
            write_report(common.out.as_deref(), &report, &summary)?;
            check_gates(&common.gate, &summary)
        }
        Command::Combine {
            components,
            det,
            ass,
            cap,
        } => {
            let (d, a, c) = match components {
                Some(p) => {
                    let v: serde_json::Value = serde_json::from_str(&read(&p)?)
                        .with_context(|| format!("{}", p.display()))?;
                    let get = |k: &str| v.get(k).and_then(serde_json::Value::as_f64);
                    (
                        get("det_a").context("components file lacks det_a")?,
                        get("ass_a").context("components file lacks ass_a")?,
                        get("cap_a"),
                    )
                }
                None => (
                    det.context("--det is required")?,
                    ass.context("--ass is required")?,
                    cap,
                ),
            };
            for (name, v) in [("det_a", Some(d)), ("ass_a", Some(a)), ("cap_a", c)] {
                if let Some(v) = v {
                    if !(0.0..=1.0).contains(&v) {
                        bail!("{name} = {v} outside [0,1]");
                    }
                }
            }
            let (hota, chota) = eval::combine(d, a, c);
            println!("chota={chota:.6}\nhota={hota:.6}");
            Ok(())
        }
        Command::TrackAssign { matrix, theta, out } => {
            let files = io::parse_assoc(&read(&matrix)?)
                .with_context(|| format!("{}", matrix.display()))?;
            let mut ids = Vec::new();
            for f in &files {
                let a = assign_identities(&f.matrix()?, theta)?;
                ids.push(io::IdentityFile::new(&f.video_id, &a));
            }
            emit(
                out.as_deref(),
                &(serde_json::to_string_pretty(&ids)? + "\n"),
            )
        }
        Command::TrackIou {
            pred,
            thresh,
            out,
            strict,
        } => {
            let videos = read_dataset(&pred, strict)?;
            let mut relinked = Vec::with_capacity(videos.len());
            for v in &videos {
                let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); v.num_frames as usize];
                for o in v.observations() {
                    let mut d = v.detection(o).clone();
                    d.track_id = None;
                    if d.caption.is_none() {
                        d.caption = v.trajectories[o.track].caption.clone();
                    }
                    frames[o.frame as usize].push(d);
                }
                let assignment = iou_tracker(&frames, thresh);
                let dets = frames
                    .into_iter()
                    .flatten()
                    .zip(&assignment.ids)
                    .map(|(d, &id)| d.with_track(id));
                relinked.push(VideoRecord::from_detections(
                    v.video_id.clone(),
                    v.num_frames,
                    dets,
                )?);
            }
            emit(out.as_deref(), &io::dataset_to_string(&relinked)?)
        }
        Command::Aggregate {
            features,
            matrix,
            ids,
            mode,
            m,
            theta,
            out,
        } => {
            let feats = io::parse_features(&read(&features)?)
                .with_context(|| format!("{}", features.display()))?;
            let matrices = matrix
                .as_deref()
                .map(|p| io::parse_assoc(&read(p)?).with_context(|| format!("{}", p.display())))
                .transpose()?;
            let identities = ids
                .as_deref()
                .map(|p| {
                    io::parse_identities(&read(p)?).with_context(|| format!("{}", p.display()))
                })
                .transpose()?;
            let mut results = Vec::new();
            for f in &feats {
                let fm = f.matrix()?;
                let a = matrices
                    .as_ref()
                    .and_then(|ms| ms.iter().find(|x| x.video_id == f.video_id));
                match mode {
                    AggMode::Soft => {
                        let a = a.with_context(|| {
                            format!("no association matrix for video {}", f.video_id)
                        })?;
                        let g = soft_aggregate(&a.matrix()?, &fm)?;
                        results.push(serde_json::to_value(io::FeatureFile::from_matrix(
                            &f.video_id,
                            Some(a.frame_of.clone()),
                            &g,
                        ))?);
                    }
                    AggMode::Hard => {
                        let given = identities
                            .as_ref()
                            .and_then(|v| v.iter().find(|x| x.video_id == f.video_id));
                        let (assignment, frame_of) = match (given, a) {
                            (Some(i), _) => (
                                IdentityAssignment { ids: i.ids.clone() },
                                f.frame_of
                                    .clone()
                                    .or_else(|| a.map(|a| a.frame_of.clone()))
                                    .with_context(|| {
                                        format!("no frame_of for video {}", f.video_id)
                                    })?,
                            ),
                            (None, Some(a)) => {
                                (assign_identities(&a.matrix()?, theta)?, a.frame_of.clone())
                            }
                            (None, None) => {
                                bail!("hard mode needs --ids or --matrix for video {}", f.video_id)
                            }
                        };
                        let tracks = hard_aggregate(&fm, &assignment, &frame_of, m)?;
                        results.push(serde_json::to_value(io::TrackFeatures {
                            video_id: f.video_id.clone(),
                            m,
                            tracks,
                        })?);
                    }
                }
            }
            emit(
                out.as_deref(),
                &(serde_json::to_string_pretty(&results)? + "\n"),
            )
        }
        Command::Ground {
            pred,
            queries,
            table,
            mode,
            out,
            strict,
        } => {
            let videos = read_dataset(&pred, strict)?;
            let qs = io::parse_queries(&read(&queries)?)
                .with_context(|| format!("{}", queries.display()))?;
            let scorer = io::parse_likelihood_table(&read(&table)?)
                .with_context(|| format!("{}", table.display()))?;
            let mode: NllMode = mode.parse()?;
            let mut rows = Vec::new();
            let (mut s, mut t, mut v) = (0.0, 0.0, 0.0);
            for q in &qs {
                let video = videos
                    .iter()
                    .find(|x| x.video_id == q.video_id)
                    .with_context(|| {
                        format!(
                            "query {}: no predictions for video {}",
                            q.query_id, q.video_id
                        )
                    })?;
                let (result, ious) = ground_and_score(video, q, &scorer, mode)?;
                s += ious.s_iou;
                t += ious.t_iou;
                v += ious.v_iou;
                rows.push(json!({"query_id": q.query_id, "video_id": q.video_id, "ious": ious, "selections": result.frames}));
            }
            let n = qs.len().max(1) as f64;
            if let Some(p) = &out {
                fs::write(p, serde_json::to_string_pretty(&rows)? + "\n")
                    .with_context(|| format!("cannot write {}", p.display()))?;
            }
            println!(
                "queries={}\nmode={mode}\ns_iou={:.6}\nt_iou={:.6}\nv_iou={:.6}",
                qs.len(),
                s / n,
                t / n,
                v / n
            );
            Ok(())
        }
        Command::Synth {
            seed,
            num_videos,
            frames,
            objects,
            jitter,
            drop_rate,
            fp_rate,
            id_switch_rate,
            caption_corruption_rate,
            out_gt,
            out_pred,
        } => {
            let cfg = SynthConfig {
                seed,
                num_videos,
                frames_per_video: frames,
                objects_per_video: objects,
                box_jitter_sigma: jitter,
                drop_rate,
                false_positive_rate: fp_rate,
                id_switch_rate,
                caption_corruption_rate,
            };
            let (gt, pred) = generate(&cfg)?;
            emit(Some(&out_gt), &io::dataset_to_string(&gt)?)?;
            emit(Some(&out_pred), &io::dataset_to_string(&pred)?)
        }
        Command::VerifyLosses { seeds } => {
            let rows = gradient_suite(seeds);
            println!(
                "{:<10} {:>6} {:>12}  result",
                "loss", "seeds", "max_rel_err"
            );
            for r in &rows {
                println!(
                    "{:<10} {:>6} {:>12.3e}  {}",
                    r.loss,
                    r.seeds,
                    r.max_rel_err,
                    if r.passed() { "pass" } else { "FAIL" }
                );
            }
            if rows.iter().all(GradCheck::passed) {
                Ok(())
            } else {
                Err(GateFailed(format!("gradient error above {}", GradCheck::TOLERANCE)).into())
            }
        }
        Command::Convert {
            input,
            video_id,
            num_frames,
            out,
        } => {
            let videos = convert_flat(&read(&input)?, &video_id, num_frames)
                .with_context(|| format!("{}", input.display()))?;
            emit(out.as_deref(), &io::dataset_to_string(&videos)?)
        }
    }
}

/// Reads headerless `frame,id,x,y,w,h,score` rows with 1-based frames.
fn convert_flat(text: &str, video_id: &str, num_frames: Option<u32>) -> Result<Vec<VideoRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut dets = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 6 {
            bail!("line {line}: expected frame,id,x,y,w,h[,score]");
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .with_context(|| format!("line {line}: column {} is not a number", k + 1))
        };
        let frame = rec[0]
            .parse::<u32>()
            .with_context(|| format!("line {line}: bad frame"))?;
        if frame == 0 {
            bail!("line {line}: frames are 1-based");
        }
        let id = rec[1]
            .parse::<u32>()
            .with_context(|| format!("line {line}: bad id"))?;
        let score = if rec.len() > 6 { num(6)? } else { 1.0 };
        dets.push(
            Detection::new(
                frame - 1,
                BBox::from_xywh(num(2)?, num(3)?, num(4)?, num(5)?),
            )
            .with_score(score)
            .with_track(id),
        );
    }
    let last = dets.iter().map(|d| d.frame + 1).max().unwrap_or(1);
    let v = VideoRecord::from_detections(video_id, num_frames.unwrap_or(last), dets)?;
    v.validate()?;
    Ok(vec![v])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<GateFailed>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Training loss terms for detection, tracking and captioning, with analytic
//! gradients and a central finite-difference checker.
//!
//! Losses are written as quantities to minimize: the center-heatmap focal term
//! is negated and box regression uses `1 - mean gIoU`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assoc::AssocMatrix;
use crate::error::{Error, Result};
use crate::geometry::{giou, BBox};

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Focal exponent on the prediction.
    pub alpha: f64,
    /// Focal exponent on the ground-truth penalty reduction.
    pub beta: f64,
    pub label_smoothing: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 2.0,
            beta: 4.0,
            label_smoothing: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidParam("focal weights must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidParam(
                "label smoothing must lie in [0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// Row-major `H x W` heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub values: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl Heatmap {
    pub fn new(values: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "heatmap has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        Ok(Heatmap {
            values,
            height,
            width,
        })
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_heatmaps(y: &Heatmap, y_gt: &Heatmap, n: usize) -> Result<()> {
    if (y.height, y.width) != (y_gt.height, y_gt.width) {
        return Err(Error::Dimension(format!(
            "heatmap shapes {}x{} and {}x{}",
            y.height, y.width, y_gt.height, y_gt.width
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParam("object count must be >= 1".into()));
    }
    Ok(())
}

/// Penalty-reduced focal loss over a center heatmap, normalized by the
/// number of objects `n`.
pub fn heatmap_loss(y: &Heatmap, y_gt: &Heatmap, n: usize, cfg: &LossConfig) -> Result<f64> {
    check_heatmaps(y, y_gt, n)?;
    let mut total = 0.0;
    for (&p, &g) in y.values.iter().zip(&y_gt.values) {
        let p = clamp_prob(p);
        total += if g == 1.0 {
            (1.0 - p).powf(cfg.alpha) * p.ln()
        } else {
            (1.0 - g).powf(cfg.beta) * p.powf(cfg.alpha) * (1.0 - p).ln()
        };
    }
    Ok(-total / n as f64)
}

/// Gradient of [`heatmap_loss`] with respect to the predicted heatmap.
pub fn heatmap_loss_grad(
    y: &Heatmap,
    y_gt: &Heatmap,
    n: usize,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_heatmaps(y, y_gt, n)?;
    let a = cfg.alpha;
    let scale = -1.0 / n as f64;
    Ok(y.values
        .iter()
        .zip(&y_gt.values)
        .map(|(&raw, &g)| {
            if raw != clamp_prob(raw) {
                return 0.0;
            }
            let p = raw;
            let d = if g == 1.0 {
                let lead = if a == 0.0 {
                    0.0
                } else {
                    a * (1.0 - p).powf(a - 1.0)
                };
                -lead * p.ln() + (1.0 - p).powf(a) / p
            } else {
                let lead = if a == 0.0 { 0.0 } else { a * p.powf(a - 1.0) };
                (1.0 - g).powf(cfg.beta) * (lead * (1.0 - p).ln() - p.powf(a) / (1.0 - p))
            };
            scale * d
        })
        .collect())
}

fn check_pairs(pred: &[BBox], gt: &[BBox]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "{} predicted boxes vs {} ground-truth boxes",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidParam("box lists must be non-empty".into()));
    }
    Ok(())
}

/// `1 - mean gIoU` over paired boxes.
pub fn giou_loss(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    check_pairs(pred, gt)?;
    let mean = pred.iter().zip(gt).map(|(p, g)| giou(p, g)).sum::<f64>() / pred.len() as f64;
    Ok(1.0 - mean)
}

/// Gradient of [`giou_loss`] with respect to each predicted box's corners.
pub fn giou_loss_grad(pred: &[BBox], gt: &[BBox]) -> Result<Vec<[f64; 4]>> {
    check_pairs(pred, gt)?;
    let scale = -1.0 / pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| giou_grad(p, g).map(|v| v * scale))
        .collect())
}

/// d gIoU / d(x1, y1, x2, y2) of `p`, for non-degenerate boxes.
fn giou_grad(p: &BBox, g: &BBox) -> [f64; 4] {
    let iw = p.x2.min(g.x2) - p.x1.max(g.x1);
    let ih = p.y2.min(g.y2) - p.y1.max(g.y1);
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };
    let (pw, ph) = (p.x2 - p.x1, p.y2 - p.y1);
    let union = pw * ph + g.area() - inter;
    let (cw, chh) = (
        p.x2.max(g.x2) - p.x1.min(g.x1),
        p.y2.max(g.y2) - p.y1.min(g.y1),
    );
    let hull = cw * chh;

    let d_inter = if overlapping {
        [
            if p.x1 > g.x1 { -ih } else { 0.0 },
            if p.y1 > g.y1 { -iw } else { 0.0 },
            if p.x2 < g.x2 { ih } else { 0.0 },
            if p.y2 < g.y2 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [-ph, -pw, ph, pw];
    let d_hull = [
        if p.x1 < g.x1 { -chh } else { 0.0 },
        if p.y1 < g.y1 { -cw } else { 0.0 },
        if p.x2 > g.x2 { chh } else { 0.0 },
        if p.y2 > g.y2 { cw } else { 0.0 },
    ];
    // gIoU = I/U - 1 + U/C
    let mut out = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        out[k] = d_inter[k] / union - inter * d_union / (union * union) + d_union / hull
            - union * d_hull[k] / (hull * hull);
    }
    out
}

/// Foreground/background softmax cross-entropy on one RoI.
pub fn roi_cls_loss(logits: [f64; 2], label: usize) -> Result<f64> {
    if label > 1 {
        return Err(Error::InvalidParam(format!(
            "RoI label must be 0 or 1, got {label}"
        )));
    }
    Ok(-log_softmax(&logits)[label])
}

pub fn roi_cls_loss_grad(logits: [f64; 2], label: usize) -> Result<[f64; 2]> {
    if label > 1 {
        return Err(Error::InvalidParam(format!(
            "RoI label must be 0 or 1, got {label}"
        )));
    }
    let ls = log_softmax(&logits);
    let mut g = [ls[0].exp(), ls[1].exp()];
    g[label] -= 1.0;
    Ok(g)
}

/// Mean absolute difference over all `4n` corner coordinates.
pub fn roi_reg_loss(pred: &[BBox], gt: &[BBox]) -> Result<f64> {
    check_pairs(pred, gt)?;
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let (p, g): ([f64; 4], [f64; 4]) = ((*p).into(), (*g).into());
            p.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .sum();
    Ok(total / (4 * pred.len()) as f64)
}

/// Subgradient of [`roi_reg_loss`] (0 at exact equality).
pub fn roi_reg_loss_grad(pred: &[BBox], gt: &[BBox]) -> Result<Vec<[f64; 4]>> {
    check_pairs(pred, gt)?;
    let scale = 1.0 / (4 * pred.len()) as f64;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let (p, g): ([f64; 4], [f64; 4]) = ((*p).into(), (*g).into());
            std::array::from_fn(|k| {
                let d = p[k] - g[k];
                if d > 0.0 {
                    scale
                } else if d < 0.0 {
                    -scale
                } else {
                    0.0
                }
            })
        })
        .collect())
}

fn check_assoc(a: &AssocMatrix, a_gt: &AssocMatrix) -> Result<()> {
    if a.dim() != a_gt.dim() {
        return Err(Error::Dimension(format!(
            "association {}x{} vs target {}x{}",
            a.dim(),
            a.dim(),
            a_gt.dim(),
            a_gt.dim()
        )));
    }
    if a.dim() == 0 {
        return Err(Error::InvalidParam("empty association matrix".into()));
    }
    Ok(())
}

/// Elementwise binary cross-entropy summed over all `M^2` entries and divided
/// by `M`.
pub fn assoc_loss(a: &AssocMatrix, a_gt: &AssocMatrix) -> Result<f64> {
    check_assoc(a, a_gt)?;
    let total: f64 = a
        .values()
        .iter()
        .zip(a_gt.values())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / a.dim() as f64)
}

/// Gradient of [`assoc_loss`] with respect to the (row-major) entries of `a`.
pub fn assoc_loss_grad(a: &AssocMatrix, a_gt: &AssocMatrix) -> Result<Vec<f64>> {
    check_assoc(a, a_gt)?;
    let m = a.dim() as f64;
    Ok(a.values()
        .iter()
        .zip(a_gt.values())
        .map(|(&p, &t)| {
            if p != clamp_prob(p) {
                0.0
            } else {
                (p - t) / (p * (1.0 - p)) / m
            }
        })
        .collect())
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

fn smoothed_target(v: usize, target: usize, eps: f64) -> impl Fn(usize) -> f64 {
    let off = if v > 1 { eps / (v - 1) as f64 } else { 0.0 };
    let on = if v > 1 { 1.0 - eps } else { 1.0 };
    move |k| if k == target { on } else { off }
}

fn check_caption(logits: &[Vec<f64>], gt: &[usize], smoothing: f64) -> Result<usize> {
    if logits.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows vs {} target tokens",
            logits.len(),
            gt.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::InvalidParam(
            "caption must have at least one token".into(),
        ));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::InvalidParam(
            "label smoothing must lie in [0,1)".into(),
        ));
    }
    let v = logits[0].len();
    if v == 0 || logits.iter().any(|r| r.len() != v) {
        return Err(Error::Dimension(
            "logit rows must share a non-zero vocabulary size".into(),
        ));
    }
    if let Some(&bad) = gt.iter().find(|&&t| t >= v) {
        return Err(Error::InvalidParam(format!(
            "token {bad} outside vocabulary of {v}"
        )));
    }
    Ok(v)
}

/// Length-normalized label-smoothed cross-entropy: the target puts `1 - eps`
/// on the true token and `eps / (V - 1)` on every other token.
pub fn caption_loss(logits: &[Vec<f64>], gt: &[usize], smoothing: f64) -> Result<f64> {
    let v = check_caption(logits, gt, smoothing)?;
    let total: f64 = logits
        .iter()
        .zip(gt)
        .map(|(row, &t)| {
            let q = smoothed_target(v, t, smoothing);
            -log_softmax(row)
                .iter()
                .enumerate()
                .map(|(k, lp)| if q(k) == 0.0 { 0.0 } else { q(k) * lp })
                .sum::<f64>()
        })
        .sum();
    Ok(total / gt.len() as f64)
}

/// Gradient of [`caption_loss`] with respect to the logits.
pub fn caption_loss_grad(
    logits: &[Vec<f64>],
    gt: &[usize],
    smoothing: f64,
) -> Result<Vec<Vec<f64>>> {
    let v = check_caption(logits, gt, smoothing)?;
    let l = gt.len() as f64;
    Ok(logits
        .iter()
        .zip(gt)
        .map(|(row, &t)| {
            let q = smoothed_target(v, t, smoothing);
            log_softmax(row)
                .iter()
                .enumerate()
                .map(|(k, lp)| (lp.exp() - q(k)) / l)
                .collect()
        })
        .collect())
}

/// Largest relative disagreement between central differences and `grad`:
/// `max_i |num_i - ana_i| / (|ana_i| + 1e-8)`.
pub fn finite_diff_check(
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    h: f64,
) -> f64 {
    let analytic = grad(point);
    assert_eq!(analytic.len(), point.len(), "gradient length");
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - analytic[i]).abs() / (analytic[i].abs() + 1e-8));
    }
    worst
}

/// One row of the gradient verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub loss: &'static str,
    pub seeds: u64,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub const TOLERANCE: f64 = 1e-4;

    pub fn passed(&self) -> bool {
        self.max_rel_err <= Self::TOLERANCE
    }
}

fn boxes_from(x: &[f64]) -> Vec<BBox> {
    x.chunks(4)
        .map(|c| BBox::new(c[0], c[1], c[2], c[3]))
        .collect()
}

fn random_box(rng: &mut impl Rng, cx: f64, cy: f64) -> BBox {
    let (w, h) = (rng.random_range(2.0..6.0), rng.random_range(2.0..6.0));
    let (x, y) = (
        cx + rng.random_range(-2.0..2.0),
        cy + rng.random_range(-2.0..2.0),
    );
    BBox::new(x - w / 2.0, y - h / 2.0, x + w / 2.0, y + h / 2.0)
}

/// Checks every analytic gradient against central differences at `seeds`
/// random points each (step `1e-5`).
pub fn gradient_suite(seeds: u64) -> Vec<GradCheck> {
    const H: f64 = 1e-5;
    let cfg = LossConfig::default();
    let mut rows = Vec::new();
    let mut run = |name: &'static str, check: &dyn Fn(&mut ChaCha8Rng) -> f64| {
        let worst = (0..seeds)
            .map(|s| check(&mut ChaCha8Rng::seed_from_u64(s)))
            .fold(0.0, f64::max);
        rows.push(GradCheck {
            loss: name,
            seeds,
            max_rel_err: worst,
        });
    };

    run("heatmap", &|rng| {
        let (h, w) = (4, 4);
        let gt: Vec<f64> = (0..h * w)
            .map(|_| {
                if rng.random_bool(0.2) {
                    1.0
                } else {
                    rng.random_range(0.0..0.9)
                }
            })
            .collect();
        let y: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.1..0.9)).collect();
        let y_gt = Heatmap::new(gt, h, w).unwrap();
        let n = 3;
        finite_diff_check(
            |x| heatmap_loss(&Heatmap::new(x.to_vec(), h, w).unwrap(), &y_gt, n, &cfg).unwrap(),
            |x| {
                heatmap_loss_grad(&Heatmap::new(x.to_vec(), h, w).unwrap(), &y_gt, n, &cfg).unwrap()
            },
            &y,
            H,
        )
    });

    run("giou", &|rng| {
        let n = 3;
        let gt: Vec<BBox> = (0..n).map(|_| random_box(rng, 0.0, 0.0)).collect();
        let pred: Vec<f64> = (0..n)
            .flat_map(|_| <[f64; 4]>::from(random_box(rng, 0.0, 0.0)))
            .collect();
        finite_diff_check(
            |x| giou_loss(&boxes_from(x), &gt).unwrap(),
            |x| giou_loss_grad(&boxes_from(x), &gt).unwrap().concat(),
            &pred,
            H,
        )
    });

    run("roi_cls", &|rng| {
        let label = rng.random_range(0..2usize);
        let z = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        finite_diff_check(
            |x| roi_cls_loss([x[0], x[1]], label).unwrap(),
            |x| roi_cls_loss_grad([x[0], x[1]], label).unwrap().to_vec(),
            &z,
            H,
        )
    });

    run("roi_reg", &|rng| {
        let n = 3;
        let gt: Vec<BBox> = (0..n).map(|_| random_box(rng, 0.0, 0.0)).collect();
        // keep every coordinate at least 0.01 away from its target
        let pred: Vec<f64> = gt
            .iter()
            .flat_map(|g| {
                <[f64; 4]>::from(*g).map(|c| {
                    let off = rng.random_range(0.01..1.0);
                    if rng.random_bool(0.5) {
                        c + off
                    } else {
                        c - off
                    }
                })
            })
            .collect();
        finite_diff_check(
            |x| roi_reg_loss(&boxes_from(x), &gt).unwrap(),
            |x| roi_reg_loss_grad(&boxes_from(x), &gt).unwrap().concat(),
            &pred,
            H,
        )
    });

    run("assoc", &|rng| {
        let m = rng.random_range(2..6usize);
        let frame_of: Vec<u32> = (0..m as u32).collect();
        let target: Vec<f64> = (0..m * m)
            .map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 })
            .collect();
        let a_gt = AssocMatrix::new(target, frame_of.clone()).unwrap();
        let a: Vec<f64> = (0..m * m).map(|_| rng.random_range(0.05..0.95)).collect();
        let mk = |x: &[f64]| AssocMatrix::new(x.to_vec(), frame_of.clone()).unwrap();
        finite_diff_check(
            |x| assoc_loss(&mk(x), &a_gt).unwrap(),
            |x| assoc_loss_grad(&mk(x), &a_gt).unwrap(),
            &a,
            H,
        )
    });

    run("caption", &|rng| {
        let (l, v) = (rng.random_range(1..5usize), rng.random_range(2..7usize));
        let gt: Vec<usize> = (0..l).map(|_| rng.random_range(0..v)).collect();
        let z: Vec<f64> = (0..l * v).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rows = |x: &[f64]| x.chunks(v).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let eps = cfg.label_smoothing;
        finite_diff_check(
            |x| caption_loss(&rows(x), &gt, eps).unwrap(),
            |x| caption_loss_grad(&rows(x), &gt, eps).unwrap().concat(),
            &z,
            H,
        )
    });

    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn cell(v: f64) -> Heatmap {
        Heatmap::new(vec![v], 1, 1).unwrap()
    }

    #[test]
    fn heatmap_examples() {
        let cfg = LossConfig::default();
        let ones = Heatmap::new(vec![1.0; 4], 2, 2).unwrap();
        assert!(heatmap_loss(&ones, &ones, 1, &cfg).unwrap() < 1e-5);
        close(
            heatmap_loss(&cell(0.5), &cell(1.0), 1, &cfg).unwrap(),
            0.25 * 2f64.ln(),
            1e-12,
        );
        close(
            heatmap_loss(&cell(0.5), &cell(0.0), 1, &cfg).unwrap(),
            0.25 * 2f64.ln(),
            1e-12,
        );
    }

    #[test]
    fn heatmap_errors() {
        let cfg = LossConfig::default();
        let a = Heatmap::new(vec![0.5; 2], 1, 2).unwrap();
        let b = Heatmap::new(vec![0.5; 2], 2, 1).unwrap();
        assert!(heatmap_loss(&a, &b, 1, &cfg).is_err());
        assert!(heatmap_loss(&a, &a, 0, &cfg).is_err());
        assert!(Heatmap::new(vec![0.0; 3], 2, 2).is_err());
    }

    #[test]
    fn giou_loss_examples() {
        let a = BBox::new(0., 0., 1., 1.);
        let b = BBox::new(2., 0., 3., 1.);
        close(giou_loss(&[a, b], &[a, b]).unwrap(), 0.0, 1e-15);
        close(giou_loss(&[a], &[b]).unwrap(), 4.0 / 3.0, 1e-12);
        let c = BBox::new(0., 0., 2., 2.);
        let d = BBox::new(1., 0., 3., 2.);
        close(giou_loss(&[a, c], &[a, d]).unwrap(), 1.0 / 3.0, 1e-12);
        assert!(giou_loss(&[], &[]).is_err());
        assert!(giou_loss(&[a], &[a, b]).is_err());
    }

    #[test]
    fn roi_examples() {
        close(roi_cls_loss([0.0, 0.0], 0).unwrap(), 2f64.ln(), 1e-12);
        close(
            roi_cls_loss([10.0, 0.0], 0).unwrap(),
            (1.0 + (-10f64).exp()).ln(),
            1e-12,
        );
        close(roi_cls_loss([10.0, 0.0], 0).unwrap(), 4.54e-5, 1e-7);
        close(roi_cls_loss([0.0, 10.0], 0).unwrap(), 10.0000454, 1e-7);
        assert!(roi_cls_loss([0.0, 0.0], 2).is_err());

        let a = BBox::new(0., 0., 1., 1.);
        close(roi_reg_loss(&[a], &[a]).unwrap(), 0.0, 0.0);
        close(
            roi_reg_loss(&[a], &[BBox::new(1., 1., 2., 2.)]).unwrap(),
            1.0,
            1e-15,
        );
        close(
            roi_reg_loss(&[a], &[BBox::new(0., 0., 1., 3.)]).unwrap(),
            0.5,
            1e-15,
        );
    }

    #[test]
    fn assoc_examples() {
        let eye = AssocMatrix::new(vec![1.0, 0.0, 0.0, 1.0], vec![0, 1]).unwrap();
        assert!(assoc_loss(&eye, &eye).unwrap() < 1e-5);
        let half = AssocMatrix::new(vec![0.5], vec![0]).unwrap();
        let one = AssocMatrix::new(vec![1.0], vec![0]).unwrap();
        close(assoc_loss(&half, &one).unwrap(), 2f64.ln(), 1e-12);
        let halves = AssocMatrix::new(vec![0.5; 4], vec![0, 1]).unwrap();
        close(assoc_loss(&halves, &eye).unwrap(), 2.0 * 2f64.ln(), 1e-12);
        assert!(assoc_loss(&half, &eye).is_err());
    }

    #[test]
    fn assoc_loss_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 5;
        let frames: Vec<u32> = (0..m as u32).collect();
        let a: Vec<f64> = (0..m * m).map(|_| rng.random()).collect();
        let t: Vec<f64> = (0..m * m)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let base = assoc_loss(
            &AssocMatrix::new(a.clone(), frames.clone()).unwrap(),
            &AssocMatrix::new(t.clone(), frames.clone()).unwrap(),
        )
        .unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let permute = |v: &[f64]| -> Vec<f64> {
            (0..m * m)
                .map(|k| v[perm[k / m] * m + perm[k % m]])
                .collect()
        };
        let moved = assoc_loss(
            &AssocMatrix::new(permute(&a), frames.clone()).unwrap(),
            &AssocMatrix::new(permute(&t), frames).unwrap(),
        )
        .unwrap();
        close(base, moved, 1e-12);
    }

    #[test]
    fn caption_examples() {
        close(
            caption_loss(&[vec![0.0; 4]], &[2], 0.0).unwrap(),
            4f64.ln(),
            1e-12,
        );
        let logits = vec![vec![3f64.ln(), 0.0]];
        close(
            caption_loss(&logits, &[0], 0.0).unwrap(),
            -(0.75f64.ln()),
            1e-12,
        );
        let expected = 0.9 * -(0.75f64.ln()) + 0.1 * -(0.25f64.ln());
        close(caption_loss(&logits, &[0], 0.1).unwrap(), expected, 1e-12);
        assert!(caption_loss(&logits, &[2], 0.0).is_err());
        assert!(caption_loss(&logits, &[0, 1], 0.0).is_err());
    }

    #[test]
    fn unsmoothed_caption_loss_is_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v = rng.random_range(2..8usize);
            let row: Vec<f64> = (0..v).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = rng.random_range(0..v);
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            let ce = -(row[t].exp() / z).ln();
            close(caption_loss(&[row], &[t], 0.0).unwrap(), ce, 1e-12);
        }
    }

    #[test]
    fn losses_vanish_at_perfect_prediction() {
        let b = [BBox::new(1., 2., 4., 8.), BBox::new(-3., 0., 0., 1.)];
        assert!(giou_loss(&b, &b).unwrap().abs() <= 1e-5);
        assert!(roi_reg_loss(&b, &b).unwrap() == 0.0);
        assert!(roi_cls_loss([40.0, 0.0], 0).unwrap() <= 1e-5);
        assert!(caption_loss(&[vec![40.0, 0.0, 0.0]], &[0], 0.0).unwrap() <= 1e-5);
        let t = AssocMatrix::new(vec![1.0, 0.0, 1.0, 1.0], vec![0, 1]).unwrap();
        assert!(assoc_loss(&t, &t).unwrap() <= 1e-5);
    }

    #[test]
    fn finite_diff_on_polynomial() {
        let err = finite_diff_check(
            |x| x.iter().map(|v| v * v).sum(),
            |x| x.iter().map(|v| 2.0 * v).collect(),
            &[1.0, 2.0],
            1e-5,
        );
        assert!(err <= 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig {
            label_smoothing: 1.0,
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::boxes::{iou, BoundingBox};

/// IoU at or above which a prediction can match a ground-truth box.
pub const IOU_THRESHOLD: f64 = 0.5;

/// Ground truth and predictions for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub image_id: String,
    pub ground_truth: Vec<BoundingBox>,
    pub predictions: Vec<BoundingBox>,
}

impl DetectionSet {
    pub fn new(image_id: impl Into<String>) -> Self {
        DetectionSet {
            image_id: image_id.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.ground_truth.iter().chain(&self.predictions) {
            b.validate()?;
        }
        if let Some(p) = self.predictions.iter().find(|p| p.confidence.is_none()) {
            return Err(Error::InvalidArgument(format!(
                "prediction without confidence in image {} (class {})",
                self.image_id, p.class_id
            )));
        }
        Ok(())
    }
}

/// F-beta from counts. With `beta = 1` this is `2tp / (2tp + fp + fn)`.
pub fn fbeta(tp: u64, fp: u64, fn_: u64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if tp + fp + fn_ == 0 {
        return Err(Error::InvalidArgument("fbeta of all-zero counts".into()));
    }
    let b2 = beta * beta;
    let num = (1.0 + b2) * tp as f64;
    Ok(num / (num + b2 * fn_ as f64 + fp as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub class_id: u32,
    pub ap: f64,
    pub num_ground_truth: usize,
    /// One point per ranked prediction.
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub classes: Vec<ClassAp>,
    pub map: f64,
}

/// Per-class AP at IoU 0.5 and their unweighted mean.
///
/// Predictions of a class are ranked by confidence (stable on input order)
/// and each is matched to the highest-IoU unmatched ground truth of the
/// same class in its image. Classes without ground truth are not scored.
pub fn map50(sets: &[DetectionSet]) -> Result<MapReport> {
    for s in sets {
        s.validate()?;
    }
    let mut gt_count: BTreeMap<u32, usize> = BTreeMap::new();
    for b in sets.iter().flat_map(|s| &s.ground_truth) {
        *gt_count.entry(b.class_id).or_default() += 1;
    }
    if gt_count.is_empty() {
        return Err(Error::InvalidArgument("no ground-truth boxes".into()));
    }
    let mut classes = Vec::with_capacity(gt_count.len());
    for (&class_id, &num_gt) in &gt_count {
        let hits = ranked_matches(sets, class_id, f64::NEG_INFINITY)?;
        let curve = pr_curve(&hits, num_gt);
        classes.push(ClassAp {
            class_id,
            ap: average_precision(&curve),
            num_ground_truth: num_gt,
            curve,
        });
    }
    let map = classes.iter().map(|c| c.ap).sum::<f64>() / classes.len() as f64;
    Ok(MapReport { classes, map })
}

/// Matched, unmatched-prediction and missed-ground-truth counts over all
/// classes, keeping predictions with confidence at least `min_confidence`.
pub fn match_counts(sets: &[DetectionSet], min_confidence: f64) -> Result<(u64, u64, u64)> {
    for s in sets {
        s.validate()?;
    }
    let mut classes: Vec<u32> = sets
        .iter()
        .flat_map(|s| s.ground_truth.iter().chain(&s.predictions))
        .map(|b| b.class_id)
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let (mut tp, mut fp) = (0u64, 0u64);
    for c in classes {
        for hit in ranked_matches(sets, c, min_confidence)? {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let gt = sets.iter().map(|s| s.ground_truth.len() as u64).sum::<u64>();
    Ok((tp, fp, gt - tp))
}

/// True-positive flags of the class's predictions in rank order.
fn ranked_matches(sets: &[DetectionSet], class_id: u32, min_confidence: f64) -> Result<Vec<bool>> {
    let mut ranked: Vec<(usize, &BoundingBox)> = sets
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.predictions
                .iter()
                .filter(|p| p.class_id == class_id && p.confidence.unwrap_or(0.0) >= min_confidence)
                .map(move |p| (si, p))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.confidence.unwrap_or(0.0).total_cmp(&a.1.confidence.unwrap_or(0.0)));

    let mut matched: Vec<Vec<bool>> = sets.iter().map(|s| vec![false; s.ground_truth.len()]).collect();
    let mut hits = Vec::with_capacity(ranked.len());
    for (si, pred) in ranked {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in sets[si].ground_truth.iter().enumerate() {
            if gt.class_id != class_id || matched[si][gi] {
                continue;
            }
            let o = iou(pred, gt)?;
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        match best {
            Some((gi, o)) if o >= IOU_THRESHOLD => {
                matched[si][gi] = true;
                hits.push(true);
            }
            _ => hits.push(false),
        }
    }
    Ok(hits)
}

fn pr_curve(hits: &[bool], num_gt: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    hits.iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += hit as usize;
            PrPoint {
                recall: tp as f64 / num_gt as f64,
                precision: tp as f64 / (i + 1) as f64,
            }
        })
        .collect()
}

/// All-points interpolated area under a ranked P-R curve: each recall
/// increment is weighted by the best precision at that recall or beyond.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.iter().zip(envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    ap
}

const HEADER: [&str; 7] = ["image_id", "class_id", "x_min", "y_min", "x_max", "y_max", "confidence"];

/// Reads the detection interchange CSV. Rows with an empty confidence are
/// ground truth. Sets are returned in order of first appearance.
pub fn read_detections<R: Read>(input: R) -> Result<Vec<DetectionSet>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HEADER) {
        return Err(Error::Format(format!("line 1: expected header {}", HEADER.join(","))));
    }
    let mut sets: Vec<DetectionSet> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Format(format!("line {line}: {what}"));
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| bad(&format!("{} is not a number: {:?}", HEADER[i], &record[i])))
        };
        let class_id: u32 = record[1]
            .parse()
            .map_err(|_| bad(&format!("class_id is not an integer: {:?}", &record[1])))?;
        let bx = BoundingBox::new(num(2)?, num(3)?, num(4)?, num(5)?, class_id).map_err(|e| bad(&e.to_string()))?;
        let id = record[0].to_string();
        let si = *index.entry(id.clone()).or_insert_with(|| {
            sets.push(DetectionSet::new(id));
            sets.len() - 1
        });
        if record[6].is_empty() {
            sets[si].ground_truth.push(bx);
        } else {
            let c = num(6)?;
            sets[si].predictions.push(bx.with_confidence(c).map_err(|e| bad(&e.to_string()))?);
        }
    }
    Ok(sets)
}

/// Pairs predictions with the ground truth of the same image. Any
/// predictions already in `ground_truth` sets are dropped; images that
/// only have predictions are appended.
pub fn merge_detections(ground_truth: Vec<DetectionSet>, predictions: Vec<DetectionSet>) -> Vec<DetectionSet> {
    let mut sets = ground_truth;
    for s in &mut sets {
        s.predictions.clear();
    }
    let index: BTreeMap<String, usize> = sets.iter().enumerate().map(|(i, s)| (s.image_id.clone(), i)).collect();
    for p in predictions {
        match index.get(&p.image_id) {
            Some(&i) => sets[i].predictions.extend(p.predictions),
            None => sets.push(DetectionSet {
                ground_truth: Vec::new(),
                ..p
            }),
        }
    }
    sets
}

pub fn write_detections<W: Write>(out: W, sets: &[DetectionSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for s in sets {
        for b in s.ground_truth.iter().chain(&s.predictions) {
            w.write_record([
                s.image_id.clone(),
                b.class_id.to_string(),
                b.x_min.to_string(),
                b.y_min.to_string(),
                b.x_max.to_string(),
                b.y_max.to_string(),
                b.confidence.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// P-R points as `class_id,recall,precision`.
pub fn write_pr_csv<W: Write>(out: W, report: &MapReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class_id", "recall", "precision"])?;
    for c in &report.classes {
        for p in &c.curve {
            w.write_record([c.class_id.to_string(), format!("{:.9}", p.recall), format!("{:.9}", p.precision)])?;
        }
    }
    w.flush()?;
    Ok(())
}

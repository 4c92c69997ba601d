use clipforge::detection::{iou, BoundingBox, DetectionSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_box(rng: &mut ChaCha8Rng, class_id: u32) -> BoundingBox {
    let x = rng.random_range(0.0..10.0);
    let y = rng.random_range(0.0..10.0);
    let w = rng.random_range(0.5..5.0);
    let h = rng.random_range(0.5..5.0);
    BoundingBox::new(x, y, x + w, y + h, class_id).unwrap()
}

/// Precision and recall at every confidence threshold, each computed from
/// scratch, then the area under the upper envelope.
pub fn sweep_oracle(sets: &[DetectionSet], class_id: u32) -> f64 {
    let num_gt = sets
        .iter()
        .flat_map(|s| &s.ground_truth)
        .filter(|b| b.class_id == class_id)
        .count();
    let mut thresholds: Vec<f64> = sets
        .iter()
        .flat_map(|s| &s.predictions)
        .filter(|p| p.class_id == class_id)
        .map(|p| p.confidence.unwrap())
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::new();
    for &t in &thresholds {
        let (mut tp, mut kept) = (0usize, 0usize);
        for s in sets {
            let mut preds: Vec<&BoundingBox> = s
                .predictions
                .iter()
                .filter(|p| p.class_id == class_id && p.confidence.unwrap() >= t)
                .collect();
            preds.sort_by(|a, b| b.confidence.unwrap().total_cmp(&a.confidence.unwrap()));
            let mut used = vec![false; s.ground_truth.len()];
            for p in preds {
                kept += 1;
                let best = s
                    .ground_truth
                    .iter()
                    .enumerate()
                    .filter(|(i, g)| g.class_id == class_id && !used[*i])
                    .map(|(i, g)| (i, iou(p, g).unwrap()))
                    .fold(None, |acc: Option<(usize, f64)>, (i, o)| match acc {
                        Some((_, b)) if b >= o => acc,
                        _ => Some((i, o)),
                    });
                if let Some((i, o)) = best {
                    if o >= 0.5 {
                        used[i] = true;
                        tp += 1;
                    }
                }
            }
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / kept as f64));
    }
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        ap += (r - prev) * best;
        prev = r;
    }
    ap
}

pub fn random_sets(rng: &mut ChaCha8Rng) -> Vec<DetectionSet> {
    let images = rng.random_range(1..4);
    let mut budget = 20;
    let mut sets = Vec::new();
    for i in 0..images {
        let mut s = DetectionSet::new(format!("img{i}"));
        for _ in 0..rng.random_range(1..4).min(budget) {
            s.ground_truth.push({ let c = rng.random_range(0..2); random_box(rng, c) });
            budget -= 1;
        }
        for g in s.ground_truth.clone() {
            if budget > 0 && rng.random_bool(0.7) {
                let j = 0.6;
                let c = [
                    g.x_min + rng.random_range(-j..j),
                    g.y_min + rng.random_range(-j..j),
                    g.x_max + rng.random_range(-j..j),
                    g.y_max + rng.random_range(-j..j),
                ];
                if let Ok(p) = g.with_coords(c) {
                    s.predictions.push(p.with_confidence(rng.random_range(0.0..1.0)).unwrap());
                    budget -= 1;
                }
            }
        }
        for _ in 0..rng.random_range(0..3usize).min(budget) {
            let p = { let c = rng.random_range(0..2); random_box(rng, c) };
            s.predictions.push(p.with_confidence(rng.random_range(0.0..1.0)).unwrap());
            budget -= 1;
        }
        sets.push(s);
    }
    if sets.iter().all(|s| s.ground_truth.is_empty()) {
        sets[0].ground_truth.push(random_box(rng, 0));
    }
    sets
}

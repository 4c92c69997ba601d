use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Axis-aligned box in continuous image coordinates. Predictions carry a
/// confidence; ground truth does not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class_id: u32,
    pub confidence: Option<f64>,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: u32) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
            class_id,
            confidence: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!("confidence {confidence} outside [0, 1]")));
        }
        self.confidence = Some(confidence);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max].iter().all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidArgument(format!(
                "degenerate box ({}, {}, {}, {})",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Same class and confidence, new corners.
    pub fn with_coords(&self, c: [f64; 4]) -> Result<Self> {
        let b = BoundingBox {
            x_min: c[0],
            y_min: c[1],
            x_max: c[2],
            y_max: c[3],
            ..*self
        };
        b.validate()?;
        Ok(b)
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let inter = overlap(a.x_min, a.x_max, b.x_min, b.x_max) * overlap(a.y_min, a.y_max, b.y_min, b.y_max);
    Ok(inter / (a.area() + b.area() - inter))
}

/// Squared center distance over the squared diagonal of the smallest
/// enclosing box.
pub fn diou_penalty(pred: &BoundingBox, gt: &BoundingBox) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    let c = Ciou::eval(pred, gt);
    Ok(c.d2 / c.c2)
}

/// Aspect-ratio consistency `v = 4/pi^2 (atan(w_gt/h_gt) - atan(w/h))^2`.
pub fn aspect_term(pred: &BoundingBox, gt: &BoundingBox) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    Ok(Ciou::eval(pred, gt).v)
}

/// `1 - IoU + d^2/c^2 + v^2 / ((1 - IoU) + v)`. The last term is taken as
/// 0 when its denominator vanishes (identical boxes).
pub fn ciou_loss(pred: &BoundingBox, gt: &BoundingBox) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    Ok(Ciou::eval(pred, gt).loss())
}

/// CIoU loss and its gradient with respect to the predicted corners
/// `[x_min, y_min, x_max, y_max]`. At kinks (touching edges) one-sided
/// derivatives are used.
pub fn ciou_loss_grad(pred: &BoundingBox, gt: &BoundingBox) -> Result<(f64, [f64; 4])> {
    pred.validate()?;
    gt.validate()?;
    let c = Ciou::eval(pred, gt);
    let (p, g) = (pred.coords(), gt.coords());

    // Intersection extents and which side bounds them.
    let iw = p[2].min(g[2]) - p[0].max(g[0]);
    let ih = p[3].min(g[3]) - p[1].max(g[1]);
    let mut d_inter = [0.0; 4];
    if iw > 0.0 && ih > 0.0 {
        if p[0] >= g[0] {
            d_inter[0] = -ih;
        }
        if p[2] <= g[2] {
            d_inter[2] = ih;
        }
        if p[1] >= g[1] {
            d_inter[1] = -iw;
        }
        if p[3] <= g[3] {
            d_inter[3] = iw;
        }
    }
    let (w, h) = (pred.width(), pred.height());
    let d_area = [-h, -w, h, w];
    let union = pred.area() + gt.area() - c.inter;
    let mut d_iou = [0.0; 4];
    for i in 0..4 {
        let d_union = d_area[i] - d_inter[i];
        d_iou[i] = (d_inter[i] * union - c.inter * d_union) / (union * union);
    }

    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let d_d2 = [pcx - gcx, pcy - gcy, pcx - gcx, pcy - gcy];
    let cw = p[2].max(g[2]) - p[0].min(g[0]);
    let ch = p[3].max(g[3]) - p[1].min(g[1]);
    let mut d_c2 = [0.0; 4];
    if p[0] <= g[0] {
        d_c2[0] = -2.0 * cw;
    }
    if p[2] >= g[2] {
        d_c2[2] = 2.0 * cw;
    }
    if p[1] <= g[1] {
        d_c2[1] = -2.0 * ch;
    }
    if p[3] >= g[3] {
        d_c2[3] = 2.0 * ch;
    }

    let delta = (gt.width() / gt.height()).atan() - (w / h).atan();
    let k = 8.0 / (PI * PI) * delta / (w * w + h * h);
    // dv/dw = -k h, dv/dh = k w
    let d_v = [k * h, -k * w, -k * h, k * w];

    let denom = 1.0 - c.iou + c.v;
    let mut grad = [0.0; 4];
    for i in 0..4 {
        let d_pen = (d_d2[i] * c.c2 - c.d2 * d_c2[i]) / (c.c2 * c.c2);
        let d_term = if denom > 0.0 {
            (2.0 * c.v * d_v[i] * denom - c.v * c.v * (d_v[i] - d_iou[i])) / (denom * denom)
        } else {
            0.0
        };
        grad[i] = -d_iou[i] + d_pen + d_term;
    }
    Ok((c.loss(), grad))
}

struct Ciou {
    inter: f64,
    iou: f64,
    d2: f64,
    c2: f64,
    v: f64,
}

impl Ciou {
    fn eval(pred: &BoundingBox, gt: &BoundingBox) -> Self {
        let inter = overlap(pred.x_min, pred.x_max, gt.x_min, gt.x_max)
            * overlap(pred.y_min, pred.y_max, gt.y_min, gt.y_max);
        let iou = inter / (pred.area() + gt.area() - inter);
        let (pcx, pcy) = pred.center();
        let (gcx, gcy) = gt.center();
        let d2 = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
        let cw = pred.x_max.max(gt.x_max) - pred.x_min.min(gt.x_min);
        let ch = pred.y_max.max(gt.y_max) - pred.y_min.min(gt.y_min);
        let delta = (gt.width() / gt.height()).atan() - (pred.width() / pred.height()).atan();
        Ciou {
            inter,
            iou,
            d2,
            c2: cw * cw + ch * ch,
            v: 4.0 / (PI * PI) * delta * delta,
        }
    }

    fn loss(&self) -> f64 {
        let denom = 1.0 - self.iou + self.v;
        let term = if denom > 0.0 { self.v * self.v / denom } else { 0.0 };
        1.0 - self.iou + self.d2 / self.c2 + term
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1, 0).unwrap()
    }

    #[test]
    fn identical_boxes_have_zero_loss() {
        let a = b(1.0, 2.0, 4.0, 3.5);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(ciou_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(ciou_loss_grad(&a, &a).unwrap().0, 0.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 2.0, 0).is_err());
        let mut a = b(0.0, 0.0, 1.0, 1.0);
        a.y_max = -1.0;
        assert!(iou(&a, &b(0.0, 0.0, 1.0, 1.0)).is_err());
    }
}

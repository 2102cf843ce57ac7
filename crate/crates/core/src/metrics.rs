//! Confusion-matrix segmentation metrics.

use std::fmt;

use crate::error::{dim_err, Result};
use crate::tensor::{sigmoid_scalar, Element, Tensor};

/// Pixel counts for one image or an aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// `num / den`, or the empty-set convention when `den == 0`: 1.0 if there
/// are no errors at all, else 0.0.
fn ratio(num: u64, den: u64, errors: u64) -> f64 {
    if den == 0 {
        if errors == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn from_masks(pred: impl IntoIterator<Item = bool>, target: impl IntoIterator<Item = bool>) -> Self {
        let mut c = Confusion::default();
        for (p, g) in pred.into_iter().zip(target) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// `[dice, iou, precision, recall, specificity, accuracy]`.
    pub fn scores(&self) -> [f64; 6] {
        let Confusion { tp, fp, fn_, tn } = *self;
        let err = fp + fn_;
        [
            ratio(2 * tp, 2 * tp + fp + fn_, err),
            ratio(tp, tp + fp + fn_, err),
            ratio(tp, tp + fp, err),
            ratio(tp, tp + fn_, err),
            ratio(tn, tn + fp, err),
            ratio(tp + tn, self.total(), err),
        ]
    }
}

/// The six metrics averaged over images, with confusion counts summed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub dice: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub counts: Confusion,
    pub images: usize,
}

pub const METRIC_NAMES: [&str; 6] = ["dice", "iou", "precision", "recall", "specificity", "accuracy"];

impl MetricsReport {
    pub fn scores(&self) -> [f64; 6] {
        [
            self.dice,
            self.iou,
            self.precision,
            self.recall,
            self.specificity,
            self.accuracy,
        ]
    }

    /// Single-line `key=value` record, scores with six decimals.
    pub fn record(&self) -> String {
        let mut parts: Vec<String> = METRIC_NAMES
            .iter()
            .zip(self.scores())
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        let c = &self.counts;
        parts.push(format!("tp={} fp={} fn={} tn={} images={}", c.tp, c.fp, c.fn_, c.tn, self.images));
        parts.join(" ")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in METRIC_NAMES.iter().zip(self.scores()) {
            writeln!(f, "{k:<12} {v:.6}")?;
        }
        let c = &self.counts;
        write!(
            f,
            "pixels       tp={} fp={} fn={} tn={} over {} image(s)",
            c.tp, c.fp, c.fn_, c.tn, self.images
        )
    }
}

/// Accumulates per-image metrics across batches.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    sums: [f64; 6],
    counts: Confusion,
    images: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_image(&mut self, c: &Confusion) {
        for (s, v) in self.sums.iter_mut().zip(c.scores()) {
            *s += v;
        }
        self.counts.add(c);
        self.images += 1;
    }

    /// Adds every image of a batch of binary masks; the leading axis indexes
    /// images.
    pub fn add_masks<T: Element>(&mut self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
        if pred.shape() != target.shape() {
            return Err(dim_err!("prediction {:?} vs target {:?}", pred.shape(), target.shape()));
        }
        let n = pred.shape()[0];
        let per = pred.numel() / n.max(1);
        let half = T::of(0.5);
        for i in 0..n {
            let p = pred.data()[i * per..][..per].iter().map(|&v| v > half);
            let g = target.data()[i * per..][..per].iter().map(|&v| v > half);
            self.add_image(&Confusion::from_masks(p, g));
        }
        Ok(())
    }

    /// Thresholds `sigmoid(logits)` and adds the batch.
    pub fn add_logits<T: Element>(&mut self, logits: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<()> {
        let pred = logits.map(|z| if sigmoid_scalar(z).as_f64() > threshold { T::one() } else { T::zero() });
        self.add_masks(&pred, target)
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn finish(&self) -> MetricsReport {
        let k = self.images.max(1) as f64;
        let [dice, iou, precision, recall, specificity, accuracy] = self.sums.map(|s| s / k);
        MetricsReport {
            dice,
            iou,
            precision,
            recall,
            specificity,
            accuracy,
            counts: self.counts,
            images: self.images,
        }
    }
}

/// Metrics of `sigmoid(logits) > threshold` against a binary target.
pub fn evaluate<T: Element>(logits: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    acc.add_logits(logits, target, threshold)?;
    Ok(acc.finish())
}

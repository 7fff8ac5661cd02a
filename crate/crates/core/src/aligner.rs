//! Global alignment of spoken class labels with object locations.
//!
//! Each label and each object carries the time interval during which it was
//! produced. Matching label `c` with object `o` costs
//! `1 - overlap(c, o) / duration(c)`; leaving either unmatched costs the gap
//! penalty. Needleman-Wunsch finds the order-preserving alignment of least
//! total cost.

use serde::{Deserialize, Serialize};

/// Labels shorter than this are matched by whether their midpoint falls
/// inside the object interval.
pub const MIN_LABEL_DURATION: f64 = 1e-3;

pub const DEFAULT_GAP_PENALTY: f64 = 0.5;

/// Closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        self.start + 0.5 * (self.end - self.start)
    }
}

pub fn interval_overlap(a: Interval, b: Interval) -> f64 {
    (a.end.min(b.end) - a.start.max(b.start)).max(0.0)
}

/// Cost of pairing a spoken label with an object, in `[0, 1]`.
pub fn match_cost(label: Interval, object: Interval) -> f64 {
    let d = label.duration();
    if d < MIN_LABEL_DURATION {
        let mid = label.midpoint();
        return if object.start <= mid && mid <= object.end {
            0.0
        } else {
            1.0
        };
    }
    (1.0 - interval_overlap(label, object) / d).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub gap_penalty: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            gap_penalty: DEFAULT_GAP_PENALTY,
        }
    }
}

impl AlignmentConfig {
    pub fn new(gap_penalty: f64) -> Result<Self, crate::Error> {
        if !(gap_penalty.is_finite() && gap_penalty > 0.0) {
            return Err(crate::Error::invalid(
                "alignment config",
                format!("gap penalty must be positive, got {gap_penalty}"),
            ));
        }
        Ok(Self { gap_penalty })
    }
}

/// Result of aligning labels with objects. Indices refer to the input slices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Alignment {
    /// `(label index, object index)`, in temporal order.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_labels: Vec<usize>,
    pub unmatched_objects: Vec<usize>,
    pub total_cost: f64,
}

impl Alignment {
    /// Object index matched to each label, if any.
    pub fn object_for_label(&self, label: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == label).map(|p| p.1)
    }

    /// Label index matched to each object, if any.
    pub fn label_for_object(&self, object: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == object).map(|p| p.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Match,
    SkipLabel,
    SkipObject,
}

/// Order of intervals by start, then end, then position.
fn temporal_order(spans: &[Interval]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| {
        spans[a]
            .start
            .total_cmp(&spans[b].start)
            .then(spans[a].end.total_cmp(&spans[b].end))
            .then(a.cmp(&b))
    });
    order
}

/// Least-cost global alignment of labels with objects.
///
/// Both inputs are put in temporal order first. On equal cost a match is
/// preferred over skipping a label, and skipping a label over skipping an
/// object.
pub fn align(labels: &[Interval], objects: &[Interval], cfg: &AlignmentConfig) -> Alignment {
    let g = cfg.gap_penalty;
    let label_order = temporal_order(labels);
    let object_order = temporal_order(objects);
    let n = labels.len();
    let m = objects.len();
    let width = m + 1;

    let mut cost = vec![0.0f64; (n + 1) * width];
    let mut step = vec![Step::Match; (n + 1) * width];
    for i in 1..=n {
        cost[i * width] = cost[(i - 1) * width] + g;
        step[i * width] = Step::SkipLabel;
    }
    for j in 1..=m {
        cost[j] = cost[j - 1] + g;
        step[j] = Step::SkipObject;
    }
    for i in 1..=n {
        let label = labels[label_order[i - 1]];
        for j in 1..=m {
            let object = objects[object_order[j - 1]];
            let diag = cost[(i - 1) * width + j - 1] + match_cost(label, object);
            let up = cost[(i - 1) * width + j] + g;
            let left = cost[i * width + j - 1] + g;
            let (best, s) = if diag <= up && diag <= left {
                (diag, Step::Match)
            } else if up <= left {
                (up, Step::SkipLabel)
            } else {
                (left, Step::SkipObject)
            };
            cost[i * width + j] = best;
            step[i * width + j] = s;
        }
    }

    let mut alignment = Alignment {
        total_cost: cost[n * width + m],
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match step[i * width + j] {
            Step::Match => {
                alignment.pairs.push((label_order[i - 1], object_order[j - 1]));
                i -= 1;
                j -= 1;
            }
            Step::SkipLabel => {
                alignment.unmatched_labels.push(label_order[i - 1]);
                i -= 1;
            }
            Step::SkipObject => {
                alignment.unmatched_objects.push(object_order[j - 1]);
                j -= 1;
            }
        }
    }
    alignment.pairs.reverse();
    alignment.unmatched_labels.sort_unstable();
    alignment.unmatched_objects.sort_unstable();
    alignment
}

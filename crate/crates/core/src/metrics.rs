//! Evaluation measures for annotations, alignments and session logs.
//!
//! Per-image results are kept as counts ([`Ratio`], [`Mean`]) so they can be
//! summed across images before dividing. Undefined values (empty
//! denominators) come back as `None`.

use std::collections::{BTreeSet, HashMap};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::aligner::{interval_overlap, Interval};
use crate::error::{Error, Result};
use crate::eventlog::SessionLog;
use crate::geometry::{iou, point_in_box, AnnotationSet, BBox, Location, ObjectAnnotation};
use crate::transcript::{utterance_span, Transcript};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
}

impl Ratio {
    pub fn new(hits: usize, total: usize) -> Self {
        debug_assert!(hits <= total);
        Self { hits, total }
    }

    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

impl Add for Ratio {
    type Output = Ratio;
    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.hits + o.hits, self.total + o.total)
    }
}

impl AddAssign for Ratio {
    fn add_assign(&mut self, o: Ratio) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Ratio {
    fn sum<I: Iterator<Item = Ratio>>(iter: I) -> Ratio {
        iter.fold(Ratio::default(), Add::add)
    }
}

/// Running sum for an arithmetic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Mean {
    pub sum: f64,
    pub count: usize,
}

impl Mean {
    pub fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

impl Add for Mean {
    type Output = Mean;
    fn add(self, o: Mean) -> Mean {
        Mean {
            sum: self.sum + o.sum,
            count: self.count + o.count,
        }
    }
}

fn labeled_boxes(annos: &[ObjectAnnotation]) -> impl Iterator<Item = (&str, &BBox)> {
    annos
        .iter()
        .filter_map(|a| Some((a.class_id.as_deref()?, a.location.as_box()?)))
}

fn gt_boxes(gt: &[ObjectAnnotation]) -> impl Iterator<Item = (Option<&str>, &BBox)> {
    gt.iter()
        .filter_map(|g| Some((g.class_id.as_deref(), g.location.as_box()?)))
}

/// Labeled boxes whose label equals that of their highest-IoU ground-truth
/// box. Boxes overlapping no ground truth are not counted.
pub fn semantic_accuracy(annos: &[ObjectAnnotation], gt: &[ObjectAnnotation]) -> Ratio {
    let mut r = Ratio::default();
    for (class, b) in labeled_boxes(annos) {
        let mut best: Option<(f64, Option<&str>)> = None;
        for (gt_class, g) in gt_boxes(gt) {
            let v = iou(b, g);
            if v > 0.0 && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, gt_class));
            }
        }
        if let Some((_, gt_class)) = best {
            r += Ratio::new(usize::from(gt_class == Some(class)), 1);
        }
    }
    r
}

/// IoU of each labeled box with its best same-class ground-truth box.
/// Boxes whose class is absent from the ground truth are skipped.
pub fn mean_iou(annos: &[ObjectAnnotation], gt: &[ObjectAnnotation]) -> Mean {
    let mut m = Mean::default();
    for (class, b) in labeled_boxes(annos) {
        let best = gt_boxes(gt)
            .filter(|(c, _)| *c == Some(class))
            .map(|(_, g)| iou(b, g))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        if let Some(v) = best {
            m.push(v);
        }
    }
    m
}

/// Like [`mean_iou`] but pairing by overlap alone, ignoring classes.
pub fn mean_iou_any_class(annos: &[ObjectAnnotation], gt: &[ObjectAnnotation]) -> Mean {
    let mut m = Mean::default();
    for (_, b) in labeled_boxes(annos) {
        let best = gt_boxes(gt)
            .map(|(_, g)| iou(b, g))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        if let Some(v) = best {
            m.push(v);
        }
    }
    m
}

/// Objects that received no class label.
pub fn unlabeled_fraction(annos: &[ObjectAnnotation]) -> Ratio {
    Ratio::new(annos.iter().filter(|a| a.class_id.is_none()).count(), annos.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Add for LabelCounts {
    type Output = LabelCounts;
    fn add(self, o: LabelCounts) -> LabelCounts {
        LabelCounts {
            true_positives: self.true_positives + o.true_positives,
            false_positives: self.false_positives + o.false_positives,
            false_negatives: self.false_negatives + o.false_negatives,
        }
    }
}

impl LabelCounts {
    pub fn from_sets(pred: &BTreeSet<String>, gt: &BTreeSet<String>) -> Self {
        let tp = pred.intersection(gt).count();
        Self {
            true_positives: tp,
            false_positives: pred.len() - tp,
            false_negatives: gt.len() - tp,
        }
    }

    pub fn prf(&self) -> Prf {
        let predicted = self.true_positives + self.false_positives;
        let actual = self.true_positives + self.false_negatives;
        let precision = if predicted == 0 {
            0.0
        } else {
            self.true_positives as f64 / predicted as f64
        };
        let recall = (actual > 0).then(|| self.true_positives as f64 / actual as f64);
        Prf {
            precision,
            recall,
            f1: recall.map(|r| f1_score(precision, r)),
        }
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision is 0 when nothing was predicted; recall and F1 are undefined
/// without ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    /// From counts summed over images.
    pub micro: Prf,
    /// Per-image values averaged over the images where they are defined.
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
}

/// Image-level class-label precision, recall and F1.
pub fn label_prf(pred: &[BTreeSet<String>], gt: &[BTreeSet<String>]) -> PrfReport {
    assert_eq!(pred.len(), gt.len(), "one predicted and one true class set per image");
    let counts: Vec<LabelCounts> = pred.iter().zip(gt).map(|(p, g)| LabelCounts::from_sets(p, g)).collect();
    let total = counts.iter().copied().fold(LabelCounts::default(), Add::add);
    let mut p = Mean::default();
    let mut r = Mean::default();
    let mut f = Mean::default();
    for c in &counts {
        let prf = c.prf();
        p.push(prf.precision);
        if let Some(v) = prf.recall {
            r.push(v);
        }
        if let Some(v) = prf.f1 {
            f.push(v);
        }
    }
    PrfReport {
        micro: total.prf(),
        macro_avg: Prf {
            precision: p.value().unwrap_or(0.0),
            recall: r.value(),
            f1: f.value(),
        },
    }
}

/// Labeled clicks lying inside a ground-truth box of their class. Clicks
/// whose class does not occur in the image are skipped.
pub fn location_accuracy(points: &[ObjectAnnotation], gt: &[ObjectAnnotation]) -> Ratio {
    let mut r = Ratio::default();
    for a in points {
        let (Some(class), Location::Point { x, y }) = (a.class_id.as_deref(), a.location) else {
            continue;
        };
        let mut same_class = gt_boxes(gt).filter(|(c, _)| *c == Some(class)).peekable();
        if same_class.peek().is_none() {
            continue;
        }
        let hit = same_class.any(|(_, b)| point_in_box(x, y, b));
        r += Ratio::new(usize::from(hit), 1);
    }
    r
}

/// Objects whose true class appears among the classes segmented from any of
/// the first `k` alternatives of their utterance.
///
/// Each case is `(class ids per alternative in rank order, true class id)`.
pub fn transcription_recall_at_k(cases: &[(Vec<BTreeSet<String>>, String)], k: usize) -> Ratio {
    cases
        .iter()
        .map(|(alternatives, truth)| {
            let found = alternatives.iter().take(k).any(|set| set.contains(truth));
            Ratio::new(usize::from(found), 1)
        })
        .sum()
}

/// Matched `(label, object)` pairs whose time intervals overlap.
pub fn speech_draw_overlap_fraction(pairs: &[(Interval, Interval)]) -> Ratio {
    pairs
        .iter()
        .map(|&(label, object)| Ratio::new(usize::from(interval_overlap(label, object) > 0.0), 1))
        .sum()
}

/// Fixed-width histogram over `[lo, hi)` with weighted mass and overflow
/// accumulators on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(lo < hi && bins > 0, "empty histogram range");
        Self {
            lo,
            hi,
            bins: vec![0.0; bins],
            underflow: 0.0,
            overflow: 0.0,
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins.len() as f64
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }

    /// Add `weight` at a single value.
    pub fn add_value(&mut self, v: f64, weight: f64) {
        if v < self.lo {
            self.underflow += weight;
        } else if v >= self.hi {
            self.overflow += weight;
        } else {
            let i = (((v - self.lo) / self.bin_width()) as usize).min(self.bins.len() - 1);
            self.bins[i] += weight;
        }
    }

    /// Spread mass equal to the length of `[a, b]` over the bins it covers.
    pub fn add_interval(&mut self, a: f64, b: f64) {
        if b <= a {
            return;
        }
        self.underflow += (b.min(self.lo) - a).max(0.0);
        self.overflow += (b - a.max(self.hi)).max(0.0);
        for i in 0..self.bins.len() {
            let (l, r) = self.bin_edges(i);
            self.bins[i] += (b.min(r) - a.max(l)).max(0.0);
        }
    }

    pub fn total(&self) -> f64 {
        self.underflow + self.overflow + self.bins.iter().sum::<f64>()
    }
}

/// When people speak relative to drawing: each label interval is mapped so
/// that its object's first click is 0 and last click is 1, and its length is
/// accumulated as mass. Pairs whose object took no time are skipped.
pub fn speech_timing_profile(pairs: &[(Interval, Interval)], lo: f64, hi: f64, bins: usize) -> Histogram {
    let mut h = Histogram::new(lo, hi, bins);
    for &(label, object) in pairs {
        let d = object.duration();
        if d <= 0.0 {
            continue;
        }
        h.add_interval((label.start - object.start) / d, (label.end - object.start) / d);
    }
    h
}

/// 1-based ranks, tied values sharing the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties. `None` for fewer
/// than two points or a constant input.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "spearman needs paired samples");
    if xs.len() < 2 {
        return None;
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Total Euclidean length of a mouse trail of `[x, y, t]` samples.
pub fn mouse_path_length(samples: &[[f64; 3]]) -> f64 {
    samples
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

pub const UTTERANCE_HISTOGRAM: (f64, f64, usize) = (0.0, 4.0, 16);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub images: usize,
    pub objects: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_per_image: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_per_object: Option<f64>,
    /// Rank correlation between objects per image and time per image.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objects_time_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_mouse_path: Option<f64>,
    /// Counts of rank-1 utterance durations in seconds.
    pub utterance_durations: Histogram,
}

/// Session timing statistics. Image time is the session duration.
pub fn timing_summary(log: &SessionLog, transcripts: &[&Transcript]) -> TimingSummary {
    let durations: Vec<f64> = log.images.iter().map(|i| i.duration()).collect();
    let counts: Vec<f64> = log.images.iter().map(|i| i.objects.len() as f64).collect();
    let total_time: f64 = durations.iter().sum();
    let objects: usize = log.images.iter().map(|i| i.objects.len()).sum();
    let mut path = Mean::default();
    for trail in log.images.iter().filter_map(|i| i.mouse_trail.as_ref()) {
        path.push(mouse_path_length(trail));
    }
    let (lo, hi, bins) = UTTERANCE_HISTOGRAM;
    let mut utterance_durations = Histogram::new(lo, hi, bins);
    for u in transcripts.iter().flat_map(|t| &t.utterances) {
        utterance_durations.add_value(utterance_span(u).duration(), 1.0);
    }
    TimingSummary {
        images: log.images.len(),
        objects,
        time_per_image: (!durations.is_empty()).then(|| total_time / durations.len() as f64),
        time_per_object: (objects > 0).then(|| total_time / objects as f64),
        objects_time_correlation: if counts.len() >= 2 {
            spearman(&counts, &durations)
        } else {
            None
        },
        mean_mouse_path: path.value(),
        utterance_durations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Boxes,
    Points,
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "boxes" => Ok(EvalMode::Boxes),
            "points" => Ok(EvalMode::Points),
            other => Err(format!("unknown mode {other:?}, expected boxes or points")),
        }
    }
}

/// One CSV row per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: String,
    pub objects: usize,
    pub unlabeled: usize,
    pub semantic_correct: usize,
    pub semantic_counted: usize,
    pub iou_sum: f64,
    pub iou_counted: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub location_correct: usize,
    pub location_counted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub images: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou_any_class: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unlabeled_fraction: Option<f64>,
    pub precision: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub labels: PrfReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location_accuracy: Option<f64>,
    pub per_image: Vec<ImageRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |source| Error::Csv {
            context: "per-image report".into(),
            source,
        };
        for row in &self.per_image {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("per-image report", e))?;
        Ok(())
    }
}

fn class_set(objects: &[ObjectAnnotation]) -> BTreeSet<String> {
    objects.iter().filter_map(|o| o.class_id.clone()).collect()
}

/// Compare annotations with ground truth image by image. Both files must
/// cover the same images; ground truth must be boxes.
pub fn evaluate(annos: &AnnotationSet, gt: &AnnotationSet, mode: EvalMode) -> Result<EvalReport> {
    const CTX: &str = "evaluation";
    let gt_by_id: HashMap<&str, &[ObjectAnnotation]> = gt
        .images
        .iter()
        .map(|i| (i.image_id.as_str(), i.objects.as_slice()))
        .collect();
    let anno_ids: BTreeSet<&str> = annos.images.iter().map(|i| i.image_id.as_str()).collect();
    let missing: Vec<&str> = gt_by_id.keys().copied().filter(|id| !anno_ids.contains(id)).collect();
    if let Some(id) = missing.iter().min() {
        return Err(Error::invalid(
            CTX,
            format!("image {id:?} has ground truth but no annotations"),
        ));
    }
    let mut rows = Vec::with_capacity(annos.images.len());
    let mut pred_sets = Vec::new();
    let mut gt_sets = Vec::new();
    let (mut semantic, mut unlabeled, mut location) = (Ratio::default(), Ratio::default(), Ratio::default());
    let (mut miou, mut miou_any) = (Mean::default(), Mean::default());

    for image in &annos.images {
        let Some(truth) = gt_by_id.get(image.image_id.as_str()) else {
            return Err(Error::invalid(
                CTX,
                format!("image {:?} is missing from the ground truth", image.image_id),
            ));
        };
        if truth.iter().any(|o| o.location.as_box().is_none()) {
            return Err(Error::invalid(
                CTX,
                format!("ground truth for {:?} must contain boxes only", image.image_id),
            ));
        }
        let wrong_kind = image.objects.iter().any(|o| match mode {
            EvalMode::Boxes => o.location.as_box().is_none(),
            EvalMode::Points => o.location.as_box().is_some(),
        });
        if wrong_kind {
            return Err(Error::invalid(
                CTX,
                format!(
                    "image {:?} has locations that do not match mode {mode:?}",
                    image.image_id
                ),
            ));
        }

        let (sem, iou_m, iou_any, loc) = match mode {
            EvalMode::Boxes => (
                semantic_accuracy(&image.objects, truth),
                mean_iou(&image.objects, truth),
                mean_iou_any_class(&image.objects, truth),
                Ratio::default(),
            ),
            EvalMode::Points => (
                Ratio::default(),
                Mean::default(),
                Mean::default(),
                location_accuracy(&image.objects, truth),
            ),
        };
        let unl = unlabeled_fraction(&image.objects);
        let pred_set = class_set(&image.objects);
        let gt_set = class_set(truth);
        let counts = LabelCounts::from_sets(&pred_set, &gt_set);

        semantic += sem;
        unlabeled += unl;
        location += loc;
        miou = miou + iou_m;
        miou_any = miou_any + iou_any;
        pred_sets.push(pred_set);
        gt_sets.push(gt_set);
        rows.push(ImageRow {
            image_id: image.image_id.clone(),
            objects: image.objects.len(),
            unlabeled: unl.hits,
            semantic_correct: sem.hits,
            semantic_counted: sem.total,
            iou_sum: iou_m.sum,
            iou_counted: iou_m.count,
            true_positives: counts.true_positives,
            false_positives: counts.false_positives,
            false_negatives: counts.false_negatives,
            location_correct: loc.hits,
            location_counted: loc.total,
        });
    }

    let labels = label_prf(&pred_sets, &gt_sets);
    Ok(EvalReport {
        mode,
        images: rows.len(),
        semantic_accuracy: semantic.value(),
        mean_iou: miou.value(),
        mean_iou_any_class: miou_any.value(),
        unlabeled_fraction: unlabeled.value(),
        precision: labels.micro.precision,
        recall: labels.micro.recall,
        f1: labels.micro.f1,
        labels,
        location_accuracy: location.value(),
        per_image: rows,
    })
}

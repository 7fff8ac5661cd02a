//! End-to-end orchestration: transcripts and session logs in, labelled
//! object annotations out. Images are independent and run on a bounded
//! worker pool; results are always assembled in log order.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{align, Alignment, AlignmentConfig, Interval};
use crate::error::{Error, Result};
use crate::eventlog::{ImageSession, SessionLog};
use crate::geometry::{AnnotationSet, ImageAnnotations, ObjectAnnotation};
use crate::metrics::{speech_draw_overlap_fraction, speech_timing_profile, Histogram, Ratio};
use crate::segmenter::{Segmenter, TimedClassLabel};
use crate::simulator::{simulate, SimOutput, SimParams};
use crate::transcript::Transcript;
use crate::vocab::Vocabulary;

/// Normalized speaking-time histogram range: 0 is the first click, 1 the last.
pub const TIMING_PROFILE: (f64, f64, usize) = (-2.0, 3.0, 25);

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub annotations: ImageAnnotations,
    pub labels: Vec<TimedClassLabel>,
    pub object_spans: Vec<Interval>,
    pub alignment: Alignment,
}

impl ImageResult {
    /// `(label interval, object interval)` for every matched pair.
    pub fn matched_spans(&self) -> Vec<(Interval, Interval)> {
        self.alignment
            .pairs
            .iter()
            .map(|&(l, o)| (self.labels[l].span(), self.object_spans[o]))
            .collect()
    }
}

/// Label the objects of one session from its transcript. Without a
/// transcript every object stays unlabeled.
pub fn annotate_image(
    segmenter: &Segmenter<'_>,
    transcript: Option<&Transcript>,
    session: &ImageSession,
    cfg: &AlignmentConfig,
) -> ImageResult {
    let labels = transcript
        .map(|t| segmenter.labels_from_transcript(t))
        .unwrap_or_default();
    let object_spans: Vec<Interval> = session.objects.iter().map(|o| o.span()).collect();
    let label_spans: Vec<Interval> = labels.iter().map(TimedClassLabel::span).collect();
    let alignment = align(&label_spans, &object_spans, cfg);

    for &l in &alignment.unmatched_labels {
        let label = &labels[l];
        log::info!(
            "{}: spoken {:?} ({:?}) at [{:.3}, {:.3}] matched no object",
            session.image_id,
            label.class_id,
            label.mapped_from,
            label.start,
            label.end
        );
    }

    let objects = session
        .objects
        .iter()
        .enumerate()
        .map(|(j, event)| ObjectAnnotation {
            class_id: alignment.label_for_object(j).map(|l| labels[l].class_id.clone()),
            location: event.location(),
        })
        .collect();
    ImageResult {
        annotations: ImageAnnotations {
            image_id: session.image_id.clone(),
            objects,
        },
        labels,
        object_spans,
        alignment,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("worker pool", e.to_string()))
}

/// Annotate every image of `log`, looking transcripts up by image id.
pub fn annotate_all(
    segmenter: &Segmenter<'_>,
    transcripts: &HashMap<String, Transcript>,
    log: &SessionLog,
    cfg: &AlignmentConfig,
    workers: usize,
) -> Result<Vec<ImageResult>> {
    let pool = pool(workers)?;
    Ok(pool.install(|| {
        log.images
            .par_iter()
            .map(|session| {
                let transcript = transcripts.get(&session.image_id);
                if transcript.is_none() {
                    log::warn!("{}: no transcript, all objects left unlabeled", session.image_id);
                }
                annotate_image(segmenter, transcript, session, cfg)
            })
            .collect()
    }))
}

pub fn transcript_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.json"))
}

/// Load `<dir>/<image_id>.json` for every image in the log. Missing files
/// are skipped; unreadable or invalid ones are errors.
pub fn load_transcripts(dir: &Path, log: &SessionLog) -> Result<HashMap<String, Transcript>> {
    let mut out = HashMap::new();
    for image in &log.images {
        let path = transcript_path(dir, &image.image_id);
        if !path.exists() {
            continue;
        }
        let t = Transcript::load(&path).map_err(|e| e.within(&format!("image {:?}", image.image_id)))?;
        out.insert(image.image_id.clone(), t);
    }
    Ok(out)
}

pub fn annotations_of(results: &[ImageResult]) -> AnnotationSet {
    AnnotationSet {
        images: results.iter().map(|r| r.annotations.clone()).collect(),
    }
}

/// Alignment diagnostics over a batch of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub images: usize,
    pub objects: usize,
    pub labels: usize,
    pub unmatched_objects: usize,
    pub unmatched_labels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unlabeled_fraction: Option<f64>,
    /// Share of matched pairs whose spoken and drawn intervals overlap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speech_draw_overlap: Option<f64>,
    pub timing_profile: Histogram,
}

pub fn align_report(results: &[ImageResult]) -> AlignReport {
    let pairs: Vec<(Interval, Interval)> = results.iter().flat_map(ImageResult::matched_spans).collect();
    let objects: usize = results.iter().map(|r| r.object_spans.len()).sum();
    let unmatched_objects: usize = results.iter().map(|r| r.alignment.unmatched_objects.len()).sum();
    let (lo, hi, bins) = TIMING_PROFILE;
    AlignReport {
        images: results.len(),
        objects,
        labels: results.iter().map(|r| r.labels.len()).sum(),
        unmatched_objects,
        unmatched_labels: results.iter().map(|r| r.alignment.unmatched_labels.len()).sum(),
        unlabeled_fraction: Ratio::new(unmatched_objects, objects).value(),
        speech_draw_overlap: speech_draw_overlap_fraction(&pairs).value(),
        timing_profile: speech_timing_profile(&pairs, lo, hi, bins),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// [`simulate`] on a pool of `workers` threads. Output does not depend on
/// the worker count.
pub fn simulate_with_workers(
    gt: &AnnotationSet,
    vocab: &Vocabulary,
    params: &SimParams,
    workers: usize,
) -> Result<SimOutput> {
    pool(workers)?.install(|| simulate(gt, vocab, params))
}

/// File names used by [`write_simulation`].
pub const EVENTS_FILE: &str = "events.json";
pub const TRANSCRIPT_DIR: &str = "transcripts";
pub const TRACE_FILE: &str = "trace.json";

/// Write a simulation as `events.json`, `transcripts/<image_id>.json` and
/// `trace.json` under `dir`.
pub fn write_simulation(dir: &Path, sim: &SimOutput) -> Result<()> {
    write_file(&dir.join(EVENTS_FILE), &sim.log.to_json())?;
    let tdir = dir.join(TRANSCRIPT_DIR);
    fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    for (image_id, transcript) in &sim.transcripts {
        write_file(&transcript_path(&tdir, image_id), &transcript.to_json())?;
    }
    let trace = serde_json::to_string(&sim.trace).map_err(|e| Error::json("trace", e))?;
    write_file(&dir.join(TRACE_FILE), &trace)
}

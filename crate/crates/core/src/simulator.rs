//! Synthetic annotator sessions.
//!
//! Given ground-truth objects, the simulator produces what an annotator
//! would: four extreme clicks per box (or one click per point) laid out in
//! time, and a spoken class name per object that usually starts a little
//! before the first click. Noise knobs drop speech or boxes, merge adjacent
//! names into one utterance, and corrupt words the way a recognizer might.
//!
//! Every image draws from its own ChaCha stream, and draws are consumed in
//! the same order whatever the noise probabilities are. Two runs that differ
//! only in one probability therefore see the same underlying randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{ImageSession, SessionLog};
use crate::geometry::{AnnotationSet, Click, ImageAnnotations, Location, ObjectEvent};
use crate::transcript::{TimedWord, Transcript, TranscriptionAlternative, Utterance};
use crate::vocab::Vocabulary;

/// Recognizer confusions: each token with the words it may be heard as.
pub const CONFUSIONS: &[(&str, &[&str])] = &[
    ("person", &["ocean", "parson"]),
    ("dining", &["dying", "dinning"]),
    ("table", &["cable", "label"]),
    ("cat", &["hat", "cap"]),
    ("dog", &["dock", "fog"]),
    ("car", &["bar", "card"]),
    ("chair", &["share", "cheer"]),
    ("bottle", &["model", "battle"]),
    ("cup", &["pup", "cap"]),
    ("bed", &["bad", "bet"]),
    ("horse", &["house", "hoarse"]),
    ("bird", &["word", "bert"]),
    ("couch", &["coach", "pouch"]),
    ("oven", &["over", "olive"]),
    ("sink", &["think", "zinc"]),
    ("clock", &["block", "glock"]),
    ("boat", &["vote", "goat"]),
    ("train", &["rain", "crane"]),
    ("sheep", &["ship", "cheap"]),
    ("cow", &["how", "cal"]),
    ("plant", &["planet", "plan"]),
    ("tv", &["tee", "teevee"]),
];

/// A deterministic mis-hearing of `token`; tokens without known confusions
/// come back unchanged.
pub fn confusable<R: Rng + ?Sized>(token: &str, rng: &mut R) -> String {
    let pick: f64 = rng.random();
    match CONFUSIONS.iter().find(|(t, _)| *t == token) {
        Some((_, options)) => {
            let i = ((pick * options.len() as f64) as usize).min(options.len() - 1);
            options[i].to_string()
        }
        None => token.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub seed: u64,
    /// How long before the first click speech starts, in seconds.
    pub speech_lead_mean: f64,
    pub speech_lead_sd: f64,
    /// Range of the time taken to say a class name.
    pub utterance_duration: (f64, f64),
    /// Range of the time between first and last extreme click.
    pub box_duration: (f64, f64),
    /// Range of the idle time before each object.
    pub object_pause: (f64, f64),
    /// Minimum time speech continues after the last click; 0 leaves the
    /// spoken interval alone.
    pub speech_tail: f64,
    pub pause_merge_prob: f64,
    pub asr_substitution_prob: f64,
    pub forget_speech_prob: f64,
    pub discard_box_prob: f64,
    /// Standard deviation of click position noise, in pixels.
    pub click_jitter: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            seed: 0,
            speech_lead_mean: 0.4,
            speech_lead_sd: 0.3,
            utterance_duration: (0.5, 2.0),
            box_duration: (2.5, 5.0),
            object_pause: (2.0, 3.0),
            speech_tail: 0.0,
            pause_merge_prob: 0.0,
            asr_substitution_prob: 0.0,
            forget_speech_prob: 0.0,
            discard_box_prob: 0.0,
            click_jitter: 0.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("simulation parameters", m));
        for (name, p) in [
            ("pause_merge_prob", self.pause_merge_prob),
            ("asr_substitution_prob", self.asr_substitution_prob),
            ("forget_speech_prob", self.forget_speech_prob),
            ("discard_box_prob", self.discard_box_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, (lo, hi), min) in [
            ("utterance_duration", self.utterance_duration, f64::MIN_POSITIVE),
            ("box_duration", self.box_duration, f64::MIN_POSITIVE),
            ("object_pause", self.object_pause, 0.0),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) is invalid"));
            }
        }
        for (name, v) in [
            ("speech_lead_sd", self.speech_lead_sd),
            ("speech_tail", self.speech_tail),
            ("click_jitter", self.click_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !self.speech_lead_mean.is_finite() {
            return bad("speech_lead_mean must be finite".into());
        }
        Ok(())
    }
}

/// What happened to one ground-truth object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub image_id: String,
    /// Position of the object in the ground-truth image.
    pub gt_index: usize,
    pub class_id: String,
    /// Position of the object's event in the log, unless the box was dropped.
    pub event_index: Option<usize>,
    /// Utterance holding the object's name, unless speech was dropped.
    pub utterance: Option<usize>,
    pub speech_dropped: bool,
    pub box_dropped: bool,
    /// Whether any word of the name was misrecognized in the top alternative.
    pub substituted: bool,
    /// Rank of the alternative that carries the true words, if any does.
    pub true_rank: Option<u32>,
    /// When the name was spoken.
    pub speech: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub objects: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub log: SessionLog,
    /// One transcript per image, in log order.
    pub transcripts: Vec<(String, Transcript)>,
    pub trace: SimTrace,
}

struct Spoken {
    object: usize,
    words: Vec<TimedWord>,
}

struct ImageSim {
    session: ImageSession,
    transcript: Transcript,
    trace: Vec<TraceEntry>,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Spread `tokens` evenly over `[start, end]`.
fn timed_words(tokens: &[String], start: f64, end: f64) -> Vec<TimedWord> {
    let w = (end - start) / tokens.len() as f64;
    tokens
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let s = start + k as f64 * w;
            let e = if k + 1 == tokens.len() {
                end
            } else {
                start + (k + 1) as f64 * w
            };
            TimedWord::new(t.clone(), s, e)
        })
        .collect()
}

fn jitter_offset<R: Rng>(rng: &mut R, noise: &Normal<f64>, jitter: f64) -> f64 {
    let n = noise.sample(rng);
    if jitter > 0.0 {
        n * jitter
    } else {
        0.0
    }
}

fn simulate_image(
    image_index: usize,
    image: &ImageAnnotations,
    vocab: &Vocabulary,
    params: &SimParams,
) -> Result<ImageSim> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(image_index as u64);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut objects = Vec::new();
    let mut trace = Vec::new();
    let mut spoken: Vec<Spoken> = Vec::new();
    let mut trail = vec![[0.0, 0.0, 0.0]];
    let mut cursor = 0.0f64;
    let mut latest = 0.0f64;

    for (gt_index, gt) in image.objects.iter().enumerate() {
        let class_id = gt.class_id.as_deref().ok_or_else(|| {
            Error::invalid(
                format!("image {:?}", image.image_id),
                format!("ground-truth object {gt_index} has no class"),
            )
        })?;
        let class = vocab.index_of_id(class_id).ok_or_else(|| {
            Error::invalid(
                format!("image {:?}", image.image_id),
                format!("class {class_id:?} is not in the vocabulary"),
            )
        })?;

        let t0 = cursor + uniform(&mut rng, params.object_pause);
        let draw_time = uniform(&mut rng, params.box_duration);
        let mut offsets = [rng.random::<f64>(), rng.random::<f64>()];
        offsets.sort_by(f64::total_cmp);
        let (positions, duration): (Vec<(f64, f64)>, f64) = match gt.location {
            Location::Box(b) => {
                let (cx, cy) = ((b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0);
                (vec![(cx, b.y0), (b.x0, cy), (cx, b.y1), (b.x1, cy)], draw_time)
            }
            Location::Point { x, y } => (vec![(x, y)], 0.0),
        };
        let times = [
            t0,
            t0 + offsets[0] * duration,
            t0 + offsets[1] * duration,
            t0 + duration,
        ];
        let mut clicks: Vec<Click> = Vec::with_capacity(4);
        for (k, &time) in times.iter().enumerate() {
            // always draw four clicks' worth of jitter to keep streams aligned
            let jx = jitter_offset(&mut rng, &std_normal, params.click_jitter);
            let jy = jitter_offset(&mut rng, &std_normal, params.click_jitter);
            if let Some(&(px, py)) = positions.get(k) {
                let t = if positions.len() == 1 { t0 } else { time };
                clicks.push(Click::new((px + jx).max(0.0), (py + jy).max(0.0), t));
            }
        }
        cursor = t0 + duration;

        let speak_time = uniform(&mut rng, params.utterance_duration);
        let lead = params.speech_lead_mean + params.speech_lead_sd * std_normal.sample(&mut rng);
        let lead = lead.clamp(-0.5 * duration, 0.9 * speak_time);
        let start = (t0 - lead).max(0.0);
        let mut end = start + speak_time;
        if params.speech_tail > 0.0 {
            end = end.max(cursor + params.speech_tail);
        }

        let forget = rng.random::<f64>() < params.forget_speech_prob;
        let discard = rng.random::<f64>() < params.discard_box_prob;

        let event_index = if discard {
            None
        } else {
            for c in &clicks {
                trail.push([c.x, c.y, c.t]);
            }
            objects.push(ObjectEvent {
                kind: match gt.location {
                    Location::Box(_) => crate::geometry::ObjectKind::Box,
                    Location::Point { .. } => crate::geometry::ObjectKind::Point,
                },
                clicks,
            });
            Some(objects.len() - 1)
        };
        if !forget {
            spoken.push(Spoken {
                object: trace.len(),
                words: timed_words(&vocab.class(class).tokens, start, end),
            });
            latest = latest.max(end);
        }
        trace.push(TraceEntry {
            image_id: image.image_id.clone(),
            gt_index,
            class_id: class_id.to_string(),
            event_index,
            utterance: None,
            speech_dropped: forget,
            box_dropped: discard,
            substituted: false,
            true_rank: None,
            speech: (!forget).then_some((start, end)),
        });
    }

    // group spoken names into utterances
    let mut groups: Vec<Vec<Spoken>> = Vec::new();
    let mut merge_with_previous = false;
    for s in spoken {
        match groups.last_mut() {
            Some(last) if merge_with_previous => last.push(s),
            _ => groups.push(vec![s]),
        }
        merge_with_previous = rng.random::<f64>() < params.pause_merge_prob;
    }

    let mut utterances = Vec::with_capacity(groups.len());
    for (u_index, group) in groups.into_iter().enumerate() {
        let truth: Vec<TimedWord> = group.iter().flat_map(|s| s.words.iter().cloned()).collect();
        let mut noisy = truth.clone();
        let mut second = truth.clone();
        let mut substituted_words = vec![false; truth.len()];
        for k in 0..truth.len() {
            let first_draw = rng.random::<f64>() < params.asr_substitution_prob;
            let first_word = confusable(&truth[k].text, &mut rng);
            let second_draw = rng.random::<f64>() < params.asr_substitution_prob;
            let second_word = confusable(&truth[k].text, &mut rng);
            if first_draw {
                noisy[k].text = first_word;
                substituted_words[k] = noisy[k].text != truth[k].text;
            }
            if second_draw {
                second[k].text = second_word;
            }
        }
        let keep_truth = rng.random::<f64>() < 0.5;
        let truth_slot = if rng.random::<f64>() < 0.5 { 1 } else { 2 };

        let mut alternatives: Vec<Vec<TimedWord>> = vec![noisy.clone()];
        if noisy != truth {
            if second != noisy && second != truth {
                alternatives.push(second);
            }
            if keep_truth {
                let slot = truth_slot.min(alternatives.len());
                alternatives.insert(slot, truth.clone());
            }
        }
        let true_rank = alternatives.iter().position(|a| *a == truth).map(|p| p as u32 + 1);

        let mut offset = 0;
        for s in &group {
            let n = s.words.len();
            let entry = &mut trace[s.object];
            entry.utterance = Some(u_index);
            entry.substituted = substituted_words[offset..offset + n].iter().any(|&b| b);
            entry.true_rank = true_rank;
            offset += n;
        }

        utterances.push(Utterance {
            alternatives: alternatives
                .into_iter()
                .enumerate()
                .map(|(k, words)| TranscriptionAlternative {
                    rank: k as u32 + 1,
                    words,
                })
                .collect(),
        });
    }

    let session_end = cursor.max(latest) + 1.0;
    Ok(ImageSim {
        session: ImageSession {
            image_id: image.image_id.clone(),
            session_start: 0.0,
            session_end,
            objects,
            mouse_trail: Some(trail),
        },
        transcript: Transcript { utterances },
        trace,
    })
}

/// Simulate one annotation session per ground-truth image.
pub fn simulate(gt: &AnnotationSet, vocab: &Vocabulary, params: &SimParams) -> Result<SimOutput> {
    params.validate()?;
    let images: Vec<ImageSim> = gt
        .images
        .par_iter()
        .enumerate()
        .map(|(i, image)| simulate_image(i, image, vocab, params))
        .collect::<Result<_>>()?;

    let mut out = SimOutput {
        log: SessionLog::default(),
        transcripts: Vec::with_capacity(images.len()),
        trace: SimTrace::default(),
    };
    for image in images {
        out.transcripts
            .push((image.session.image_id.clone(), image.transcript.validated()?));
        out.log.images.push(image.session);
        out.trace.objects.extend(image.trace);
    }
    out.log = out.log.validated()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn vocab() -> Vocabulary {
        Vocabulary::new([("person", "person"), ("dining_table", "dining table"), ("cat", "cat")]).unwrap()
    }

    fn gt(classes: &[&str]) -> AnnotationSet {
        AnnotationSet {
            images: vec![ImageAnnotations {
                image_id: "img".into(),
                objects: classes
                    .iter()
                    .enumerate()
                    .map(|(i, c)| crate::geometry::ObjectAnnotation {
                        class_id: Some(c.to_string()),
                        location: Location::Box(BBox::new(10.0 * i as f64, 5.0, 10.0 * i as f64 + 8.0, 20.0)),
                    })
                    .collect(),
            }],
        }
    }

    #[test]
    fn confusions_follow_the_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = confusable("dining", &mut rng);
            assert!(d == "dying" || d == "dinning");
            let p = confusable("person", &mut rng);
            assert!(p == "ocean" || p == "parson");
            assert_eq!(confusable("zebra", &mut rng), "zebra");
        }
    }

    #[test]
    fn noise_free_boxes_are_exact() {
        let out = simulate(&gt(&["person", "cat"]), &vocab(), &SimParams::default()).unwrap();
        let image = &out.log.images[0];
        assert_eq!(image.objects.len(), 2);
        let b = image.objects[1].location();
        assert_eq!(b, Location::Box(BBox::new(10.0, 5.0, 18.0, 20.0)));
        assert_eq!(out.transcripts[0].1.utterances.len(), 2);
        for (entry, u) in out.trace.objects.iter().zip(&out.transcripts[0].1.utterances) {
            assert_eq!(u.alternatives.len(), 1);
            assert_eq!(entry.true_rank, Some(1));
            let span = image.objects[entry.event_index.unwrap()].span();
            let (s, e) = entry.speech.unwrap();
            assert!(e > span.start && s < span.end, "speech must overlap the clicks");
        }
    }

    #[test]
    fn same_seed_same_output() {
        let p = SimParams {
            seed: 7,
            asr_substitution_prob: 0.4,
            pause_merge_prob: 0.3,
            click_jitter: 2.0,
            ..SimParams::default()
        };
        let a = simulate(&gt(&["person", "dining_table", "cat"]), &vocab(), &p).unwrap();
        let b = simulate(&gt(&["person", "dining_table", "cat"]), &vocab(), &p).unwrap();
        assert_eq!(a, b);
        let c = simulate(
            &gt(&["person", "dining_table", "cat"]),
            &vocab(),
            &SimParams { seed: 8, ..p },
        )
        .unwrap();
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn merging_puts_names_in_one_utterance() {
        let p = SimParams {
            pause_merge_prob: 1.0,
            ..SimParams::default()
        };
        let out = simulate(&gt(&["person", "dining_table"]), &vocab(), &p).unwrap();
        let utterances = &out.transcripts[0].1.utterances;
        assert_eq!(utterances.len(), 1);
        assert_eq!(utterances[0].best().text(), "person dining table");
    }

    #[test]
    fn forgetting_all_speech_leaves_empty_transcripts() {
        let p = SimParams {
            forget_speech_prob: 1.0,
            ..SimParams::default()
        };
        let out = simulate(&gt(&["person", "cat"]), &vocab(), &p).unwrap();
        assert!(out.transcripts[0].1.utterances.is_empty());
        assert!(out
            .trace
            .objects
            .iter()
            .all(|e| e.speech_dropped && e.utterance.is_none()));
        assert_eq!(out.log.images[0].objects.len(), 2);
    }

    #[test]
    fn discarding_boxes_drops_events() {
        let p = SimParams {
            discard_box_prob: 1.0,
            ..SimParams::default()
        };
        let out = simulate(&gt(&["person", "cat"]), &vocab(), &p).unwrap();
        assert!(out.log.images[0].objects.is_empty());
        assert_eq!(out.transcripts[0].1.utterances.len(), 2);
    }

    #[test]
    fn substitution_yields_ranked_alternatives() {
        let p = SimParams {
            asr_substitution_prob: 1.0,
            ..SimParams::default()
        };
        let out = simulate(&gt(&["person", "dining_table", "cat", "person"]), &vocab(), &p).unwrap();
        for (entry, u) in out.trace.objects.iter().zip(&out.transcripts[0].1.utterances) {
            assert!(entry.substituted);
            assert_ne!(entry.true_rank, Some(1));
            if let Some(r) = entry.true_rank {
                assert_eq!(
                    u.alternatives[r as usize - 1].text(),
                    vocab().class(vocab().index_of_id(&entry.class_id).unwrap()).name()
                );
            }
        }
    }

    #[test]
    fn rejects_unknown_class_and_bad_params() {
        assert!(simulate(&gt(&["zebra"]), &vocab(), &SimParams::default()).is_err());
        let bad = SimParams {
            forget_speech_prob: 1.5,
            ..SimParams::default()
        };
        assert!(simulate(&gt(&["cat"]), &vocab(), &bad).is_err());
        let bad = SimParams {
            utterance_duration: (2.0, 1.0),
            ..SimParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn point_objects_get_single_clicks() {
        let set = AnnotationSet {
            images: vec![ImageAnnotations {
                image_id: "p".into(),
                objects: vec![crate::geometry::ObjectAnnotation {
                    class_id: Some("cat".into()),
                    location: Location::Point { x: 3.0, y: 4.0 },
                }],
            }],
        };
        let out = simulate(&set, &vocab(), &SimParams::default()).unwrap();
        let e = &out.log.images[0].objects[0];
        assert_eq!(e.clicks.len(), 1);
        assert_eq!(e.location(), Location::Point { x: 3.0, y: 4.0 });
    }
}

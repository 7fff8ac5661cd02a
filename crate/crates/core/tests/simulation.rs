use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speakbox_core::{
    match_cost, simulate, AnnotationSet, BBox, ImageAnnotations, Interval, Location, ObjectAnnotation, SimOutput,
    SimParams, Vocabulary,
};

fn vocab() -> Vocabulary {
    Vocabulary::new([
        ("person", "person"),
        ("dining_table", "dining table"),
        ("cat", "cat"),
        ("dog", "dog"),
    ])
    .unwrap()
}

fn ground_truth(images: usize, seed: u64) -> AnnotationSet {
    let ids = ["person", "dining_table", "cat", "dog"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AnnotationSet {
        images: (0..images)
            .map(|i| ImageAnnotations {
                image_id: format!("im{i}"),
                objects: (0..rng.random_range(2..=6))
                    .map(|_| {
                        let (x, y) = (rng.random_range(0..300) as f64, rng.random_range(0..300) as f64);
                        ObjectAnnotation {
                            class_id: Some(ids[rng.random_range(0..ids.len())].to_string()),
                            location: Location::Box(BBox::new(x, y, x + 40.0, y + 30.0)),
                        }
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn object_spans(out: &SimOutput) -> HashMap<(String, usize), Interval> {
    out.log
        .images
        .iter()
        .flat_map(|im| {
            im.objects
                .iter()
                .enumerate()
                .map(move |(j, o)| ((im.image_id.clone(), j), o.span()))
        })
        .collect()
}

fn in_band(observed: usize, n: usize, p: f64) -> bool {
    let frac = observed as f64 / n as f64;
    (frac - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn default_timing_follows_the_parameters() {
    let out = simulate(&ground_truth(300, 1), &vocab(), &SimParams::default()).unwrap();
    let spans = object_spans(&out);
    let mut leads = Vec::new();
    for e in &out.trace.objects {
        let span = spans[&(e.image_id.clone(), e.event_index.unwrap())];
        let (s, t) = e.speech.unwrap();
        assert!((0.5..=2.0).contains(&(t - s)), "utterance length {}", t - s);
        assert!(
            (2.5..=5.0).contains(&span.duration()),
            "box duration {}",
            span.duration()
        );
        leads.push(span.start - s);
    }
    let mean = leads.iter().sum::<f64>() / leads.len() as f64;
    assert!(leads.len() > 1000);
    assert!((0.3..0.5).contains(&mean), "mean speech lead {mean}");

    for im in &out.log.images {
        for w in im.objects.windows(2) {
            let pause = w[1].span().start - w[0].span().end;
            assert!((2.0..=3.0).contains(&pause), "pause {pause}");
        }
    }
}

#[test]
fn noise_free_speech_overlaps_only_its_own_object() {
    let out = simulate(&ground_truth(200, 2), &vocab(), &SimParams::default()).unwrap();
    let spans = object_spans(&out);
    for e in &out.trace.objects {
        let (s, t) = e.speech.unwrap();
        let label = Interval::new(s, t);
        let image = out.log.images.iter().find(|im| im.image_id == e.image_id).unwrap();
        for j in 0..image.objects.len() {
            let cost = match_cost(label, spans[&(e.image_id.clone(), j)]);
            if Some(j) == e.event_index {
                assert!(cost < 1.0);
            } else {
                assert_eq!(cost, 1.0);
            }
        }
    }
}

#[test]
fn drop_rates_match_their_probabilities() {
    let params = SimParams {
        seed: 3,
        forget_speech_prob: 0.2,
        discard_box_prob: 0.1,
        ..SimParams::default()
    };
    let out = simulate(&ground_truth(400, 3), &vocab(), &params).unwrap();
    let n = out.trace.objects.len();
    let forgotten = out.trace.objects.iter().filter(|e| e.speech_dropped).count();
    let discarded = out.trace.objects.iter().filter(|e| e.box_dropped).count();
    assert!(n >= 1000);
    assert!(in_band(forgotten, n, 0.2), "{forgotten}/{n}");
    assert!(in_band(discarded, n, 0.1), "{discarded}/{n}");
    let events: usize = out.log.images.iter().map(|im| im.objects.len()).sum();
    assert_eq!(events, n - discarded);
}

#[test]
fn more_noise_corrupts_a_superset_of_words() {
    let gt = ground_truth(100, 4);
    let run = |p| {
        let params = SimParams {
            seed: 4,
            asr_substitution_prob: p,
            ..SimParams::default()
        };
        simulate(&gt, &vocab(), &params).unwrap().trace.objects
    };
    let (low, high) = (run(0.1), run(0.3));
    assert!(low.iter().filter(|e| e.substituted).count() > 0);
    for (a, b) in low.iter().zip(&high) {
        assert!(!a.substituted || b.substituted);
        assert_eq!(a.speech, b.speech);
    }
}

#[test]
fn images_do_not_depend_on_their_neighbours() {
    let gt = ground_truth(20, 5);
    let prefix = AnnotationSet {
        images: gt.images[..7].to_vec(),
    };
    let full = simulate(&gt, &vocab(), &SimParams::default()).unwrap();
    let part = simulate(&prefix, &vocab(), &SimParams::default()).unwrap();
    assert_eq!(part.log.images[..], full.log.images[..7]);
    assert_eq!(part.transcripts[..], full.transcripts[..7]);
}

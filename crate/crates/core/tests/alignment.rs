use proptest::prelude::*;
use speakbox_core::{align, match_cost, AlignmentConfig, Interval};

fn intervals(max: usize) -> impl Strategy<Value = Vec<Interval>> {
    prop::collection::vec((0.0f64..50.0, 0.0f64..5.0), 0..max)
        .prop_map(|v| v.into_iter().map(|(s, d)| Interval::new(s, s + d)).collect())
}

proptest! {
    #[test]
    fn pairs_never_cross(labels in intervals(10), objects in intervals(10)) {
        let a = align(&labels, &objects, &AlignmentConfig::default());
        let by_time = |v: &[Interval], i: usize| (v[i].start, v[i].end, i);
        for w in a.pairs.windows(2) {
            prop_assert!(by_time(&labels, w[0].0) < by_time(&labels, w[1].0));
            prop_assert!(by_time(&objects, w[0].1) < by_time(&objects, w[1].1));
        }
        prop_assert_eq!(a.pairs.len() + a.unmatched_labels.len(), labels.len());
        prop_assert_eq!(a.pairs.len() + a.unmatched_objects.len(), objects.len());
    }

    #[test]
    fn nested_speech_matches_every_object(
        spans in prop::collection::vec((0.5f64..3.0, 0.1f64..2.0, 0.0f64..1.0), 1..12),
    ) {
        // disjoint objects, each with a label strictly inside it
        let mut t = 0.0;
        let (mut labels, mut objects) = (Vec::new(), Vec::new());
        for (len, gap, frac) in spans {
            let o = Interval::new(t, t + len);
            let ls = o.start + frac * len * 0.5;
            labels.push(Interval::new(ls, ls + len * 0.25));
            objects.push(o);
            t += len + gap;
        }
        let a = align(&labels, &objects, &AlignmentConfig::default());
        prop_assert_eq!(a.total_cost, 0.0);
        prop_assert_eq!(a.pairs, (0..objects.len()).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn cost_is_a_fraction(l in (0.0f64..10.0, 0.0f64..3.0), o in (0.0f64..10.0, 0.0f64..3.0)) {
        let c = match_cost(Interval::new(l.0, l.0 + l.1), Interval::new(o.0, o.0 + o.1));
        prop_assert!((0.0..=1.0).contains(&c));
    }
}

#[test]
fn perfect_overlap_matches_all_at_zero_cost() {
    let spans: Vec<Interval> = (0..5)
        .map(|i| Interval::new(i as f64 * 3.0, i as f64 * 3.0 + 2.0))
        .collect();
    let a = align(&spans, &spans, &AlignmentConfig::default());
    assert_eq!(a.total_cost, 0.0);
    assert_eq!(a.pairs.len(), 5);
    assert!(a.unmatched_labels.is_empty() && a.unmatched_objects.is_empty());
}

//! Turning transcriptions into timed class labels.
//!
//! A transcription is split into contiguous word runs, each mapped to its
//! nearest class name. The split with the smallest summed distance wins;
//! among an utterance's alternatives the one with the cheapest split is
//! kept, with the recognizer's ranking breaking ties.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::aligner::Interval;
use crate::transcript::{TimedWord, Transcript, TranscriptionAlternative, Utterance};
use crate::vocab::{ClassMatcher, EmbeddingTable, Vocabulary, MAX_DISTANCE};

/// Cost of a word run that neither names a class nor has any embedded word.
pub const UNKNOWN_COST: f64 = MAX_DISTANCE;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    /// First word index.
    pub start: usize,
    /// One past the last word index.
    pub end: usize,
    /// Nearest class, or `None` when nothing in the run could be embedded.
    pub class: Option<usize>,
    pub cost: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub total_cost: f64,
}

/// A class name spoken during `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedClassLabel {
    pub class_id: String,
    pub start: f64,
    pub end: f64,
    pub source_utterance: usize,
    /// The words that were mapped to the class, as spoken.
    pub mapped_from: String,
}

impl TimedClassLabel {
    pub fn span(&self) -> Interval {
        Interval::new(self.start, self.end)
    }
}

#[derive(Debug, Clone)]
pub struct Segmenter<'a> {
    matcher: ClassMatcher<'a>,
    max_segment_len: usize,
    reject_above: Option<f64>,
}

impl<'a> Segmenter<'a> {
    /// Segmenter with the default run-length bound of one more word than
    /// the longest class name.
    pub fn new(vocab: &'a Vocabulary, table: &'a EmbeddingTable) -> Self {
        Self {
            matcher: ClassMatcher::new(vocab, table),
            max_segment_len: vocab.max_name_len() + 1,
            reject_above: None,
        }
    }

    pub fn with_max_segment_len(mut self, len: usize) -> Self {
        assert!(len > 0, "max segment length must be positive");
        self.max_segment_len = len;
        self
    }

    /// Drop labels whose segment cost exceeds `threshold`.
    pub fn with_reject_above(mut self, threshold: Option<f64>) -> Self {
        self.reject_above = threshold;
        self
    }

    pub fn max_segment_len(&self) -> usize {
        self.max_segment_len
    }

    pub fn vocab(&self) -> &'a Vocabulary {
        self.matcher.vocab()
    }

    /// Distance from a word run to its nearest class.
    pub fn subsequence_cost<S: AsRef<str>>(&self, tokens: &[S]) -> (Option<usize>, f64) {
        match self.matcher.nearest(tokens) {
            Ok((class, cost)) => (Some(class), cost),
            Err(_) => (None, UNKNOWN_COST),
        }
    }

    /// Minimum-cost split of `tokens` into runs of at most
    /// `max_segment_len` words.
    ///
    /// Equal totals are resolved toward fewer segments, then toward the
    /// split whose earlier segments are longer.
    pub fn segment<S: AsRef<str>>(&self, tokens: &[S]) -> Segmentation {
        let n = tokens.len();
        if n == 0 {
            return Segmentation {
                segments: Vec::new(),
                total_cost: 0.0,
            };
        }
        let max_len = self.max_segment_len;

        // run_cost[i][k]: the run ending at word i (exclusive) of length k + 1
        let mut run_cost: Vec<Vec<(Option<usize>, f64)>> = vec![Vec::new(); n + 1];
        for (end, runs) in run_cost.iter_mut().enumerate().skip(1) {
            let shortest_start = end.saturating_sub(max_len);
            *runs = (shortest_start..end)
                .rev()
                .map(|start| self.subsequence_cost(&tokens[start..end]))
                .collect();
        }

        let mut best_cost = vec![f64::INFINITY; n + 1];
        let mut best_segs = vec![0usize; n + 1];
        let mut back = vec![0usize; n + 1];
        best_cost[0] = 0.0;
        for end in 1..=n {
            for start in end.saturating_sub(max_len)..end {
                let cost = best_cost[start] + run_cost[end][end - start - 1].1;
                let segs = best_segs[start] + 1;
                let better = match cost.total_cmp(&best_cost[end]) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => match segs.cmp(&best_segs[end]) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => prefers_longer_early_runs(&back, start, back[end]),
                    },
                };
                if better {
                    best_cost[end] = cost;
                    best_segs[end] = segs;
                    back[end] = start;
                }
            }
        }

        let mut segments = Vec::with_capacity(best_segs[n]);
        let mut end = n;
        while end > 0 {
            let start = back[end];
            let (class, cost) = run_cost[end][end - start - 1];
            segments.push(Segment {
                start,
                end,
                class,
                cost,
            });
            end = start;
        }
        segments.reverse();
        Segmentation {
            segments,
            total_cost: best_cost[n],
        }
    }

    /// Alternative with the cheapest segmentation, as `(index, segmentation)`.
    /// Ties go to the better-ranked alternative.
    pub fn select_transcription(&self, utterance: &Utterance) -> (usize, Segmentation) {
        let mut best: Option<(usize, Segmentation)> = None;
        for (index, alt) in utterance.alternatives.iter().enumerate() {
            let seg = self.segment(&alt.tokens());
            if best.as_ref().is_none_or(|(_, b)| seg.total_cost < b.total_cost) {
                best = Some((index, seg));
            }
        }
        best.expect("utterance has at least one alternative")
    }

    /// Class labels for one chosen alternative.
    fn labels_for(
        &self,
        alt: &TranscriptionAlternative,
        seg: &Segmentation,
        source_utterance: usize,
    ) -> Vec<TimedClassLabel> {
        let vocab = self.vocab();
        seg.segments
            .iter()
            .filter(|s| self.reject_above.is_none_or(|t| s.cost <= t))
            .filter_map(|s| {
                let class = s.class?;
                let words: &[TimedWord] = &alt.words[s.start..s.end];
                Some(TimedClassLabel {
                    class_id: vocab.class(class).id.clone(),
                    start: words[0].start,
                    end: words[words.len() - 1].end,
                    source_utterance,
                    mapped_from: words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" "),
                })
            })
            .collect()
    }

    pub fn labels_from_utterance(&self, utterance: &Utterance, index: usize) -> Vec<TimedClassLabel> {
        let (chosen, seg) = self.select_transcription(utterance);
        self.labels_for(&utterance.alternatives[chosen], &seg, index)
    }

    /// Timed class labels for a whole transcript, sorted by start time.
    pub fn labels_from_transcript(&self, transcript: &Transcript) -> Vec<TimedClassLabel> {
        let mut labels: Vec<TimedClassLabel> = transcript
            .utterances
            .iter()
            .enumerate()
            .flat_map(|(i, u)| self.labels_from_utterance(u, i))
            .collect();
        labels.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        labels
    }

    /// Class ids found in the segmentation of each of the first `k`
    /// alternatives, combined.
    pub fn top_k_classes(&self, utterance: &Utterance, k: usize) -> BTreeSet<String> {
        let vocab = self.vocab();
        utterance
            .alternatives
            .iter()
            .take(k)
            .flat_map(|alt| self.segment(&alt.tokens()).segments)
            .filter(|s| self.reject_above.is_none_or(|t| s.cost <= t))
            .filter_map(|s| s.class.map(|c| vocab.class(c).id.clone()))
            .collect()
    }
}

/// Whether the split ending with a run starting at `a` has longer early runs
/// than the one ending with a run starting at `b`. Both end at the same word.
fn prefers_longer_early_runs(back: &[usize], a: usize, b: usize) -> bool {
    let ends = |mut at: usize| {
        let mut ends = Vec::new();
        while at > 0 {
            ends.push(at);
            at = back[at];
        }
        ends.reverse();
        ends
    };
    let (ea, eb) = (ends(a), ends(b));
    for (x, y) in ea.iter().zip(eb.iter()) {
        if x != y {
            return x > y;
        }
    }
    ea.len() < eb.len()
}

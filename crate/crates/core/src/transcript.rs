//! Timed speech-recognition output: utterances, each with ranked
//! transcription alternatives whose words carry start and end times.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aligner::Interval;
use crate::error::{read_file, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub text: String,
    pub start: f64,
    pub end: f64,
}

impl TimedWord {
    pub fn new(text: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            text: text.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionAlternative {
    /// 1 is the recognizer's preferred alternative.
    pub rank: u32,
    pub words: Vec<TimedWord>,
}

impl TranscriptionAlternative {
    pub fn tokens(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.text.as_str()).collect()
    }

    pub fn text(&self) -> String {
        self.tokens().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    /// Sorted by rank after validation.
    pub alternatives: Vec<TranscriptionAlternative>,
}

impl Utterance {
    /// The rank-1 alternative.
    pub fn best(&self) -> &TranscriptionAlternative {
        &self.alternatives[0]
    }
}

/// Time covered by the rank-1 alternative's words.
pub fn utterance_span(u: &Utterance) -> Interval {
    let words = &u.best().words;
    let start = words.iter().map(|w| w.start).fold(f64::INFINITY, f64::min);
    let end = words.iter().map(|w| w.end).fold(f64::NEG_INFINITY, f64::max);
    Interval::new(start, end)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub utterances: Vec<Utterance>,
}

impl Transcript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_file(path)?).map_err(|e| e.within(&path.display().to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Transcript = serde_json::from_str(text).map_err(|e| Error::json("transcript", e))?;
        raw.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serializes")
    }

    /// Check timing and rank invariants, sort alternatives by rank and
    /// utterances by start time.
    pub fn validated(mut self) -> Result<Self> {
        for (ui, utterance) in self.utterances.iter_mut().enumerate() {
            let ctx = || format!("utterance {ui}");
            if utterance.alternatives.is_empty() {
                return Err(Error::invalid(ctx(), "no transcription alternatives"));
            }
            utterance.alternatives.sort_by_key(|a| a.rank);
            for (k, alt) in utterance.alternatives.iter().enumerate() {
                if alt.rank as usize != k + 1 {
                    let message = if k > 0 && utterance.alternatives[k - 1].rank == alt.rank {
                        format!("duplicate rank {}", alt.rank)
                    } else {
                        format!("ranks must be 1..{}, found {}", utterance.alternatives.len(), alt.rank)
                    };
                    return Err(Error::invalid(ctx(), message));
                }
                validate_words(&alt.words).map_err(|m| Error::invalid(format!("{}, rank {}", ctx(), alt.rank), m))?;
            }
        }
        self.utterances
            .sort_by(|a, b| utterance_span(a).start.total_cmp(&utterance_span(b).start));
        Ok(self)
    }
}

fn validate_words(words: &[TimedWord]) -> std::result::Result<(), String> {
    if words.is_empty() {
        return Err("alternative has no words".into());
    }
    let mut prev_start = f64::NEG_INFINITY;
    for w in words {
        if !(w.start.is_finite() && w.end.is_finite()) || w.start < 0.0 {
            return Err(format!("word {:?} has invalid times [{}, {}]", w.text, w.start, w.end));
        }
        if w.start > w.end {
            return Err(format!(
                "word {:?} starts at {} after it ends at {}",
                w.text, w.start, w.end
            ));
        }
        if w.start < prev_start {
            return Err(format!("word {:?} is out of time order", w.text));
        }
        if w.text.split_whitespace().next().is_none() {
            return Err("empty word".into());
        }
        prev_start = w.start;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alt(rank: u32, words: &[(&str, f64, f64)]) -> TranscriptionAlternative {
        TranscriptionAlternative {
            rank,
            words: words.iter().map(|&(t, s, e)| TimedWord::new(t, s, e)).collect(),
        }
    }

    #[test]
    fn loads_minimal_transcript() {
        let t = Transcript::from_json(
            r#"{"utterances":[{"alternatives":[{"rank":1,"words":[{"text":"person","start":1.0,"end":1.4}]}]}]}"#,
        )
        .unwrap();
        assert_eq!(t.utterances.len(), 1);
        assert_eq!(t.utterances[0].best().text(), "person");
    }

    #[test]
    fn rejects_reversed_word_times() {
        let err = Transcript::from_json(
            r#"{"utterances":[{"alternatives":[{"rank":1,"words":[{"text":"x","start":2.0,"end":1.0}]}]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("after it ends"), "{err}");
    }

    #[test]
    fn rejects_duplicate_rank() {
        let t = Transcript {
            utterances: vec![Utterance {
                alternatives: vec![alt(1, &[("a", 0.0, 1.0)]), alt(1, &[("b", 0.0, 1.0)])],
            }],
        };
        let err = t.validated().unwrap_err();
        assert!(err.to_string().contains("duplicate rank"), "{err}");
    }

    #[test]
    fn rejects_rank_gap_negative_time_and_empty() {
        let gap = Transcript {
            utterances: vec![Utterance {
                alternatives: vec![alt(1, &[("a", 0.0, 1.0)]), alt(3, &[("b", 0.0, 1.0)])],
            }],
        };
        assert!(gap.validated().is_err());
        let neg = Transcript {
            utterances: vec![Utterance {
                alternatives: vec![alt(1, &[("a", -1.0, 1.0)])],
            }],
        };
        assert!(neg.validated().is_err());
        let empty = Transcript {
            utterances: vec![Utterance {
                alternatives: vec![alt(1, &[])],
            }],
        };
        assert!(empty.validated().is_err());
        let none = Transcript {
            utterances: vec![Utterance { alternatives: vec![] }],
        };
        assert!(none.validated().is_err());
    }

    #[test]
    fn sorts_alternatives_and_utterances() {
        let t = Transcript {
            utterances: vec![
                Utterance {
                    alternatives: vec![alt(2, &[("b", 5.0, 6.0)]), alt(1, &[("a", 5.0, 6.0)])],
                },
                Utterance {
                    alternatives: vec![alt(1, &[("c", 1.0, 2.0)])],
                },
            ],
        }
        .validated()
        .unwrap();
        assert_eq!(t.utterances[0].best().text(), "c");
        assert_eq!(t.utterances[1].best().text(), "a");
        assert_eq!(t.utterances[1].alternatives[1].rank, 2);
    }

    #[test]
    fn span_examples() {
        let u = |words: &[(&str, f64, f64)]| Utterance {
            alternatives: vec![alt(1, words)],
        };
        assert_eq!(
            utterance_span(&u(&[("a", 1.0, 1.4), ("b", 1.5, 2.1)])),
            Interval::new(1.0, 2.1)
        );
        assert_eq!(utterance_span(&u(&[("a", 3.0, 3.5)])), Interval::new(3.0, 3.5));
        assert_eq!(
            utterance_span(&u(&[("a", 0.0, 2.0), ("b", 1.0, 1.5)])),
            Interval::new(0.0, 2.0)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn words() -> impl Strategy<Value = Vec<TimedWord>> {
            prop::collection::vec(("[a-z]{1,6}", 0u32..1000, 0u32..200), 1..5).prop_map(|ws| {
                let mut ws: Vec<_> = ws
                    .into_iter()
                    .map(|(t, s, d)| TimedWord::new(t, s as f64 / 8.0, (s + d) as f64 / 8.0))
                    .collect();
                ws.sort_by(|a, b| a.start.total_cmp(&b.start));
                ws
            })
        }

        fn transcript() -> impl Strategy<Value = Transcript> {
            prop::collection::vec(prop::collection::vec(words(), 1..4), 0..4).prop_map(|us| {
                Transcript {
                    utterances: us
                        .into_iter()
                        .map(|alts| Utterance {
                            alternatives: alts
                                .into_iter()
                                .enumerate()
                                .map(|(k, words)| TranscriptionAlternative {
                                    rank: k as u32 + 1,
                                    words,
                                })
                                .collect(),
                        })
                        .collect(),
                }
                .validated()
                .unwrap()
            })
        }

        proptest! {
            #[test]
            fn json_round_trip(t in transcript()) {
                let back = Transcript::from_json(&t.to_json()).unwrap();
                prop_assert_eq!(back, t);
            }

            #[test]
            fn span_is_ordered(t in transcript()) {
                for u in &t.utterances {
                    let s = utterance_span(u);
                    prop_assert!(s.start <= s.end);
                }
            }
        }
    }
}

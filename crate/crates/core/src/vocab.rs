//! Class vocabulary and word embeddings.
//!
//! Class names are matched against spoken word sequences by cosine distance
//! between averaged word vectors. An exact (normalized) name match always
//! costs zero, whatever the embeddings say.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};

/// Largest possible cosine distance.
pub const MAX_DISTANCE: f64 = 2.0;

/// Lowercase and collapse whitespace runs to single spaces.
pub fn normalize_name(name: &str) -> String {
    tokenize(name).join(" ")
}

/// Split a name into lowercase tokens.
pub fn tokenize(name: &str) -> Vec<String> {
    name.split_whitespace().map(str::to_lowercase).collect()
}

fn normalize_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let joined: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    normalize_name(&joined.join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabClass {
    pub id: String,
    /// Lowercased name tokens, never empty.
    pub tokens: Vec<String>,
}

impl VocabClass {
    pub fn name(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    classes: Vec<VocabEntry>,
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    id: String,
    name: String,
}

/// The set of class names annotators may speak.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    classes: Vec<VocabClass>,
    by_id: HashMap<String, usize>,
    by_name: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from `(id, name)` pairs, in declaration order.
    pub fn new<I, A, B>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: AsRef<str>,
    {
        const CTX: &str = "vocabulary";
        let mut classes = Vec::new();
        let mut by_id = HashMap::new();
        let mut by_name = HashMap::new();
        for (id, name) in entries {
            let id = id.into();
            let tokens = tokenize(name.as_ref());
            if id.is_empty() {
                return Err(Error::invalid(CTX, "empty class id"));
            }
            if tokens.is_empty() {
                return Err(Error::invalid(CTX, format!("class {id:?} has an empty name")));
            }
            let index = classes.len();
            if by_id.insert(id.clone(), index).is_some() {
                return Err(Error::invalid(CTX, format!("duplicate class id {id:?}")));
            }
            let name = tokens.join(" ");
            if by_name.insert(name.clone(), index).is_some() {
                return Err(Error::invalid(CTX, format!("duplicate class name {name:?}")));
            }
            classes.push(VocabClass { id, tokens });
        }
        if classes.is_empty() {
            return Err(Error::invalid(CTX, "vocabulary is empty"));
        }
        Ok(Self {
            classes,
            by_id,
            by_name,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_file(path)?).map_err(|e| e.within(&path.display().to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text).map_err(|e| Error::json("vocabulary", e))?;
        Self::new(file.classes.into_iter().map(|c| (c.id, c.name)))
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            classes: self
                .classes
                .iter()
                .map(|c| VocabEntry {
                    id: c.id.clone(),
                    name: c.name(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("vocabulary serializes")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[VocabClass] {
        &self.classes
    }

    pub fn class(&self, index: usize) -> &VocabClass {
        &self.classes[index]
    }

    pub fn index_of_id(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Index of the class whose normalized name equals the given tokens.
    pub fn exact_match<S: AsRef<str>>(&self, tokens: &[S]) -> Option<usize> {
        self.by_name.get(&normalize_tokens(tokens)).copied()
    }

    /// Token count of the longest class name.
    pub fn max_name_len(&self) -> usize {
        self.classes.iter().map(|c| c.tokens.len()).max().unwrap_or(0)
    }
}

/// Word vectors keyed by lowercase token.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    /// Add a vector. The first vector inserted for a token wins.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        const CTX: &str = "embeddings";
        if vector.len() != self.dim {
            return Err(Error::invalid(
                CTX,
                format!("{token:?} has {} components, expected {}", vector.len(), self.dim),
            ));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(CTX, format!("{token:?} has a non-finite component")));
        }
        if vector.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(CTX, format!("{token:?} has an all-zero vector")));
        }
        self.entries.entry(token.to_lowercase()).or_insert(vector);
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_file(path)?, &path.display().to_string())
    }

    /// Parse the whitespace-separated text format: `token v1 .. vd` per line,
    /// optionally preceded by a `<count> <dim>` header.
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: context.to_string(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .peekable();

        let mut header: Option<(usize, usize)> = None;
        if let Some(&(_, first)) = lines.peek() {
            let fields: Vec<&str> = first.split_whitespace().collect();
            if let [count, dim] = fields[..] {
                if let (Ok(count), Ok(dim)) = (count.parse::<usize>(), dim.parse::<usize>()) {
                    header = Some((count, dim));
                    lines.next();
                }
            }
        }

        let mut table: Option<EmbeddingTable> = header.map(|(_, dim)| dim).filter(|&d| d > 0).map(Self::new);
        if matches!(header, Some((_, 0))) {
            return Err(parse_err(1, "header declares dimension 0".into()));
        }
        let mut rows = 0usize;
        for (line_no, line) in lines {
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("line is non-empty");
            let vector = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| parse_err(line_no, format!("bad component for {token:?}: {e}")))?;
            if vector.is_empty() {
                return Err(parse_err(line_no, format!("{token:?} has no components")));
            }
            let table = table.get_or_insert_with(|| Self::new(vector.len()));
            table
                .insert(token, vector)
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            rows += 1;
        }
        if let Some((count, _)) = header {
            if count != rows {
                return Err(parse_err(1, format!("header declares {count} vectors, found {rows}")));
            }
        }
        table.ok_or_else(|| Error::invalid(context, "no embeddings found"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        match self.entries.get(token) {
            Some(v) => Some(v),
            None => self.entries.get(&token.to_lowercase()).map(Vec::as_slice),
        }
    }
}

/// Mean of the vectors of the tokens present in the table.
///
/// Tokens without a vector are skipped. Vectors are summed in sorted token
/// order so the result does not depend on word order.
pub fn embed_phrase<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<Vec<f64>> {
    let mut found: Vec<(String, &[f64])> = tokens
        .iter()
        .map(|t| t.as_ref().to_lowercase())
        .filter_map(|t| table.get(&t).map(|v| (t, v)))
        .collect();
    if found.is_empty() {
        return Err(Error::UnknownPhrase {
            phrase: normalize_tokens(tokens),
        });
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    let mut sum = vec![0.0; table.dim()];
    for (_, v) in &found {
        for (acc, x) in sum.iter_mut().zip(v.iter()) {
            *acc += x;
        }
    }
    let n = found.len() as f64;
    Ok(sum.into_iter().map(|x| x / n).collect())
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`. Zero-norm input gives the maximum.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return MAX_DISTANCE;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, MAX_DISTANCE)
}

/// Cosine distance between two phrases; identical normalized text is 0.
pub fn phrase_distance<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B], table: &EmbeddingTable) -> Result<f64> {
    if normalize_tokens(a) == normalize_tokens(b) {
        return Ok(0.0);
    }
    let ea = embed_phrase(a, table)?;
    let eb = embed_phrase(b, table)?;
    Ok(cosine_distance(&ea, &eb))
}

/// Closest class to `tokens`, as `(class index, distance)`.
pub fn nearest_class<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, table: &EmbeddingTable) -> Result<(usize, f64)> {
    ClassMatcher::new(vocab, table).nearest(tokens)
}

/// Vocabulary with class-name embeddings computed once up front.
#[derive(Debug, Clone)]
pub struct ClassMatcher<'a> {
    vocab: &'a Vocabulary,
    table: &'a EmbeddingTable,
    // None for class names with no embeddable token; only exact matches reach them
    class_vectors: Vec<Option<Vec<f64>>>,
}

impl<'a> ClassMatcher<'a> {
    pub fn new(vocab: &'a Vocabulary, table: &'a EmbeddingTable) -> Self {
        let class_vectors = vocab
            .classes()
            .iter()
            .map(|c| embed_phrase(&c.tokens, table).ok())
            .collect();
        Self {
            vocab,
            table,
            class_vectors,
        }
    }

    pub fn vocab(&self) -> &'a Vocabulary {
        self.vocab
    }

    pub fn table(&self) -> &'a EmbeddingTable {
        self.table
    }

    /// Closest class; ties go to the class declared first.
    pub fn nearest<S: AsRef<str>>(&self, tokens: &[S]) -> Result<(usize, f64)> {
        if let Some(index) = self.vocab.exact_match(tokens) {
            return Ok((index, 0.0));
        }
        let query = embed_phrase(tokens, self.table)?;
        let mut best: Option<(usize, f64)> = None;
        for (index, vector) in self.class_vectors.iter().enumerate() {
            let Some(vector) = vector else { continue };
            let d = cosine_distance(&query, vector);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((index, d));
            }
        }
        best.ok_or_else(|| Error::UnknownPhrase {
            phrase: normalize_tokens(tokens),
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn one_hot_table() -> EmbeddingTable {
        EmbeddingTable::parse("3 3\nperson 1 0 0\ndining 0 1 0\ntable 0 0 1\n", "fixture").unwrap()
    }

    pub(crate) fn person_dining_vocab() -> Vocabulary {
        Vocabulary::new([("person", "person"), ("dining_table", "dining table")]).unwrap()
    }

    #[test]
    fn loads_vocabulary_json() {
        let v = Vocabulary::from_json(
            r#"{"classes":[{"id":"person","name":"person"},{"id":"dining_table","name":"Dining  Table"}]}"#,
        )
        .unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.class(1).tokens, ["dining", "table"]);
        assert_eq!(v.exact_match(&["DINING", "table"]), Some(1));
        assert_eq!(v.max_name_len(), 2);
    }

    #[test]
    fn rejects_case_collision() {
        let err = Vocabulary::from_json(r#"{"classes":[{"id":"a","name":"Person"},{"id":"b","name":"person"}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("duplicate class name"), "{err}");
    }

    #[test]
    fn rejects_duplicate_id_and_empty() {
        assert!(Vocabulary::new([("a", "x"), ("a", "y")]).is_err());
        assert!(Vocabulary::from_json(r#"{"classes":[]}"#).is_err());
        assert!(Vocabulary::new([("a", "   ")]).is_err());
        assert!(Vocabulary::from_json("{not json").is_err());
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let v = person_dining_vocab();
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back.classes(), v.classes());
    }

    #[test]
    fn parses_embeddings_with_and_without_header() {
        let t = one_hot_table();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 3);
        let t = EmbeddingTable::parse("Person 1 2\n\ncat 0.5 -1e-1\n", "x").unwrap();
        assert_eq!(t.get("person"), Some(&[1.0, 2.0][..]));
        assert_eq!(t.get("cat"), Some(&[0.5, -0.1][..]));
    }

    #[test]
    fn rejects_bad_embeddings() {
        assert!(EmbeddingTable::parse("a 0 0\n", "x").is_err());
        assert!(EmbeddingTable::parse("a 1 0\nb 1\n", "x").is_err());
        assert!(EmbeddingTable::parse("2 2\na 1 0\n", "x").is_err());
        assert!(EmbeddingTable::parse("a 1 zz\n", "x").is_err());
        assert!(EmbeddingTable::parse("", "x").is_err());
    }

    #[test]
    fn embed_phrase_examples() {
        let t = one_hot_table();
        assert_eq!(embed_phrase(&["person"], &t).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(embed_phrase(&["dining", "table"], &t).unwrap(), vec![0.0, 0.5, 0.5]);
        assert_eq!(embed_phrase(&["dining", "xyzzy"], &t).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(matches!(embed_phrase(&["xyzzy"], &t), Err(Error::UnknownPhrase { .. })));
    }

    #[test]
    fn phrase_distance_examples() {
        let t = one_hot_table();
        assert_eq!(phrase_distance(&["person"], &["person"], &t).unwrap(), 0.0);
        // 1 - (0,1,0).(0,1,1)/sqrt(2)
        let expected = 1.0 - 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(
            phrase_distance(&["dining"], &["dining", "table"], &t).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            phrase_distance(&["person"], &["table"], &t).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // exact text match short-circuits even when nothing is embeddable
        assert_eq!(phrase_distance(&["Foo", "bar"], &["foo", "BAR"], &t).unwrap(), 0.0);
        assert!(phrase_distance(&["foo"], &["person"], &t).is_err());
    }

    #[test]
    fn nearest_class_examples() {
        let t = one_hot_table();
        let v = person_dining_vocab();
        assert_eq!(nearest_class(&["dining", "table"], &v, &t).unwrap(), (1, 0.0));
        assert_eq!(nearest_class(&["person"], &v, &t).unwrap(), (0, 0.0));
        let (idx, d) = nearest_class(&["dining"], &v, &t).unwrap();
        assert_eq!(idx, 1);
        assert_abs_diff_eq!(d, 1.0 - 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert!(nearest_class(&["xyzzy"], &v, &t).is_err());
    }

    #[test]
    fn nearest_class_ties_prefer_declaration_order() {
        let t = EmbeddingTable::parse("a 1 0\nb 0 1\nc 1 1\n", "x").unwrap();
        let v = Vocabulary::new([("a", "a"), ("b", "b")]).unwrap();
        assert_eq!(nearest_class(&["c"], &v, &t).unwrap().0, 0);
        let v = Vocabulary::new([("b", "b"), ("a", "a")]).unwrap();
        assert_eq!(nearest_class(&["c"], &v, &t).unwrap().0, 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: [&str; 5] = ["person", "dining", "table", "cat", "dog"];

        fn table() -> EmbeddingTable {
            EmbeddingTable::parse(
                "person 1 0.2 0\ndining 0 1 0.3\ntable 0.1 0 1\ncat 0.5 0.5 0\ndog 0.4 0.6 0.1\n",
                "x",
            )
            .unwrap()
        }

        fn phrase() -> impl Strategy<Value = Vec<&'static str>> {
            prop::collection::vec(prop::sample::select(&WORDS[..]), 1..4)
        }

        proptest! {
            #[test]
            fn distance_symmetric_and_bounded(a in phrase(), b in phrase()) {
                let t = table();
                let ab = phrase_distance(&a, &b, &t).unwrap();
                let ba = phrase_distance(&b, &a, &t).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!((0.0..=MAX_DISTANCE).contains(&ab));
                prop_assert_eq!(phrase_distance(&a, &a, &t).unwrap(), 0.0);
            }

            #[test]
            fn embedding_ignores_word_order(mut a in phrase(), seed in any::<u64>()) {
                let t = table();
                let before = embed_phrase(&a, &t).unwrap();
                let k = (seed as usize) % a.len();
                a.rotate_left(k);
                a.reverse();
                prop_assert_eq!(before, embed_phrase(&a, &t).unwrap());
            }

            #[test]
            fn nearest_is_minimal(a in phrase()) {
                let t = table();
                let v = Vocabulary::new([("p", "person"), ("d", "dining table"), ("c", "cat")]).unwrap();
                let (idx, d) = nearest_class(&a, &v, &t).unwrap();
                for (i, class) in v.classes().iter().enumerate() {
                    let other = phrase_distance(&a, &class.tokens, &t).unwrap();
                    prop_assert!(d <= other, "class {} closer than chosen {}", i, idx);
                }
            }
        }
    }
}

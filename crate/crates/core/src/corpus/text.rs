use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{self, BufRead, Write};

use super::Document;

const SMART_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Lowercases and splits on every non-alphanumeric character. Numbers are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    // lowercase first: some characters lowercase into non-alphanumeric sequences
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Collection term frequencies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut vocab = Self::new();
        for doc in docs {
            vocab.add_text(&doc.text);
        }
        if vocab.is_empty() {
            log::warn!("vocabulary built from an empty corpus");
        }
        vocab
    }

    pub fn add_text(&mut self, text: &str) {
        for term in tokenize(text) {
            self.add_term(term, 1);
        }
    }

    fn add_term(&mut self, term: String, count: u64) {
        *self.counts.entry(term).or_insert(0) += count;
        self.total += count;
    }

    /// Adds another vocabulary's counts. Associative and commutative, so
    /// per-stream vocabularies can be built independently and merged.
    pub fn merge(&mut self, other: &Vocabulary) {
        for (term, &count) in &other.counts {
            self.add_term(term.clone(), count);
        }
    }

    pub fn contains(&self, term: &str) -> bool {
        self.counts.contains_key(term)
    }

    pub fn frequency(&self, term: &str) -> u64 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    /// `term<TAB>frequency` per line, sorted by term.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (term, count) in &self.counts {
            writeln!(out, "{term}\t{count}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> io::Result<Self> {
        let mut vocab = Self::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("vocabulary line {}: expected `term<TAB>count`", i + 1),
                )
            };
            let (term, count) = line.split_once('\t').ok_or_else(bad)?;
            let count: u64 = count.parse().map_err(|_| bad())?;
            if term.is_empty() || count == 0 {
                return Err(bad());
            }
            vocab.add_term(term.to_string(), count);
        }
        Ok(vocab)
    }
}

impl FromIterator<String> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut vocab = Self::new();
        for term in iter {
            vocab.add_term(term, 1);
        }
        vocab
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// The SMART English stopword list pinned in `data/stopwords.txt`.
    pub fn smart() -> Self {
        Self::parse(SMART_STOPWORDS).expect("bundled stopword list is non-empty")
    }

    /// One word per line; blank lines and `#` comments ignored. Words are lowercased.
    pub fn parse(list: &str) -> io::Result<Self> {
        let words: HashSet<String> = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        if words.is_empty() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "stopword list is empty",
            ));
        }
        Ok(Self { words })
    }

    pub fn contains(&self, term: &str) -> bool {
        self.words.contains(term)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn to_list(&self) -> String {
        let sorted: BTreeSet<&str> = self.words.iter().map(String::as_str).collect();
        let mut out = String::new();
        for w in sorted {
            out.push_str(w);
            out.push('\n');
        }
        out
    }
}

impl<S: Into<String>> FromIterator<S> for StopwordList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            words: iter.into_iter().map(|s| s.into().to_lowercase()).collect(),
        }
    }
}

/// Drops documents from excluded collection files (the Congressional Record, `CR`).
#[derive(Debug, Clone, Default)]
pub struct SourceFilter {
    excluded: HashSet<String>,
}

impl SourceFilter {
    pub fn excluding<S: AsRef<str>>(tags: impl IntoIterator<Item = S>) -> Self {
        Self {
            excluded: tags
                .into_iter()
                .map(|t| t.as_ref().to_ascii_uppercase())
                .collect(),
        }
    }

    pub fn accepts(&self, doc: &Document) -> bool {
        !self.excluded.contains(&doc.source.to_ascii_uppercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn doc(text: &str) -> Document {
        Document {
            docno: "d".into(),
            source: "FT".into(),
            text: text.into(),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Euro-Opposition grows!"), ["euro", "opposition", "grows"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("U.S. 1996"), ["u", "s", "1996"]);
    }

    #[test]
    fn vocabulary_counts() {
        let v = Vocabulary::from_documents(&[doc("a b"), doc("b c")]);
        assert_eq!(v.frequency("a"), 1);
        assert_eq!(v.frequency("b"), 2);
        assert_eq!(v.frequency("c"), 1);
        assert_eq!(v.total(), 4);
        assert_eq!(v.len(), 3);
        assert!(Vocabulary::from_documents(&[]).is_empty());
    }

    #[test]
    fn vocabulary_matches_recount_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let alphabet = ["alpha", "Beta", "gamma", "1996", "x", "U.S.", "delta-epsilon"];
        let docs: Vec<Document> = (0..1000)
            .map(|_| {
                let n = rng.random_range(0..12);
                let words: Vec<&str> = (0..n)
                    .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                    .collect();
                doc(&words.join(" "))
            })
            .collect();
        let vocab = Vocabulary::from_documents(&docs);

        // independent single pass: hand-rolled splitter, no shared tokenizer
        let mut oracle: HashMap<String, u64> = HashMap::new();
        for d in &docs {
            let mut cur = String::new();
            for ch in d.text.to_lowercase().chars().chain(std::iter::once(' ')) {
                if ch.is_alphanumeric() {
                    cur.push(ch);
                } else if !cur.is_empty() {
                    *oracle.entry(std::mem::take(&mut cur)).or_default() += 1;
                }
            }
        }
        assert_eq!(vocab.len(), oracle.len());
        for (term, count) in &oracle {
            assert_eq!(vocab.frequency(term), *count, "{term}");
        }
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::from_documents(&[doc("euro opposition euro 1996")]);
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "1996\t1\neuro\t2\nopposition\t1\n");
        assert_eq!(Vocabulary::read_tsv(&buf[..]).unwrap(), v);
        assert!(Vocabulary::read_tsv(&b"euro 2\n"[..]).is_err());
    }

    #[test]
    fn smart_list_loads() {
        let stop = StopwordList::smart();
        assert!(stop.len() > 500);
        assert!(stop.contains("the"));
        assert!(stop.contains("of"));
        assert!(!stop.contains("euro"));
        assert!(StopwordList::parse("\n# nothing\n").is_err());
    }

    #[test]
    fn source_filter_excludes_cr() {
        let filter = SourceFilter::excluding(["cr"]);
        let mut d = doc("x");
        assert!(filter.accepts(&d));
        d.source = "CR".into();
        assert!(!filter.accepts(&d));
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }

        #[test]
        fn merge_equals_concatenated_recount(a in "[a-d ]{0,40}", b in "[a-d ]{0,40}") {
            let mut merged = Vocabulary::from_documents(&[doc(&a)]);
            merged.merge(&Vocabulary::from_documents(&[doc(&b)]));
            let recount: Vocabulary = tokenize(&a).into_iter().chain(tokenize(&b)).collect();
            prop_assert_eq!(merged, recount);
        }
    }
}

//! Document collections in bag-of-words form.
//!
//! Corpora are read from the UCI bag-of-words layout: a `docword` file with
//! three header numbers (documents, vocabulary size, nonzero entries)
//! followed by `docID wordID count` triples using 1-based ids, and a
//! vocabulary file with one word per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Ordered set of distinct word strings; word `i` has id `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (id, word) in words.iter().enumerate() {
            if index.insert(word.clone(), id).is_some() {
                return Err(Error::parse(id + 1, format!("duplicate vocabulary word {word:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// Placeholder vocabulary `w0, w1, ...` for corpora without word strings.
    pub fn numbered(size: usize) -> Self {
        Self::new((0..size).map(|i| format!("w{i}")).collect()).expect("numbered words are distinct")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut words = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            words.push(line.trim_end_matches('\r').to_string());
        }
        Self::new(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// A tokenized document: a sequence of word ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// 0-based document identifier, stable across splits.
    pub id: usize,
    tokens: Vec<u32>,
}

impl Document {
    pub fn new(id: usize, tokens: Vec<u32>) -> Self {
        Document { id, tokens }
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distinct word ids in ascending order.
    pub fn distinct_words(&self) -> Vec<u32> {
        let mut words = self.tokens.clone();
        words.sort_unstable();
        words.dedup();
        words
    }
}

/// Immutable document collection sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    vocabulary: Arc<Vocabulary>,
}

impl Corpus {
    /// Builds a corpus, checking every token against the vocabulary.
    pub fn new(documents: Vec<Document>, vocabulary: Arc<Vocabulary>) -> Result<Self> {
        let v = vocabulary.len();
        for doc in &documents {
            if let Some(&bad) = doc.tokens.iter().find(|&&w| w as usize >= v) {
                return Err(Error::UnknownWord {
                    word: bad as usize,
                    vocab: v,
                });
            }
        }
        Ok(Corpus {
            documents,
            vocabulary,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocabulary
    }

    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Draws `size` documents uniformly with replacement, in draw order.
    pub fn sample_minibatch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<&Document>> {
        if self.documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if size == 0 {
            return Err(Error::Config("minibatch size must be at least 1".into()));
        }
        let d = self.documents.len();
        Ok((0..size).map(|_| &self.documents[rng.random_range(0..d)]).collect())
    }

    /// Randomly partitions into `(train, heldout)`, where the held-out part
    /// has `round(fraction * D)` documents. Each part keeps the original
    /// document order.
    pub fn split_holdout<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<(Corpus, Corpus)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Config(format!("holdout fraction {fraction} not in (0, 1)")));
        }
        let d = self.documents.len();
        let held = (fraction * d as f64).round() as usize;
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mut is_held = vec![false; d];
        for &i in &order[..held] {
            is_held[i] = true;
        }
        let (mut train, mut test) = (Vec::with_capacity(d - held), Vec::with_capacity(held));
        for (doc, held) in self.documents.iter().zip(is_held) {
            if held {
                test.push(doc.clone());
            } else {
                train.push(doc.clone());
            }
        }
        Ok((
            Corpus {
                documents: train,
                vocabulary: Arc::clone(&self.vocabulary),
            },
            Corpus {
                documents: test,
                vocabulary: Arc::clone(&self.vocabulary),
            },
        ))
    }

    /// Writes the corpus in UCI docword layout. Documents are renumbered
    /// 1..=D in their current order.
    pub fn write_uci<W: Write>(&self, mut out: W) -> Result<()> {
        let mut entries = Vec::new();
        for (i, doc) in self.documents.iter().enumerate() {
            let mut counts: Vec<(u32, u32)> = Vec::new();
            let mut words = doc.tokens.clone();
            words.sort_unstable();
            for w in words {
                match counts.last_mut() {
                    Some((last, c)) if *last == w => *c += 1,
                    _ => counts.push((w, 1)),
                }
            }
            entries.extend(counts.into_iter().map(|(w, c)| (i + 1, w as usize + 1, c)));
        }
        writeln!(out, "{}", self.documents.len())?;
        writeln!(out, "{}", self.vocabulary.len())?;
        writeln!(out, "{}", entries.len())?;
        for (d, w, c) in entries {
            writeln!(out, "{d} {w} {c}")?;
        }
        Ok(())
    }
}

/// Loads a corpus from a UCI docword file and its vocabulary file.
pub fn load_uci(docword_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<Corpus> {
    let vocabulary = Vocabulary::load(vocab_path)?;
    let path = docword_path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_uci(BufReader::new(file), Arc::new(vocabulary))
}

/// Parses UCI docword content. Each `(doc, word, count)` triple expands to
/// `count` tokens; within a document tokens are in ascending word-id order.
///
/// The three header numbers may be on separate lines (the usual layout) or
/// share a line.
pub fn parse_uci<R: BufRead>(reader: R, vocabulary: Arc<Vocabulary>) -> Result<Corpus> {
    let mut header: Vec<usize> = Vec::with_capacity(3);
    let mut per_doc: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut seen = 0usize;
    let mut last_line = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if header.len() < 3 {
            for field in line.split_whitespace() {
                if header.len() == 3 {
                    return Err(Error::parse(lineno, "too many header fields"));
                }
                let n = field
                    .parse::<usize>()
                    .map_err(|_| Error::parse(lineno, format!("malformed header field {field:?}")))?;
                header.push(n);
            }
            if header.len() == 3 {
                let (d, v) = (header[0], header[1]);
                if v != vocabulary.len() {
                    return Err(Error::parse(
                        lineno,
                        format!("header vocabulary size {v} but vocabulary file has {} words", vocabulary.len()),
                    ));
                }
                per_doc = vec![Vec::new(); d];
            }
            continue;
        }

        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let mut nums = [0i64; 3];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field
                .parse::<i64>()
                .map_err(|_| Error::parse(lineno, format!("malformed number {field:?}")))?;
        }
        let [doc, word, count] = nums;
        if doc < 1 || doc as usize > header[0] {
            return Err(Error::parse(lineno, format!("document id {doc} out of range 1..={}", header[0])));
        }
        if word < 1 || word as usize > header[1] {
            return Err(Error::parse(lineno, format!("word id {word} out of range 1..={}", header[1])));
        }
        if count <= 0 {
            return Err(Error::parse(lineno, format!("count {count} must be positive")));
        }
        per_doc[doc as usize - 1].push((word as u32 - 1, count as u32));
        seen += 1;
    }

    if header.len() < 3 {
        return Err(Error::parse(last_line.max(1), "missing header"));
    }
    if seen != header[2] {
        return Err(Error::parse(
            last_line,
            format!("header declares {} entries, found {seen}", header[2]),
        ));
    }

    let documents = per_doc
        .into_iter()
        .enumerate()
        .map(|(id, mut entries)| {
            entries.sort_unstable_by_key(|&(w, _)| w);
            let tokens = entries
                .into_iter()
                .flat_map(|(w, c)| std::iter::repeat_n(w, c as usize))
                .collect();
            Document::new(id, tokens)
        })
        .collect();
    Ok(Corpus {
        documents,
        vocabulary,
    })
}

/// Document frequencies for a chosen word set.
///
/// Pair counts are answered on demand by intersecting sorted posting lists,
/// so no `V x V` table is ever built.
#[derive(Debug, Clone)]
pub struct DocFrequencies {
    postings: HashMap<u32, Vec<u32>>,
    num_docs: usize,
}

impl DocFrequencies {
    pub fn new(corpus: &Corpus, word_set: impl IntoIterator<Item = usize>) -> Self {
        let mut postings: HashMap<u32, Vec<u32>> =
            word_set.into_iter().map(|w| (w as u32, Vec::new())).collect();
        for (d, doc) in corpus.documents().iter().enumerate() {
            for w in doc.distinct_words() {
                if let Some(list) = postings.get_mut(&w) {
                    list.push(d as u32);
                }
            }
        }
        DocFrequencies {
            postings,
            num_docs: corpus.num_docs(),
        }
    }

    /// Index covering the whole vocabulary.
    pub fn all_words(corpus: &Corpus) -> Self {
        Self::new(corpus, 0..corpus.vocab_size())
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn covers(&self, word: usize) -> bool {
        self.postings.contains_key(&(word as u32))
    }

    /// `D(w)`: number of documents containing `w`; `None` if not indexed.
    pub fn single(&self, word: usize) -> Option<usize> {
        self.postings.get(&(word as u32)).map(Vec::len)
    }

    /// `D(a, b)`: number of documents containing both words.
    pub fn pair(&self, a: usize, b: usize) -> Option<usize> {
        let pa = self.postings.get(&(a as u32))?;
        let pb = self.postings.get(&(b as u32))?;
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < pa.len() && j < pb.len() {
            match pa[i].cmp(&pb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Some(n)
    }
}

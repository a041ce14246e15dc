//! Time-sliced document collections over the namespace vocabulary.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ingest::ActivityRecord;
use crate::{Error, Result};

/// The 28 default namespaces; the id of a namespace is its position.
pub const DEFAULT_NAMESPACES: [&str; 28] = [
    "main",
    "article_talk",
    "user",
    "user_talk",
    "wikipedia",
    "wikipedia_talk",
    "file",
    "file_talk",
    "mediawiki",
    "mediawiki_talk",
    "template",
    "template_talk",
    "help",
    "help_talk",
    "category",
    "category_talk",
    "portal",
    "portal_talk",
    "book",
    "book_talk",
    "draft",
    "draft_talk",
    "education_program",
    "education_program_talk",
    "timedtext",
    "timedtext_talk",
    "module",
    "module_talk",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    names: Vec<String>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::invalid("vocabulary must contain at least one term"));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::invalid(alloc::format!("duplicate vocabulary term {n:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn namespaces() -> Self {
        Self::new(DEFAULT_NAMESPACES).expect("default namespaces are unique")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Parses `name=id` lines. Ids must cover `0..V` exactly once; blank
    /// lines and lines starting with `#` are ignored.
    pub fn parse_map(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, id) = line
                .rsplit_once('=')
                .ok_or_else(|| Error::invalid(alloc::format!("line {}: expected name=id", i + 1)))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::invalid(alloc::format!("line {}: bad namespace id {:?}", i + 1, id.trim())))?;
            pairs.push((id, name.trim().to_string()));
        }
        pairs.sort();
        for (expected, (id, name)) in pairs.iter().enumerate() {
            if *id != expected {
                return Err(Error::invalid(alloc::format!(
                    "namespace ids must be 0..{} without gaps; {name:?} has id {id}",
                    pairs.len()
                )));
            }
        }
        Self::new(pairs.into_iter().map(|(_, n)| n))
    }

    /// Inverse of [`Vocabulary::parse_map`].
    pub fn to_map(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.names.iter().enumerate() {
            out.push_str(&alloc::format!("{n}={i}\n"));
        }
        out
    }
}

/// A user-quarter's activity as a bag of terms. `terms` holds
/// `(term id, count)` pairs sorted by term id, every count positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub user: String,
    pub slice: usize,
    pub terms: Vec<(usize, u64)>,
}

impl Document {
    pub fn new(user: impl Into<String>, slice: usize, terms: Vec<(usize, u64)>) -> Self {
        let mut terms: Vec<(usize, u64)> = terms.into_iter().filter(|&(_, c)| c > 0).collect();
        terms.sort_unstable();
        Self {
            user: user.into(),
            slice,
            terms,
        }
    }

    pub fn total(&self) -> u64 {
        self.terms.iter().map(|&(_, c)| c).sum()
    }

    pub fn count(&self, term: usize) -> u64 {
        self.terms
            .binary_search_by_key(&term, |&(t, _)| t)
            .map(|i| self.terms[i].1)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlicedCorpus {
    pub vocab: Vocabulary,
    pub slices: Vec<Vec<Document>>,
}

impl TimeSlicedCorpus {
    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.slices.iter().flatten()
    }
}

/// One document per record; slice `t` holds exactly the records of quarter
/// `t`, so quarters without activity become empty slices.
pub fn build_corpus(records: &[ActivityRecord], vocab: &Vocabulary) -> Result<TimeSlicedCorpus> {
    let v = vocab.len();
    let num_slices = records.iter().map(|r| r.quarter as usize + 1).max().unwrap_or(0);
    let mut slices: Vec<Vec<Document>> = (0..num_slices).map(|_| Vec::new()).collect();
    for r in records {
        if let Some(bad) = r.counts.iter().skip(v).position(|&c| c > 0) {
            return Err(Error::invalid(alloc::format!(
                "record ({}, quarter {}) has counts for namespace id {} outside vocabulary of {}",
                r.user,
                r.quarter,
                v + bad,
                v
            )));
        }
        let terms = r
            .counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(t, &c)| (t, c))
            .collect();
        slices[r.quarter as usize].push(Document::new(r.user.to_string(), r.quarter as usize, terms));
    }
    for s in &mut slices {
        s.sort_by(|a, b| a.user.cmp(&b.user));
    }
    Ok(TimeSlicedCorpus {
        vocab: vocab.clone(),
        slices,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub slices: usize,
    pub documents: usize,
    pub users: usize,
    pub tokens: u64,
}

pub fn corpus_stats(corpus: &TimeSlicedCorpus) -> CorpusStats {
    let users: BTreeSet<&str> = corpus.documents().map(|d| d.user.as_str()).collect();
    CorpusStats {
        slices: corpus.num_slices(),
        documents: corpus.documents().count(),
        users: users.len(),
        tokens: corpus.documents().map(Document::total).sum(),
    }
}

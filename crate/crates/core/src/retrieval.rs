//! Term index over a knowledge corpus and cosine knowledge selection.
//!
//! Documents and contexts are TF-IDF vectors with raw term counts and the
//! smoothed weight `idf(t) = ln((n + 1) / (df(t) + 1)) + 1`. Context terms
//! that never occur in the corpus keep their weight (df = 0) so they count
//! toward the context norm. An optional BM25 scorer normalizes each
//! document's score by its self-retrieval score to stay in `[0, 1]`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{KnowledgeCorpus, KnowledgeId};
use crate::text::{index_tokens, TokenizerConfig};

pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("knowledge corpus `{0}` has no sentences")]
    EmptyCorpus(String),
    #[error("every sentence of corpus `{0}` is empty after tokenization")]
    NothingIndexable(String),
    #[error("knowledge id {0} is not indexed")]
    NotIndexed(KnowledgeId),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scorer {
    #[default]
    TfIdf,
    Bm25 {
        k1: f64,
        b: f64,
    },
}

impl Scorer {
    pub const BM25_DEFAULT: Scorer = Scorer::Bm25 { k1: 1.2, b: 0.75 };
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndexConfig {
    pub tokenizer: TokenizerConfig,
    pub scorer: Scorer,
}

/// The chosen knowledge sentence for a context, with the use-knowledge flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSelection {
    pub knowledge_id: Option<KnowledgeId>,
    pub score: f64,
    pub use_knowledge: bool,
}

impl KnowledgeSelection {
    /// No knowledge available (no corpus, or nothing selected yet).
    pub fn none() -> Self {
        KnowledgeSelection {
            knowledge_id: None,
            score: 0.0,
            use_knowledge: false,
        }
    }

    pub fn new(knowledge_id: KnowledgeId, score: f64, threshold: f64) -> Self {
        KnowledgeSelection {
            knowledge_id: Some(knowledge_id),
            score,
            use_knowledge: score >= threshold,
        }
    }

    /// The id when the flag is set, `None` otherwise.
    pub fn effective_id(&self) -> Option<KnowledgeId> {
        self.knowledge_id.filter(|_| self.use_knowledge)
    }
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    id: KnowledgeId,
    /// (term id, raw count), sorted by term id
    counts: Vec<(u32, u32)>,
    length: u32,
    /// TF-IDF weights parallel to `counts`
    weights: Vec<f64>,
    norm: f64,
    bm25_self: f64,
}

/// Immutable index; safe to share across threads.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    config: IndexConfig,
    vocabulary: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    docs: Vec<IndexedDoc>,
    postings: Vec<Vec<(usize, u32)>>,
    by_id: HashMap<KnowledgeId, usize>,
    excluded: Vec<KnowledgeId>,
    avg_length: f64,
}

impl RetrievalIndex {
    pub fn build(corpus: &KnowledgeCorpus, config: IndexConfig) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus(corpus.source_doc.clone()));
        }
        let mut vocabulary: HashMap<String, u32> = HashMap::new();
        let mut doc_freq: Vec<u32> = Vec::new();
        let mut raw_docs = Vec::new();
        let mut excluded = Vec::new();

        for sentence in &corpus.sentences {
            let tokens = index_tokens(&sentence.text, config.tokenizer);
            if tokens.is_empty() {
                excluded.push(sentence.id);
                continue;
            }
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for tok in &tokens {
                let next = vocabulary.len() as u32;
                let term = *vocabulary.entry(tok.clone()).or_insert(next);
                if term as usize == doc_freq.len() {
                    doc_freq.push(0);
                }
                *counts.entry(term).or_insert(0) += 1;
            }
            for &term in counts.keys() {
                doc_freq[term as usize] += 1;
            }
            raw_docs.push((
                sentence.id,
                counts.into_iter().collect::<Vec<_>>(),
                tokens.len() as u32,
            ));
        }
        if raw_docs.is_empty() {
            return Err(RetrievalError::NothingIndexable(corpus.source_doc.clone()));
        }

        let n_docs = raw_docs.len();
        let avg_length = raw_docs
            .iter()
            .map(|(_, _, len)| f64::from(*len))
            .sum::<f64>()
            / n_docs as f64;
        let mut postings = vec![Vec::new(); vocabulary.len()];
        let mut docs = Vec::with_capacity(n_docs);
        let mut by_id = HashMap::with_capacity(n_docs);
        for (idx, (id, counts, length)) in raw_docs.into_iter().enumerate() {
            let weights: Vec<f64> = counts
                .iter()
                .map(|&(term, count)| {
                    f64::from(count) * smoothed_idf(n_docs, doc_freq[term as usize])
                })
                .collect();
            let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            for &(term, count) in &counts {
                postings[term as usize].push((idx, count));
            }
            by_id.insert(id, idx);
            docs.push(IndexedDoc {
                id,
                counts,
                length,
                weights,
                norm,
                bm25_self: 0.0,
            });
        }
        let mut index = RetrievalIndex {
            config,
            vocabulary,
            doc_freq,
            docs,
            postings,
            by_id,
            excluded,
            avg_length,
        };
        if let Scorer::Bm25 { .. } = config.scorer {
            for idx in 0..index.docs.len() {
                let query: Vec<(u32, u32)> = index.docs[idx].counts.clone();
                index.docs[idx].bm25_self = index.bm25_raw(&query, idx);
            }
        }
        Ok(index)
    }

    pub fn config(&self) -> IndexConfig {
        self.config
    }

    /// Number of indexed (non-empty) knowledge sentences.
    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn doc_freq(&self, term: &str) -> Option<u32> {
        self.term_id(term).map(|t| self.doc_freq[t as usize])
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.doc_freq(term)
            .map(|df| smoothed_idf(self.n_docs(), df))
    }

    /// Sentences left out because they tokenize to nothing.
    pub fn excluded(&self) -> &[KnowledgeId] {
        &self.excluded
    }

    pub fn indexed_ids(&self) -> impl Iterator<Item = KnowledgeId> + '_ {
        self.docs.iter().map(|d| d.id)
    }

    /// TF-IDF vector of an indexed sentence as (term, weight) pairs.
    pub fn doc_vector(&self, id: KnowledgeId) -> Option<Vec<(String, f64)>> {
        let doc = &self.docs[*self.by_id.get(&id)?];
        let mut names = vec![""; self.vocabulary.len()];
        for (term, &tid) in &self.vocabulary {
            names[tid as usize] = term;
        }
        Some(
            doc.counts
                .iter()
                .zip(&doc.weights)
                .map(|(&(tid, _), &w)| (names[tid as usize].to_string(), w))
                .collect(),
        )
    }

    /// Similarity of `context` to one knowledge sentence, in `[0, 1]`. Under
    /// the TF-IDF scorer this is the cosine of the two vectors; a context
    /// with no tokens scores 0.
    pub fn score(&self, context: &str, id: KnowledgeId) -> Result<f64, RetrievalError> {
        let idx = *self.by_id.get(&id).ok_or(RetrievalError::NotIndexed(id))?;
        let query = self.query(context);
        Ok(self.scores_for(&query)[idx])
    }

    /// Argmax over every indexed sentence; ties go to the lowest id.
    pub fn select(&self, context: &str, threshold: f64) -> KnowledgeSelection {
        let query = self.query(context);
        let scores = self.scores_for(&query);
        let (best, score) = scores
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (idx, &s)| match best {
                Some((b, bs)) if bs > s || (bs == s && self.docs[b].id < self.docs[idx].id) => {
                    Some((b, bs))
                }
                _ => Some((idx, s)),
            })
            .expect("index holds at least one document");
        KnowledgeSelection::new(self.docs[best].id, score, threshold)
    }

    /// Top `top_k` sentences by descending score, ties by ascending id.
    pub fn rank(&self, context: &str, top_k: usize) -> Vec<(KnowledgeId, f64)> {
        if top_k == 0 {
            return Vec::new();
        }
        let query = self.query(context);
        let scores = self.scores_for(&query);
        let mut ranked: Vec<(KnowledgeId, f64)> = self
            .docs
            .iter()
            .zip(scores)
            .map(|(doc, s)| (doc.id, s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top_k);
        ranked
    }

    fn query(&self, context: &str) -> Query {
        let mut known: BTreeMap<u32, u32> = BTreeMap::new();
        let mut unknown: BTreeMap<String, u32> = BTreeMap::new();
        for tok in index_tokens(context, self.config.tokenizer) {
            match self.vocabulary.get(&tok) {
                Some(&t) => *known.entry(t).or_insert(0) += 1,
                None => *unknown.entry(tok).or_insert(0) += 1,
            }
        }
        Query {
            known: known.into_iter().collect(),
            unknown_counts: unknown.into_values().collect(),
        }
    }

    fn scores_for(&self, query: &Query) -> Vec<f64> {
        match self.config.scorer {
            Scorer::TfIdf => self.cosine_scores(query),
            Scorer::Bm25 { .. } => (0..self.docs.len())
                .map(|idx| {
                    let doc = &self.docs[idx];
                    if doc.bm25_self <= 0.0 {
                        return 0.0;
                    }
                    (self.bm25_raw(&query.known, idx) / doc.bm25_self).clamp(0.0, 1.0)
                })
                .collect(),
        }
    }

    fn cosine_scores(&self, query: &Query) -> Vec<f64> {
        let n = self.n_docs();
        let oov_idf = smoothed_idf(n, 0);
        let mut norm_sq = 0.0;
        let mut dots = vec![0.0; self.docs.len()];
        for &(term, count) in &query.known {
            let w = f64::from(count) * smoothed_idf(n, self.doc_freq[term as usize]);
            norm_sq += w * w;
            for &(doc, doc_count) in &self.postings[term as usize] {
                let dw = f64::from(doc_count) * smoothed_idf(n, self.doc_freq[term as usize]);
                dots[doc] += w * dw;
            }
        }
        for &count in &query.unknown_counts {
            let w = f64::from(count) * oov_idf;
            norm_sq += w * w;
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            return vec![0.0; self.docs.len()];
        }
        dots.iter()
            .zip(&self.docs)
            .map(|(dot, doc)| (dot / (norm * doc.norm)).clamp(0.0, 1.0))
            .collect()
    }

    fn bm25_raw(&self, query: &[(u32, u32)], idx: usize) -> f64 {
        let Scorer::Bm25 { k1, b } = self.config.scorer else {
            return 0.0;
        };
        let doc = &self.docs[idx];
        let n = self.n_docs() as f64;
        let len_norm = 1.0 - b + b * f64::from(doc.length) / self.avg_length;
        query
            .iter()
            .map(|&(term, qtf)| {
                let Ok(pos) = doc.counts.binary_search_by_key(&term, |&(t, _)| t) else {
                    return 0.0;
                };
                let tf = f64::from(doc.counts[pos].1);
                let df = f64::from(self.doc_freq[term as usize]);
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                f64::from(qtf) * idf * tf * (k1 + 1.0) / (tf + k1 * len_norm)
            })
            .sum()
    }
}

struct Query {
    known: Vec<(u32, u32)>,
    unknown_counts: Vec<u32>,
}

pub fn smoothed_idf(n_docs: usize, df: u32) -> f64 {
    ((n_docs as f64 + 1.0) / (f64::from(df) + 1.0)).ln() + 1.0
}

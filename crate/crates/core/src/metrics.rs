//! Automatic evaluation: overlap metrics, corpus diversity and plan
//! adherence.
//!
//! All pairwise metrics tokenize with [`metric_tokens`] (lowercase,
//! punctuation split into separate tokens).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{DaTagger, Frame};
use crate::generation::TraceEntry;
use crate::labels::DialogueAct;
use crate::text::{metric_tokens, segment_sentences, word_count};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const BLEU_EPSILON: f64 = 1e-9;
pub const ROUGE_BETA: f64 = 1.2;
pub const DEFAULT_ADHERENCE_OVERLAP: f64 = 0.5;
pub const KNOWLEDGE_METHOD: &str = "content-word-recall-proxy";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no {0}-grams in corpus")]
    NoNgrams(usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("candidate count {candidates} differs from reference count {references}")]
    CountMismatch {
        candidates: usize,
        references: usize,
    },
    #[error("no sentences with a measurable dialogue act")]
    NothingMeasurable,
    #[error("tagging failed: {0}")]
    Tagger(String),
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap<K: Hash + Eq>(cand: &HashMap<K, usize>, reference: &HashMap<K, usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Sentence BLEU-4 against one reference. Orders the candidate is too short
/// to contain are left out of the geometric mean; zero matches count as
/// [`BLEU_EPSILON`].
pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    let c = metric_tokens(candidate);
    let r = metric_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let orders = c.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngrams(&c, n);
        let matches = clipped_overlap(&cand, &ngrams(&r, n));
        let total = c.len() + 1 - n;
        let m = if matches == 0 {
            BLEU_EPSILON
        } else {
            matches as f64
        };
        log_sum += (m / total.max(1) as f64).ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sentence-level ROUGE-L F-measure with beta = [`ROUGE_BETA`].
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = metric_tokens(candidate);
    let r = metric_tokens(reference);
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Multiset unigram overlap.
pub fn unigram_prf(candidate: &str, reference: &str) -> Prf {
    let c = metric_tokens(candidate);
    let r = metric_tokens(reference);
    let overlap = clipped_overlap(&ngrams(&c, 1), &ngrams(&r, 1)) as f64;
    let ratio = |den: usize| if den == 0 { 0.0 } else { overlap / den as f64 };
    let (precision, recall) = (ratio(c.len()), ratio(r.len()));
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Unique n-grams over total n-grams across the whole corpus.
pub fn distinct_n<S: AsRef<str>>(corpus: &[S], n: usize) -> Result<f64, MetricsError> {
    let mut unique: HashSet<Vec<String>> = HashSet::new();
    let mut total = 0usize;
    for text in corpus {
        let tokens = metric_tokens(text.as_ref());
        if n == 0 || tokens.len() < n {
            continue;
        }
        for w in tokens.windows(n) {
            total += 1;
            unique.insert(w.to_vec());
        }
    }
    if total == 0 {
        return Err(MetricsError::NoNgrams(n));
    }
    Ok(unique.len() as f64 / total as f64)
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "of", "to", "in", "on", "at", "by", "for", "with",
    "from", "as", "is", "are", "was", "were", "be", "been", "being", "it", "its", "this", "that",
    "these", "those", "he", "she", "they", "them", "his", "her", "their", "i", "you", "we", "my",
    "your", "our", "has", "have", "had", "do", "does", "did", "not", "no", "so", "than", "then",
    "there", "which", "who", "what", "when", "where", "how", "about", "into", "over", "also",
    "can", "will", "would", "s",
];

fn content_words(text: &str) -> HashSet<String> {
    metric_tokens(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric) && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Fraction of the knowledge's content words that appear in `sentence`.
/// Knowledge with no content words counts as fully recalled.
pub fn knowledge_recall(knowledge: &str, sentence: &str) -> f64 {
    let wanted = content_words(knowledge);
    if wanted.is_empty() {
        return 1.0;
    }
    let have: HashSet<String> = metric_tokens(sentence).into_iter().collect();
    wanted.iter().filter(|w| have.contains(*w)).count() as f64 / wanted.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceReport {
    pub da_acc: f64,
    pub da_measured: usize,
    /// `None` when no frame asked for knowledge.
    pub k_real: Option<f64>,
    pub k_measured: usize,
    pub k_method: String,
    pub k_overlap: f64,
}

/// How often realized sentences carry the planned act (NoDialogueAct plans
/// excluded) and, for frames with the use-knowledge flag set, the planned
/// knowledge (content-word recall at least `overlap`).
pub fn adherence_report(
    traces: &[(Frame, String)],
    tagger: &dyn DaTagger,
    overlap: f64,
) -> Result<AdherenceReport, MetricsError> {
    let mut da_hits = 0usize;
    let mut da_measured = 0usize;
    let mut k_hits = 0usize;
    let mut k_measured = 0usize;
    for (frame, sentence) in traces {
        if frame.da != DialogueAct::NoDialogueAct {
            da_measured += 1;
            let tag = tagger
                .tag(sentence)
                .map_err(|e| MetricsError::Tagger(e.to_string()))?;
            if tag.act == frame.da {
                da_hits += 1;
            }
        }
        if frame.use_knowledge {
            if let Some(k) = &frame.knowledge {
                k_measured += 1;
                if knowledge_recall(&k.text, sentence) >= overlap {
                    k_hits += 1;
                }
            }
        }
    }
    if da_measured == 0 {
        return Err(MetricsError::NothingMeasurable);
    }
    Ok(AdherenceReport {
        da_acc: da_hits as f64 / da_measured as f64,
        da_measured,
        k_real: (k_measured > 0).then(|| k_hits as f64 / k_measured as f64),
        k_measured,
        k_method: KNOWLEDGE_METHOD.to_string(),
        k_overlap: overlap,
    })
}

pub fn trace_pairs(trace: &[TraceEntry]) -> Vec<(Frame, String)> {
    trace
        .iter()
        .map(|t| (t.frame.clone(), t.sentence.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub n: usize,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the candidates contain no n-grams of that order.
    pub distinct_1: Option<f64>,
    pub distinct_2: Option<f64>,
    pub avg_words: f64,
    pub avg_sentences: f64,
    /// Share of each act over candidate sentences; empty without a tagger.
    pub da_distribution: BTreeMap<DialogueAct, f64>,
    pub adherence: Option<AdherenceReport>,
}

pub struct EvaluationOptions<'a> {
    pub tagger: Option<&'a dyn DaTagger>,
    pub traces: Option<&'a [(Frame, String)]>,
    pub adherence_overlap: f64,
}

impl Default for EvaluationOptions<'_> {
    fn default() -> Self {
        EvaluationOptions {
            tagger: None,
            traces: None,
            adherence_overlap: DEFAULT_ADHERENCE_OVERLAP,
        }
    }
}

/// Macro-averaged pairwise metrics plus corpus-level statistics over the
/// candidates. Adherence needs both traces and a tagger.
pub fn evaluate_corpus<S: AsRef<str>>(
    pairs: &[(S, S)],
    options: &EvaluationOptions<'_>,
) -> Result<EvaluationReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = pairs.len() as f64;
    let (mut bleu, mut rouge, mut p, mut r, mut f) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut words, mut sentences) = (0usize, 0usize);
    let mut acts: BTreeMap<DialogueAct, usize> = BTreeMap::new();
    let mut tagged = 0usize;
    for (cand, reference) in pairs {
        let (cand, reference) = (cand.as_ref(), reference.as_ref());
        bleu += bleu4(cand, reference);
        rouge += rouge_l(cand, reference);
        let prf = unigram_prf(cand, reference);
        p += prf.precision;
        r += prf.recall;
        f += prf.f1;
        words += word_count(cand);
        let sents = segment_sentences(cand);
        sentences += sents.len();
        if let Some(tagger) = options.tagger {
            for s in &sents {
                let tag = tagger
                    .tag(s)
                    .map_err(|e| MetricsError::Tagger(e.to_string()))?;
                *acts.entry(tag.act).or_insert(0) += 1;
                tagged += 1;
            }
        }
    }
    let candidates: Vec<&str> = pairs.iter().map(|(c, _)| c.as_ref()).collect();
    let adherence = match (options.traces, options.tagger) {
        (Some(traces), Some(tagger)) => {
            Some(adherence_report(traces, tagger, options.adherence_overlap)?)
        }
        _ => None,
    };
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n: pairs.len(),
        bleu4: bleu / n,
        rouge_l: rouge / n,
        precision: p / n,
        recall: r / n,
        f1: f / n,
        distinct_1: distinct_n(&candidates, 1).ok(),
        distinct_2: distinct_n(&candidates, 2).ok(),
        avg_words: words as f64 / n,
        avg_sentences: sentences as f64 / n,
        da_distribution: acts
            .into_iter()
            .map(|(a, c)| (a, c as f64 / tagged as f64))
            .collect(),
        adherence,
    })
}

/// Pairs candidates with references line by line.
pub fn zip_lines<'a>(
    candidates: &'a str,
    references: &'a str,
) -> Result<Vec<(&'a str, &'a str)>, MetricsError> {
    let c: Vec<&str> = candidates.lines().collect();
    let r: Vec<&str> = references.lines().collect();
    if c.len() != r.len() {
        return Err(MetricsError::CountMismatch {
            candidates: c.len(),
            references: r.len(),
        });
    }
    Ok(c.into_iter().zip(r).collect())
}

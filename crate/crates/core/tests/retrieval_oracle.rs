//! Index scores checked against a dense brute-force TF-IDF cosine.

use std::collections::BTreeSet;

use pdnrg_core::corpus::{KnowledgeCorpus, KnowledgeId};
use pdnrg_core::retrieval::{IndexConfig, RetrievalIndex, Scorer, DEFAULT_THRESHOLD};
use pdnrg_core::text::{index_tokens, TokenizerConfig};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "nfl", "female", "players", "rule", "golf", "balls", "dimples", "bruce", "lee", "dancer",
    "music", "jazz", "book", "potter", "movie", "actor", "the", "a", "of", "has", "was", "won",
    "team", "season", "song", "album", "wrote", "film", "fish", "water",
];

/// Every vector spans corpus vocabulary plus the context's unseen terms.
fn dense_scores(docs: &[String], context: &str) -> Vec<f64> {
    let tok = |s: &str| index_tokens(s, TokenizerConfig::default());
    let doc_tokens: Vec<Vec<String>> = docs.iter().map(|d| tok(d)).collect();
    let ctx_tokens = tok(context);
    let vocab: BTreeSet<String> = doc_tokens
        .iter()
        .flatten()
        .chain(&ctx_tokens)
        .cloned()
        .collect();
    let n = doc_tokens.len() as f64;
    let idf = |term: &str| {
        let df = doc_tokens
            .iter()
            .filter(|d| d.iter().any(|t| t == term))
            .count() as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    };
    let vector = |tokens: &[String]| -> Vec<f64> {
        vocab
            .iter()
            .map(|term| tokens.iter().filter(|t| *t == term).count() as f64 * idf(term))
            .collect()
    };
    let q = vector(&ctx_tokens);
    let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    doc_tokens
        .iter()
        .map(|d| {
            let v = vector(d);
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if qn == 0.0 || vn == 0.0 {
                0.0
            } else {
                q.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / (qn * vn)
            }
        })
        .collect()
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..10).prop_map(|w| w.join(" "))
}

fn context() -> impl Strategy<Value = String> {
    let word = prop_oneof![
        4 => prop::sample::select(WORDS).prop_map(str::to_string),
        1 => "[x-z]{3,6}",
    ];
    prop::collection::vec(word, 0..8).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn select_matches_dense_oracle(docs in prop::collection::vec(sentence(), 1..50), ctx in context()) {
        let corpus = KnowledgeCorpus::from_texts("doc", &docs).unwrap();
        let index = RetrievalIndex::build(&corpus, IndexConfig::default()).unwrap();
        let oracle = dense_scores(&docs, &ctx);
        for (i, expected) in oracle.iter().enumerate() {
            let got = index.score(&ctx, KnowledgeId(i as u32)).unwrap();
            prop_assert!((got - expected).abs() < 1e-9, "doc {i}: {got} vs {expected}");
        }
        let max = oracle.iter().copied().fold(f64::MIN, f64::max);
        let best = oracle.iter().position(|s| *s >= max - 1e-12).unwrap();
        let selection = index.select(&ctx, DEFAULT_THRESHOLD);
        prop_assert_eq!(selection.knowledge_id, Some(KnowledgeId(best as u32)));
        prop_assert!((selection.score - max).abs() < 1e-9);
        prop_assert_eq!(selection.use_knowledge, max >= DEFAULT_THRESHOLD);
    }

    #[test]
    fn scores_are_bounded(docs in prop::collection::vec(sentence(), 1..30), ctx in context()) {
        let corpus = KnowledgeCorpus::from_texts("doc", &docs).unwrap();
        for scorer in [Scorer::TfIdf, Scorer::BM25_DEFAULT] {
            let index = RetrievalIndex::build(&corpus, IndexConfig { scorer, ..IndexConfig::default() }).unwrap();
            for (_, s) in index.rank(&ctx, docs.len()) {
                prop_assert!((0.0..=1.0 + 1e-9).contains(&s));
            }
        }
    }

    #[test]
    fn sentence_retrieves_itself(docs in prop::collection::vec(sentence(), 1..30), pick in any::<prop::sample::Index>()) {
        let corpus = KnowledgeCorpus::from_texts("doc", &docs).unwrap();
        let index = RetrievalIndex::build(&corpus, IndexConfig::default()).unwrap();
        let i = pick.index(docs.len());
        let selection = index.select(&docs[i], DEFAULT_THRESHOLD);
        prop_assert!((selection.score - 1.0).abs() < 1e-9);
        // the winner is the first sentence with the same bag of words
        let winner = &docs[selection.knowledge_id.unwrap().0 as usize];
        prop_assert!((index.score(winner, KnowledgeId(i as u32)).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ranking_is_sorted(docs in prop::collection::vec(sentence(), 1..30), ctx in context(), k in 0usize..40) {
        let corpus = KnowledgeCorpus::from_texts("doc", &docs).unwrap();
        let index = RetrievalIndex::build(&corpus, IndexConfig::default()).unwrap();
        let ranked = index.rank(&ctx, k);
        prop_assert_eq!(ranked.len(), k.min(docs.len()));
        for pair in ranked.windows(2) {
            prop_assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
        }
        if let Some(first) = ranked.first() {
            prop_assert_eq!(Some(first.0), index.select(&ctx, 0.2).knowledge_id);
        }
    }
}

#[test]
fn toy_corpus_matches_oracle() {
    let docs: Vec<String> = [
        "The NFL has no official rule against female players.",
        "Golf balls have around 336 dimples.",
        "Bruce Lee was a cha cha dancer.",
        "Female players have competed in college football.",
        "The NFL season has 17 games.",
    ]
    .map(String::from)
    .to_vec();
    let corpus = KnowledgeCorpus::from_texts("toy", &docs).unwrap();
    let index = RetrievalIndex::build(&corpus, IndexConfig::default()).unwrap();
    let oracle = dense_scores(&docs, "nfl female players");
    for (i, expected) in oracle.iter().enumerate() {
        assert!(
            (index
                .score("nfl female players", KnowledgeId(i as u32))
                .unwrap()
                - expected)
                .abs()
                < 1e-12
        );
    }
    assert_eq!(
        index.select("nfl female players", 0.2).knowledge_id,
        Some(KnowledgeId(0))
    );
    let none = index.select("zzz qqq", 0.2);
    assert_eq!((none.score, none.use_knowledge), (0.0, false));
}

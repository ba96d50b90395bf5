//! Dialogue corpora in the Topical-Chat JSON shape, their reading sets, and
//! the enriched (annotated) corpus format.
//!
//! Two corpus layouts are understood:
//!
//! * `topical-chat`: an object keyed by conversation id, each holding
//!   `reading_sets: {agent_1, agent_2}` and `content: [{agent, message, topics?}]`.
//!   Unknown keys (sentiment, turn_rating, ...) are ignored.
//! * `enriched`: `{format, version, dialogues: [...]}` as written by
//!   [`write_enriched`], carrying per-sentence acts and knowledge links.
//!
//! Reading sets are `{doc_id: {entity: [knowledge sentence, ...]}}`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::labels::{DialogueAct, Topic};
use crate::text::{segment_sentences, word_count};

pub const ENRICHED_FORMAT: &str = "pdnrg-enriched";
pub const ENRICHED_VERSION: u32 = 1;

/// Confidence below which a tagged sentence must carry `NoDialogueAct`.
pub const DA_CONFIDENCE_FLOOR: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dialogue `{dialogue}`: field `{field}`: {message}")]
    Field {
        dialogue: String,
        field: String,
        message: String,
    },
    #[error("dialogue `{dialogue}`: reading set `{doc}` not found")]
    MissingReadingSet { dialogue: String, doc: String },
    #[error("reading set `{doc}`: {message}")]
    ReadingSet { doc: String, message: String },
    #[error("unsupported corpus format `{0}` (expected topical-chat, enriched or auto)")]
    UnknownFormat(String),
    #[error("corpus has no turns")]
    Empty,
}

impl CorpusError {
    fn field(dialogue: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::Field {
            dialogue: dialogue.to_string(),
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeId(pub u32);

impl fmt::Display for KnowledgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

/// Outcome of linking a text span to the knowledge corpus. `knowledge_id` is
/// absent when the best score fell under the threshold; the score is kept.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KnowledgeLink {
    pub knowledge_id: Option<KnowledgeId>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedAct {
    pub act: DialogueAct,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceUnit {
    pub text: String,
    /// `None` until dialogue acts have been ingested.
    pub da: Option<TaggedAct>,
    /// `None` until knowledge annotation has run.
    pub knowledge: Option<KnowledgeLink>,
}

impl SentenceUnit {
    pub fn new(text: impl Into<String>) -> Self {
        SentenceUnit {
            text: text.into(),
            da: None,
            knowledge: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "agent_1")]
    A,
    #[serde(rename = "agent_2")]
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: Speaker,
    pub raw_text: String,
    pub sentences: Vec<SentenceUnit>,
    /// Turn-level topics in corpus order; `None` when the corpus carries no
    /// topic annotation for the turn.
    pub topics: Option<Vec<Topic>>,
    pub turn_knowledge: Option<KnowledgeLink>,
}

impl Turn {
    /// Builds an unannotated turn, segmenting `raw_text` into sentences.
    pub fn new(speaker: Speaker, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let sentences = segment_sentences(&raw_text)
            .into_iter()
            .map(SentenceUnit::new)
            .collect();
        Turn {
            speaker,
            raw_text,
            sentences,
            topics: None,
            turn_knowledge: None,
        }
    }

    pub fn with_topics(mut self, topics: Vec<Topic>) -> Self {
        self.topics = Some(topics);
        self
    }

    /// Acts of the turn's sentences, skipping untagged ones.
    pub fn acts(&self) -> Vec<DialogueAct> {
        self.sentences
            .iter()
            .filter_map(|s| s.da.map(|d| d.act))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingSetRefs {
    pub agent_1: String,
    pub agent_2: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub reading_sets: ReadingSetRefs,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Checks speaker alternation and non-empty turns.
    pub fn validate(&self) -> Result<(), CorpusError> {
        for (idx, turn) in self.turns.iter().enumerate() {
            if idx > 0 && self.turns[idx - 1].speaker == turn.speaker {
                return Err(CorpusError::field(
                    &self.id,
                    format!("turns[{idx}].agent"),
                    "speaker repeats; turns must alternate between agent_1 and agent_2",
                ));
            }
            if turn.sentences.is_empty() {
                return Err(CorpusError::field(
                    &self.id,
                    format!("turns[{idx}].message"),
                    "turn has no sentences",
                ));
            }
            validate_turn_content(&self.id, idx, turn)?;
        }
        Ok(())
    }
}

fn squeeze(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn validate_turn_content(dialogue: &str, idx: usize, turn: &Turn) -> Result<(), CorpusError> {
    let joined: String = turn.sentences.iter().map(|s| squeeze(&s.text)).collect();
    if joined != squeeze(&turn.raw_text) {
        return Err(CorpusError::field(
            dialogue,
            format!("turns[{idx}].sentences"),
            "sentences do not reconstruct the turn text",
        ));
    }
    for (sidx, sentence) in turn.sentences.iter().enumerate() {
        if sentence.text.trim().is_empty() {
            return Err(CorpusError::field(
                dialogue,
                format!("turns[{idx}].sentences[{sidx}].text"),
                "empty sentence",
            ));
        }
        if let Some(tag) = sentence.da {
            if !(0.0..=1.0).contains(&tag.confidence) {
                return Err(CorpusError::field(
                    dialogue,
                    format!("turns[{idx}].sentences[{sidx}].da_confidence"),
                    "confidence outside [0, 1]",
                ));
            }
            if tag.confidence < DA_CONFIDENCE_FLOOR && tag.act != DialogueAct::NoDialogueAct {
                return Err(CorpusError::field(
                    dialogue,
                    format!("turns[{idx}].sentences[{sidx}].da"),
                    "confidence below 0.5 requires NoDialogueAct",
                ));
            }
        }
        if let Some(link) = sentence.knowledge {
            check_score(
                dialogue,
                &format!("turns[{idx}].sentences[{sidx}].knowledge_score"),
                link.score,
            )?;
        }
    }
    if let Some(link) = turn.turn_knowledge {
        check_score(
            dialogue,
            &format!("turns[{idx}].turn_knowledge_score"),
            link.score,
        )?;
    }
    Ok(())
}

fn check_score(dialogue: &str, field: &str, score: f64) -> Result<(), CorpusError> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(CorpusError::field(dialogue, field, "score outside [0, 1]"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    TopicalChat,
    Enriched,
    /// Enriched when the document carries the enriched `format` marker.
    #[default]
    Auto,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "topical-chat" => Ok(CorpusFormat::TopicalChat),
            "enriched" => Ok(CorpusFormat::Enriched),
            "auto" => Ok(CorpusFormat::Auto),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dialogues(path: &Path, format: CorpusFormat) -> Result<Vec<Dialogue>, CorpusError> {
    parse_dialogues(&read_file(path)?, format)
}

/// Parses a corpus document. Order of dialogues and turns is preserved; an
/// empty (or whitespace-only) document is an empty corpus.
pub fn parse_dialogues(input: &str, format: CorpusFormat) -> Result<Vec<Dialogue>, CorpusError> {
    if input.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc: Value = serde_json::from_str(input)?;
    let format = match format {
        CorpusFormat::Auto => {
            if doc.get("format").and_then(Value::as_str) == Some(ENRICHED_FORMAT) {
                CorpusFormat::Enriched
            } else {
                CorpusFormat::TopicalChat
            }
        }
        f => f,
    };
    let dialogues = match format {
        CorpusFormat::Enriched => parse_enriched(doc)?,
        _ => parse_topical_chat(doc)?,
    };
    for d in &dialogues {
        d.validate()?;
    }
    Ok(dialogues)
}

fn decode<T: DeserializeOwned>(
    dialogue: &str,
    prefix: &str,
    value: Value,
) -> Result<T, CorpusError> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let field = match (prefix.is_empty(), path == ".") {
            (true, _) => path,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{path}"),
        };
        CorpusError::field(dialogue, field, err.into_inner().to_string())
    })
}

#[derive(Deserialize)]
struct RawConversation {
    reading_sets: Option<RawRefs>,
    content: Vec<RawMessage>,
}

#[derive(Deserialize)]
struct RawRefs {
    agent_1: Option<String>,
    agent_2: Option<String>,
}

#[derive(Deserialize)]
struct RawMessage {
    agent: Speaker,
    message: String,
    #[serde(default)]
    topics: Option<Vec<Topic>>,
}

fn refs_from(dialogue: &str, refs: Option<RawRefs>) -> Result<ReadingSetRefs, CorpusError> {
    let refs = refs.ok_or_else(|| {
        CorpusError::field(dialogue, "reading_sets", "missing reading-set references")
    })?;
    let agent_1 = refs.agent_1.ok_or_else(|| {
        CorpusError::field(
            dialogue,
            "reading_sets.agent_1",
            "missing reading-set reference",
        )
    })?;
    let agent_2 = refs.agent_2.ok_or_else(|| {
        CorpusError::field(
            dialogue,
            "reading_sets.agent_2",
            "missing reading-set reference",
        )
    })?;
    Ok(ReadingSetRefs { agent_1, agent_2 })
}

fn parse_topical_chat(doc: Value) -> Result<Vec<Dialogue>, CorpusError> {
    let Value::Object(map) = doc else {
        return Err(CorpusError::field(
            "<root>",
            "<root>",
            "expected an object keyed by conversation id",
        ));
    };
    let mut dialogues = Vec::with_capacity(map.len());
    for (id, value) in map {
        let raw: RawConversation = decode(&id, "", value)?;
        let reading_sets = refs_from(&id, raw.reading_sets)?;
        let mut turns = Vec::with_capacity(raw.content.len());
        for (idx, msg) in raw.content.into_iter().enumerate() {
            if msg.message.trim().is_empty() {
                return Err(CorpusError::field(
                    &id,
                    format!("content[{idx}].message"),
                    "empty message",
                ));
            }
            let mut turn = Turn::new(msg.agent, msg.message);
            turn.topics = msg.topics;
            turns.push(turn);
        }
        let dialogue = Dialogue {
            id,
            reading_sets,
            turns,
        };
        // alternation errors in this layout should name `content`, not `turns`
        dialogue.validate().map_err(|err| match err {
            CorpusError::Field {
                dialogue,
                field,
                message,
            } => CorpusError::Field {
                dialogue,
                field: field.replacen("turns", "content", 1),
                message,
            },
            other => other,
        })?;
        dialogues.push(dialogue);
    }
    Ok(dialogues)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnrichedDocument {
    format: String,
    version: u32,
    dialogues: Vec<Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnrichedDialogue {
    id: String,
    reading_sets: Option<RawRefsOut>,
    turns: Vec<EnrichedTurn>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRefsOut {
    agent_1: Option<String>,
    agent_2: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnrichedTurn {
    agent: Speaker,
    message: String,
    sentences: Vec<EnrichedSentence>,
    topics: Option<Vec<Topic>>,
    turn_knowledge_id: Option<KnowledgeId>,
    turn_knowledge_score: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnrichedSentence {
    text: String,
    da: Option<DialogueAct>,
    da_confidence: Option<f64>,
    knowledge_id: Option<KnowledgeId>,
    knowledge_score: Option<f64>,
}

fn link_from(
    dialogue: &str,
    field: &str,
    id: Option<KnowledgeId>,
    score: Option<f64>,
) -> Result<Option<KnowledgeLink>, CorpusError> {
    match (id, score) {
        (None, None) => Ok(None),
        (knowledge_id, Some(score)) => Ok(Some(KnowledgeLink {
            knowledge_id,
            score,
        })),
        (Some(_), None) => Err(CorpusError::field(
            dialogue,
            field,
            "knowledge id without a score",
        )),
    }
}

fn parse_enriched(doc: Value) -> Result<Vec<Dialogue>, CorpusError> {
    let doc: EnrichedDocument = decode("<root>", "", doc)?;
    if doc.format != ENRICHED_FORMAT || doc.version != ENRICHED_VERSION {
        return Err(CorpusError::field(
            "<root>",
            "format",
            format!(
                "expected {ENRICHED_FORMAT} v{ENRICHED_VERSION}, found {} v{}",
                doc.format, doc.version
            ),
        ));
    }
    let mut dialogues = Vec::with_capacity(doc.dialogues.len());
    for (didx, value) in doc.dialogues.into_iter().enumerate() {
        let id = value
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("<dialogues[{didx}]>"));
        let raw: EnrichedDialogue = decode(&id, "", value)?;
        let reading_sets = refs_from(
            &id,
            raw.reading_sets.map(|r| RawRefs {
                agent_1: r.agent_1,
                agent_2: r.agent_2,
            }),
        )?;
        let mut turns = Vec::with_capacity(raw.turns.len());
        for (tidx, t) in raw.turns.into_iter().enumerate() {
            let mut sentences = Vec::with_capacity(t.sentences.len());
            for (sidx, s) in t.sentences.into_iter().enumerate() {
                let at = format!("turns[{tidx}].sentences[{sidx}]");
                let da = match (s.da, s.da_confidence) {
                    (None, None) => None,
                    (Some(act), Some(confidence)) => Some(TaggedAct { act, confidence }),
                    (Some(_), None) => {
                        return Err(CorpusError::field(
                            &id,
                            format!("{at}.da_confidence"),
                            "act without a confidence",
                        ))
                    }
                    (None, Some(_)) => {
                        return Err(CorpusError::field(
                            &id,
                            format!("{at}.da"),
                            "confidence without an act",
                        ))
                    }
                };
                let knowledge = link_from(
                    &id,
                    &format!("{at}.knowledge_score"),
                    s.knowledge_id,
                    s.knowledge_score,
                )?;
                sentences.push(SentenceUnit {
                    text: s.text,
                    da,
                    knowledge,
                });
            }
            let turn_knowledge = link_from(
                &id,
                &format!("turns[{tidx}].turn_knowledge_score"),
                t.turn_knowledge_id,
                t.turn_knowledge_score,
            )?;
            turns.push(Turn {
                speaker: t.agent,
                raw_text: t.message,
                sentences,
                topics: t.topics,
                turn_knowledge,
            });
        }
        dialogues.push(Dialogue {
            id,
            reading_sets,
            turns,
        });
    }
    Ok(dialogues)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn enriched_value(dialogues: &[Dialogue]) -> Value {
    let doc = EnrichedDocument {
        format: ENRICHED_FORMAT.to_string(),
        version: ENRICHED_VERSION,
        dialogues: dialogues
            .iter()
            .map(|d| {
                let dialogue = EnrichedDialogue {
                    id: d.id.clone(),
                    reading_sets: Some(RawRefsOut {
                        agent_1: Some(d.reading_sets.agent_1.clone()),
                        agent_2: Some(d.reading_sets.agent_2.clone()),
                    }),
                    turns: d
                        .turns
                        .iter()
                        .map(|t| EnrichedTurn {
                            agent: t.speaker,
                            message: t.raw_text.clone(),
                            sentences: t
                                .sentences
                                .iter()
                                .map(|s| EnrichedSentence {
                                    text: s.text.clone(),
                                    da: s.da.map(|d| d.act),
                                    da_confidence: s.da.map(|d| round6(d.confidence)),
                                    knowledge_id: s.knowledge.and_then(|k| k.knowledge_id),
                                    knowledge_score: s.knowledge.map(|k| round6(k.score)),
                                })
                                .collect(),
                            topics: t.topics.clone(),
                            turn_knowledge_id: t.turn_knowledge.and_then(|k| k.knowledge_id),
                            turn_knowledge_score: t.turn_knowledge.map(|k| round6(k.score)),
                        })
                        .collect(),
                };
                serde_json::to_value(dialogue).expect("enriched dialogue serializes")
            })
            .collect(),
    };
    sort_keys(serde_json::to_value(doc).expect("enriched document serializes"))
}

/// Recursively reorders object keys lexicographically.
pub fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut sorted = Map::new();
            for (k, v) in entries {
                sorted.insert(k, sort_keys(v));
            }
            Value::Object(sorted)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Canonical enriched JSON: sorted keys, scores rounded to 6 decimals,
/// two-space indentation and a trailing newline.
pub fn to_enriched_string(dialogues: &[Dialogue]) -> String {
    let mut out = serde_json::to_string_pretty(&enriched_value(dialogues))
        .expect("JSON values always serialize");
    out.push('\n');
    out
}

pub fn write_enriched(dialogues: &[Dialogue], path: &Path) -> Result<(), CorpusError> {
    fs::write(path, to_enriched_string(dialogues)).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A sentence in a conversation's knowledge corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSentence {
    pub id: KnowledgeId,
    pub text: String,
    pub doc: String,
    pub entity: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeCorpus {
    pub source_doc: String,
    pub sentences: Vec<KnowledgeSentence>,
}

impl KnowledgeCorpus {
    /// Numbers `texts` from 0 in order. Empty texts are rejected.
    pub fn from_texts<I, S>(source_doc: &str, texts: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut sentences = Vec::new();
        for (i, text) in texts.into_iter().enumerate() {
            let text = text.into();
            if text.trim().is_empty() {
                return Err(CorpusError::ReadingSet {
                    doc: source_doc.to_string(),
                    message: format!("sentence {i} is empty"),
                });
            }
            sentences.push(KnowledgeSentence {
                id: KnowledgeId(i as u32),
                text,
                doc: source_doc.to_string(),
                entity: String::new(),
            });
        }
        Ok(KnowledgeCorpus {
            source_doc: source_doc.to_string(),
            sentences,
        })
    }

    pub fn get(&self, id: KnowledgeId) -> Option<&KnowledgeSentence> {
        self.sentences.get(id.0 as usize).filter(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Entity name and its knowledge sentences.
type Entity = (String, Vec<String>);

/// All reading-set documents of a corpus, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadingSets {
    docs: Vec<(String, Vec<Entity>)>,
}

impl ReadingSets {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&read_file(path)?)
    }

    pub fn parse(input: &str) -> Result<Self, CorpusError> {
        let map: Map<String, Value> = serde_json::from_str(input)?;
        let mut docs = Vec::with_capacity(map.len());
        for (doc, entities) in map {
            let Value::Object(entities) = entities else {
                return Err(CorpusError::ReadingSet {
                    doc,
                    message: "expected an object mapping entity to knowledge sentences".into(),
                });
            };
            let mut parsed = Vec::with_capacity(entities.len());
            for (entity, sentences) in entities {
                let sentences: Vec<String> =
                    serde_json::from_value(sentences).map_err(|e| CorpusError::ReadingSet {
                        doc: doc.clone(),
                        message: format!("entity `{entity}`: {e}"),
                    })?;
                if let Some(pos) = sentences.iter().position(|s| s.trim().is_empty()) {
                    return Err(CorpusError::ReadingSet {
                        doc,
                        message: format!("entity `{entity}`: sentence {pos} is empty"),
                    });
                }
                parsed.push((entity, sentences));
            }
            docs.push((doc, parsed));
        }
        Ok(ReadingSets { docs })
    }

    pub fn insert(&mut self, doc: impl Into<String>, entities: Vec<Entity>) {
        self.docs.push((doc.into(), entities));
    }

    pub fn contains(&self, doc: &str) -> bool {
        self.docs.iter().any(|(d, _)| d == doc)
    }

    /// Flattens the documents named by `docs` (duplicates skipped) into one
    /// corpus numbered in document, entity, sentence order.
    pub fn corpus_for_docs(
        &self,
        dialogue: &str,
        docs: &[&str],
    ) -> Result<KnowledgeCorpus, CorpusError> {
        let mut seen: Vec<&str> = Vec::new();
        let mut sentences = Vec::new();
        for &doc in docs {
            if seen.contains(&doc) {
                continue;
            }
            seen.push(doc);
            let (_, entities) = self.docs.iter().find(|(d, _)| d == doc).ok_or_else(|| {
                CorpusError::MissingReadingSet {
                    dialogue: dialogue.to_string(),
                    doc: doc.to_string(),
                }
            })?;
            for (entity, texts) in entities {
                for text in texts {
                    sentences.push(KnowledgeSentence {
                        id: KnowledgeId(sentences.len() as u32),
                        text: text.clone(),
                        doc: doc.to_string(),
                        entity: entity.clone(),
                    });
                }
            }
        }
        Ok(KnowledgeCorpus {
            source_doc: seen.join("+"),
            sentences,
        })
    }

    /// Knowledge corpus for a conversation: both speakers' reading sets.
    pub fn corpus_for(&self, dialogue: &Dialogue) -> Result<KnowledgeCorpus, CorpusError> {
        self.corpus_for_docs(
            &dialogue.id,
            &[
                &dialogue.reading_sets.agent_1,
                &dialogue.reading_sets.agent_2,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStatistics {
    pub turns: usize,
    pub sentences: usize,
    pub words: usize,
    pub avg_words: f64,
    pub avg_sentences: f64,
    /// Sentence counts per tagged act; untagged sentences are not counted.
    pub da_histogram: BTreeMap<DialogueAct, usize>,
}

pub fn corpus_statistics(dialogues: &[Dialogue]) -> Result<CorpusStatistics, CorpusError> {
    let mut turns = 0usize;
    let mut sentences = 0usize;
    let mut words = 0usize;
    let mut da_histogram = BTreeMap::new();
    for turn in dialogues.iter().flat_map(|d| &d.turns) {
        turns += 1;
        sentences += turn.sentences.len();
        words += word_count(&turn.raw_text);
        for s in &turn.sentences {
            if let Some(tag) = s.da {
                *da_histogram.entry(tag.act).or_insert(0) += 1;
            }
        }
    }
    if turns == 0 {
        return Err(CorpusError::Empty);
    }
    Ok(CorpusStatistics {
        turns,
        sentences,
        words,
        avg_words: words as f64 / turns as f64,
        avg_sentences: sentences as f64 / turns as f64,
        da_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"{
      "t_1": {
        "reading_sets": {"agent_1": "d1", "agent_2": "d2"},
        "content": [
          {"agent": "agent_1", "message": "Hi! Do you like football?", "topics": ["sports"], "sentiment": "Happy"},
          {"agent": "agent_2", "message": "I do. The NFL is fun."}
        ]
      },
      "t_0": {
        "reading_sets": {"agent_1": "d1", "agent_2": "d1"},
        "content": [
          {"agent": "agent_2", "message": "hello"}
        ]
      }
    }"#;

    fn refs() -> ReadingSetRefs {
        ReadingSetRefs {
            agent_1: "d1".into(),
            agent_2: "d2".into(),
        }
    }

    #[test]
    fn loads_two_dialogues_in_file_order() {
        let ds = parse_dialogues(TWO, CorpusFormat::TopicalChat).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].id, "t_1");
        assert_eq!(ds[1].id, "t_0");
        assert_eq!(ds[0].turns.len(), 2);
        assert_eq!(ds[1].turns.len(), 1);
        assert_eq!(ds[0].turns[0].sentences.len(), 2);
        assert_eq!(ds[0].turns[0].topics, Some(vec![Topic::Sports]));
        assert_eq!(ds[0].turns[1].topics, None);
    }

    #[test]
    fn empty_document_is_empty_corpus() {
        assert!(parse_dialogues("", CorpusFormat::Auto).unwrap().is_empty());
        assert!(parse_dialogues(" \n", CorpusFormat::TopicalChat)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn repeated_speaker_names_the_turn() {
        let input = r#"{"t_9": {"reading_sets": {"agent_1": "a", "agent_2": "b"}, "content": [
            {"agent": "agent_1", "message": "one"},
            {"agent": "agent_2", "message": "two"},
            {"agent": "agent_2", "message": "three"}]}}"#;
        match parse_dialogues(input, CorpusFormat::TopicalChat).unwrap_err() {
            CorpusError::Field {
                dialogue, field, ..
            } => {
                assert_eq!(dialogue, "t_9");
                assert_eq!(field, "content[2].agent");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_dialogue_and_field() {
        let input = r#"{"t_3": {"reading_sets": {"agent_1": "a", "agent_2": "b"}, "content": [
            {"agent": "agent_1", "message": 7}]}}"#;
        match parse_dialogues(input, CorpusFormat::TopicalChat).unwrap_err() {
            CorpusError::Field {
                dialogue, field, ..
            } => {
                assert_eq!(dialogue, "t_3");
                assert_eq!(field, "content[0].message");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_topic = r#"{"t_4": {"reading_sets": {"agent_1": "a", "agent_2": "b"}, "content": [
            {"agent": "agent_1", "message": "x", "topics": ["cooking"]}]}}"#;
        assert!(matches!(
            parse_dialogues(bad_topic, CorpusFormat::TopicalChat),
            Err(CorpusError::Field { field, .. }) if field == "content[0].topics[0]"
        ));
    }

    #[test]
    fn missing_reading_set_ref_is_an_error() {
        let input = r#"{"t_5": {"reading_sets": {"agent_1": "a"}, "content": []}}"#;
        assert!(matches!(
            parse_dialogues(input, CorpusFormat::TopicalChat),
            Err(CorpusError::Field { field, .. }) if field == "reading_sets.agent_2"
        ));
        let none = r#"{"t_6": {"content": []}}"#;
        assert!(matches!(
            parse_dialogues(none, CorpusFormat::TopicalChat),
            Err(CorpusError::Field { field, .. }) if field == "reading_sets"
        ));
    }

    fn annotated() -> Vec<Dialogue> {
        let mut ds = parse_dialogues(TWO, CorpusFormat::TopicalChat).unwrap();
        let turn = &mut ds[0].turns[0];
        turn.turn_knowledge = Some(KnowledgeLink {
            knowledge_id: Some(KnowledgeId(2)),
            score: 0.123_456_789,
        });
        turn.sentences[0].da = Some(TaggedAct {
            act: DialogueAct::Salutation,
            confidence: 0.9,
        });
        turn.sentences[0].knowledge = Some(KnowledgeLink {
            knowledge_id: None,
            score: 0.05,
        });
        turn.sentences[1].da = Some(TaggedAct {
            act: DialogueAct::NoDialogueAct,
            confidence: 0.3,
        });
        ds
    }

    #[test]
    fn enriched_round_trip_and_byte_stability() {
        let ds = annotated();
        let first = to_enriched_string(&ds);
        let reloaded = parse_dialogues(&first, CorpusFormat::Auto).unwrap();
        assert_eq!(to_enriched_string(&reloaded), first);
        let again =
            parse_dialogues(&to_enriched_string(&reloaded), CorpusFormat::Enriched).unwrap();
        assert_eq!(again, reloaded);
        // scores are quantized to six decimals on write
        assert_eq!(reloaded[0].turns[0].turn_knowledge.unwrap().score, 0.123457);
        assert_eq!(reloaded[0].turns[1], ds[0].turns[1]);
    }

    #[test]
    fn enriched_schema_keys() {
        let v: Value = serde_json::from_str(&to_enriched_string(&annotated())).unwrap();
        let turn = &v["dialogues"][0]["turns"][0];
        for key in [
            "agent",
            "message",
            "sentences",
            "topics",
            "turn_knowledge_id",
            "turn_knowledge_score",
        ] {
            assert!(turn.get(key).is_some(), "turn key {key}");
        }
        let sentence = &turn["sentences"][0];
        for key in [
            "text",
            "da",
            "da_confidence",
            "knowledge_id",
            "knowledge_score",
        ] {
            assert!(sentence.get(key).is_some(), "sentence key {key}");
        }
        assert_eq!(sentence["da"], "Salutation");
        assert_eq!(turn["topics"][0], "sports");
        assert_eq!(turn["turn_knowledge_id"], 2);
        let keys: Vec<_> = turn.as_object().unwrap().keys().cloned().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn enriched_rejects_low_confidence_label() {
        let mut ds = annotated();
        ds[0].turns[0].sentences[0].da = Some(TaggedAct {
            act: DialogueAct::Statement,
            confidence: 0.4,
        });
        let text = to_enriched_string(&ds);
        assert!(matches!(
            parse_dialogues(&text, CorpusFormat::Enriched),
            Err(CorpusError::Field { field, .. }) if field == "turns[0].sentences[0].da"
        ));
    }

    #[test]
    fn statistics_examples() {
        let one = Dialogue {
            id: "x".into(),
            reading_sets: refs(),
            turns: vec![Turn::new(Speaker::A, "a b c. d e.")],
        };
        let stats = corpus_statistics(std::slice::from_ref(&one)).unwrap();
        assert_eq!(stats.avg_words, 5.0);
        assert_eq!(stats.avg_sentences, 2.0);

        let two = Dialogue {
            id: "y".into(),
            reading_sets: refs(),
            turns: vec![
                Turn::new(Speaker::A, "a b c d"),
                Turn::new(Speaker::B, "a b c d e f"),
            ],
        };
        assert_eq!(corpus_statistics(&[two]).unwrap().avg_words, 5.0);
        assert!(matches!(corpus_statistics(&[]), Err(CorpusError::Empty)));
    }

    #[test]
    fn reading_sets_flatten_both_speakers() {
        let rs = ReadingSets::parse(
            r#"{"d1": {"NFL": ["The NFL is a league.", "It has 32 teams."]},
                "d2": {"Golf": ["Golf is old."], "Tiger Woods": ["He won a lot."]}}"#,
        )
        .unwrap();
        let ds = parse_dialogues(TWO, CorpusFormat::TopicalChat).unwrap();
        let corpus = rs.corpus_for(&ds[0]).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.source_doc, "d1+d2");
        assert_eq!(corpus.sentences[2].entity, "Golf");
        assert_eq!(corpus.get(KnowledgeId(3)).unwrap().text, "He won a lot.");
        // both speakers share d1: sentences are not duplicated
        assert_eq!(rs.corpus_for(&ds[1]).unwrap().len(), 2);

        let missing = Dialogue {
            id: "z".into(),
            reading_sets: ReadingSetRefs {
                agent_1: "d1".into(),
                agent_2: "nope".into(),
            },
            turns: vec![],
        };
        assert!(matches!(
            rs.corpus_for(&missing),
            Err(CorpusError::MissingReadingSet { doc, .. }) if doc == "nope"
        ));
        assert!(ReadingSets::parse(r#"{"d": {"e": [""]}}"#).is_err());
    }
}

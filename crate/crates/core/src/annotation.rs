//! Automatic corpus annotation and ground-truth action plans.
//!
//! Knowledge links are computed with the same scorer as run-time selection,
//! but against the annotated span itself (whole turn, or each sentence).
//! Dialogue acts come from an external tagger's JSON-lines output, or from
//! [`HeuristicTagger`] for offline fixtures.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    CorpusError, Dialogue, KnowledgeCorpus, KnowledgeId, KnowledgeLink, TaggedAct, Turn,
    DA_CONFIDENCE_FLOOR,
};
use crate::labels::{DialogueAct, Topic};
use crate::policy::PolicyDecision;
use crate::retrieval::RetrievalIndex;
use crate::text::{index_tokens, TokenizerConfig};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("turn has {sentences} sentence(s) but {tags} tag(s)")]
    LengthMismatch { sentences: usize, tags: usize },
    #[error("confidence floor {0} must lie in [0.5, 1]")]
    InvalidFloor(f64),
    #[error("tag file line {line}: {message}")]
    TagFile { line: usize, message: String },
    #[error("dialogue `{dialogue}` turn {turn}: no tags in tag file")]
    MissingTags { dialogue: String, turn: usize },
    #[error("dialogue `{dialogue}` turn {turn}: missing {}", .attributes.join(", "))]
    MissingAnnotation {
        dialogue: String,
        turn: usize,
        attributes: Vec<String>,
    },
    #[error("knowledge {0} is not in the conversation's corpus")]
    UnknownKnowledge(KnowledgeId),
    #[error("no tag for sentence `{0}`")]
    Untagged(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn link(index: &RetrievalIndex, text: &str, threshold: f64) -> KnowledgeLink {
    if text.trim().is_empty() {
        return KnowledgeLink {
            knowledge_id: None,
            score: 0.0,
        };
    }
    let selection = index.select(text, threshold);
    KnowledgeLink {
        knowledge_id: selection.effective_id(),
        score: selection.score,
    }
}

/// Links the whole turn to its best knowledge sentence when the score
/// reaches `threshold`; otherwise records the score with no link.
pub fn annotate_turn_knowledge(index: &RetrievalIndex, turn: &Turn, threshold: f64) -> Turn {
    let mut out = turn.clone();
    out.turn_knowledge = Some(link(index, &turn.raw_text, threshold));
    out
}

/// Links each sentence independently by the same rule.
pub fn annotate_sentence_knowledge(index: &RetrievalIndex, turn: &Turn, threshold: f64) -> Turn {
    let mut out = turn.clone();
    for sentence in &mut out.sentences {
        sentence.knowledge = Some(link(index, &sentence.text, threshold));
    }
    out
}

/// Applies tagger output: the label is kept when its confidence reaches
/// `confidence_floor`, otherwise the sentence gets `NoDialogueAct`.
pub fn ingest_da_tags(
    turn: &Turn,
    tags: &[TaggedAct],
    confidence_floor: f64,
) -> Result<Turn, AnnotationError> {
    if !(DA_CONFIDENCE_FLOOR..=1.0).contains(&confidence_floor) {
        return Err(AnnotationError::InvalidFloor(confidence_floor));
    }
    if tags.len() != turn.sentences.len() {
        return Err(AnnotationError::LengthMismatch {
            sentences: turn.sentences.len(),
            tags: tags.len(),
        });
    }
    let mut out = turn.clone();
    for (sentence, tag) in out.sentences.iter_mut().zip(tags) {
        let act = if tag.confidence >= confidence_floor {
            tag.act
        } else {
            DialogueAct::NoDialogueAct
        };
        sentence.da = Some(TaggedAct {
            act,
            confidence: tag.confidence,
        });
    }
    Ok(out)
}

/// One line of a tagger output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagRecord {
    pub dialogue_id: String,
    pub turn_idx: usize,
    pub sent_idx: usize,
    pub label: String,
    pub confidence: f64,
}

/// sent_idx, tag and source line of one record awaiting its turn.
type StagedTag = (usize, TaggedAct, usize);

/// Tagger output grouped per turn. Labels are validated on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagTable {
    turns: HashMap<(String, usize), Vec<TaggedAct>>,
}

impl TagTable {
    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(input: &str) -> Result<Self, AnnotationError> {
        let mut staged: HashMap<(String, usize), Vec<StagedTag>> = HashMap::new();
        for (n, line) in input.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TagRecord =
                serde_json::from_str(line).map_err(|e| AnnotationError::TagFile {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let act = rec
                .label
                .parse::<DialogueAct>()
                .map_err(|_| AnnotationError::TagFile {
                    line: line_no,
                    message: format!("unknown dialogue act label `{}`", rec.label),
                })?;
            if !(0.0..=1.0).contains(&rec.confidence) {
                return Err(AnnotationError::TagFile {
                    line: line_no,
                    message: format!("confidence {} outside [0, 1]", rec.confidence),
                });
            }
            staged
                .entry((rec.dialogue_id, rec.turn_idx))
                .or_default()
                .push((
                    rec.sent_idx,
                    TaggedAct {
                        act,
                        confidence: rec.confidence,
                    },
                    line_no,
                ));
        }
        let mut turns = HashMap::with_capacity(staged.len());
        for (key, mut tags) in staged {
            tags.sort_by_key(|(idx, _, _)| *idx);
            for (expected, (idx, _, line)) in tags.iter().enumerate() {
                if *idx != expected {
                    return Err(AnnotationError::TagFile {
                        line: *line,
                        message: format!(
                            "dialogue `{}` turn {}: sentence indices must run 0..n without gaps or repeats",
                            key.0, key.1
                        ),
                    });
                }
            }
            turns.insert(key, tags.into_iter().map(|(_, t, _)| t).collect());
        }
        Ok(TagTable { turns })
    }

    pub fn get(&self, dialogue: &str, turn: usize) -> Option<&[TaggedAct]> {
        self.turns
            .get(&(dialogue.to_string(), turn))
            .map(Vec::as_slice)
    }

    /// Records for every tagged sentence, as JSON lines.
    pub fn records_for(dialogues: &[Dialogue]) -> Vec<TagRecord> {
        let mut out = Vec::new();
        for d in dialogues {
            for (t, turn) in d.turns.iter().enumerate() {
                for (s, sentence) in turn.sentences.iter().enumerate() {
                    if let Some(tag) = sentence.da {
                        out.push(TagRecord {
                            dialogue_id: d.id.clone(),
                            turn_idx: t,
                            sent_idx: s,
                            label: tag.act.to_string(),
                            confidence: tag.confidence,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Assigns an act (with confidence) to a single sentence.
pub trait DaTagger {
    fn tag(&self, sentence: &str) -> Result<TaggedAct, AnnotationError>;
}

/// Rule-based stand-in for the SVM tagger: question form, then
/// sentence-initial lexicons, else Statement.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTagger;

const WH_WORDS: &[&str] = &[
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how",
];
const GREETINGS: &[&str] = &[
    "hi",
    "hello",
    "hey",
    "greetings",
    "good morning",
    "good afternoon",
    "good evening",
    "bye",
    "goodbye",
    "see you",
    "nice chatting",
    "nice talking",
    "nice to chat",
    "it was nice",
    "have a good",
    "have a great",
    "take care",
];
const THANKS: &[&str] = &["thank", "thanks", "thx"];
const APOLOGIES: &[&str] = &["sorry", "i apologize", "my apologies", "apologies"];
const COMMISSIVES: &[&str] = &[
    "i will",
    "i'll",
    "i am going to",
    "i'm going to",
    "let me",
    "i promise",
];
const DIRECTIVES: &[&str] = &[
    "let's",
    "maybe you should",
    "you should",
    "please",
    "try",
    "check out",
    "you have to",
];
const FEEDBACK: &[&str] = &[
    "yeah",
    "yes",
    "yep",
    "wow",
    "oh",
    "cool",
    "interesting",
    "nice",
    "ok",
    "okay",
    "right",
    "sure",
    "haha",
    "lol",
    "true",
    "awesome",
    "great",
    "hmm",
    "ah",
    "agreed",
    "indeed",
];
const FEEDBACK_MAX_WORDS: usize = 6;

fn words(text: &str) -> Vec<String> {
    index_tokens(text, TokenizerConfig::default())
}

fn starts_with_phrase(words: &[String], lexicon: &[&str]) -> bool {
    lexicon.iter().any(|phrase| {
        let phrase = self::words(phrase);
        words.len() >= phrase.len() && words[..phrase.len()] == phrase[..]
    })
}

impl HeuristicTagger {
    pub fn classify(&self, sentence: &str) -> TaggedAct {
        let w = words(sentence);
        let trimmed =
            sentence.trim_end_matches(|c: char| c.is_whitespace() || "\"')]\u{201d}".contains(c));
        let tag = |act, confidence| TaggedAct { act, confidence };
        if trimmed.ends_with('?') {
            if starts_with_phrase(&w, &["did you know"]) {
                return tag(DialogueAct::PropQ, 0.9);
            }
            if w.first()
                .is_some_and(|first| WH_WORDS.contains(&first.as_str()))
            {
                return tag(DialogueAct::SetQ, 0.85);
            }
            if w.iter().any(|x| x == "or") {
                return tag(DialogueAct::ChoiceQ, 0.8);
            }
            return tag(DialogueAct::PropQ, 0.8);
        }
        if starts_with_phrase(&w, GREETINGS) {
            return tag(DialogueAct::Salutation, 0.9);
        }
        if starts_with_phrase(&w, THANKS) {
            return tag(DialogueAct::Thanking, 0.9);
        }
        if starts_with_phrase(&w, APOLOGIES) {
            return tag(DialogueAct::Apology, 0.9);
        }
        if starts_with_phrase(&w, COMMISSIVES) {
            return tag(DialogueAct::Commissive, 0.8);
        }
        if starts_with_phrase(&w, DIRECTIVES) {
            return tag(DialogueAct::Directive, 0.8);
        }
        if w.len() <= FEEDBACK_MAX_WORDS && starts_with_phrase(&w, FEEDBACK) {
            return tag(DialogueAct::Feedback, 0.8);
        }
        tag(DialogueAct::Statement, 0.7)
    }
}

impl DaTagger for HeuristicTagger {
    fn tag(&self, sentence: &str) -> Result<TaggedAct, AnnotationError> {
        Ok(self.classify(sentence))
    }
}

/// Tags looked up by exact sentence text, e.g. from an external tagger run
/// over generated output.
#[derive(Debug, Clone, Default)]
pub struct LookupTagger(pub HashMap<String, TaggedAct>);

impl DaTagger for LookupTagger {
    fn tag(&self, sentence: &str) -> Result<TaggedAct, AnnotationError> {
        self.0
            .get(sentence)
            .copied()
            .ok_or_else(|| AnnotationError::Untagged(sentence.to_string()))
    }
}

/// Where sentence acts come from during corpus annotation.
pub enum TagSource<'a> {
    Table(&'a TagTable),
    Tagger(&'a dyn DaTagger),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationConfig {
    pub threshold: f64,
    pub confidence_floor: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            threshold: crate::retrieval::DEFAULT_THRESHOLD,
            confidence_floor: DA_CONFIDENCE_FLOOR,
        }
    }
}

/// Turn- and sentence-level knowledge plus dialogue acts for every turn.
pub fn annotate_dialogue(
    dialogue: &Dialogue,
    index: &RetrievalIndex,
    tags: &TagSource<'_>,
    config: AnnotationConfig,
) -> Result<Dialogue, AnnotationError> {
    let mut out = dialogue.clone();
    for (t, turn) in dialogue.turns.iter().enumerate() {
        let linked = annotate_turn_knowledge(index, turn, config.threshold);
        let linked = annotate_sentence_knowledge(index, &linked, config.threshold);
        let turn_tags: Vec<TaggedAct> = match tags {
            TagSource::Table(table) => table
                .get(&dialogue.id, t)
                .ok_or_else(|| AnnotationError::MissingTags {
                    dialogue: dialogue.id.clone(),
                    turn: t,
                })?
                .to_vec(),
            TagSource::Tagger(tagger) => linked
                .sentences
                .iter()
                .map(|s| tagger.tag(&s.text))
                .collect::<Result<_, _>>()?,
        };
        out.turns[t] = ingest_da_tags(&linked, &turn_tags, config.confidence_floor)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRef {
    pub id: KnowledgeId,
    pub text: String,
}

impl KnowledgeRef {
    pub fn resolve(corpus: &KnowledgeCorpus, id: KnowledgeId) -> Result<Self, AnnotationError> {
        let sentence = corpus
            .get(id)
            .ok_or(AnnotationError::UnknownKnowledge(id))?;
        Ok(KnowledgeRef {
            id,
            text: sentence.text.clone(),
        })
    }
}

/// Control attributes for one sentence: act, topic, knowledge and the
/// use-knowledge flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub da: DialogueAct,
    pub topic: Option<Topic>,
    pub knowledge: Option<KnowledgeRef>,
    pub use_knowledge: bool,
}

impl Frame {
    pub fn new(da: DialogueAct) -> Self {
        Frame {
            da,
            topic: None,
            knowledge: None,
            use_knowledge: false,
        }
    }

    pub fn with_knowledge(mut self, knowledge: KnowledgeRef) -> Self {
        self.knowledge = Some(knowledge);
        self.use_knowledge = true;
        self
    }

    pub fn with_topic(mut self, topic: Option<Topic>) -> Self {
        self.topic = topic;
        self
    }
}

/// One frame per sentence of a turn, plus the turn-level knowledge sentence
/// used by variants conditioned on turn knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub frames: Vec<Frame>,
    pub turn_knowledge: Option<KnowledgeRef>,
}

impl ActionPlan {
    /// Plan from a policy decision: frame i carries the selected knowledge
    /// iff the decision attaches it to act i.
    pub fn from_decision(
        decision: &PolicyDecision,
        topic: Option<Topic>,
        corpus: Option<&KnowledgeCorpus>,
    ) -> Result<Self, AnnotationError> {
        let selected = match (decision.knowledge.effective_id(), corpus) {
            (Some(id), Some(corpus)) => Some(KnowledgeRef::resolve(corpus, id)?),
            _ => None,
        };
        let frames = decision
            .acts
            .iter()
            .zip(&decision.attach_knowledge)
            .map(|(&act, &attach)| {
                let frame = Frame::new(act).with_topic(topic);
                match (&selected, attach) {
                    (Some(k), true) => frame.with_knowledge(k.clone()),
                    _ => frame,
                }
            })
            .collect();
        Ok(ActionPlan {
            frames,
            turn_knowledge: selected,
        })
    }
}

/// Ground-truth plans for every turn of an annotated dialogue.
pub fn assemble_action_plans(
    dialogue: &Dialogue,
    corpus: &KnowledgeCorpus,
) -> Result<Vec<ActionPlan>, AnnotationError> {
    dialogue
        .turns
        .iter()
        .enumerate()
        .map(|(t, turn)| assemble_turn(dialogue, t, turn, corpus))
        .collect()
}

fn assemble_turn(
    dialogue: &Dialogue,
    t: usize,
    turn: &Turn,
    corpus: &KnowledgeCorpus,
) -> Result<ActionPlan, AnnotationError> {
    let mut missing = Vec::new();
    if turn.topics.is_none() {
        missing.push("topics".to_string());
    }
    if turn.turn_knowledge.is_none() {
        missing.push("turn knowledge".to_string());
    }
    for (s, sentence) in turn.sentences.iter().enumerate() {
        if sentence.da.is_none() {
            missing.push(format!("sentence {s} dialogue act"));
        }
        if sentence.knowledge.is_none() {
            missing.push(format!("sentence {s} knowledge"));
        }
    }
    if !missing.is_empty() {
        return Err(AnnotationError::MissingAnnotation {
            dialogue: dialogue.id.clone(),
            turn: t,
            attributes: missing,
        });
    }
    let topic = turn.topics.as_ref().and_then(|ts| ts.first().copied());
    let turn_knowledge = turn
        .turn_knowledge
        .and_then(|k| k.knowledge_id)
        .map(|id| KnowledgeRef::resolve(corpus, id))
        .transpose()?;
    let frames = turn
        .sentences
        .iter()
        .map(|s| {
            let da = s.da.expect("checked above").act;
            let frame = Frame::new(da).with_topic(topic);
            match s.knowledge.and_then(|k| k.knowledge_id) {
                Some(id) => Ok(frame.with_knowledge(KnowledgeRef::resolve(corpus, id)?)),
                None => Ok(frame),
            }
        })
        .collect::<Result<Vec<_>, AnnotationError>>()?;
    Ok(ActionPlan {
        frames,
        turn_knowledge,
    })
}

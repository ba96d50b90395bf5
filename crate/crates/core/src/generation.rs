//! Realizing action plans as text.
//!
//! [`generate_turn`] runs the sentence-level loop: each frame becomes one
//! realizer call, and every realized sentence is appended to the context
//! seen by the next call. The fields a realizer may see are fixed by the
//! model variant; [`GenerationRequest::payload`] applies that gating and is
//! shared by the template realizer and the wire format.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::annotation::{ActionPlan, Frame, KnowledgeRef};
use crate::corpus::sort_keys;
use crate::http::{JsonEndpoint, TransportError};
use crate::labels::{DialogueAct, Topic};

pub const DEFAULT_HISTORY_TOKEN_CAP: usize = 128;
pub const DEFAULT_KNOWLEDGE_TOKEN_CAP: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RealizeError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("realizer protocol error: {0}")]
    Protocol(String),
}

impl RealizeError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RealizeError::Transport(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("action plan has no frames")]
    EmptyPlan,
    #[error("realizing sentence {index} failed after {} sentence(s): {source}", .partial.len())]
    Realizer {
        index: usize,
        partial: Vec<TraceEntry>,
        source: RealizeError,
    },
}

/// Which attributes of the plan the realizer is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "da")]
    Da,
    #[serde(rename = "da+flag")]
    DaFlag,
    #[serde(rename = "da+flag+topic")]
    DaFlagTopic,
    #[serde(rename = "baseline-turn")]
    BaselineTurn,
    #[serde(rename = "baseline-sent")]
    BaselineSent,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Da,
        Variant::DaFlag,
        Variant::DaFlagTopic,
        Variant::BaselineTurn,
        Variant::BaselineSent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Da => "da",
            Variant::DaFlag => "da+flag",
            Variant::DaFlagTopic => "da+flag+topic",
            Variant::BaselineTurn => "baseline-turn",
            Variant::BaselineSent => "baseline-sent",
        }
    }

    pub fn uses_acts(self) -> bool {
        matches!(self, Variant::Da | Variant::DaFlag | Variant::DaFlagTopic)
    }

    pub fn uses_flag(self) -> bool {
        matches!(self, Variant::DaFlag | Variant::DaFlagTopic)
    }

    pub fn uses_topic(self) -> bool {
        self == Variant::DaFlagTopic
    }

    pub fn mode(self) -> Mode {
        if self == Variant::BaselineTurn {
            Mode::Turn
        } else {
            Mode::Sentence
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected da, da+flag, da+flag+topic, baseline-turn or baseline-sent)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sentence,
    Turn,
}

/// A previous turn of the conversation with its acts, if known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub text: String,
    #[serde(default)]
    pub acts: Vec<DialogueAct>,
}

impl HistoryTurn {
    pub fn new(text: impl Into<String>, acts: Vec<DialogueAct>) -> Self {
        HistoryTurn {
            text: text.into(),
            acts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub variant: Variant,
    pub include_past_das: bool,
    pub history_token_cap: usize,
    pub knowledge_token_cap: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            variant: Variant::DaFlagTopic,
            include_past_das: false,
            history_token_cap: DEFAULT_HISTORY_TOKEN_CAP,
            knowledge_token_cap: DEFAULT_KNOWLEDGE_TOKEN_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    /// Dialogue history, already truncated to the token budget.
    pub history: Vec<HistoryTurn>,
    /// The frame being realized; `None` for turn-level requests.
    pub frame: Option<Frame>,
    /// Acts of the whole plan, used in turn mode.
    pub plan_acts: Vec<DialogueAct>,
    pub turn_knowledge: Option<KnowledgeRef>,
    /// Sentences realized earlier in this turn, with their planned acts.
    pub prior_sentences: Vec<(String, DialogueAct)>,
    pub mode: Mode,
    pub variant: Variant,
    pub include_past_das: bool,
    pub knowledge_token_cap: usize,
}

/// The variant-gated view of a request: exactly what a realizer may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    pub history: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acts: Option<Vec<DialogueAct>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_knowledge: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub past_das: Option<Vec<Vec<DialogueAct>>>,
}

fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// First `cap` whitespace tokens of `text`.
pub fn truncate_knowledge(text: &str, cap: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= cap {
        text.trim().to_string()
    } else {
        tokens[..cap].join(" ")
    }
}

/// Keeps the most recent turns that fit in `cap` whitespace tokens. If the
/// latest turn alone is over budget, its last `cap` tokens are kept.
pub fn truncate_history(history: &[HistoryTurn], cap: usize) -> Vec<HistoryTurn> {
    let mut kept = Vec::new();
    let mut used = 0;
    for turn in history.iter().rev() {
        let n = whitespace_tokens(&turn.text);
        if used + n <= cap {
            used += n;
            kept.push(turn.clone());
        } else {
            if kept.is_empty() && cap > 0 {
                let tokens: Vec<&str> = turn.text.split_whitespace().collect();
                kept.push(HistoryTurn::new(
                    tokens[tokens.len() - cap..].join(" "),
                    turn.acts.clone(),
                ));
            }
            break;
        }
    }
    kept.reverse();
    kept
}

impl GenerationRequest {
    pub fn payload(&self) -> Payload {
        let variant = self.variant;
        let mut history: Vec<String> = self.history.iter().map(|t| t.text.clone()).collect();
        history.extend(self.prior_sentences.iter().map(|(s, _)| s.clone()));

        let acts = variant.uses_acts().then(|| match (&self.frame, self.mode) {
            (Some(frame), Mode::Sentence) => vec![frame.da],
            _ => self.plan_acts.clone(),
        });
        let past_das = (variant.uses_acts() && self.include_past_das).then(|| {
            self.history
                .iter()
                .map(|t| t.acts.clone())
                .chain(self.prior_sentences.iter().map(|(_, a)| vec![*a]))
                .collect()
        });
        let cap = |k: &KnowledgeRef| truncate_knowledge(&k.text, self.knowledge_token_cap);
        let frame_flag = self.frame.as_ref().map(|f| f.use_knowledge);
        let (knowledge, use_knowledge) = if variant.uses_flag() {
            let h = frame_flag.unwrap_or(false);
            let k = self.frame.as_ref().and_then(|f| f.knowledge.as_ref());
            (if h { k.map(cap) } else { None }, Some(h))
        } else {
            (self.turn_knowledge.as_ref().map(cap), None)
        };
        let topic = if variant.uses_topic() {
            self.frame.as_ref().and_then(|f| f.topic)
        } else {
            None
        };
        Payload {
            history,
            acts,
            knowledge,
            topic,
            use_knowledge,
            past_das,
        }
    }
}

/// Canonical JSON (sorted keys, compact) for the gated payload.
pub fn serialize_generation_request(request: &GenerationRequest) -> Vec<u8> {
    let value = serde_json::to_value(request.payload()).expect("payload serializes");
    serde_json::to_vec(&sort_keys(value)).expect("value serializes")
}

pub trait Realizer {
    fn realize(&self, request: &GenerationRequest) -> Result<String, RealizeError>;
}

/// One planned frame and the sentence realized for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub frame: Frame,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTurn {
    pub text: String,
    pub trace: Vec<TraceEntry>,
}

/// Sentence-level generation. Baseline-Turn plans are realized with a
/// single turn-level call and an empty trace.
pub fn generate_turn(
    history: &[HistoryTurn],
    plan: &ActionPlan,
    realizer: &dyn Realizer,
    config: &GenerationConfig,
) -> Result<GeneratedTurn, GenerationError> {
    if plan.frames.is_empty() {
        return Err(GenerationError::EmptyPlan);
    }
    if config.variant.mode() == Mode::Turn {
        let text = generate_turn_level(history, plan.turn_knowledge.as_ref(), realizer, config)?;
        return Ok(GeneratedTurn {
            text,
            trace: Vec::new(),
        });
    }
    let history = truncate_history(history, config.history_token_cap);
    let plan_acts: Vec<DialogueAct> = plan.frames.iter().map(|f| f.da).collect();
    let mut trace: Vec<TraceEntry> = Vec::with_capacity(plan.frames.len());
    for (index, frame) in plan.frames.iter().enumerate() {
        let request = GenerationRequest {
            history: history.clone(),
            frame: Some(frame.clone()),
            plan_acts: plan_acts.clone(),
            turn_knowledge: plan.turn_knowledge.clone(),
            prior_sentences: trace
                .iter()
                .map(|t| (t.sentence.clone(), t.frame.da))
                .collect(),
            mode: Mode::Sentence,
            variant: config.variant,
            include_past_das: config.include_past_das,
            knowledge_token_cap: config.knowledge_token_cap,
        };
        let sentence =
            realize_checked(realizer, &request).map_err(|source| GenerationError::Realizer {
                index,
                partial: trace.clone(),
                source,
            })?;
        trace.push(TraceEntry {
            frame: frame.clone(),
            sentence,
        });
    }
    let text = trace
        .iter()
        .map(|t| t.sentence.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(GeneratedTurn { text, trace })
}

/// One realizer call conditioned on history and knowledge only.
pub fn generate_turn_level(
    history: &[HistoryTurn],
    knowledge: Option<&KnowledgeRef>,
    realizer: &dyn Realizer,
    config: &GenerationConfig,
) -> Result<String, GenerationError> {
    let request = GenerationRequest {
        history: truncate_history(history, config.history_token_cap),
        frame: None,
        plan_acts: Vec::new(),
        turn_knowledge: knowledge.cloned(),
        prior_sentences: Vec::new(),
        mode: Mode::Turn,
        variant: Variant::BaselineTurn,
        include_past_das: false,
        knowledge_token_cap: config.knowledge_token_cap,
    };
    realize_checked(realizer, &request).map_err(|source| GenerationError::Realizer {
        index: 0,
        partial: Vec::new(),
        source,
    })
}

fn realize_checked(
    realizer: &dyn Realizer,
    request: &GenerationRequest,
) -> Result<String, RealizeError> {
    let text = realizer.realize(request)?;
    if text.trim().is_empty() {
        return Err(RealizeError::Protocol(
            "realizer returned empty text".into(),
        ));
    }
    Ok(text.trim().to_string())
}

/// Deterministic per-act templates; see [`template_realize`].
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateRealizer;

impl Realizer for TemplateRealizer {
    fn realize(&self, request: &GenerationRequest) -> Result<String, RealizeError> {
        Ok(template_realize(request))
    }
}

const LEADING_LOWERCASE: &[&str] = &[
    "the", "a", "an", "there", "it", "in", "on", "this", "that", "these", "those", "some", "many",
    "most", "one", "he", "she", "they", "his", "her", "their", "its", "at", "during", "when", "if",
];

/// Knowledge text shaped to sit inside a template: trailing terminal
/// punctuation removed and a leading function word lowercased.
fn clause(knowledge: &str) -> String {
    let trimmed = knowledge.trim().trim_end_matches(['.', '!', '?', ' ']);
    let first = trimmed.split_whitespace().next().unwrap_or("");
    if LEADING_LOWERCASE.contains(&first.to_lowercase().as_str()) {
        let mut chars = trimmed.chars();
        match chars.next() {
            Some(c) => c.to_lowercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        trimmed.to_string()
    }
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Realizes the gated payload with a fixed template per act. Knowledge is
/// embedded whenever the payload carries it, except for Feedback and
/// Salutation. Turn-mode requests realize the first act (Statement when
/// acts are not licensed).
pub fn template_realize(request: &GenerationRequest) -> String {
    let payload = request.payload();
    let da = payload
        .acts
        .as_ref()
        .and_then(|a| a.first().copied())
        .unwrap_or(DialogueAct::Statement);
    let k = payload
        .knowledge
        .as_deref()
        .map(clause)
        .filter(|k| !k.is_empty());
    let topic = payload.topic;
    match (da, k) {
        (DialogueAct::Statement, Some(k)) => format!("I heard that {k}."),
        (DialogueAct::Statement, None) => "I think that is a fair point.".into(),
        (DialogueAct::PropQ, Some(k)) => format!("Did you know that {k}?"),
        (DialogueAct::PropQ, None) => "Do you like it?".into(),
        (DialogueAct::SetQ, Some(k)) => format!("What do you think about the fact that {k}?"),
        (DialogueAct::SetQ, None) => match topic {
            Some(t) => format!("What do you think about {}?", t.as_str()),
            None => "What do you think about that?".into(),
        },
        (DialogueAct::ChoiceQ, Some(k)) => format!("Is it true that {k}, or is that a myth?"),
        (DialogueAct::ChoiceQ, None) => {
            "Would you rather talk about this or something else?".into()
        }
        (DialogueAct::Feedback, _) => "Wow, that is interesting.".into(),
        (DialogueAct::Salutation, _) => "Hi there, nice to chat with you!".into(),
        (DialogueAct::Apology, Some(k)) => format!("Sorry, I did not know that {k}."),
        (DialogueAct::Apology, None) => "Sorry, I did not know that.".into(),
        (DialogueAct::Thanking, Some(k)) => format!("Thanks for telling me that {k}."),
        (DialogueAct::Thanking, None) => "Thanks for sharing that.".into(),
        (DialogueAct::Commissive, Some(k)) => format!("I will remember that {k}."),
        (DialogueAct::Commissive, None) => "I will look that up later.".into(),
        (DialogueAct::Directive, Some(k)) => format!("You should read about how {k}."),
        (DialogueAct::Directive, None) => "Let's talk about something else.".into(),
        (DialogueAct::NoDialogueAct, Some(k)) => format!("{}.", capitalize(&k)),
        (DialogueAct::NoDialogueAct, None) => "Well.".into(),
    }
}

/// Realizer behind an HTTP endpoint. The request body is the serialized
/// payload, plus an opaque `decoder_params` object when configured; the
/// response must be `{"text": "..."}` with non-empty text.
#[derive(Debug, Clone)]
pub struct HttpRealizer {
    endpoint: JsonEndpoint,
    decoder_params: Option<Map<String, Value>>,
}

impl HttpRealizer {
    pub fn new(endpoint: JsonEndpoint) -> Self {
        HttpRealizer {
            endpoint,
            decoder_params: None,
        }
    }

    pub fn with_decoder_params(mut self, params: Map<String, Value>) -> Self {
        self.decoder_params = Some(params);
        self
    }

    pub fn request_body(&self, request: &GenerationRequest) -> Vec<u8> {
        match &self.decoder_params {
            None => serialize_generation_request(request),
            Some(params) => {
                let mut value =
                    serde_json::to_value(request.payload()).expect("payload serializes");
                value
                    .as_object_mut()
                    .expect("payload is an object")
                    .insert("decoder_params".into(), Value::Object(params.clone()));
                serde_json::to_vec(&sort_keys(value)).expect("value serializes")
            }
        }
    }
}

impl Realizer for HttpRealizer {
    fn realize(&self, request: &GenerationRequest) -> Result<String, RealizeError> {
        external_realize(&self.endpoint, &self.request_body(request))
    }
}

/// POSTs an already-serialized request and extracts the realized text.
pub fn external_realize(endpoint: &JsonEndpoint, body: &[u8]) -> Result<String, RealizeError> {
    let response = endpoint.post(body)?;
    let text = response
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            RealizeError::Protocol(format!(
                "expected {{\"text\": string}} from {}",
                endpoint.url()
            ))
        })?;
    if text.trim().is_empty() {
        return Err(RealizeError::Protocol(format!(
            "{} returned empty text",
            endpoint.url()
        )));
    }
    Ok(text.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::KnowledgeId;
    use crate::text::segment_sentences;
    use std::cell::RefCell;

    fn kref(text: &str) -> KnowledgeRef {
        KnowledgeRef {
            id: KnowledgeId(0),
            text: text.into(),
        }
    }

    struct Echo(RefCell<Vec<GenerationRequest>>);

    impl Realizer for Echo {
        fn realize(&self, request: &GenerationRequest) -> Result<String, RealizeError> {
            self.0.borrow_mut().push(request.clone());
            let da = request
                .frame
                .as_ref()
                .map_or("turn".to_string(), |f| f.da.to_string());
            Ok(format!("<{da}>"))
        }
    }

    #[test]
    fn statement_template_embeds_knowledge() {
        let frame = Frame::new(DialogueAct::Statement)
            .with_knowledge(kref("The NFL has no official rule against female players."));
        let plan = ActionPlan {
            frames: vec![frame],
            turn_knowledge: None,
        };
        let config = GenerationConfig::default();
        let out = generate_turn(&[], &plan, &TemplateRealizer, &config).unwrap();
        assert_eq!(
            out.text,
            "I heard that the NFL has no official rule against female players."
        );
    }

    #[test]
    fn feedback_never_carries_knowledge_and_propq_asks() {
        let plan = ActionPlan {
            frames: vec![
                Frame::new(DialogueAct::Feedback),
                Frame::new(DialogueAct::PropQ),
            ],
            turn_knowledge: Some(kref("Bruce Lee was a cha cha dancer.")),
        };
        let out =
            generate_turn(&[], &plan, &TemplateRealizer, &GenerationConfig::default()).unwrap();
        assert_eq!(out.trace[0].sentence, "Wow, that is interesting.");
        assert!(out.trace[1].sentence.ends_with('?'));
        assert!(!out.text.contains("Bruce"));
    }

    #[test]
    fn three_frame_plan_composes_templates() {
        let plan = ActionPlan {
            frames: vec![
                Frame::new(DialogueAct::Feedback),
                Frame::new(DialogueAct::Statement)
                    .with_knowledge(kref("Golf balls have around 336 dimples.")),
                Frame::new(DialogueAct::SetQ).with_topic(Some(Topic::Sports)),
            ],
            turn_knowledge: None,
        };
        let out =
            generate_turn(&[], &plan, &TemplateRealizer, &GenerationConfig::default()).unwrap();
        assert_eq!(
            out.text,
            "Wow, that is interesting. I heard that Golf balls have around 336 dimples. What do you think about sports?"
        );
        assert_eq!(segment_sentences(&out.text).len(), 3);
    }

    #[test]
    fn second_request_sees_first_sentence() {
        let echo = Echo(RefCell::new(Vec::new()));
        let plan = ActionPlan {
            frames: vec![
                Frame::new(DialogueAct::Salutation),
                Frame::new(DialogueAct::PropQ),
            ],
            turn_knowledge: None,
        };
        let history = [HistoryTurn::new("hello", vec![])];
        let out = generate_turn(&history, &plan, &echo, &GenerationConfig::default()).unwrap();
        assert_eq!(out.text, "<Salutation> <PropQ>");
        let requests = echo.0.borrow();
        assert_eq!(requests[0].payload().history, ["hello"]);
        assert_eq!(requests[1].payload().history, ["hello", "<Salutation>"]);
    }

    #[test]
    fn failure_carries_partial_trace() {
        struct FailSecond(RefCell<usize>);
        impl Realizer for FailSecond {
            fn realize(&self, _: &GenerationRequest) -> Result<String, RealizeError> {
                *self.0.borrow_mut() += 1;
                if *self.0.borrow() == 2 {
                    Err(RealizeError::Protocol("boom".into()))
                } else {
                    Ok("ok.".into())
                }
            }
        }
        let plan = ActionPlan {
            frames: vec![Frame::new(DialogueAct::Statement); 3],
            turn_knowledge: None,
        };
        match generate_turn(
            &[],
            &plan,
            &FailSecond(RefCell::new(0)),
            &GenerationConfig::default(),
        ) {
            Err(GenerationError::Realizer { index, partial, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(partial.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let empty = ActionPlan {
            frames: vec![],
            turn_knowledge: None,
        };
        assert_eq!(
            generate_turn(&[], &empty, &TemplateRealizer, &GenerationConfig::default()),
            Err(GenerationError::EmptyPlan)
        );
    }

    #[test]
    fn turn_level_is_one_call_without_acts() {
        let echo = Echo(RefCell::new(Vec::new()));
        let k = kref("Golf balls have around 336 dimples.");
        let config = GenerationConfig::default();
        let out = generate_turn_level(&[HistoryTurn::new("hi", vec![])], Some(&k), &echo, &config)
            .unwrap();
        assert_eq!(out, "<turn>");
        let requests = echo.0.borrow();
        assert_eq!(requests.len(), 1);
        let body = serialize_generation_request(&requests[0]);
        assert_eq!(body, serialize_generation_request(&requests[0].clone()));
        let text = String::from_utf8(body).unwrap();
        assert_eq!(
            text,
            r#"{"history":["hi"],"knowledge":"Golf balls have around 336 dimples."}"#
        );
    }

    #[test]
    fn history_truncation_drops_oldest() {
        let h = |s: &str| HistoryTurn::new(s, vec![]);
        let history = [h("a b c"), h("d e"), h("f g h i")];
        let kept: Vec<String> = truncate_history(&history, 6)
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(kept, ["d e", "f g h i"]);
        let kept: Vec<String> = truncate_history(&history, 3)
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(kept, ["g h i"]);
        assert_eq!(truncate_knowledge("a b c d", 2), "a b");
    }

    #[test]
    fn past_das_are_parallel_to_history() {
        let echo = Echo(RefCell::new(Vec::new()));
        let plan = ActionPlan {
            frames: vec![
                Frame::new(DialogueAct::Feedback),
                Frame::new(DialogueAct::Statement),
            ],
            turn_knowledge: None,
        };
        let config = GenerationConfig {
            include_past_das: true,
            ..GenerationConfig::default()
        };
        let history = [HistoryTurn::new(
            "Hi! Do you like golf?",
            vec![DialogueAct::Salutation, DialogueAct::PropQ],
        )];
        generate_turn(&history, &plan, &echo, &config).unwrap();
        let p = echo.0.borrow()[1].payload();
        assert_eq!(p.history.len(), p.past_das.as_ref().unwrap().len());
        assert_eq!(
            p.past_das.unwrap(),
            vec![
                vec![DialogueAct::Salutation, DialogueAct::PropQ],
                vec![DialogueAct::Feedback]
            ]
        );
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_value(v).unwrap(), v.as_str());
        }
        assert!("DA".parse::<Variant>().is_err());
    }
}

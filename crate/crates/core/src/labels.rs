//! Closed label inventories: dialogue acts and conversation topics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("unknown dialogue act label `{0}`")]
    UnknownAct(String),
    #[error("unknown topic label `{0}`")]
    UnknownTopic(String),
}

/// Sentence-level communicative function, a subset of the ISO 24617-2 acts
/// plus the `NoDialogueAct` fallback emitted for low-confidence tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DialogueAct {
    Apology,
    ChoiceQ,
    Commissive,
    Directive,
    Feedback,
    PropQ,
    Salutation,
    SetQ,
    Statement,
    Thanking,
    NoDialogueAct,
}

impl DialogueAct {
    pub const ALL: [DialogueAct; 11] = [
        DialogueAct::Apology,
        DialogueAct::ChoiceQ,
        DialogueAct::Commissive,
        DialogueAct::Directive,
        DialogueAct::Feedback,
        DialogueAct::PropQ,
        DialogueAct::Salutation,
        DialogueAct::SetQ,
        DialogueAct::Statement,
        DialogueAct::Thanking,
        DialogueAct::NoDialogueAct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DialogueAct::Apology => "Apology",
            DialogueAct::ChoiceQ => "ChoiceQ",
            DialogueAct::Commissive => "Commissive",
            DialogueAct::Directive => "Directive",
            DialogueAct::Feedback => "Feedback",
            DialogueAct::PropQ => "PropQ",
            DialogueAct::Salutation => "Salutation",
            DialogueAct::SetQ => "SetQ",
            DialogueAct::Statement => "Statement",
            DialogueAct::Thanking => "Thanking",
            DialogueAct::NoDialogueAct => "NoDialogueAct",
        }
    }

    /// Yes/no, wh- and or-questions.
    pub fn is_question(self) -> bool {
        matches!(
            self,
            DialogueAct::PropQ | DialogueAct::SetQ | DialogueAct::ChoiceQ
        )
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DialogueAct {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DialogueAct::ALL
            .iter()
            .copied()
            .find(|act| act.as_str() == s)
            .ok_or_else(|| LabelError::UnknownAct(s.to_string()))
    }
}

/// Turn-level topic, one of the eight Topical-Chat topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "fashion")]
    Fashion,
    #[serde(rename = "politics")]
    Politics,
    #[serde(rename = "books")]
    Books,
    #[serde(rename = "sports")]
    Sports,
    #[serde(rename = "general-entertainment")]
    GeneralEntertainment,
    #[serde(rename = "music")]
    Music,
    #[serde(rename = "science & technology")]
    ScienceTechnology,
    #[serde(rename = "movies")]
    Movies,
}

impl Topic {
    pub const ALL: [Topic; 8] = [
        Topic::Fashion,
        Topic::Politics,
        Topic::Books,
        Topic::Sports,
        Topic::GeneralEntertainment,
        Topic::Music,
        Topic::ScienceTechnology,
        Topic::Movies,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Fashion => "fashion",
            Topic::Politics => "politics",
            Topic::Books => "books",
            Topic::Sports => "sports",
            Topic::GeneralEntertainment => "general-entertainment",
            Topic::Music => "music",
            Topic::ScienceTechnology => "science & technology",
            Topic::Movies => "movies",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| LabelError::UnknownTopic(s.to_string()))
    }
}

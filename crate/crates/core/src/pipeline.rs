//! End-to-end glue: planning and generating over dialogues, and the
//! interactive session behind `chat`.
//!
//! Run-time knowledge selection uses the most recent turn as context. The
//! previous turn's knowledge is the selection made when that turn was
//! planned.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{assemble_action_plans, ActionPlan, AnnotationError, DaTagger};
use crate::corpus::{Dialogue, KnowledgeCorpus};
use crate::generation::{
    generate_turn, GeneratedTurn, GenerationConfig, GenerationError, HistoryTurn, Realizer,
};
use crate::labels::{DialogueAct, Topic};
use crate::policy::{DialoguePolicy, PolicyContext, PolicyDecision, PolicyError};
use crate::retrieval::{KnowledgeSelection, RetrievalIndex};
use crate::text::segment_sentences;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("dialogue `{dialogue}` turn {turn}: {source}")]
    AtTurn {
        dialogue: String,
        turn: usize,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    fn at(self, dialogue: &str, turn: usize) -> Self {
        PipelineError::AtTurn {
            dialogue: dialogue.to_string(),
            turn,
            source: Box::new(self),
        }
    }
}

/// Acts of a turn: its sentence tags when every sentence is tagged,
/// otherwise `tagger` applied to each sentence.
pub fn turn_acts(
    sentences: &[String],
    tagged: Option<Vec<DialogueAct>>,
    tagger: &dyn DaTagger,
) -> Result<Vec<DialogueAct>, AnnotationError> {
    match tagged {
        Some(acts) if !acts.is_empty() && acts.len() == sentences.len() => Ok(acts),
        _ => sentences
            .iter()
            .map(|s| tagger.tag(s).map(|t| t.act))
            .collect(),
    }
}

fn dialogue_turn_acts(
    dialogue: &Dialogue,
    j: usize,
    tagger: &dyn DaTagger,
) -> Result<Vec<DialogueAct>, AnnotationError> {
    let turn = &dialogue.turns[j];
    let texts: Vec<String> = turn.sentences.iter().map(|s| s.text.clone()).collect();
    let tagged = turn
        .sentences
        .iter()
        .map(|s| s.da.map(|t| t.act))
        .collect::<Option<Vec<_>>>();
    turn_acts(&texts, tagged, tagger)
}

/// The most recent topic annotated before turn `j`.
fn history_topic(dialogue: &Dialogue, j: usize) -> Option<Topic> {
    dialogue.turns[..j]
        .iter()
        .rev()
        .find_map(|t| t.topics.as_ref().and_then(|ts| ts.first().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTurn {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub policy: String,
    pub selection: KnowledgeSelection,
    pub acts: Vec<DialogueAct>,
    pub plan: ActionPlan,
}

/// Policy planning with run-time knowledge selection.
pub struct Planner<'a> {
    pub policy: &'a dyn DialoguePolicy,
    pub index: &'a RetrievalIndex,
    pub corpus: &'a KnowledgeCorpus,
    pub threshold: f64,
}

impl Planner<'_> {
    pub fn select(&self, context: &str) -> KnowledgeSelection {
        if context.trim().is_empty() {
            KnowledgeSelection::none()
        } else {
            self.index.select(context, self.threshold)
        }
    }

    fn plan_one(
        &self,
        ctx: &PolicyContext,
        history: &[String],
        topic: Option<Topic>,
        rng: &mut dyn RngCore,
    ) -> Result<(PolicyDecision, ActionPlan), PipelineError> {
        let decision = self.policy.plan(ctx, history, rng)?;
        let plan = ActionPlan::from_decision(&decision, topic, Some(self.corpus))?;
        Ok((decision, plan))
    }

    /// A plan for every turn position of `dialogue`, each conditioned on
    /// the real turns before it.
    pub fn plan_dialogue(
        &self,
        dialogue: &Dialogue,
        tagger: &dyn DaTagger,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<PlannedTurn>, PipelineError> {
        let mut out = Vec::with_capacity(dialogue.turns.len());
        let mut history: Vec<String> = Vec::new();
        let mut prev_selection = KnowledgeSelection::none();
        for j in 0..dialogue.turns.len() {
            let mut step =
                || -> Result<(KnowledgeSelection, PolicyDecision, ActionPlan), PipelineError> {
                    let (ctx, selection) = if j == 0 {
                        let s = KnowledgeSelection::none();
                        (PolicyContext::opening(s), s)
                    } else {
                        let s = self.select(&dialogue.turns[j - 1].raw_text);
                        let last_acts = dialogue_turn_acts(dialogue, j - 1, tagger)?;
                        (
                            PolicyContext::following(
                                j,
                                last_acts,
                                prev_selection.effective_id(),
                                s,
                            )?,
                            s,
                        )
                    };
                    let (decision, plan) =
                        self.plan_one(&ctx, &history, history_topic(dialogue, j), rng)?;
                    Ok((selection, decision, plan))
                };
            let (selection, decision, plan) = step().map_err(|e| e.at(&dialogue.id, j))?;
            out.push(PlannedTurn {
                dialogue_id: dialogue.id.clone(),
                turn_index: j,
                policy: self.policy.name().to_string(),
                selection,
                acts: decision.acts,
                plan,
            });
            prev_selection = selection;
            history.push(dialogue.turns[j].raw_text.clone());
        }
        Ok(out)
    }
}

/// Ground-truth plans from an annotated dialogue, in the same record shape.
pub fn gold_plans(
    dialogue: &Dialogue,
    corpus: &KnowledgeCorpus,
) -> Result<Vec<PlannedTurn>, PipelineError> {
    let plans = assemble_action_plans(dialogue, corpus)?;
    Ok(plans
        .into_iter()
        .enumerate()
        .map(|(j, plan)| {
            let link = dialogue.turns[j].turn_knowledge.unwrap_or_default();
            PlannedTurn {
                dialogue_id: dialogue.id.clone(),
                turn_index: j,
                policy: "gold".into(),
                selection: KnowledgeSelection {
                    knowledge_id: link.knowledge_id,
                    score: link.score,
                    use_knowledge: link.knowledge_id.is_some(),
                },
                acts: plan.frames.iter().map(|f| f.da).collect(),
                plan,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub text: String,
    pub reference: String,
    pub plan: ActionPlan,
    pub trace: Vec<crate::generation::TraceEntry>,
}

/// Realizes each planned turn given the real history before it.
pub fn generate_dialogue(
    dialogue: &Dialogue,
    planned: &[PlannedTurn],
    realizer: &dyn Realizer,
    config: &GenerationConfig,
    tagger: &dyn DaTagger,
) -> Result<Vec<GeneratedRecord>, PipelineError> {
    let mut history: Vec<HistoryTurn> = Vec::with_capacity(dialogue.turns.len());
    let mut out = Vec::with_capacity(planned.len());
    let mut next = planned.iter().peekable();
    for (j, turn) in dialogue.turns.iter().enumerate() {
        if let Some(p) = next.next_if(|p| p.turn_index == j) {
            let GeneratedTurn { text, trace } = generate_turn(&history, &p.plan, realizer, config)
                .map_err(|e| PipelineError::from(e).at(&dialogue.id, j))?;
            out.push(GeneratedRecord {
                dialogue_id: dialogue.id.clone(),
                turn_index: j,
                text,
                reference: turn.raw_text.clone(),
                plan: p.plan.clone(),
                trace,
            });
        }
        let acts = if config.include_past_das {
            dialogue_turn_acts(dialogue, j, tagger)
                .map_err(|e| PipelineError::from(e).at(&dialogue.id, j))?
        } else {
            Vec::new()
        };
        history.push(HistoryTurn::new(turn.raw_text.clone(), acts));
    }
    Ok(out)
}

/// One exchange of an interactive session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub turn_index: usize,
    pub user_acts: Vec<DialogueAct>,
    pub selection: KnowledgeSelection,
    pub plan: ActionPlan,
    pub reply: GeneratedTurn,
}

/// Conversation state for `chat`: the user speaks, the engine answers.
pub struct Session<'a> {
    planner: Planner<'a>,
    realizer: &'a dyn Realizer,
    tagger: &'a dyn DaTagger,
    config: GenerationConfig,
    topic: Option<Topic>,
    history: Vec<HistoryTurn>,
    prev_selection: KnowledgeSelection,
}

impl<'a> Session<'a> {
    pub fn new(
        planner: Planner<'a>,
        realizer: &'a dyn Realizer,
        tagger: &'a dyn DaTagger,
        config: GenerationConfig,
        topic: Option<Topic>,
    ) -> Self {
        Session {
            planner,
            realizer,
            tagger,
            config,
            topic,
            history: Vec::new(),
            prev_selection: KnowledgeSelection::none(),
        }
    }

    pub fn history(&self) -> &[HistoryTurn] {
        &self.history
    }

    /// Appends an earlier turn (tagged, not answered) to the history.
    pub fn push_turn(&mut self, text: &str) -> Result<(), PipelineError> {
        let acts = turn_acts(&segment_sentences(text), None, self.tagger)?;
        self.history.push(HistoryTurn::new(text, acts));
        Ok(())
    }

    /// Answers the user's turn, or opens the conversation when `user` is
    /// `None` at the start.
    pub fn respond(
        &mut self,
        user: Option<&str>,
        rng: &mut dyn RngCore,
    ) -> Result<Exchange, PipelineError> {
        let mut user_acts = Vec::new();
        if let Some(text) = user {
            let sentences = segment_sentences(text);
            user_acts = turn_acts(&sentences, None, self.tagger)?;
            if user_acts.is_empty() {
                user_acts.push(DialogueAct::NoDialogueAct);
            }
            self.history.push(HistoryTurn::new(text, user_acts.clone()));
        }
        let j = self.history.len();
        let (ctx, selection) = match self.history.last() {
            None => (
                PolicyContext::opening(KnowledgeSelection::none()),
                KnowledgeSelection::none(),
            ),
            Some(last) => {
                let s = self.planner.select(&last.text);
                (
                    PolicyContext::following(
                        j,
                        last.acts.clone(),
                        self.prev_selection.effective_id(),
                        s,
                    )?,
                    s,
                )
            }
        };
        let texts: Vec<String> = self.history.iter().map(|t| t.text.clone()).collect();
        let (_, plan) = self.planner.plan_one(&ctx, &texts, self.topic, rng)?;
        let reply = generate_turn(&self.history, &plan, self.realizer, &self.config)?;
        let acts = plan.frames.iter().map(|f| f.da).collect();
        self.history
            .push(HistoryTurn::new(reply.text.clone(), acts));
        self.prev_selection = selection;
        Ok(Exchange {
            turn_index: j,
            user_acts,
            selection,
            plan,
            reply,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{annotate_dialogue, AnnotationConfig, HeuristicTagger, TagSource};
    use crate::corpus::{ReadingSetRefs, Speaker, Turn};
    use crate::generation::TemplateRealizer;
    use crate::policy::{seeded_rng, HandcraftedPolicy, PolicyKind};
    use crate::retrieval::IndexConfig;

    fn fixture() -> (KnowledgeCorpus, RetrievalIndex, Dialogue) {
        let corpus = KnowledgeCorpus::from_texts(
            "d",
            [
                "Golf balls have around 336 dimples.",
                "Bruce Lee was a cha cha dancer.",
                "The NFL has no official rule against female players.",
            ],
        )
        .unwrap();
        let index = RetrievalIndex::build(&corpus, IndexConfig::default()).unwrap();
        let dialogue = Dialogue {
            id: "t1".into(),
            reading_sets: ReadingSetRefs {
                agent_1: "d".into(),
                agent_2: "d".into(),
            },
            turns: vec![
                Turn::new(Speaker::A, "Hi! Do you play golf?").with_topics(vec![Topic::Sports]),
                Turn::new(Speaker::B, "Yes. Golf balls have around 336 dimples.")
                    .with_topics(vec![Topic::Sports]),
                Turn::new(
                    Speaker::A,
                    "Wow. Did you know Bruce Lee was a cha cha dancer?",
                ),
            ],
        };
        (corpus, index, dialogue)
    }

    #[test]
    fn plans_cover_every_turn_and_open_with_salutation() {
        let (corpus, index, dialogue) = fixture();
        let policy = HandcraftedPolicy::new(PolicyKind::KdDaP);
        let planner = Planner {
            policy: &policy,
            index: &index,
            corpus: &corpus,
            threshold: 0.2,
        };
        let plans = planner
            .plan_dialogue(&dialogue, &HeuristicTagger, &mut seeded_rng(1))
            .unwrap();
        assert_eq!(plans.len(), 3);
        assert_eq!(plans[0].acts[0], DialogueAct::Salutation);
        // turn 2 is planned after the golf fact, which retrieval finds
        assert_eq!(plans[2].selection.knowledge_id.unwrap().0, 0);
        assert_eq!(plans[2].plan.frames[0].topic, Some(Topic::Sports));
        let again = planner
            .plan_dialogue(&dialogue, &HeuristicTagger, &mut seeded_rng(1))
            .unwrap();
        assert_eq!(plans, again);

        let generated = generate_dialogue(
            &dialogue,
            &plans,
            &TemplateRealizer,
            &GenerationConfig::default(),
            &HeuristicTagger,
        )
        .unwrap();
        assert_eq!(generated.len(), 3);
        for (g, p) in generated.iter().zip(&plans) {
            assert_eq!(g.trace.len(), p.plan.frames.len());
        }
        assert_eq!(generated[1].reference, dialogue.turns[1].raw_text);
    }

    #[test]
    fn gold_plans_need_annotation() {
        let (corpus, index, dialogue) = fixture();
        assert!(gold_plans(&dialogue, &corpus).is_err());
        let mut annotated = dialogue.clone();
        annotated.turns[2].topics = Some(vec![]);
        let annotated = annotate_dialogue(
            &annotated,
            &index,
            &TagSource::Tagger(&HeuristicTagger),
            AnnotationConfig::default(),
        )
        .unwrap();
        let plans = gold_plans(&annotated, &corpus).unwrap();
        assert_eq!(
            plans[1].acts,
            [DialogueAct::Feedback, DialogueAct::Statement]
        );
        assert!(plans[1].plan.frames[1].use_knowledge);
    }

    #[test]
    fn session_opens_and_answers() {
        let (corpus, index, _) = fixture();
        let policy = HandcraftedPolicy::new(PolicyKind::KdDaP);
        let planner = Planner {
            policy: &policy,
            index: &index,
            corpus: &corpus,
            threshold: 0.2,
        };
        let mut session = Session::new(
            planner,
            &TemplateRealizer,
            &HeuristicTagger,
            GenerationConfig::default(),
            None,
        );
        let mut rng = seeded_rng(3);
        let first = session.respond(None, &mut rng).unwrap();
        assert_eq!(first.plan.frames[0].da, DialogueAct::Salutation);
        let second = session
            .respond(Some("I love golf. Golf balls have dimples."), &mut rng)
            .unwrap();
        assert_eq!(second.turn_index, 2);
        assert_eq!(second.selection.knowledge_id.unwrap().0, 0);
        assert_eq!(session.history().len(), 3);
    }
}

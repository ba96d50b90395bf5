//! Dialogue-act planning.
//!
//! Each policy maps a [`PolicyContext`] (turn index, acts of the previous
//! turn, knowledge selected for the previous and the current turn) to a
//! [`PolicyDecision`]: a sampled act sequence plus a per-act flag saying
//! whether the selected knowledge sentence goes with that act.
//!
//! The hand-crafted policies are decision tables sampled with
//! [`weighted_sample`]; [`ExternalPlanner`] delegates to a learned planner
//! over HTTP.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{Dialogue, KnowledgeId};
use crate::http::{JsonEndpoint, TransportError};
use crate::labels::DialogueAct;
use crate::retrieval::KnowledgeSelection;

use DialogueAct::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("{options} options but {weights} weights")]
    LengthMismatch { options: usize, weights: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid policy context: {0}")]
    InvalidContext(String),
    #[error("unknown policy `{0}` (expected simple, kd-da-p, propq, allq or external)")]
    UnknownPolicy(String),
    #[error("planner returned unknown dialogue act `{0}`")]
    UnknownAct(String),
    #[error("planner protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("simulation needs at least one turn")]
    NoTurns,
}

impl PolicyError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, PolicyError::Transport(t) if t.is_retryable())
    }
}

/// Seeded generator used by every policy and simulation.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Picks `options[i]` with probability `weights[i] / sum(weights)`.
pub fn weighted_sample<'a, T, R>(
    options: &'a [T],
    weights: &[f64],
    rng: &mut R,
) -> Result<&'a T, PolicyError>
where
    R: RngCore + ?Sized,
{
    if options.len() != weights.len() {
        return Err(PolicyError::LengthMismatch {
            options: options.len(),
            weights: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(PolicyError::InvalidWeights(format!(
            "weight {w} is negative or not finite"
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(PolicyError::InvalidWeights("weights sum to zero".into()));
    }
    let draw = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    for (option, &w) in options.iter().zip(weights) {
        cumulative += w;
        if w > 0.0 && draw < cumulative {
            return Ok(option);
        }
    }
    // rounding left the draw past the last bucket
    let last = weights
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("positive total");
    Ok(&options[last])
}

/// Which acts may carry the selected knowledge sentence. Acts not listed
/// never do.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IncludeKnowledgeMap(BTreeMap<DialogueAct, bool>);

impl IncludeKnowledgeMap {
    pub fn new(entries: &[(DialogueAct, bool)]) -> Self {
        IncludeKnowledgeMap(entries.iter().copied().collect())
    }

    pub fn permits(&self, act: DialogueAct) -> bool {
        self.0.get(&act).copied().unwrap_or(false)
    }

    /// Per-act attachment flags; all false unless the selection's
    /// use-knowledge flag is set.
    pub fn attach(&self, acts: &[DialogueAct], selection: &KnowledgeSelection) -> Vec<bool> {
        acts.iter()
            .map(|&act| selection.use_knowledge && self.permits(act))
            .collect()
    }
}

/// Include-knowledge map of the simple policy, also applied to acts returned
/// by an external planner.
pub fn simple_include_map() -> IncludeKnowledgeMap {
    IncludeKnowledgeMap::new(&[
        (Feedback, false),
        (Statement, true),
        (PropQ, true),
        (Salutation, false),
    ])
}

fn question_include_map() -> IncludeKnowledgeMap {
    IncludeKnowledgeMap::new(&[
        (PropQ, true),
        (SetQ, true),
        (ChoiceQ, true),
        (Statement, true),
        (Feedback, false),
        (Apology, false),
        (Commissive, false),
        (Directive, false),
        (Salutation, false),
        (Thanking, false),
        (NoDialogueAct, false),
    ])
}

/// Per-turn planning input.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyContext {
    turn_index: usize,
    last_acts: Vec<DialogueAct>,
    prev_turn_knowledge: Option<KnowledgeId>,
    selection: KnowledgeSelection,
}

impl PolicyContext {
    /// Context for the first turn of a dialogue.
    pub fn opening(selection: KnowledgeSelection) -> Self {
        PolicyContext {
            turn_index: 0,
            last_acts: Vec::new(),
            prev_turn_knowledge: None,
            selection,
        }
    }

    /// Context for turn `turn_index >= 1`. `last_acts` are the acts of the
    /// previous turn's sentences (its last act drives the tables);
    /// `prev_turn_knowledge` is the knowledge used for the previous turn.
    pub fn following(
        turn_index: usize,
        last_acts: Vec<DialogueAct>,
        prev_turn_knowledge: Option<KnowledgeId>,
        selection: KnowledgeSelection,
    ) -> Result<Self, PolicyError> {
        if turn_index == 0 {
            return Err(PolicyError::InvalidContext(
                "turn 0 has no previous act; use opening()".into(),
            ));
        }
        if last_acts.is_empty() {
            return Err(PolicyError::InvalidContext(format!(
                "turn {turn_index} needs the previous turn's acts"
            )));
        }
        Ok(PolicyContext {
            turn_index,
            last_acts,
            prev_turn_knowledge,
            selection,
        })
    }

    pub fn turn_index(&self) -> usize {
        self.turn_index
    }

    pub fn last_da(&self) -> Option<DialogueAct> {
        self.last_acts.last().copied()
    }

    pub fn last_acts(&self) -> &[DialogueAct] {
        &self.last_acts
    }

    pub fn prev_turn_knowledge(&self) -> Option<KnowledgeId> {
        self.prev_turn_knowledge
    }

    pub fn selection(&self) -> &KnowledgeSelection {
        &self.selection
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub acts: Vec<DialogueAct>,
    pub attach_knowledge: Vec<bool>,
    pub knowledge: KnowledgeSelection,
}

impl PolicyDecision {
    /// Knowledge id used by this turn, if any act carries it.
    pub fn used_knowledge(&self) -> Option<KnowledgeId> {
        if self.attach_knowledge.iter().any(|a| *a) {
            self.knowledge.knowledge_id
        } else {
            None
        }
    }
}

pub trait DialoguePolicy {
    fn name(&self) -> &str;

    /// `history` holds the previous turns' texts, oldest first.
    fn plan(
        &self,
        ctx: &PolicyContext,
        history: &[String],
        rng: &mut dyn RngCore,
    ) -> Result<PolicyDecision, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "simple")]
    Simple,
    #[serde(rename = "kd-da-p")]
    KdDaP,
    #[serde(rename = "propq")]
    PropQ,
    #[serde(rename = "allq")]
    AllQ,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Simple,
        PolicyKind::KdDaP,
        PolicyKind::PropQ,
        PolicyKind::AllQ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Simple => "simple",
            PolicyKind::KdDaP => "kd-da-p",
            PolicyKind::PropQ => "propq",
            PolicyKind::AllQ => "allq",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

/// Act weights of the question-rate baseline: PropQ 65.7% of the time.
pub const PROPQ_WEIGHTS: [(DialogueAct, f64); 11] = [
    (PropQ, 0.657),
    (SetQ, 0.0343),
    (ChoiceQ, 0.0343),
    (Apology, 0.0343),
    (Directive, 0.0343),
    (Feedback, 0.0343),
    (Salutation, 0.0343),
    (Commissive, 0.0343),
    (Statement, 0.0343),
    (Thanking, 0.0343),
    (NoDialogueAct, 0.0343),
];

/// Act weights of the all-questions baseline: each question type 21.9%.
pub const ALLQ_WEIGHTS: [(DialogueAct, f64); 11] = [
    (PropQ, 0.219),
    (SetQ, 0.219),
    (ChoiceQ, 0.219),
    (Apology, 0.042875),
    (Directive, 0.042875),
    (Feedback, 0.042875),
    (Salutation, 0.042875),
    (Commissive, 0.042875),
    (Statement, 0.042875),
    (Thanking, 0.042875),
    (NoDialogueAct, 0.042875),
];

struct Branch {
    options: Vec<Vec<DialogueAct>>,
    weights: Vec<f64>,
    include: IncludeKnowledgeMap,
}

impl Branch {
    fn pair(a: [DialogueAct; 2], b: [DialogueAct; 2], include: IncludeKnowledgeMap) -> Self {
        Branch {
            options: vec![a.to_vec(), b.to_vec()],
            weights: vec![0.5, 0.5],
            include,
        }
    }

    fn single(acts: &[DialogueAct], include: IncludeKnowledgeMap) -> Self {
        Branch {
            options: vec![acts.to_vec()],
            weights: vec![1.0],
            include,
        }
    }
}

fn opening_branch(include: IncludeKnowledgeMap) -> Branch {
    Branch::pair([Salutation, Statement], [Salutation, PropQ], include)
}

fn simple_branch(ctx: &PolicyContext) -> Branch {
    let include = simple_include_map();
    match ctx.last_da() {
        None => opening_branch(include),
        Some(Statement) => Branch::pair([Feedback, Statement], [Feedback, PropQ], include),
        Some(PropQ) => Branch::pair([Statement, Statement], [Statement, PropQ], include),
        Some(_) => Branch::single(&[Statement], include),
    }
}

fn kd_da_p_branch(ctx: &PolicyContext) -> Branch {
    let Some(last) = ctx.last_da() else {
        return opening_branch(IncludeKnowledgeMap::new(&[
            (Salutation, false),
            (Statement, true),
            (PropQ, true),
        ]));
    };
    let propq_only =
        || IncludeKnowledgeMap::new(&[(Feedback, false), (Statement, false), (PropQ, true)]);
    // knowledge under the threshold counts as no knowledge when comparing
    let same = ctx.selection.effective_id() == ctx.prev_turn_knowledge;
    if same {
        match last {
            Statement => Branch::pair(
                [Feedback, Statement],
                [Feedback, PropQ],
                IncludeKnowledgeMap::new(&[(Feedback, false), (Statement, true), (PropQ, true)]),
            ),
            PropQ => Branch::pair([Statement, PropQ], [Feedback, PropQ], propq_only()),
            _ => Branch::single(&[Feedback, Statement], propq_only()),
        }
    } else {
        match last {
            Statement => Branch::pair([Feedback, Statement], [Feedback, PropQ], propq_only()),
            PropQ => Branch::pair([Statement, PropQ], [Feedback, PropQ], propq_only()),
            _ => Branch::single(&[Feedback, PropQ], propq_only()),
        }
    }
}

fn flat_branch(ctx: &PolicyContext, weights: &[(DialogueAct, f64)]) -> Branch {
    let include = question_include_map();
    if ctx.last_da().is_none() {
        return opening_branch(include);
    }
    Branch {
        options: weights.iter().map(|&(act, _)| vec![act]).collect(),
        weights: weights.iter().map(|&(_, w)| w).collect(),
        include,
    }
}

fn decide<R: RngCore + ?Sized>(
    branch: Branch,
    selection: KnowledgeSelection,
    rng: &mut R,
) -> Result<PolicyDecision, PolicyError> {
    let acts = weighted_sample(&branch.options, &branch.weights, rng)?.clone();
    let attach_knowledge = branch.include.attach(&acts, &selection);
    Ok(PolicyDecision {
        acts,
        attach_knowledge,
        knowledge: selection,
    })
}

/// Knowledge-independent table driven by the previous turn's last act.
pub fn plan_ki_simple<R: RngCore + ?Sized>(ctx: &PolicyContext, rng: &mut R) -> PolicyDecision {
    decide(simple_branch(ctx), ctx.selection, rng).expect("built-in weights are valid")
}

/// Knowledge-dependent table: branches on whether the selected knowledge is
/// the one used for the previous turn.
pub fn plan_kd_da_p<R: RngCore + ?Sized>(ctx: &PolicyContext, rng: &mut R) -> PolicyDecision {
    decide(kd_da_p_branch(ctx), ctx.selection, rng).expect("built-in weights are valid")
}

pub fn plan_propq<R: RngCore + ?Sized>(ctx: &PolicyContext, rng: &mut R) -> PolicyDecision {
    decide(flat_branch(ctx, &PROPQ_WEIGHTS), ctx.selection, rng)
        .expect("built-in weights are valid")
}

pub fn plan_allq<R: RngCore + ?Sized>(ctx: &PolicyContext, rng: &mut R) -> PolicyDecision {
    decide(flat_branch(ctx, &ALLQ_WEIGHTS), ctx.selection, rng).expect("built-in weights are valid")
}

/// A hand-crafted policy with optional weight overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct HandcraftedPolicy {
    kind: PolicyKind,
    /// Replaces the 0.5/0.5 weights of two-option branches.
    pair_weights: Option<[f64; 2]>,
    /// Per-act overrides of the flat (propq/allq) weight vector.
    act_weights: BTreeMap<DialogueAct, f64>,
}

impl HandcraftedPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        HandcraftedPolicy {
            kind,
            pair_weights: None,
            act_weights: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn with_pair_weights(mut self, weights: [f64; 2]) -> Result<Self, PolicyError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0
        {
            return Err(PolicyError::InvalidWeights(format!(
                "pair weights {weights:?}"
            )));
        }
        self.pair_weights = Some(weights);
        Ok(self)
    }

    pub fn with_act_weights(
        mut self,
        overrides: BTreeMap<DialogueAct, f64>,
    ) -> Result<Self, PolicyError> {
        if !matches!(self.kind, PolicyKind::PropQ | PolicyKind::AllQ) && !overrides.is_empty() {
            return Err(PolicyError::InvalidWeights(format!(
                "act weights only apply to propq/allq, not {}",
                self.kind
            )));
        }
        self.act_weights = overrides;
        let weights = self.flat_weights();
        if weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0)
            || weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0
        {
            return Err(PolicyError::InvalidWeights(
                "act weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(self)
    }

    fn flat_weights(&self) -> Vec<(DialogueAct, f64)> {
        let base: &[(DialogueAct, f64)] = match self.kind {
            PolicyKind::AllQ => &ALLQ_WEIGHTS,
            _ => &PROPQ_WEIGHTS,
        };
        base.iter()
            .map(|&(act, w)| (act, self.act_weights.get(&act).copied().unwrap_or(w)))
            .collect()
    }

    fn branch(&self, ctx: &PolicyContext) -> Branch {
        let mut branch = match self.kind {
            PolicyKind::Simple => simple_branch(ctx),
            PolicyKind::KdDaP => kd_da_p_branch(ctx),
            PolicyKind::PropQ | PolicyKind::AllQ => flat_branch(ctx, &self.flat_weights()),
        };
        if let Some(pair) = self.pair_weights {
            if branch.options.len() == 2 {
                branch.weights = pair.to_vec();
            }
        }
        branch
    }
}

impl DialoguePolicy for HandcraftedPolicy {
    fn name(&self) -> &str {
        self.kind.as_str()
    }

    fn plan(
        &self,
        ctx: &PolicyContext,
        _history: &[String],
        rng: &mut dyn RngCore,
    ) -> Result<PolicyDecision, PolicyError> {
        decide(self.branch(ctx), ctx.selection, rng)
    }
}

/// Client for a learned act planner. Sends `{dialogue, last_acts}` and
/// expects `{acts}`; the simple policy's include-knowledge map is applied to
/// the returned acts.
#[derive(Debug, Clone)]
pub struct ExternalPlanner {
    endpoint: JsonEndpoint,
}

#[derive(Debug, Deserialize)]
struct PlannerResponse {
    acts: Vec<String>,
}

impl ExternalPlanner {
    pub fn new(endpoint: JsonEndpoint) -> Self {
        ExternalPlanner { endpoint }
    }

    pub fn request_body(ctx: &PolicyContext, history: &[String]) -> Vec<u8> {
        let last_acts: Vec<&str> = ctx.last_acts.iter().map(|a| a.as_str()).collect();
        serde_json::to_vec(&json!({ "dialogue": history, "last_acts": last_acts }))
            .expect("planner request serializes")
    }

    pub fn plan_external(
        &self,
        ctx: &PolicyContext,
        history: &[String],
    ) -> Result<PolicyDecision, PolicyError> {
        let value = self.endpoint.post(&Self::request_body(ctx, history))?;
        let response: PlannerResponse =
            serde_json::from_value(value).map_err(|e| PolicyError::Protocol(e.to_string()))?;
        if response.acts.is_empty() {
            return Err(PolicyError::Protocol("planner returned no acts".into()));
        }
        let acts = response
            .acts
            .iter()
            .map(|label| {
                label
                    .parse::<DialogueAct>()
                    .map_err(|_| PolicyError::UnknownAct(label.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let attach_knowledge = simple_include_map().attach(&acts, &ctx.selection);
        Ok(PolicyDecision {
            acts,
            attach_knowledge,
            knowledge: ctx.selection,
        })
    }
}

impl DialoguePolicy for ExternalPlanner {
    fn name(&self) -> &str {
        "external"
    }

    fn plan(
        &self,
        ctx: &PolicyContext,
        history: &[String],
        _rng: &mut dyn RngCore,
    ) -> Result<PolicyDecision, PolicyError> {
        self.plan_external(ctx, history)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ActHistogram {
    pub counts: BTreeMap<DialogueAct, u64>,
    pub total: u64,
}

impl ActHistogram {
    pub fn add(&mut self, acts: &[DialogueAct]) {
        for &act in acts {
            *self.counts.entry(act).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn frequencies(&self) -> BTreeMap<DialogueAct, f64> {
        self.counts
            .iter()
            .map(|(&act, &c)| (act, c as f64 / self.total.max(1) as f64))
            .collect()
    }

    pub fn frequency(&self, act: DialogueAct) -> f64 {
        self.counts.get(&act).copied().unwrap_or(0) as f64 / self.total.max(1) as f64
    }

    /// Share of planned acts that are questions.
    pub fn question_mass(&self) -> f64 {
        DialogueAct::ALL
            .iter()
            .filter(|a| a.is_question())
            .map(|&a| self.frequency(a))
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimulationReport {
    pub turns: u64,
    pub non_initial_turns: u64,
    /// Every planned act.
    pub all: ActHistogram,
    /// Acts planned for turns after the first of each dialogue.
    pub non_initial: ActHistogram,
}

impl SimulationReport {
    fn record(&mut self, turn_index: usize, acts: &[DialogueAct]) {
        self.turns += 1;
        self.all.add(acts);
        if turn_index > 0 {
            self.non_initial_turns += 1;
            self.non_initial.add(acts);
        }
    }
}

fn selection_from_annotation(turn: &crate::corpus::Turn) -> KnowledgeSelection {
    match turn.turn_knowledge {
        Some(link) => KnowledgeSelection {
            knowledge_id: link.knowledge_id,
            score: link.score,
            use_knowledge: link.knowledge_id.is_some(),
        },
        None => KnowledgeSelection::none(),
    }
}

/// Runs `policy` at every turn position of an annotated corpus. The previous
/// turn's acts come from its sentence tags (untagged turns count as
/// `NoDialogueAct`); knowledge for turn j is the previous turn's turn-level
/// link, as run-time selection uses the most recent turn as context.
pub fn simulate_distribution(
    policy: &dyn DialoguePolicy,
    corpus: &[Dialogue],
    seed: u64,
) -> Result<SimulationReport, PolicyError> {
    let mut rng = seeded_rng(seed);
    let mut report = SimulationReport::default();
    for dialogue in corpus {
        let mut history = Vec::with_capacity(dialogue.turns.len());
        for (j, turn) in dialogue.turns.iter().enumerate() {
            let ctx = if j == 0 {
                PolicyContext::opening(KnowledgeSelection::none())
            } else {
                let prev = &dialogue.turns[j - 1];
                let mut last_acts = prev.acts();
                if last_acts.is_empty() {
                    last_acts.push(NoDialogueAct);
                }
                let prev_knowledge = (j >= 2)
                    .then(|| selection_from_annotation(&dialogue.turns[j - 2]).effective_id())
                    .flatten();
                PolicyContext::following(
                    j,
                    last_acts,
                    prev_knowledge,
                    selection_from_annotation(prev),
                )?
            };
            let decision = policy.plan(&ctx, &history, &mut rng)?;
            report.record(j, &decision.acts);
            history.push(turn.raw_text.clone());
        }
    }
    if report.turns == 0 {
        return Err(PolicyError::NoTurns);
    }
    Ok(report)
}

/// Self-play rollout without a corpus: dialogues of `dialogue_length` turns
/// where each plan's last act feeds the next turn, until `turns` plans exist.
pub fn simulate_rollout(
    policy: &dyn DialoguePolicy,
    turns: u64,
    dialogue_length: usize,
    seed: u64,
) -> Result<SimulationReport, PolicyError> {
    if turns == 0 || dialogue_length == 0 {
        return Err(PolicyError::NoTurns);
    }
    let mut rng = seeded_rng(seed);
    let mut report = SimulationReport::default();
    let mut j = 0usize;
    let mut last_acts = Vec::new();
    while report.turns < turns {
        let ctx = if j == 0 {
            PolicyContext::opening(KnowledgeSelection::none())
        } else {
            PolicyContext::following(
                j,
                std::mem::take(&mut last_acts),
                None,
                KnowledgeSelection::none(),
            )?
        };
        let decision = policy.plan(&ctx, &[], &mut rng)?;
        report.record(j, &decision.acts);
        last_acts = decision.acts;
        j = (j + 1) % dialogue_length;
    }
    Ok(report)
}

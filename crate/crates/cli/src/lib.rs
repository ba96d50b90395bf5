//! The `pdnrg` command line. [`run`] takes its streams as arguments so the
//! whole CLI can be driven in-process.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pdnrg_core::annotation::{
    annotate_dialogue, AnnotationConfig, DaTagger, HeuristicTagger, LookupTagger, TagSource,
    TagTable,
};
use pdnrg_core::config::Config;
use pdnrg_core::corpus::{
    corpus_statistics, load_dialogues, to_enriched_string, CorpusFormat, Dialogue, KnowledgeCorpus,
    ReadingSets,
};
use pdnrg_core::generation::{Realizer, TemplateRealizer, Variant};
use pdnrg_core::labels::{DialogueAct, Topic};
use pdnrg_core::metrics::{evaluate_corpus, zip_lines, EvaluationOptions};
use pdnrg_core::pipeline::{
    generate_dialogue, gold_plans, GeneratedRecord, PlannedTurn, Planner, Session,
};
use pdnrg_core::policy::{seeded_rng, simulate_distribution, simulate_rollout, SimulationReport};
use pdnrg_core::retrieval::{RetrievalIndex, Scorer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pdnrg",
    version,
    about = "Action-plan driven, knowledge-grounded response generation"
)]
struct Cli {
    /// Config file (TOML, or JSON by extension). Falls back to $PDNRG_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Link knowledge and tag dialogue acts; writes an enriched corpus.
    Annotate(AnnotateArgs),
    /// Emit one action plan per turn as JSON lines.
    Plan(PlanArgs),
    /// Realize action plans as text, over a corpus or a single context.
    Generate(GenerateArgs),
    /// Score candidates against references.
    Evaluate(EvaluateArgs),
    /// Dialogue-act distribution of a policy, as JSON and optionally CSV.
    Simulate(SimulateArgs),
    /// Talk to the engine; each reply is printed with its action plan.
    Chat(ChatArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Conversation file (Topical-Chat style or enriched).
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_format)]
    format: CorpusFormat,
    /// Reading-set file mapping document ids to knowledge sentences.
    #[arg(long, value_name = "FILE")]
    reading_sets: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScorerArg {
    Tfidf,
    Bm25,
}

#[derive(Debug, Args)]
struct RetrievalArgs {
    /// Minimum similarity for knowledge to be used.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    scorer: Option<ScorerArg>,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// simple, kd-da-p, propq, allq or external.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RealizerKind {
    Template,
    Http,
}

#[derive(Debug, Args)]
struct RealizerArgs {
    #[arg(long, value_enum, default_value = "template")]
    realizer: RealizerKind,
    /// Realizer endpoint URL (overrides [generation.endpoint]).
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// da, da+flag, da+flag+topic, baseline-turn or baseline-sent.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    include_past_das: bool,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Tagger output (JSON lines); the built-in heuristic tagger is used otherwise.
    #[arg(long, value_name = "FILE")]
    tags: Option<PathBuf>,
    #[arg(long)]
    confidence_floor: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write corpus statistics as JSON.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Ground-truth plans from the corpus annotation instead of a policy.
    #[arg(long, conflicts_with = "policy")]
    gold: bool,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(
        long,
        value_name = "FILE",
        requires = "reading_sets",
        conflicts_with = "context"
    )]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "auto", value_parser = parse_format)]
    format: CorpusFormat,
    #[arg(long, value_name = "FILE")]
    reading_sets: Option<PathBuf>,
    /// Plans from `plan` (JSON lines); planned on the fly otherwise.
    #[arg(long, value_name = "FILE", conflicts_with = "gold")]
    plans: Option<PathBuf>,
    #[arg(long)]
    gold: bool,
    /// Single-context mode: previous turns, oldest first (repeatable).
    #[arg(long, value_name = "TEXT", requires = "knowledge")]
    context: Vec<String>,
    /// Knowledge sentences for single-context mode, one per line.
    #[arg(long, value_name = "FILE")]
    knowledge: Option<PathBuf>,
    #[arg(long, value_parser = parse_topic)]
    topic: Option<Topic>,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    realizer: RealizerArgs,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Generated turns, one per line.
    #[arg(long, value_name = "FILE")]
    candidates_out: Option<PathBuf>,
    /// Reference turns, one per line, aligned with --candidates-out.
    #[arg(long, value_name = "FILE")]
    references_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(
        long,
        value_name = "FILE",
        requires = "references",
        required_unless_present = "traces"
    )]
    candidates: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "candidates")]
    references: Option<PathBuf>,
    /// Output of `generate`; supplies plan traces for adherence, and the
    /// candidate/reference pairs when --candidates is absent.
    #[arg(long, value_name = "FILE")]
    traces: Option<PathBuf>,
    /// Tagger output for the generated sentences, keyed like the traces.
    #[arg(long, value_name = "FILE", requires = "traces")]
    tags: Option<PathBuf>,
    #[arg(long)]
    adherence_overlap: Option<f64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Planned turns for a self-play rollout.
    #[arg(long, conflicts_with = "corpus")]
    turns: Option<u64>,
    #[arg(long, default_value_t = 20)]
    dialogue_length: usize,
    /// Annotated corpus to replay instead of a rollout.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChatArgs {
    /// Knowledge sentences, one per line.
    #[arg(long, value_name = "FILE")]
    knowledge: PathBuf,
    #[arg(long, value_parser = parse_topic)]
    topic: Option<Topic>,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    realizer: RealizerArgs,
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    s.parse()
        .map_err(|e: pdnrg_core::corpus::CorpusError| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_topic(s: &str) -> Result<Topic, String> {
    s.parse()
        .map_err(|e: pdnrg_core::labels::LabelError| e.to_string())
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for
/// usage errors, 1 when the pipeline fails.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli, stdin, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let mut shown = e.to_string();
            let _ = writeln!(stderr, "error: {shown}");
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                // many core errors already embed their source in the message
                if !shown.contains(&cause) {
                    let _ = writeln!(stderr, "  caused by: {cause}");
                    shown = cause;
                }
            }
            EXIT_FAILURE
        }
    }
}

fn dispatch(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<()> {
    let mut config = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Annotate(a) => annotate(a, &mut config, stdout),
        Command::Plan(a) => plan(a, &mut config, stdout),
        Command::Generate(a) => generate(a, &mut config, stdout),
        Command::Evaluate(a) => evaluate(a, &mut config, stdout),
        Command::Simulate(a) => simulate(a, &mut config, stdout),
        Command::Chat(a) => chat(a, &mut config, stdin, stdout),
    }
}

impl RetrievalArgs {
    fn apply(&self, config: &mut Config) {
        if let Some(t) = self.threshold {
            config.retrieval.threshold = t;
        }
        match self.scorer {
            Some(ScorerArg::Tfidf) => config.retrieval.scorer = Scorer::TfIdf,
            Some(ScorerArg::Bm25) if !matches!(config.retrieval.scorer, Scorer::Bm25 { .. }) => {
                config.retrieval.scorer = Scorer::BM25_DEFAULT;
            }
            _ => {}
        }
    }
}

impl PolicyArgs {
    fn apply(&self, config: &mut Config) {
        if let Some(p) = &self.policy {
            config.policy.name = p.clone();
        }
        if let Some(s) = self.seed {
            config.policy.seed = s;
        }
    }
}

impl RealizerArgs {
    fn apply(&self, config: &mut Config) {
        if let Some(url) = &self.endpoint {
            config
                .generation
                .endpoint
                .get_or_insert_with(Default::default)
                .url = url.clone();
        }
        if let Some(v) = self.variant {
            config.generation.variant = v;
        }
        if self.include_past_das {
            config.generation.include_past_das = true;
        }
    }

    fn build(&self, config: &Config) -> Result<Box<dyn Realizer>> {
        Ok(match self.realizer {
            RealizerKind::Template => Box::new(TemplateRealizer),
            RealizerKind::Http => Box::new(config.generation.http_realizer()?),
        })
    }
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
        }
        None => stdout.write_all(bytes).context("cannot write to stdout"),
    }
}

fn json_lines<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect()
}

struct Loaded {
    dialogues: Vec<Dialogue>,
    reading_sets: ReadingSets,
}

fn load(corpus: &Path, format: CorpusFormat, reading_sets: &Path) -> Result<Loaded> {
    let dialogues = load_dialogues(corpus, format)?;
    let reading_sets = ReadingSets::load(reading_sets)?;
    log::info!(
        "loaded {} dialogue(s) from {}",
        dialogues.len(),
        corpus.display()
    );
    Ok(Loaded {
        dialogues,
        reading_sets,
    })
}

fn knowledge_for(
    loaded: &Loaded,
    dialogue: &Dialogue,
    config: &Config,
) -> Result<(KnowledgeCorpus, RetrievalIndex)> {
    let corpus = loaded.reading_sets.corpus_for(dialogue)?;
    let index = RetrievalIndex::build(&corpus, config.retrieval.index_config())
        .with_context(|| format!("dialogue `{}`", dialogue.id))?;
    Ok((corpus, index))
}

fn knowledge_file(path: &Path, config: &Config) -> Result<(KnowledgeCorpus, RetrievalIndex)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let name = path
        .file_stem()
        .map_or("knowledge".into(), |s| s.to_string_lossy().into_owned());
    let corpus = KnowledgeCorpus::from_texts(&name, text.lines().filter(|l| !l.trim().is_empty()))?;
    let index = RetrievalIndex::build(&corpus, config.retrieval.index_config())?;
    Ok((corpus, index))
}

#[derive(Serialize)]
struct AnnotationStats {
    turns: usize,
    sentences: usize,
    avg_words: f64,
    avg_sentences: f64,
    da_histogram: BTreeMap<DialogueAct, usize>,
    no_dialogue_act_fraction: f64,
}

fn annotate(args: AnnotateArgs, config: &mut Config, stdout: &mut dyn Write) -> Result<()> {
    args.retrieval.apply(config);
    if let Some(f) = args.confidence_floor {
        config.annotation.confidence_floor = f;
    }
    config.validate()?;
    let loaded = load(
        &args.corpus.corpus,
        args.corpus.format,
        &args.corpus.reading_sets,
    )?;
    let table = args.tags.as_deref().map(TagTable::load).transpose()?;
    let source = match &table {
        Some(t) => TagSource::Table(t),
        None => TagSource::Tagger(&HeuristicTagger),
    };
    let settings = AnnotationConfig {
        threshold: config.retrieval.threshold,
        confidence_floor: config.annotation.confidence_floor,
    };
    let mut annotated = Vec::with_capacity(loaded.dialogues.len());
    for dialogue in &loaded.dialogues {
        let (_, index) = knowledge_for(&loaded, dialogue, config)?;
        annotated.push(annotate_dialogue(dialogue, &index, &source, settings)?);
    }
    emit(
        args.out.as_deref(),
        stdout,
        to_enriched_string(&annotated).as_bytes(),
    )?;
    if let Some(path) = &args.stats {
        let stats = corpus_statistics(&annotated)?;
        let no_da = stats
            .da_histogram
            .get(&DialogueAct::NoDialogueAct)
            .copied()
            .unwrap_or(0);
        let report = AnnotationStats {
            turns: stats.turns,
            sentences: stats.sentences,
            avg_words: stats.avg_words,
            avg_sentences: stats.avg_sentences,
            no_dialogue_act_fraction: no_da as f64 / stats.sentences.max(1) as f64,
            da_histogram: stats.da_histogram,
        };
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn plan_all(loaded: &Loaded, gold: bool, config: &Config) -> Result<Vec<PlannedTurn>> {
    let policy = config.policy.build()?;
    let mut rng = seeded_rng(config.policy.seed);
    let mut out = Vec::new();
    for dialogue in &loaded.dialogues {
        let (corpus, index) = knowledge_for(loaded, dialogue, config)?;
        if gold {
            out.extend(gold_plans(dialogue, &corpus)?);
        } else {
            let planner = Planner {
                policy: policy.as_ref(),
                index: &index,
                corpus: &corpus,
                threshold: config.retrieval.threshold,
            };
            out.extend(planner.plan_dialogue(dialogue, &HeuristicTagger, &mut rng)?);
        }
    }
    Ok(out)
}

fn plan(args: PlanArgs, config: &mut Config, stdout: &mut dyn Write) -> Result<()> {
    args.retrieval.apply(config);
    args.policy.apply(config);
    config.validate()?;
    let loaded = load(
        &args.corpus.corpus,
        args.corpus.format,
        &args.corpus.reading_sets,
    )?;
    let plans = plan_all(&loaded, args.gold, config)?;
    emit(args.out.as_deref(), stdout, &json_lines(&plans)?)
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn generate(args: GenerateArgs, config: &mut Config, stdout: &mut dyn Write) -> Result<()> {
    args.retrieval.apply(config);
    args.policy.apply(config);
    args.realizer.apply(config);
    config.validate()?;
    let realizer = args.realizer.build(config)?;
    let generation = config.generation.generation_config();

    let Some(corpus_path) = &args.corpus else {
        let knowledge = args.knowledge.as_deref().ok_or_else(|| {
            anyhow!("give --corpus and --reading-sets, or --context and --knowledge")
        })?;
        let (corpus, index) = knowledge_file(knowledge, config)?;
        let policy = config.policy.build()?;
        let planner = Planner {
            policy: policy.as_ref(),
            index: &index,
            corpus: &corpus,
            threshold: config.retrieval.threshold,
        };
        let mut session = Session::new(
            planner,
            realizer.as_ref(),
            &HeuristicTagger,
            generation,
            args.topic,
        );
        let mut rng = seeded_rng(config.policy.seed);
        let (last, earlier) = match args.context.split_last() {
            Some((last, earlier)) => (Some(last.as_str()), earlier),
            None => (None, &[][..]),
        };
        for turn in earlier {
            session.push_turn(turn)?;
        }
        let exchange = session.respond(last, &mut rng)?;
        return emit(args.out.as_deref(), stdout, &json_lines(&[exchange])?);
    };

    let reading_sets = args
        .reading_sets
        .as_deref()
        .expect("clap requires --reading-sets");
    let loaded = load(corpus_path, args.format, reading_sets)?;
    let plans = match &args.plans {
        Some(path) => read_json_lines::<PlannedTurn>(path)?,
        None => plan_all(&loaded, args.gold, config)?,
    };
    let mut by_dialogue: HashMap<&str, Vec<PlannedTurn>> = HashMap::new();
    for p in &plans {
        by_dialogue
            .entry(p.dialogue_id.as_str())
            .or_default()
            .push(p.clone());
    }
    let mut records: Vec<GeneratedRecord> = Vec::new();
    for dialogue in &loaded.dialogues {
        let Some(mut planned) = by_dialogue.remove(dialogue.id.as_str()) else {
            log::warn!("no plans for dialogue `{}`", dialogue.id);
            continue;
        };
        planned.sort_by_key(|p| p.turn_index);
        records.extend(generate_dialogue(
            dialogue,
            &planned,
            realizer.as_ref(),
            &generation,
            &HeuristicTagger,
        )?);
    }
    if let Some(unused) = by_dialogue.keys().next() {
        bail!("plans refer to dialogue `{unused}`, which is not in the corpus");
    }
    emit(args.out.as_deref(), stdout, &json_lines(&records)?)?;
    let lines = |f: fn(&GeneratedRecord) -> &str| {
        records
            .iter()
            .map(|r| one_line(f(r)) + "\n")
            .collect::<String>()
    };
    if let Some(path) = &args.candidates_out {
        fs::write(path, lines(|r| &r.text))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.references_out {
        fs::write(path, lines(|r| &r.reference))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn lookup_tagger(records: &[GeneratedRecord], table: &TagTable) -> Result<LookupTagger> {
    let mut map = HashMap::new();
    for r in records {
        let tags = table.get(&r.dialogue_id, r.turn_index).ok_or_else(|| {
            anyhow!(
                "no tags for dialogue `{}` turn {}",
                r.dialogue_id,
                r.turn_index
            )
        })?;
        if tags.len() != r.trace.len() {
            bail!(
                "dialogue `{}` turn {}: {} tag(s) for {} sentence(s)",
                r.dialogue_id,
                r.turn_index,
                tags.len(),
                r.trace.len()
            );
        }
        for (entry, tag) in r.trace.iter().zip(tags) {
            map.insert(entry.sentence.clone(), *tag);
        }
    }
    Ok(LookupTagger(map))
}

fn evaluate(args: EvaluateArgs, config: &mut Config, stdout: &mut dyn Write) -> Result<()> {
    if let Some(o) = args.adherence_overlap {
        config.metrics.adherence_overlap = o;
    }
    config.validate()?;
    let records: Vec<GeneratedRecord> = match &args.traces {
        Some(path) => read_json_lines(path)?,
        None => Vec::new(),
    };
    let read =
        |p: &Path| fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()));
    let (cand_text, ref_text);
    let pairs: Vec<(&str, &str)> = match (&args.candidates, &args.references) {
        (Some(c), Some(r)) => {
            cand_text = read(c)?;
            ref_text = read(r)?;
            zip_lines(&cand_text, &ref_text)?
        }
        _ => records
            .iter()
            .map(|r| (r.text.as_str(), r.reference.as_str()))
            .collect(),
    };
    let lookup = args
        .tags
        .as_deref()
        .map(|p| {
            TagTable::load(p)
                .map_err(anyhow::Error::from)
                .and_then(|t| lookup_tagger(&records, &t))
        })
        .transpose()?;
    let tagger: &dyn DaTagger = match &lookup {
        Some(l) => l,
        None => &HeuristicTagger,
    };
    let traces: Vec<_> = records
        .iter()
        .flat_map(|r| {
            r.trace
                .iter()
                .map(|t| (t.frame.clone(), t.sentence.clone()))
        })
        .collect();
    let options = EvaluationOptions {
        tagger: Some(tagger),
        traces: (!traces.is_empty()).then_some(&traces[..]),
        adherence_overlap: config.metrics.adherence_overlap,
    };
    let report = evaluate_corpus(&pairs, &options)?;
    emit(
        args.out.as_deref(),
        stdout,
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )
}

#[derive(Serialize)]
struct ActRow {
    count: u64,
    frequency: f64,
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    policy: &'a str,
    seed: u64,
    source: &'a str,
    turns: u64,
    non_initial_turns: u64,
    question_mass: f64,
    non_initial: BTreeMap<DialogueAct, ActRow>,
    all: BTreeMap<DialogueAct, ActRow>,
}

fn rows(h: &pdnrg_core::policy::ActHistogram) -> BTreeMap<DialogueAct, ActRow> {
    DialogueAct::ALL
        .iter()
        .map(|&a| {
            (
                a,
                ActRow {
                    count: h.counts.get(&a).copied().unwrap_or(0),
                    frequency: h.frequency(a),
                },
            )
        })
        .collect()
}

fn write_csv(path: &Path, report: &SimulationReport) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "act",
        "count_non_initial",
        "frequency_non_initial",
        "count_all",
        "frequency_all",
    ])?;
    for act in DialogueAct::ALL {
        let count = |h: &pdnrg_core::policy::ActHistogram| {
            h.counts.get(&act).copied().unwrap_or(0).to_string()
        };
        w.write_record([
            act.as_str().to_string(),
            count(&report.non_initial),
            report.non_initial.frequency(act).to_string(),
            count(&report.all),
            report.all.frequency(act).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(args: SimulateArgs, config: &mut Config, stdout: &mut dyn Write) -> Result<()> {
    args.policy.apply(config);
    config.validate()?;
    let policy = config.policy.build()?;
    let seed = config.policy.seed;
    let (report, source) = match (&args.corpus, args.turns) {
        (Some(path), _) => {
            let dialogues = load_dialogues(path, CorpusFormat::Auto)?;
            (
                simulate_distribution(policy.as_ref(), &dialogues, seed)?,
                "corpus",
            )
        }
        (None, Some(turns)) => (
            simulate_rollout(policy.as_ref(), turns, args.dialogue_length, seed)?,
            "rollout",
        ),
        (None, None) => {
            bail!("give --turns for a rollout or --corpus to replay an annotated corpus")
        }
    };
    let output = SimulationOutput {
        policy: policy.name(),
        seed,
        source,
        turns: report.turns,
        non_initial_turns: report.non_initial_turns,
        question_mass: report.non_initial.question_mass(),
        non_initial: rows(&report.non_initial),
        all: rows(&report.all),
    };
    emit(
        args.out.as_deref(),
        stdout,
        (serde_json::to_string_pretty(&output)? + "\n").as_bytes(),
    )?;
    if let Some(path) = &args.csv {
        write_csv(path, &report)?;
    }
    Ok(())
}

fn describe_plan(plan: &pdnrg_core::annotation::ActionPlan) -> String {
    plan.frames
        .iter()
        .map(|f| {
            let mut s = f.da.to_string();
            if let Some(t) = f.topic {
                s += &format!(" topic={t}");
            }
            if let Some(k) = &f.knowledge {
                s += &format!(" knowledge={}", k.id);
            }
            s
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

fn chat(
    args: ChatArgs,
    config: &mut Config,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
) -> Result<()> {
    args.retrieval.apply(config);
    args.policy.apply(config);
    args.realizer.apply(config);
    config.validate()?;
    let realizer = args.realizer.build(config)?;
    let (corpus, index) = knowledge_file(&args.knowledge, config)?;
    let policy = config.policy.build()?;
    let planner = Planner {
        policy: policy.as_ref(),
        index: &index,
        corpus: &corpus,
        threshold: config.retrieval.threshold,
    };
    let mut session = Session::new(
        planner,
        realizer.as_ref(),
        &HeuristicTagger,
        config.generation.generation_config(),
        args.topic,
    );
    let mut rng = seeded_rng(config.policy.seed);
    let mut user: Option<String> = None;
    loop {
        let exchange = session.respond(user.as_deref(), &mut rng)?;
        writeln!(stdout, "bot> {}", exchange.reply.text)?;
        writeln!(stdout, "plan> {}", describe_plan(&exchange.plan))?;
        writeln!(
            stdout,
            "knowledge> score={:.3} used={}",
            exchange.selection.score, exchange.selection.use_knowledge
        )?;
        stdout.flush()?;
        let line = loop {
            write!(stdout, "you> ")?;
            stdout.flush()?;
            let mut line = String::new();
            if stdin.read_line(&mut line)? == 0 {
                writeln!(stdout)?;
                return Ok(());
            }
            let line = line.trim().to_string();
            if line == "/quit" {
                return Ok(());
            }
            if !line.is_empty() {
                break line;
            }
        };
        user = Some(line);
    }
}

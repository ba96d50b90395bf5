use std::fs;
use std::path::{Path, PathBuf};

use pdnrg_cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn pdnrg(args: &[&str]) -> Output {
    pdnrg_with_input(args, "")
}

fn pdnrg_with_input(args: &[&str], input: &str) -> Output {
    let mut stdin = input.as_bytes();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("pdnrg").chain(args.iter().copied());
    let code = run(argv, &mut stdin, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let o = pdnrg(args);
    assert_eq!(o.code, EXIT_OK, "{args:?}\n{}", o.stderr);
    o.stdout
}

fn annotated(dir: &Path) -> PathBuf {
    let path = dir.join("enriched.json");
    ok(&[
        "annotate",
        "--corpus",
        &fixture("corpus.json"),
        "--reading-sets",
        &fixture("reading_sets.json"),
        "--out",
        path.to_str().unwrap(),
    ]);
    path
}

#[test]
fn help_and_version_exit_zero() {
    let o = pdnrg(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("simulate"));
    assert_eq!(pdnrg(&["--version"]).code, EXIT_OK);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["plan"][..],
        &["frobnicate"],
        &["simulate", "--turns", "lots"],
        &["generate", "--variant", "da+x"],
    ] {
        let o = pdnrg(args);
        assert_eq!(o.code, EXIT_USAGE, "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn pipeline_errors_exit_one_with_message() {
    let o = pdnrg(&[
        "plan",
        "--corpus",
        "/nonexistent/corpus.json",
        "--reading-sets",
        &fixture("reading_sets.json"),
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(
        o.stderr.starts_with("error:") && o.stderr.contains("/nonexistent/corpus.json"),
        "{}",
        o.stderr
    );

    let o = pdnrg(&["simulate", "--policy", "greedy", "--turns", "10"]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.contains("greedy"), "{}", o.stderr);

    let o = pdnrg(&[
        "simulate",
        "--turns",
        "10",
        "--seed",
        "1",
        "--policy",
        "propq",
        "--config",
        "/nonexistent.toml",
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
}

#[test]
fn out_of_range_threshold_is_rejected() {
    let o = pdnrg(&[
        "annotate",
        "--corpus",
        &fixture("corpus.json"),
        "--reading-sets",
        &fixture("reading_sets.json"),
        "--threshold",
        "1.5",
    ]);
    assert_eq!(o.code, EXIT_FAILURE, "{}", o.stderr);
}

#[test]
fn annotate_writes_enriched_corpus_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.json");
    let out = ok(&[
        "annotate",
        "--corpus",
        &fixture("corpus.json"),
        "--reading-sets",
        &fixture("reading_sets.json"),
        "--stats",
        stats.to_str().unwrap(),
    ]);
    let enriched: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(enriched["dialogues"].as_array().unwrap().len(), 5);
    let stats: Value = serde_json::from_str(&fs::read_to_string(stats).unwrap()).unwrap();
    assert_eq!(stats["turns"], 21);
    assert!(stats["no_dialogue_act_fraction"].as_f64().unwrap() >= 0.0);
}

#[test]
fn annotate_with_tag_file_applies_confidence_floor() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("one.json");
    fs::write(
        &corpus,
        r#"{"t_x": {"reading_sets": {"agent_1": "doc_food", "agent_2": "doc_food"},
            "content": [{"agent": "agent_1", "message": "Hi. Honey is great."}]}}"#,
    )
    .unwrap();
    let tags = dir.path().join("tags.jsonl");
    fs::write(
        &tags,
        concat!(
            r#"{"dialogue_id": "t_x", "turn_idx": 0, "sent_idx": 0, "label": "Salutation", "confidence": 0.95}"#,
            "\n",
            r#"{"dialogue_id": "t_x", "turn_idx": 0, "sent_idx": 1, "label": "Statement", "confidence": 0.49}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = ok(&[
        "annotate",
        "--corpus",
        corpus.to_str().unwrap(),
        "--reading-sets",
        &fixture("reading_sets.json"),
        "--tags",
        tags.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let sentences = &v["dialogues"][0]["turns"][0]["sentences"];
    assert_eq!(sentences[0]["da"], "Salutation");
    assert_eq!(sentences[1]["da"], "NoDialogueAct");
}

#[test]
fn planning_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let enriched = annotated(dir.path());
    let plan = |seed: &str| {
        ok(&[
            "plan",
            "--corpus",
            enriched.to_str().unwrap(),
            "--reading-sets",
            &fixture("reading_sets.json"),
            "--policy",
            "propq",
            "--seed",
            seed,
        ])
    };
    let a = plan("3");
    assert_eq!(a, plan("3"));
    assert_eq!(a.lines().count(), 21);
    let seeds: std::collections::BTreeSet<String> = (0..8).map(|s| plan(&s.to_string())).collect();
    assert!(seeds.len() > 1);
}

#[test]
fn gold_plans_follow_annotation() {
    let dir = tempfile::tempdir().unwrap();
    let enriched = annotated(dir.path());
    let out = ok(&[
        "plan",
        "--gold",
        "--corpus",
        enriched.to_str().unwrap(),
        "--reading-sets",
        &fixture("reading_sets.json"),
    ]);
    let first: Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["policy"], "gold");
    assert_eq!(first["acts"], serde_json::json!(["Salutation", "PropQ"]));
    assert_eq!(first["plan"]["frames"][0]["topic"], "sports");
}

#[test]
fn generate_writes_aligned_candidate_and_reference_files() {
    let dir = tempfile::tempdir().unwrap();
    let enriched = annotated(dir.path());
    let (cands, refs) = (dir.path().join("c.txt"), dir.path().join("r.txt"));
    let out = ok(&[
        "generate",
        "--corpus",
        enriched.to_str().unwrap(),
        "--reading-sets",
        &fixture("reading_sets.json"),
        "--gold",
        "--variant",
        "da+flag",
        "--candidates-out",
        cands.to_str().unwrap(),
        "--references-out",
        refs.to_str().unwrap(),
    ]);
    let records: Vec<Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 21);
    let c = fs::read_to_string(&cands).unwrap();
    let r = fs::read_to_string(&refs).unwrap();
    assert_eq!(c.lines().count(), 21);
    assert_eq!(r.lines().count(), 21);
    assert_eq!(r.lines().next().unwrap(), "Hi! Do you like golf?");
    for rec in &records {
        assert_eq!(
            rec["plan"]["frames"].as_array().unwrap().len(),
            rec["trace"].as_array().unwrap().len()
        );
    }

    let report: Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--candidates",
        cands.to_str().unwrap(),
        "--references",
        refs.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(report["n"], 21);
    assert!(report["adherence"].is_null());
}

#[test]
fn mismatched_line_counts_fail() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = (dir.path().join("c.txt"), dir.path().join("r.txt"));
    fs::write(&c, "a b\nc d\n").unwrap();
    fs::write(&r, "a b\n").unwrap();
    let o = pdnrg(&[
        "evaluate",
        "--candidates",
        c.to_str().unwrap(),
        "--references",
        r.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
}

#[test]
fn evaluate_uses_supplied_tags_for_adherence() {
    let dir = tempfile::tempdir().unwrap();
    let enriched = annotated(dir.path());
    let generated = dir.path().join("gen.jsonl");
    ok(&[
        "generate",
        "--corpus",
        enriched.to_str().unwrap(),
        "--reading-sets",
        &fixture("reading_sets.json"),
        "--policy",
        "simple",
        "--out",
        generated.to_str().unwrap(),
    ]);
    // label every generated sentence as Statement
    let mut tags = String::new();
    for line in fs::read_to_string(&generated).unwrap().lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for (i, _) in rec["trace"].as_array().unwrap().iter().enumerate() {
            tags += &serde_json::json!({
                "dialogue_id": rec["dialogue_id"], "turn_idx": rec["turn_index"], "sent_idx": i,
                "label": "Statement", "confidence": 0.9
            })
            .to_string();
            tags.push('\n');
        }
    }
    let tag_path = dir.path().join("tags.jsonl");
    fs::write(&tag_path, tags).unwrap();
    let report: Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--traces",
        generated.to_str().unwrap(),
        "--tags",
        tag_path.to_str().unwrap(),
    ]))
    .unwrap();
    let acc = report["adherence"]["da_acc"].as_f64().unwrap();
    assert!(acc < 1.0, "{acc}");
}

#[test]
fn single_context_generation() {
    let out = ok(&[
        "generate",
        "--context",
        "Hello!",
        "--context",
        "Do you know anything about golf balls and dimples?",
        "--knowledge",
        &fixture("knowledge.txt"),
        "--policy",
        "kd-da-p",
        "--topic",
        "sports",
    ]);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["turn_index"], 2);
    assert_eq!(v["selection"]["knowledge_id"], 0);
    assert_eq!(v["selection"]["use_knowledge"], true);
    assert!(
        v["reply"]["text"].as_str().unwrap().contains("336 dimples"),
        "{out}"
    );
}

#[test]
fn simulate_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("dist.csv");
    let out = ok(&[
        "simulate",
        "--policy",
        "allq",
        "--turns",
        "2000",
        "--seed",
        "5",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["policy"], "allq");
    assert_eq!(v["turns"], 2000);
    let csv = fs::read_to_string(csv_path).unwrap();
    assert!(csv.starts_with("act,count_non_initial,frequency_non_initial,count_all,frequency_all"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn simulate_replays_annotated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let enriched = annotated(dir.path());
    let v: Value = serde_json::from_str(&ok(&[
        "simulate",
        "--policy",
        "kd-da-p",
        "--corpus",
        enriched.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(v["source"], "corpus");
    assert_eq!(v["non_initial_turns"], 16);
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pdnrg.toml");
    fs::write(&cfg, "[policy]\nname = \"allq\"\nseed = 11\n").unwrap();
    let v: Value = serde_json::from_str(&ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--turns",
        "100",
    ]))
    .unwrap();
    assert_eq!(v["policy"], "allq");
    assert_eq!(v["seed"], 11);
    let v: Value = serde_json::from_str(&ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--turns",
        "100",
        "--policy",
        "simple",
    ]))
    .unwrap();
    assert_eq!(v["policy"], "simple");

    fs::write(&cfg, "[policy]\nnmae = \"allq\"\n").unwrap();
    let o = pdnrg(&[
        "--config",
        cfg.to_str().unwrap(),
        "simulate",
        "--turns",
        "100",
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.contains("nmae"), "{}", o.stderr);
}

#[test]
fn chat_session_runs_until_quit() {
    let o = pdnrg_with_input(
        &[
            "chat",
            "--knowledge",
            &fixture("knowledge.txt"),
            "--topic",
            "sports",
        ],
        "tell me about golf balls and their dimples\n\n/quit\nnever read\n",
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let bot: Vec<&str> = o.stdout.lines().filter(|l| l.contains("bot> ")).collect();
    assert_eq!(bot.len(), 2, "{}", o.stdout);
    assert!(bot[0].contains("Hi there"));
    assert!(o.stdout.contains("plan> "));

    // EOF ends the session as well
    let o = pdnrg_with_input(&["chat", "--knowledge", &fixture("knowledge.txt")], "");
    assert_eq!(o.code, EXIT_OK);
}

#[test]
fn http_realizer_without_endpoint_fails_cleanly() {
    let o = pdnrg(&[
        "generate",
        "--context",
        "hi",
        "--knowledge",
        &fixture("knowledge.txt"),
        "--realizer",
        "http",
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.starts_with("error:"));
}

fn schema(name: &str) -> jsonschema::Validator {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../schemas/{name}.schema.json"));
    let value: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&value).unwrap()
}

fn assert_valid(name: &str, instance: &Value) {
    let errors: Vec<String> = schema(name)
        .iter_errors(instance)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

#[test]
fn artifacts_match_their_schemas() {
    let read =
        |p: &str| -> Value { serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap() };
    assert_valid("corpus", &read(&fixture("corpus.json")));
    assert_valid("reading-sets", &read(&fixture("reading_sets.json")));

    let dir = tempfile::tempdir().unwrap();
    let enriched = annotated(dir.path());
    assert_valid("enriched", &read(enriched.to_str().unwrap()));

    let tags = pdnrg_core::annotation::TagTable::records_for(
        &pdnrg_core::corpus::load_dialogues(&enriched, pdnrg_core::corpus::CorpusFormat::Enriched)
            .unwrap(),
    );
    assert!(!tags.is_empty());
    for record in &tags {
        assert_valid("tagger-output", &serde_json::to_value(record).unwrap());
    }
}

#[test]
fn realizer_requests_match_schema() {
    use pdnrg_core::annotation::{Frame, KnowledgeRef};
    use pdnrg_core::corpus::KnowledgeId;
    use pdnrg_core::generation::{
        serialize_generation_request, GenerationRequest, HistoryTurn, Variant,
    };
    use pdnrg_core::labels::{DialogueAct, Topic};

    let k = KnowledgeRef {
        id: KnowledgeId(0),
        text: "Golf balls have around 336 dimples.".into(),
    };
    for variant in Variant::ALL {
        for past in [false, true] {
            let request = GenerationRequest {
                history: vec![HistoryTurn::new(
                    "Do you play golf?",
                    vec![DialogueAct::PropQ],
                )],
                frame: Some(
                    Frame::new(DialogueAct::Statement)
                        .with_topic(Some(Topic::Sports))
                        .with_knowledge(k.clone()),
                ),
                plan_acts: vec![DialogueAct::Statement],
                turn_knowledge: Some(k.clone()),
                prior_sentences: vec![],
                mode: variant.mode(),
                variant,
                include_past_das: past,
                knowledge_token_cap: 32,
            };
            let body: Value =
                serde_json::from_slice(&serialize_generation_request(&request)).unwrap();
            assert_valid("generation-request", &body);
        }
    }
}

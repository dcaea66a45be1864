mod common;

use common::{fixture, live_ctx, mock_ctx, replay_ctx, script, task, Fault, StubServer};
use pace_core::gateway::{BackendKind, MockRule, MockScript, RequestTag, ResponseCache};
use pace_core::harness::artifact::{BackendDescriptor, RunStatus, FOOTER_FILE, HEADER_FILE, RECORDS_FILE};
use pace_core::harness::{audit_test_isolation, missing_from_cache, split_for};
use pace_core::{
    emit_report, evaluate_final, make_split, run_experiment, score_prompt, select_initial_prompt, DemoPair,
    ExperimentPlan, InitialSetting, MetricId, Prompt, ReportFormat, RunArtifact, RunConfig,
};

fn plan(setting: InitialSetting, out: &std::path::Path) -> ExperimentPlan {
    ExperimentPlan {
        task: task("magic_task.json"),
        setting,
        config: RunConfig::default(),
        backend: BackendDescriptor {
            kind: BackendKind::Mock,
            base_url: None,
        },
        out_dir: out.to_owned(),
    }
}

fn pairs(n: usize) -> Vec<DemoPair> {
    (0..n).map(|i| DemoPair::new(format!("q{i}"), [format!("a{i}")])).collect()
}

#[test]
fn perfect_null_and_partial_oracles() {
    let perfect = mock_ctx(MockScript::new(
        vec![MockRule::new(None, r"Input: q(\d+),", "a$1").unwrap()],
        None,
    ));
    let null = mock_ctx(MockScript::new(vec![], Some(String::new())));
    let three = mock_ctx(MockScript::new(
        vec![MockRule::new(None, r"Input: q([147]),", "a$1").unwrap()],
        Some("wrong".into()),
    ));
    let p = Prompt::empty();
    let data = pairs(10);
    assert_eq!(score_prompt(&p, &data, MetricId::ExactMatch, &perfect).unwrap().mean.value(), 1.0);
    assert_eq!(score_prompt(&p, &data, MetricId::ExactMatch, &null).unwrap().mean.value(), 0.0);
    let r = score_prompt(&p, &data, MetricId::ExactMatch, &three).unwrap();
    assert!((r.mean.value() - 0.3).abs() < 1e-12);
    assert_eq!(r.n_pairs, 10);
    assert_eq!(r.per_pair.iter().map(|s| s.index).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    let recomputed: f64 = r.per_pair.iter().map(|s| s.score.value()).sum::<f64>() / 10.0;
    assert!((recomputed - r.mean.value()).abs() < 1e-12);
}

#[test]
fn scoring_errors_carry_pair_index() {
    let ctx = mock_ctx(MockScript::new(
        vec![MockRule::new(None, r"Input: q[0-5],", "x").unwrap()],
        None,
    ));
    let err = score_prompt(&Prompt::empty(), &pairs(10), MetricId::ExactMatch, &ctx).unwrap_err();
    assert!(err.to_string().starts_with("scoring pair 6: mock unmatched request"), "{err}");
}

#[test]
fn worst_sum_prompt_by_label() {
    let t = task("sum_task.json");
    let config = RunConfig::default();
    let split = make_split(&t, config.split, 0).unwrap();
    let ctx = mock_ctx(MockScript::new(vec![], Some("0".into())));
    let s = select_initial_prompt(&t, &InitialSetting::Worst, &split, &config, &ctx).unwrap();
    assert_eq!(s.prompt.text(), "Write the sum of the two numbers.");
    let m = select_initial_prompt(&t, &InitialSetting::Medium, &split, &config, &ctx).unwrap();
    assert_eq!(m.prompt.text(), "sum the numbers in the input.");
}

#[test]
fn ranked_median_is_lower_median() {
    // Without labels, score each sum prompt by how many pairs it answers,
    // reproducing the stored ordering; the lower median is index 3 of 8.
    let mut t = task("sum_task.json");
    for p in &mut t.human_prompts {
        p.label = pace_core::task::QualityLabel::Unlabeled;
    }
    let config = RunConfig::default();
    let split = make_split(&t, config.split, 0).unwrap();
    let quality = [8, 7, 6, 5, 4, 3, 2, 1];
    let rules: Vec<MockRule> = t
        .human_prompts
        .iter()
        .zip(quality)
        .flat_map(|(p, q)| {
            let pattern = format!(r"^Instruction: {},\nInput: ", regex::escape(&p.text));
            split.val[..q]
                .iter()
                .map(|pair| {
                    MockRule::new(
                        Some(vec![RequestTag::Eval]),
                        &format!("{pattern}{},", regex::escape(&pair.input)),
                        pair.outputs[0].clone(),
                    )
                    .unwrap()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let ctx = mock_ctx(MockScript::new(rules, Some("wrong".into())));
    let m = select_initial_prompt(&t, &InitialSetting::Medium, &split, &config, &ctx).unwrap();
    assert_eq!(m.prompt.text(), "sum the numbers in the input.");
    let w = select_initial_prompt(&t, &InitialSetting::Worst, &split, &config, &ctx).unwrap();
    assert_eq!(w.prompt.text(), "Write the sum of the two numbers.");
}

#[test]
fn run_writes_header_records_footer() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = mock_ctx(script("magic_script.json"));
    let artifact = run_experiment(&plan(InitialSetting::Worst, dir.path()), &ctx).unwrap();
    for f in [HEADER_FILE, RECORDS_FILE, FOOTER_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let footer = artifact.completed_footer().unwrap();
    assert_eq!(footer.final_test_score().unwrap().value(), 1.0);
    assert_eq!(footer.initial_test_score().unwrap().value(), 0.0);
    assert_eq!(footer.final_prompt.text(), "Repeat the input word. MAGIC.");
    assert_eq!(artifact.records.len(), 1);
    assert_eq!(artifact.header.experiment.setting, "worst");
    assert_eq!(std::fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap().lines().count(), 1);
    let split = split_for(&artifact, &task("magic_task.json")).unwrap();
    assert!(audit_test_isolation(&artifact, &split).is_clean());
}

#[test]
fn empty_setting_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = mock_ctx(script("magic_script.json"));
    let artifact = run_experiment(&plan(InitialSetting::Empty, dir.path()), &ctx).unwrap();
    assert_eq!(artifact.header.experiment.initial_prompt, Prompt::empty());
    assert_eq!(artifact.completed_footer().unwrap().final_prompt.text(), "MAGIC.");
}

#[test]
fn failed_run_keeps_header_and_failed_footer() {
    let dir = tempfile::tempdir().unwrap();
    // Scores fine, but no critic rule matches.
    let s = MockScript::new(
        vec![MockRule::new(Some(vec![RequestTag::Eval, RequestTag::Actor]), ".", "x").unwrap()],
        None,
    );
    let err = run_experiment(&plan(InitialSetting::Worst, dir.path()), &mock_ctx(s)).unwrap_err();
    assert!(err.to_string().starts_with("critic 1: mock unmatched request"), "{err}");
    let artifact = RunArtifact::load(dir.path()).unwrap();
    let footer = artifact.footer.as_ref().unwrap();
    assert_eq!(footer.status, RunStatus::Failed);
    assert!(footer.error.as_deref().unwrap().contains("critic 1"));
    assert!(artifact.records.is_empty());
    assert!(artifact.completed_footer().is_err());
}

#[test]
fn live_run_replays_with_same_scores_and_closed_cache() {
    let runs = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let server = StubServer::start(script("magic_script.json"), Fault::None);
    let mut live_plan = plan(InitialSetting::Worst, &runs.path().join("live"));
    live_plan.backend = BackendDescriptor {
        kind: BackendKind::Live,
        base_url: Some(server.url.clone()),
    };
    let recorded = run_experiment(&live_plan, &live_ctx(&server.url, cache.path())).unwrap();
    drop(server);
    assert!(missing_from_cache(&recorded, &ResponseCache::new(cache.path())).is_empty());

    let t = task("magic_task.json");
    let split = split_for(&recorded, &t).unwrap();
    let footer = recorded.completed_footer().unwrap();
    let replayed = evaluate_final(&footer.final_prompt, &split, MetricId::ExactMatch, &replay_ctx(cache.path())).unwrap();
    assert_eq!(Some(replayed.mean), footer.final_test_score());
}

#[test]
fn report_over_two_tasks() {
    let runs = tempfile::tempdir().unwrap();
    let a = run_experiment(&plan(InitialSetting::Worst, &runs.path().join("a")), &mock_ctx(script("magic_script.json")))
        .unwrap();
    let mut p = plan(InitialSetting::Worst, &runs.path().join("b"));
    p.task = task("plateau_task.json");
    let b = run_experiment(&p, &mock_ctx(script("plateau_script.json"))).unwrap();
    let md = emit_report(&[a.clone(), b.clone()], ReportFormat::Markdown).unwrap();
    let rows: Vec<&str> = md.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("| magic-echo | worst | 0.00 | 1.00 | 1.00 |"));
    assert!(rows[2].starts_with("| Average |"));
    let csv = emit_report(&[a, b], ReportFormat::Csv).unwrap();
    assert!(csv.lines().all(|l| l.starts_with('"') && l.ends_with('"')));
    assert_eq!(emit_report(&[], ReportFormat::Markdown).unwrap().lines().count(), 2);
}

#[test]
fn report_rejects_mixed_schema_versions() {
    let runs = tempfile::tempdir().unwrap();
    let ctx = mock_ctx(script("magic_script.json"));
    let a = run_experiment(&plan(InitialSetting::Worst, &runs.path().join("a")), &ctx).unwrap();
    let dir_b = runs.path().join("b");
    run_experiment(&plan(InitialSetting::Best, &dir_b), &ctx).unwrap();
    let header = dir_b.join(HEADER_FILE);
    let text = std::fs::read_to_string(&header).unwrap();
    std::fs::write(&header, text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1)).unwrap();
    let b = RunArtifact::load(&dir_b).unwrap();
    let err = emit_report(&[a, b], ReportFormat::Json).unwrap_err();
    assert!(err.to_string().starts_with("mixed schema versions"));
}

#[test]
fn rerun_overwrites_stale_records() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = mock_ctx(script("magic_script.json"));
    let first = run_experiment(&plan(InitialSetting::Worst, dir.path()), &ctx).unwrap();
    let second = run_experiment(&plan(InitialSetting::Worst, dir.path()), &ctx).unwrap();
    assert_eq!(first.fingerprint(), second.fingerprint());
    assert_eq!(second.records.len(), 1);
}

#[test]
fn fixture_paths_resolve() {
    assert!(fixture("templates/SHA256SUMS").exists());
}

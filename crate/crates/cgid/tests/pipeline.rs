use std::fs;
use std::path::Path;

use cgid::checkpoint::{load_checkpoint, save_checkpoint};
use cgid::compare::{compare_runs, metric_values};
use cgid::config::resolve_config;
use cgid::corpus_io::{export_corpus, load_embedding_corpus};
use cgid::report::{read_structured, write_table, DUMP_DIR, STRUCTURED_FILE, TABLE_COLUMNS, TABLE_FILE};
use cgid::run::{execute_run, load_corpus, RunOptions};
use cgid::sweep::{run_sweep, sweep_entries};
use cgid::CliError;
use cgid_core::experiment::{run_experiment, KMode, Method, RunConfig, RunObserver, RunState, StageContext};

fn desk(overrides: &[&str]) -> RunConfig {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    resolve_config(Some("desk-banking-like"), None, &owned).unwrap()
}

/// The desk preset with short schedules, for plumbing tests.
fn quick(overrides: &[&str]) -> RunConfig {
    let mut all = vec!["ind.epochs=4", "training.epochs=3"];
    all.extend_from_slice(overrides);
    desk(&all)
}

#[test]
fn desk_preset_writes_one_row_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk(&[]);
    let out = execute_run(&config, dir.path(), None, RunOptions::default()).unwrap();
    assert_eq!(out.reports.len(), 4);

    let table = fs::read_to_string(dir.path().join(TABLE_FILE)).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], TABLE_COLUMNS.join(","));
    assert_eq!(lines.len(), 5);
    for (t, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[0], "plrd");
        assert_eq!(cells[2], t.to_string());
    }

    let loaded = read_structured(&dir.path().join(STRUCTURED_FILE)).unwrap();
    assert_eq!(loaded.stages, out.reports);
    assert_eq!(loaded.header.config, config);

    for t in 0..4 {
        let dump = fs::read_to_string(dir.path().join(DUMP_DIR).join(format!("stage_{t}.tsv"))).unwrap();
        let rows: Vec<Vec<&str>> = dump.lines().map(|l| l.split('\t').collect()).collect();
        assert_eq!(rows.len(), out.dumps[t].truth.len());
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 5);
            assert_eq!(row[0], "test");
            assert_eq!(row[1], row[4]);
            assert_eq!(row[3].parse::<usize>().unwrap(), out.dumps[t].predicted[r]);
            assert_eq!(row[2].split(' ').count(), config.model.projection_dim);
        }
    }
}

#[test]
fn empty_run_gives_headers_only_table() {
    let mut buf = Vec::new();
    write_table(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", TABLE_COLUMNS.join(",")));
}

#[test]
fn exported_corpus_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = load_corpus(&desk(&[])).unwrap();
    let path = dir.path().join("corpus.tsv");
    export_corpus(&corpus, &path).unwrap();
    assert_eq!(load_embedding_corpus(&path).unwrap(), corpus);

    // a run on the exported file reproduces the synthetic run
    let config = quick(&[]);
    let mut from_file = config.clone();
    from_file.data.path = Some(path.display().to_string());
    let a = execute_run(&config, &dir.path().join("a"), None, RunOptions::default()).unwrap();
    let b = execute_run(&from_file, &dir.path().join("b"), None, RunOptions::default()).unwrap();
    assert_eq!(a.reports, b.reports);
}

#[test]
fn sweep_of_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let entries = sweep_entries(&[Method::Plrd], &[0.6], &[0, 1, 2]);
    let outcomes = run_sweep(&quick(&[]), &entries, dir.path(), 3);
    assert_eq!(outcomes.len(), 3);
    let mut seeds = Vec::new();
    for o in &outcomes {
        assert!(o.result.is_ok(), "{:?}", o.result);
        let r = read_structured(&o.dir.join(STRUCTURED_FILE)).unwrap();
        assert!(r.stages.iter().all(|s| s.seed == o.entry.seed));
        seeds.push(r.stages[0].seed);
    }
    assert_eq!(seeds, vec![0, 1, 2]);
}

struct Capture {
    at: usize,
    state: Option<RunState>,
}

impl RunObserver for Capture {
    fn on_stage_end(&mut self, ctx: &StageContext<'_>) -> cgid_core::Result<()> {
        if ctx.stage == self.at {
            self.state = Some(ctx.state.clone());
        }
        Ok(())
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick(&[]);
    let full = execute_run(&config, &dir.path().join("full"), None, RunOptions::default()).unwrap();

    let corpus = load_corpus(&config).unwrap();
    let mut capture = Capture { at: 1, state: None };
    run_experiment(&config, &corpus, &mut capture).unwrap();
    let path = dir.path().join("stage1.json");
    save_checkpoint(&path, &config, &capture.state.unwrap()).unwrap();
    let checkpoint = load_checkpoint(&path).unwrap();
    assert_eq!(checkpoint.state.completed, 2);

    let resumed = execute_run(&config, &dir.path().join("resumed"), Some(checkpoint), RunOptions::default()).unwrap();
    assert_eq!(resumed.reports, full.reports);
    let bytes = |d: &str| fs::read(dir.path().join(d).join(STRUCTURED_FILE)).unwrap();
    assert_eq!(bytes("resumed"), bytes("full"));
}

#[test]
fn resume_rejects_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick(&[]);
    execute_run(&config, dir.path(), None, RunOptions::default()).unwrap();
    let checkpoint = load_checkpoint(&dir.path().join("checkpoint.json")).unwrap();
    let other = quick(&["seed=9"]);
    let err = execute_run(&other, dir.path(), Some(checkpoint), RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn failure_keeps_the_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    // a plain file where the dump directory should go
    fs::write(dir.path().join(DUMP_DIR), "").unwrap();
    let err = execute_run(&quick(&[]), dir.path(), None, RunOptions::default()).unwrap_err();
    assert!(matches!(err, CliError::Interrupted { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    let checkpoint = load_checkpoint(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(checkpoint.state.completed, 1);
}

#[test]
fn estimated_class_counts_size_the_heads() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick(&["data.class_separation=10"]);
    config.k.mode = KMode::EstimateIndFrozen;
    let out = execute_run(&config, dir.path(), None, RunOptions { feature_dumps: false }).unwrap();
    for r in &out.reports[1..] {
        assert_eq!(Some(r.k_used), r.k_estimated);
        assert_eq!(r.head_sizes[r.stage], r.k_used);
        assert_eq!(r.k_true, 4);
    }
}

fn run_into(config: &RunConfig, dir: &Path) -> cgid::report::LoadedReport {
    execute_run(config, dir, None, RunOptions { feature_dumps: false }).unwrap();
    read_structured(&dir.join(STRUCTURED_FILE)).unwrap()
}

#[test]
fn comparing_a_single_report_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_into(&quick(&[]), dir.path());
    let cmp = compare_runs(std::slice::from_ref(&report), None).unwrap();
    assert_eq!(cmp.rows.len(), 1);
    assert_eq!(cmp.rows[0].medians, metric_values(&report.stages[3].metrics));
    assert!(cmp.rows[0].deltas.iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn identical_reports_give_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick(&[]);
    let a = run_into(&config, &dir.path().join("a"));
    let b = run_into(&config, &dir.path().join("b"));
    let mut kmeans = config.clone();
    kmeans.method = Method::Kmeans;
    let k1 = run_into(&kmeans, &dir.path().join("k1"));
    let k2 = run_into(&kmeans, &dir.path().join("k2"));
    let cmp = compare_runs(&[a, k1, b, k2], Some("kmeans")).unwrap();
    let row = cmp.rows.iter().find(|r| r.method == "kmeans").unwrap();
    assert!(row.deltas.iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn reports_on_different_splits_are_not_compared() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_into(&quick(&[]), &dir.path().join("a"));
    let b = run_into(&quick(&["data.split_seed=12345"]), &dir.path().join("b"));
    let err = compare_runs(&[a, b], None).unwrap_err();
    assert!(matches!(err, CliError::Compare(_)));
}

#[test]
fn replay_free_kmeans_forgets_more_than_plrd() {
    let dir = tempfile::tempdir().unwrap();
    let plrd = run_into(&desk(&[]), &dir.path().join("plrd"));
    let kmeans = run_into(&desk(&["method=\"kmeans\"", "baseline.lambda=0"]), &dir.path().join("kmeans"));
    let cmp = compare_runs(&[plrd, kmeans], Some("plrd")).unwrap();
    let f_ind = |m: &str| cmp.rows.iter().find(|r| r.method == m).unwrap().medians[1].unwrap();
    assert!(f_ind("plrd") < f_ind("kmeans"), "plrd {} kmeans {}", f_ind("plrd"), f_ind("kmeans"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use argmine::corpus::{CorpusSplit, LoadedCorpus, SplitName};
use argmine::report::{ReportTable, RunManifest};
use argmine::testkit::{synthetic_essays, tiled_essays, write_corpus};
use serde_json::Value;
use tempfile::TempDir;

fn argmine(args: &[&str]) -> Output {
    argmine_env(args, &[])
}

fn argmine_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_argmine"));
    cmd.args(args).env_remove("ARGMINE_ENDPOINT").env_remove("ARGMINE_API_KEY").env_remove("RUST_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    test: CorpusSplit,
    train: CorpusSplit,
    bundle: PathBuf,
}

/// Gap-free test essays (so inferred segmentation can score perfectly) and a training split.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let test = CorpusSplit { name: SplitName::Test, essays: tiled_essays(6, 11, "T") };
    let train = CorpusSplit { name: SplitName::Train, essays: synthetic_essays(4, 12, "R") };
    let files = write_corpus(&dir.path().join("raw"), &[&test, &train]).unwrap();
    let bundle = dir.path().join("corpus.json");
    let o = argmine(&[
        "ingest",
        "--essays",
        p(&files.essay_dir),
        "--annotations",
        p(&files.annotations),
        "--splits",
        p(&files.manifest),
        "--out",
        p(&bundle),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    Fixture { dir, test, train, bundle }
}

fn metric(aggregate: &Value, scope: &str, label: &str, name: &str) -> f64 {
    aggregate["report"]["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["scope"] == scope && m["label"] == label && m["metric"] == name)
        .unwrap_or_else(|| panic!("no {scope}/{label}/{name}"))["mean"]
        .as_f64()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn only_subdir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn ingest_prints_split_sizes_and_writes_a_bundle() {
    let f = fixture();
    let files = write_corpus(&f.dir.path().join("again"), &[&f.test, &f.train]).unwrap();
    let out = f.dir.path().join("b.json");
    let o = argmine(&[
        "ingest",
        "--essays",
        p(&files.essay_dir),
        "--annotations",
        p(&files.annotations),
        "--splits",
        p(&files.manifest),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    for split in [&f.test, &f.train] {
        let line = format!("{}: {} essays / {} arguments", split.name, split.essays.len(), split.span_count());
        assert!(text.contains(&line), "{line:?} not in {text}");
    }
    assert!(text.contains("orphaned annotation rows: 0"));
    let bundle: LoadedCorpus = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(bundle.split(SplitName::Test).unwrap(), &f.test);
    assert_eq!(bundle.split(SplitName::Train).unwrap(), &f.train);
}

#[test]
fn missing_inputs_exit_with_usage_code() {
    let f = fixture();
    let o = argmine(&["ingest", "--essays", "/nonexistent/essays", "--annotations", "/nonexistent/a.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"));
    let o = argmine(&["run", "--corpus", "/nonexistent/corpus.json", "--endpoint", "mock:gold"]);
    assert_eq!(o.status.code(), Some(2));
    let o = argmine(&["run", "--corpus", p(&f.bundle), "--endpoint", "mock:gold", "--shots", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shots"));
    let o = argmine(&["run", "--corpus", p(&f.bundle), "--setup", "joint", "--task", "type"]);
    assert_eq!(o.status.code(), Some(2));
    let o = argmine(&["run", "--corpus", p(&f.bundle), "--task", "banter"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gold_mock_run_is_perfect_and_offline_evaluation_reproduces_it() {
    let f = fixture();
    let out = f.dir.path().join("run");
    let o = argmine(&[
        "run",
        "--corpus",
        p(&f.bundle),
        "--task",
        "type_and_quality",
        "--segmentation",
        "inferred",
        "--shots",
        "2",
        "--endpoint",
        "mock:gold",
        "--runs",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let exp = only_subdir(&out);
    let aggregate = read_json(&exp.join("aggregate.json"));
    for scope in ["type", "quality", "segmentation"] {
        assert_eq!(metric(&aggregate, scope, "macro", "f1"), 100.0, "{scope}");
    }
    assert!(stdout(&o).contains("Argument type (macro F1 100.00 ± 0.00"));

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let entry = &manifest.experiments[0];
    assert_eq!(aggregate["config_hash"], entry.config_hash.as_str());
    assert_eq!(aggregate["manifest"], "../manifest.json");
    for artifact in &entry.artifacts {
        assert!(out.join(artifact).is_file(), "{artifact}");
    }
    assert_eq!(manifest.inputs.len(), 1);

    let again = f.dir.path().join("evaluated");
    let preds: Vec<String> = (0..2).map(|r| exp.join(format!("predictions-{r}.jsonl")).display().to_string()).collect();
    let o = argmine(&["evaluate", "--corpus", p(&f.bundle), "--predictions", &preds[1], &preds[0], "--out", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let exp2 = only_subdir(&again);
    for file in ["report-0.json", "report-1.json", "aggregate.json", "report.txt"] {
        assert_eq!(fs::read(exp.join(file)).unwrap(), fs::read(exp2.join(file)).unwrap(), "{file}");
    }
    assert_eq!(fs::read(out.join("table.csv")).unwrap(), fs::read(again.join("table.csv")).unwrap());
}

#[test]
fn rerunning_a_configuration_reproduces_its_reports() {
    let f = fixture();
    let config = f.dir.path().join("run.toml");
    fs::write(
        &config,
        "corpus = \"corpus.json\"\n\n[experiment]\ntask = \"quality_only\"\nsegmentation = \"gold\"\nshots = 1\nruns = 3\n\n[experiment.model]\nendpoint = \"mock:gold\"\nmodel = \"oracle\"\n",
    )
    .unwrap();
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let out = f.dir.path().join(name);
        let o = argmine(&["run", "--config", p(&config), "--runs", "2", "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        dirs.push(out);
    }
    let exp = only_subdir(&dirs[0]);
    let name = exp.file_name().unwrap();
    assert_eq!(name, "quality_only-gold-1shot-oracle");
    let files: Vec<_> = fs::read_dir(&exp).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 2 + 2 + 2, "{files:?}");
    for file in files {
        assert_eq!(fs::read(exp.join(&file)).unwrap(), fs::read(dirs[1].join(name).join(&file)).unwrap(), "{file:?}");
    }
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dirs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.experiments[0].config.runs, 2, "flags override the config file");
    assert_eq!(manifest.inputs.len(), 2);
}

#[test]
fn endpoint_comes_from_the_environment() {
    let f = fixture();
    let out = f.dir.path().join("env");
    let o = argmine_env(
        &["run", "--corpus", p(&f.bundle), "--task", "type", "--runs", "1", "--out", p(&out)],
        &[("ARGMINE_ENDPOINT", "mock:gold")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let aggregate = read_json(&only_subdir(&out).join("aggregate.json"));
    assert_eq!(metric(&aggregate, "type", "macro", "f1"), 100.0);
}

#[test]
fn unreachable_model_fails_the_run() {
    let f = fixture();
    let out = f.dir.path().join("down");
    let o = argmine(&[
        "run",
        "--corpus",
        p(&f.bundle),
        "--endpoint",
        "http://127.0.0.1:9",
        "--runs",
        "1",
        "--timeout-secs",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.experiments[0].error.is_some());
    assert!(manifest.experiments[0].artifacts.is_empty());
}

#[test]
fn damaged_predictions_are_rejected_with_a_line_number() {
    let f = fixture();
    let out = f.dir.path().join("run");
    let o = argmine(&["run", "--corpus", p(&f.bundle), "--endpoint", "mock:gold", "--runs", "1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let preds = only_subdir(&out).join("predictions-0.jsonl");
    let text = fs::read_to_string(&preds).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + f.test.essays.len());

    let cut = f.dir.path().join("cut.jsonl");
    let last = lines[4];
    fs::write(&cut, format!("{}\n{}", lines[..4].join("\n"), &last[..last.len() / 2])).unwrap();
    let o = argmine(&["evaluate", "--corpus", p(&f.bundle), "--predictions", p(&cut)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    let short = f.dir.path().join("short.jsonl");
    fs::write(&short, lines[..3].join("\n")).unwrap();
    let o = argmine(&["evaluate", "--corpus", p(&f.bundle), "--predictions", p(&short)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let o = argmine(&["evaluate", "--corpus", p(&f.bundle), "--predictions", p(&preds)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("macro F1 100.00"));
}

fn write_sweep(dir: &Path, variants: &str) -> PathBuf {
    let path = dir.join("sweep.toml");
    let text = format!(
        "corpus = \"corpus.json\"\nout = \"sweep-out\"\n\n[defaults]\nruns = 2\nshots = 1\n\n[defaults.model]\nendpoint = \"mock:gold\"\nmodel = \"oracle\"\n\n{variants}"
    );
    fs::write(&path, text).unwrap();
    path
}

const TWO_VARIANTS: &str = "[[variants]]\nname = \"joint\"\ntask = \"type_and_quality\"\n\n[[variants]]\nname = \"segment\"\ntask = \"segmentation\"\nsegmentation = \"inferred\"\nmode = \"fine_tuned\"\nshots = 0\n";

#[test]
fn sweep_runs_every_variant_into_one_table() {
    let f = fixture();
    let sweep = write_sweep(f.dir.path(), TWO_VARIANTS);
    let o = argmine(&["sweep", "--config", p(&sweep)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = f.dir.path().join("sweep-out");
    for name in ["joint", "segment"] {
        assert!(out.join(name).join("aggregate.json").is_file());
    }
    let table = ReportTable::read_csv(fs::File::open(out.join("table.csv")).unwrap()).unwrap();
    let experiments: std::collections::BTreeSet<&str> = table.rows.iter().map(|r| r.experiment.as_str()).collect();
    assert_eq!(experiments.into_iter().collect::<Vec<_>>(), ["joint", "segment"]);
    assert!(table.rows.iter().all(|r| r.runs == 2));
    let seg = table.rows.iter().find(|r| r.scope == "segmentation" && r.label == "macro").unwrap();
    assert_eq!((seg.value, seg.std, seg.mode.as_str()), (100.0, 0.0, "fine_tuned"));
}

#[test]
fn sweep_records_a_failing_variant_and_carries_on() {
    let f = fixture();
    let variants = format!("{TWO_VARIANTS}\n[[variants]]\nname = \"too-many\"\ntask = \"type_only\"\nshots = 5\n");
    let sweep = write_sweep(f.dir.path(), &variants);
    let o = argmine(&["sweep", "--config", p(&sweep)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("2 of 3 variants completed"));
    let out = f.dir.path().join("sweep-out");
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let errors: Vec<_> = manifest.experiments.iter().map(|e| e.error.is_some()).collect();
    assert_eq!(errors, [false, false, true]);
    assert!(manifest.experiments[2].error.as_ref().unwrap().contains("shots"));
    assert!(!out.join("too-many").exists());
    assert!(out.join("segment").join("aggregate.json").is_file());
}

#[test]
fn sweep_without_variants_is_a_usage_error() {
    let f = fixture();
    let sweep = write_sweep(f.dir.path(), "");
    let o = argmine(&["sweep", "--config", p(&sweep)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no [[variants]]"));
}

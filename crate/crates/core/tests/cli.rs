use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pulsedet::pipeline::io::{file_digest, CsvTable};
use pulsedet::pipeline::manifest::FileRole;
use pulsedet::pipeline::{ExperimentConfig, RunManifest};

/// Trial counts at the smallest values validation accepts for P_fa 1e-3.
const SMALL: &str = r#"
[trials]
train_pos = 150
train_neg = 150
calibration = 10000
eval_noise = 10000
eval_pulse = 100
covariance = 60
bootstrap = 20
combiner_pos = 100
combiner_neg = 100
combiner_calibration = 10000
combiner_eval = 100
roc = 100
roc_points = 5

[search]
localization_trials = 2
"#;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("config.toml");
        fs::write(&config, format!("{extra}\n{SMALL}")).unwrap();
        Self { _dir: dir, root, config }
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_pulsedet"))
            .current_dir(&self.root)
            .arg("--config")
            .arg(&self.config)
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    }
}

fn fails_with(o: &Output, code: i32, needle: &str) {
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(code), "stderr: {stderr}");
    assert!(stderr.contains(needle), "expected '{needle}' in: {stderr}");
}

#[test]
fn print_config_round_trips() {
    let out = Command::new(env!("CARGO_BIN_EXE_pulsedet")).arg("print-config").output().unwrap();
    assert!(out.status.success());
    let cfg: ExperimentConfig = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());

    let ws = Workspace::new("seed = 3");
    let cfg: ExperimentConfig = toml::from_str(&ws.ok(&["--seed", "8", "print-config"])).unwrap();
    assert_eq!(cfg.seed, 8);
    assert_eq!(cfg.trials.calibration, 10_000);
}

#[test]
fn validation_errors_name_the_field() {
    let ws = Workspace::new("shifts = [0, 11, 1024]");
    fails_with(&ws.run(&["gen"]), 2, "shifts");
    assert!(!ws.out().exists());

    let ws = Workspace::new("");
    fs::write(&ws.config, SMALL.replace("eval_noise = 10000", "eval_noise = 500")).unwrap();
    fails_with(&ws.run(&["eval"]), 2, "trials.eval_noise");

    let ws = Workspace::new("");
    fails_with(&ws.run(&["--workers", "0", "gen"]), 2, "workers");

    let ws = Workspace::new("unknown_key = 1");
    assert_eq!(ws.run(&["gen"]).status.code(), Some(1));
}

#[test]
fn stages_require_their_inputs() {
    let ws = Workspace::new("");
    fails_with(&ws.run(&["train"]), 3, "missing artifact");
    ws.ok(&["gen"]);
    fails_with(&ws.run(&["calibrate"]), 3, "train");
    fails_with(&ws.run(&["search", "absent.csv"]), 3, "missing artifact");
}

#[test]
fn artifacts_from_another_config_are_refused() {
    let ws = Workspace::new("");
    ws.ok(&["gen"]);
    fails_with(&ws.run(&["--seed", "5", "train"]), 2, "config hash mismatch");
    ws.ok(&["train"]);

    // A model edited after training no longer matches its recorded digest.
    let model = ws.out().join("models/svm_shift_0.toml");
    let text = fs::read_to_string(&model).unwrap();
    fs::write(&model, format!("# edited\n{text}")).unwrap();
    fails_with(&ws.run(&["calibrate"]), 2, "changed since it was recorded");
}

#[test]
fn gen_is_reproducible() {
    let ws = Workspace::new("");
    ws.ok(&["gen", "--materialize"]);
    let datasets = ws.out().join("datasets.csv");
    let first = fs::read(&datasets).unwrap();
    let rows = ws.out().join("data/train_shift_11.csv");
    let first_rows = file_digest(&rows).unwrap();

    ws.ok(&["gen", "--materialize"]);
    assert_eq!(fs::read(&datasets).unwrap(), first);
    assert_eq!(file_digest(&rows).unwrap(), first_rows);

    let table = CsvTable::read(&rows).unwrap();
    assert_eq!(table.header.len(), 65);
    assert_eq!(table.header[0], "label");
    assert_eq!(table.rows.len(), 300);

    let listing = CsvTable::read(&datasets).unwrap();
    let shifts: Vec<&str> = listing.rows.iter().filter(|r| r[1] == "train").map(|r| r[2].as_str()).collect();
    assert_eq!(shifts, ["0", "11", "23"]);
}

/// Every recorded digest matches the file on disk. Inputs outside the output
/// directory are recorded relative to the working directory.
fn check_manifest(root: &Path, out: &Path) {
    let m = RunManifest::load(out).unwrap();
    assert!(fs::read_to_string(RunManifest::path(out)).unwrap().starts_with("# generated_at = "));
    for (name, entry) in &m.files {
        let path = match entry.role {
            FileRole::Output => out.join(name),
            FileRole::Input if out.join(name).exists() => out.join(name),
            FileRole::Input => root.join(name),
        };
        assert_eq!(file_digest(&path).unwrap(), entry.sha256, "{name}");
    }
}

#[test]
fn staged_search_over_a_stream() {
    let ws = Workspace::new("");
    ws.ok(&["gen"]);
    ws.ok(&["train"]);
    ws.ok(&["calibrate"]);
    let printed = ws.ok(&["gen-stream"]);
    assert!(printed.trim_end().ends_with("stream.csv"), "{printed}");
    ws.ok(&["search", "out/stream.csv"]);

    let events = CsvTable::read(&ws.out().join("events_stream.csv")).unwrap();
    assert_eq!(events.header, ["window_index", "shift", "smooth_score", "decision"]);
    assert_eq!(events.rows.len(), 3 * 1025);
    assert!(events.rows.iter().all(|r| r[3] == "1" || r[3] == "-1"));

    let agg = CsvTable::read(&ws.out().join("aggregations_stream.csv")).unwrap();
    assert_eq!(
        agg.header,
        ["hypothesized_onset", "votes", "score_shift_0", "score_shift_11", "score_shift_23"]
    );
    let onset = agg.rows.iter().find(|r| r[0] == "512").unwrap();
    assert!(onset[2..].iter().all(|c| !c.is_empty()));

    let first = fs::read(ws.out().join("events_stream.csv")).unwrap();
    ws.ok(&["--workers", "1", "search", "out/stream.csv"]);
    assert_eq!(fs::read(ws.out().join("events_stream.csv")).unwrap(), first);
    check_manifest(&ws.root, &ws.out());

    // Too short for a single window.
    let short = ws.root.join("short.csv");
    fs::write(&short, "sample\n1\n2\n3\n").unwrap();
    fails_with(&ws.run(&["search", "short.csv"]), 2, "shorter than");
}

#[test]
fn full_pipeline_writes_every_report() {
    let ws = Workspace::new("");
    ws.ok(&["pipeline"]);
    let out = ws.out();
    for name in [
        "datasets.csv",
        "training.csv",
        "calibration.csv",
        "eval.csv",
        "covariance_pulse.csv",
        "covariance_noise.csv",
        "covariance_comparison.csv",
        "roc_shift_0.csv",
        "roc_shift_23.csv",
        "fusion.csv",
        "localization.csv",
        "stream.csv",
        "events_stream.csv",
        "aggregations_stream.csv",
        "models/combiner.toml",
        "models/detector_shift_11.toml",
        "summary.toml",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let eval = CsvTable::read(&out.join("eval.csv")).unwrap();
    assert_eq!(eval.rows.len(), 3);
    let roc = CsvTable::read(&out.join("roc_shift_0.csv")).unwrap();
    assert_eq!(&roc.header[..2], ["pfa", "pd"]);
    check_manifest(&ws.root, &out);

    let m = RunManifest::load(&out).unwrap();
    for stage in ["gen", "train", "calibrate", "eval", "cov", "roc", "combine", "localize", "gen-stream", "search", "summary"] {
        m.require_stage(&out, stage).unwrap();
    }
}

//! One function per command. Each checks the manifest of the output
//! directory, reads upstream artifacts, writes its own files and records
//! their digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::{fmt_f64, load_toml, read_frame_csv, save_toml, sha256_hex, write_bytes, write_frame_csv, CsvTable};
use super::manifest::RunManifest;
use crate::analysis::{
    covariance_z_scores, evaluate_detector, evaluate_fusion, localization_study, roc_sweep, score_covariance,
    train_combiner, Condition, CovarianceReport, EvalReport, FusionReport, LocalizationReport,
    RateEstimate, RocPoint,
};
use crate::detector::{
    build_training_set, noise_scores, threshold_for_pfa, train_linear_svm, CalibratedDetector, LinearModel,
    TrainingSet,
};
use crate::error::{Error, Result};
use crate::search::{aggregate_events, run_bank, AggregatedDetection, DetectionEvent, DetectorBank};
use crate::signalgen::{embed_pulse, stream_id, StreamDomain};
use crate::TOOL_VERSION;

pub const DATASETS: &str = "datasets.csv";
pub const TRAINING: &str = "training.csv";
pub const CALIBRATION: &str = "calibration.csv";
pub const EVAL: &str = "eval.csv";
pub const COVARIANCE_COMPARISON: &str = "covariance_comparison.csv";
pub const COMBINER: &str = "models/combiner.toml";
pub const FUSION: &str = "fusion.csv";
pub const LOCALIZATION: &str = "localization.csv";
pub const STREAM: &str = "stream.csv";
pub const SUMMARY: &str = "summary.toml";

pub fn model_file(shift: usize) -> String {
    format!("models/svm_shift_{shift}.toml")
}

pub fn detector_file(shift: usize) -> String {
    format!("models/detector_shift_{shift}.toml")
}

pub fn dataset_file(shift: usize) -> String {
    format!("data/train_shift_{shift}.csv")
}

pub fn covariance_file(condition: Condition) -> String {
    format!("covariance_{}.csv", condition.as_str())
}

pub fn covariance_se_file(condition: Condition) -> String {
    format!("covariance_se_{}.csv", condition.as_str())
}

pub fn roc_file(shift: usize) -> String {
    format!("roc_shift_{shift}.csv")
}

/// A model plus the tool and config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile<T> {
    pub tool_version: String,
    pub config_hash: String,
    pub model: T,
}

/// Validated config, output directory and worker count for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

impl Context {
    pub fn new(config: ExperimentConfig, workers: Option<usize>) -> Result<Self> {
        config.validate()?;
        if workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(Self {
            out_dir: config.output_dir.clone(),
            config,
            workers,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Run `f` on a pool of `workers` threads (or the global pool).
    pub fn run<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self.workers {
            None => f(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?
                .install(f),
        }
    }

    fn manifest(&self, stage: &str) -> Result<RunManifest> {
        RunManifest::load_checked(&self.out_dir, &self.config, stage)
    }

    fn save_model<T: Serialize>(&self, name: &str, model: T) -> Result<PathBuf> {
        let path = self.path(name);
        save_toml(
            &path,
            &ModelFile {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: self.config.hash(),
                model,
            },
        )?;
        Ok(path)
    }

    fn load_model<T: serde::de::DeserializeOwned>(&self, manifest: &RunManifest, name: &str) -> Result<T> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        manifest.verify(&self.out_dir, &path)?;
        let file: ModelFile<T> = load_toml(&path)?;
        if file.config_hash != self.config.hash() {
            return Err(Error::ConfigMismatch {
                stage: name.to_string(),
                expected: self.config.hash(),
                found: file.config_hash,
            });
        }
        Ok(file.model)
    }

    fn training_set(&self, shift: usize) -> Result<TrainingSet> {
        let c = &self.config;
        build_training_set(
            shift,
            c.trials.train_pos,
            c.trials.train_neg,
            c.snr_db,
            &c.scenario(),
            c.seed,
        )
    }

    /// The calibrated detectors in shift order.
    pub fn load_bank(&self, manifest: &RunManifest) -> Result<DetectorBank> {
        manifest.require_stage(&self.out_dir, "calibrate")?;
        let detectors = self
            .config
            .shifts
            .iter()
            .map(|&k| self.load_model(manifest, &detector_file(k)))
            .collect::<Result<Vec<CalibratedDetector>>>()?;
        let sc = self.config.scenario();
        DetectorBank::new(detectors, sc.wavelet, sc.window_len(), sc.convention)
    }

    fn finish(&self, mut manifest: RunManifest, stage: &str, outputs: &[PathBuf]) -> Result<()> {
        manifest.record(&self.out_dir, stage, outputs)?;
        manifest.save(&self.out_dir)
    }
}

/// Digest of a training set's labels and features (little-endian f64).
pub fn dataset_digest(data: &TrainingSet) -> String {
    let mut bytes = Vec::with_capacity(8 * (data.raw_features().len() + data.len() + 2));
    bytes.extend_from_slice(&(data.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(data.n_features() as u64).to_le_bytes());
    for v in data.labels().iter().chain(data.raw_features()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn rate_cells(r: &RateEstimate) -> Vec<String> {
    vec![
        r.successes.to_string(),
        r.trials.to_string(),
        fmt_f64(r.rate),
        fmt_f64(r.ci_low),
        fmt_f64(r.ci_high),
    ]
}

fn rate_header(prefix: &str) -> Vec<String> {
    ["successes", "trials", "rate", "ci_low", "ci_high"]
        .iter()
        .map(|s| format!("{prefix}{s}"))
        .collect()
}

/// Training-set seeds and digests; with `materialize`, the feature rows too.
pub fn cmd_gen(ctx: &Context, materialize: bool) -> Result<Vec<PathBuf>> {
    let c = &ctx.config;
    let mut table = CsvTable::new(&[
        "name", "kind", "shift", "n_pos", "n_neg", "n_features", "seed", "sha256", "file",
    ]);
    let mut outputs = Vec::new();
    for &k in &c.shifts {
        let data = ctx.training_set(k)?;
        let file = if materialize {
            let name = dataset_file(k);
            let mut header = vec!["label".to_string()];
            header.extend((0..data.n_features()).map(|j| format!("f{j}")));
            let mut rows = CsvTable::new(&header);
            for (row, &label) in data.rows().zip(data.labels()) {
                let mut cells = vec![fmt_f64(label)];
                cells.extend(row.iter().map(|&v| fmt_f64(v)));
                rows.push(cells);
            }
            let path = ctx.path(&name);
            rows.write(&path)?;
            outputs.push(path);
            name
        } else {
            String::new()
        };
        table.push(vec![
            format!("train_shift_{k}"),
            "train".into(),
            k.to_string(),
            c.trials.train_pos.to_string(),
            c.trials.train_neg.to_string(),
            data.n_features().to_string(),
            c.seed.to_string(),
            dataset_digest(&data),
            file,
        ]);
    }
    // Noise-only sets are regenerated from the seed on demand.
    for (name, n) in [
        ("calibration", c.trials.calibration),
        ("eval_noise", c.trials.eval_noise),
        ("eval_pulse", c.trials.eval_pulse),
    ] {
        table.push(vec![
            name.into(),
            name.into(),
            String::new(),
            String::new(),
            n.to_string(),
            c.scenario().n_features().to_string(),
            c.seed.to_string(),
            String::new(),
            String::new(),
        ]);
    }
    let path = ctx.path(DATASETS);
    table.write(&path)?;
    outputs.insert(0, path);
    // A fresh generation invalidates everything downstream.
    let manifest = RunManifest::new(c);
    ctx.finish(manifest, "gen", &outputs)?;
    Ok(outputs)
}

/// Regenerate each training set, check it against the recorded digest and
/// train one SVM per shift.
pub fn cmd_train(ctx: &Context) -> Result<Vec<PathBuf>> {
    let manifest = ctx.manifest("train")?;
    manifest.require_stage(&ctx.out_dir, "gen")?;
    let datasets_path = ctx.path(DATASETS);
    manifest.verify(&ctx.out_dir, &datasets_path)?;
    let datasets = CsvTable::read(&datasets_path)?;
    let recorded: BTreeMap<String, String> = datasets
        .rows
        .iter()
        .filter(|r| r[1] == "train")
        .map(|r| (r[2].clone(), r[7].clone()))
        .collect();

    let mut table = CsvTable::new(&[
        "shift",
        "n_examples",
        "n_support",
        "iterations",
        "primal_objective",
        "dual_objective",
        "relative_gap",
    ]);
    let mut outputs = Vec::new();
    for &k in &ctx.config.shifts {
        let data = ctx.training_set(k)?;
        let expected = recorded
            .get(&k.to_string())
            .ok_or_else(|| Error::MissingArtifact(datasets_path.join(format!("[train_shift_{k}]"))))?;
        let actual = dataset_digest(&data);
        if &actual != expected {
            return Err(Error::InvalidInput(format!(
                "regenerated training set for shift {k} has digest {actual}, {DATASETS} records {expected}"
            )));
        }
        let model = train_linear_svm(&data, &ctx.config.svm)?;
        let s = &model.metadata.summary;
        table.push(vec![
            k.to_string(),
            s.n_examples.to_string(),
            s.n_support.to_string(),
            s.iterations.to_string(),
            fmt_f64(s.primal_objective),
            fmt_f64(s.dual_objective),
            fmt_f64(s.relative_gap),
        ]);
        outputs.push(ctx.save_model(&model_file(k), model)?);
    }
    let path = ctx.path(TRAINING);
    table.write(&path)?;
    outputs.push(path);
    ctx.finish(manifest, "train", &outputs)?;
    Ok(outputs)
}

/// Thresholds from fresh noise scores at the target false-alarm rate.
pub fn cmd_calibrate(ctx: &Context) -> Result<Vec<PathBuf>> {
    let manifest = ctx.manifest("calibrate")?;
    manifest.require_stage(&ctx.out_dir, "train")?;
    let c = &ctx.config;
    let mut header = vec!["shift".to_string(), "threshold".into(), "target_pfa".into()];
    header.extend(rate_header("calibration_exceed_"));
    let mut table = CsvTable::new(&header);
    let mut outputs = Vec::new();
    for &k in &c.shifts {
        let model: LinearModel = ctx.load_model(&manifest, &model_file(k))?;
        let scores = noise_scores(&model, &c.scenario(), StreamDomain::Calibration, c.trials.calibration, c.seed)?;
        let threshold = threshold_for_pfa(&scores, c.target_pfa)?;
        let exceed = RateEstimate::new(scores.iter().filter(|&&s| s > threshold).count(), scores.len())?;
        let mut row = vec![k.to_string(), fmt_f64(threshold), fmt_f64(c.target_pfa)];
        row.extend(rate_cells(&exceed));
        table.push(row);
        let det = CalibratedDetector {
            model,
            threshold,
            target_pfa: c.target_pfa,
            calibration_n: scores.len(),
        };
        outputs.push(ctx.save_model(&detector_file(k), det)?);
    }
    let path = ctx.path(CALIBRATION);
    table.write(&path)?;
    outputs.push(path);
    ctx.finish(manifest, "calibrate", &outputs)?;
    Ok(outputs)
}

/// P_fa on fresh noise and P_d on matched-shift pulses for every detector.
pub fn cmd_eval(ctx: &Context) -> Result<(Vec<EvalReport>, Vec<PathBuf>)> {
    let manifest = ctx.manifest("eval")?;
    let bank = ctx.load_bank(&manifest)?;
    let c = &ctx.config;
    let reports = bank
        .detectors()
        .iter()
        .map(|det| {
            evaluate_detector(
                det,
                &c.scenario(),
                c.snr_db,
                c.trials.eval_noise,
                c.trials.eval_pulse,
                c.seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["shift".to_string(), "threshold".into(), "target_pfa".into(), "snr_db".into()];
    header.extend(rate_header("pfa_"));
    header.extend(rate_header("pd_"));
    let mut table = CsvTable::new(&header);
    for r in &reports {
        let mut row = vec![
            r.shift.to_string(),
            fmt_f64(r.threshold),
            fmt_f64(r.target_pfa),
            r.snr_db.map(fmt_f64).unwrap_or_default(),
        ];
        row.extend(rate_cells(&r.pfa));
        row.extend(r.pd.as_ref().map(rate_cells).unwrap_or_else(|| vec![String::new(); 5]));
        table.push(row);
    }
    let path = ctx.path(EVAL);
    table.write(&path)?;
    ctx.finish(manifest, "eval", std::slice::from_ref(&path))?;
    Ok((reports, vec![path]))
}

fn matrix_table(shifts: &[usize], matrix: &[Vec<f64>], tag: String) -> CsvTable {
    let header: Vec<String> = shifts.iter().map(|k| format!("shift_{k}")).collect();
    let mut t = CsvTable::new(&header).comment(tag);
    for row in matrix {
        t.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }
    t
}

/// Covariance of aligned score vectors under pulse and noise, with
/// bootstrap standard errors and an entrywise comparison.
pub fn cmd_cov(ctx: &Context) -> Result<(Vec<CovarianceReport>, Vec<Vec<f64>>, Vec<PathBuf>)> {
    let manifest = ctx.manifest("cov")?;
    let bank = ctx.load_bank(&manifest)?;
    let c = &ctx.config;
    let mut reports = Vec::new();
    let mut outputs = Vec::new();
    for cond in [Condition::Pulse, Condition::Noise] {
        let r = score_covariance(
            &bank,
            &c.scenario(),
            cond,
            c.snr_db,
            c.trials.covariance,
            c.trials.bootstrap,
            c.seed,
        )?;
        let snr = r.snr_db.map(fmt_f64).unwrap_or_else(|| "none".into());
        let tag = format!("condition={},n_obs={},snr_db={snr}", cond.as_str(), r.n_obs);
        let p = ctx.path(&covariance_file(cond));
        matrix_table(&r.shifts, &r.matrix, tag.clone()).write(&p)?;
        outputs.push(p);
        let p = ctx.path(&covariance_se_file(cond));
        matrix_table(&r.shifts, &r.std_errors, format!("{tag},statistic=bootstrap_se,resamples={}", c.trials.bootstrap))
            .write(&p)?;
        outputs.push(p);
        reports.push(r);
    }
    let z = covariance_z_scores(&reports[0], &reports[1])?;
    let mut table = CsvTable::new(&[
        "shift_i", "shift_j", "pulse", "noise", "pulse_se", "noise_se", "z", "pulse_corr", "noise_corr",
    ]);
    let shifts = bank.shifts();
    for i in 0..shifts.len() {
        for j in i..shifts.len() {
            let (p, n) = (&reports[0], &reports[1]);
            table.push(vec![
                shifts[i].to_string(),
                shifts[j].to_string(),
                fmt_f64(p.matrix[i][j]),
                fmt_f64(n.matrix[i][j]),
                fmt_f64(p.std_errors[i][j]),
                fmt_f64(n.std_errors[i][j]),
                fmt_f64(z[i][j]),
                fmt_f64(p.correlation(i, j)),
                fmt_f64(n.correlation(i, j)),
            ]);
        }
    }
    let p = ctx.path(COVARIANCE_COMPARISON);
    table.write(&p)?;
    outputs.push(p);
    ctx.finish(manifest, "cov", &outputs)?;
    Ok((reports, z, outputs))
}

/// ROC points per detector over a threshold grid that includes the
/// calibrated threshold.
pub fn cmd_roc(ctx: &Context) -> Result<(BTreeMap<usize, Vec<RocPoint>>, Vec<PathBuf>)> {
    let manifest = ctx.manifest("roc")?;
    let bank = ctx.load_bank(&manifest)?;
    let c = &ctx.config;
    let mut curves = BTreeMap::new();
    let mut outputs = Vec::new();
    for det in bank.detectors() {
        let mut thresholds =
            crate::analysis::default_thresholds(&det.model, &c.scenario(), c.trials.roc_points, c.seed)?;
        thresholds.push(det.threshold);
        thresholds.sort_by(f64::total_cmp);
        let points = roc_sweep(&det.model, &c.scenario(), det.shift(), c.snr_db, c.trials.roc, &thresholds, c.seed)?;
        let mut t = CsvTable::new(&[
            "pfa", "pd", "threshold", "pfa_ci_low", "pfa_ci_high", "pd_ci_low", "pd_ci_high", "trials",
        ])
        .comment(format!("shift={},snr_db={}", det.shift(), fmt_f64(c.snr_db)));
        for p in &points {
            t.push(vec![
                fmt_f64(p.pfa.rate),
                fmt_f64(p.pd.rate),
                fmt_f64(p.threshold),
                fmt_f64(p.pfa.ci_low),
                fmt_f64(p.pfa.ci_high),
                fmt_f64(p.pd.ci_low),
                fmt_f64(p.pd.ci_high),
                p.pfa.trials.to_string(),
            ]);
        }
        let path = ctx.path(&roc_file(det.shift()));
        t.write(&path)?;
        outputs.push(path);
        curves.insert(det.shift(), points);
    }
    ctx.finish(manifest, "roc", &outputs)?;
    Ok((curves, outputs))
}

/// Train and calibrate the score combiner, then compare it with each
/// detector on shared aligned scenarios.
pub fn cmd_combine(ctx: &Context) -> Result<(FusionReport, Vec<PathBuf>)> {
    let manifest = ctx.manifest("combine")?;
    let bank = ctx.load_bank(&manifest)?;
    let c = &ctx.config;
    let t = &c.trials;
    let comb = train_combiner(
        &bank,
        &c.scenario(),
        t.combiner_pos,
        t.combiner_neg,
        c.snr_db,
        c.target_pfa,
        t.combiner_calibration,
        &c.svm,
        c.seed,
    )?;
    let report = evaluate_fusion(&bank, &comb, &c.scenario(), c.snr_db, t.combiner_eval, t.eval_noise, c.seed)?;
    let mut header = vec!["source".to_string(), "metric".into()];
    header.extend(rate_header(""));
    let mut table = CsvTable::new(&header).comment(format!("snr_db={},target_pfa={}", fmt_f64(c.snr_db), fmt_f64(c.target_pfa)));
    for (k, r) in report.shifts.iter().zip(&report.single_pd) {
        let mut row = vec![format!("shift_{k}"), "pd".into()];
        row.extend(rate_cells(r));
        table.push(row);
    }
    for (metric, r) in [("pd", &report.combined_pd), ("pfa", &report.combined_pfa)] {
        let mut row = vec!["combined".to_string(), metric.into()];
        row.extend(rate_cells(r));
        table.push(row);
    }
    let model_path = ctx.save_model(COMBINER, comb)?;
    let path = ctx.path(FUSION);
    table.write(&path)?;
    let outputs = vec![model_path, path];
    ctx.finish(manifest, "combine", &outputs)?;
    Ok((report, outputs))
}

/// Where the smallest-shift detector fires around embedded pulses.
pub fn cmd_localize(ctx: &Context) -> Result<(LocalizationReport, Vec<PathBuf>)> {
    let manifest = ctx.manifest("localize")?;
    let bank = ctx.load_bank(&manifest)?;
    let c = &ctx.config;
    let s = &c.search;
    let report = localization_study(
        &bank.detectors()[0],
        &c.scenario(),
        s.localization_snr_db,
        s.stream_len,
        s.onset,
        s.localization_trials,
        s.localization_radius,
        c.seed,
    )?;
    let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut t = CsvTable::new(&["trial", "n_fired", "n_outside", "onset_fired", "min_offset", "max_offset"]).comment(
        format!(
            "shift={},snr_db={},stream_len={},onset={},radius={}",
            report.shift,
            fmt_f64(report.snr_db),
            report.stream_len,
            report.onset,
            report.radius
        ),
    );
    for tr in &report.trials {
        t.push(vec![
            tr.trial.to_string(),
            tr.n_fired.to_string(),
            tr.n_outside.to_string(),
            tr.onset_fired.to_string(),
            opt(tr.min_offset),
            opt(tr.max_offset),
        ]);
    }
    let path = ctx.path(LOCALIZATION);
    t.write(&path)?;
    ctx.finish(manifest, "localize", std::slice::from_ref(&path))?;
    Ok((report, vec![path]))
}

/// A noise stream with one pulse at the configured onset and SNR.
pub fn cmd_gen_stream(ctx: &Context) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load_or_new(&ctx.out_dir, &ctx.config)?;
    let c = &ctx.config;
    let sc = c.scenario();
    let pulse = sc.pulse(c.snr_db)?;
    let frame = embed_pulse(c.search.stream_len, &pulse, c.search.onset, &sc.noise, stream_id(StreamDomain::Search, 0, 0))?;
    let path = ctx.path(STREAM);
    write_frame_csv(&path, &frame)?;
    ctx.finish(manifest, "gen-stream", std::slice::from_ref(&path))?;
    Ok(vec![path])
}

/// Events and per-onset aggregations for one stream file.
pub fn cmd_search(ctx: &Context, stream: &Path) -> Result<(Vec<DetectionEvent>, Vec<AggregatedDetection>, Vec<PathBuf>)> {
    let mut manifest = ctx.manifest("search")?;
    let bank = ctx.load_bank(&manifest)?;
    let frame = read_frame_csv(stream)?;
    let events = run_bank(&frame, &bank)?;
    let aggregated = aggregate_events(&events, &bank)?;

    let stem = stream.file_stem().map_or_else(|| "stream".into(), |s| s.to_string_lossy().into_owned());
    let mut t = CsvTable::new(&["window_index", "shift", "smooth_score", "decision"]);
    for e in &events {
        t.push(vec![
            e.window_index.to_string(),
            e.shift.to_string(),
            fmt_f64(e.smooth_score),
            e.decision.value().to_string(),
        ]);
    }
    let events_path = ctx.path(&format!("events_{stem}.csv"));
    t.write(&events_path)?;

    let shifts = bank.shifts();
    let mut header = vec!["hypothesized_onset".to_string(), "votes".into()];
    header.extend(shifts.iter().map(|k| format!("score_shift_{k}")));
    let mut t = CsvTable::new(&header);
    for a in &aggregated {
        let mut row = vec![a.hypothesized_onset.to_string(), a.votes.to_string()];
        row.extend(shifts.iter().map(|k| a.per_shift_scores.get(k).map(|&v| fmt_f64(v)).unwrap_or_default()));
        t.push(row);
    }
    let agg_path = ctx.path(&format!("aggregations_{stem}.csv"));
    t.write(&agg_path)?;

    manifest.record_input(&ctx.out_dir, "search", stream)?;
    let outputs = vec![events_path, agg_path];
    ctx.finish(manifest, "search", &outputs)?;
    Ok((events, aggregated, outputs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationSummary {
    pub shift: usize,
    pub snr_db: f64,
    pub radius: usize,
    pub contained: RateEstimate,
    pub onset_fired: RateEstimate,
    pub expected_noise_alarms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub windows: usize,
    pub events: usize,
    pub positive_events: usize,
    pub max_votes: usize,
}

/// Everything the full pipeline measured, written as `summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub tool_version: String,
    pub config_hash: String,
    pub detectors: Vec<EvalReport>,
    pub covariance: Vec<CovarianceReport>,
    pub covariance_z: Vec<Vec<f64>>,
    pub fusion: FusionReport,
    pub localization: LocalizationSummary,
    pub search: SearchSummary,
}

/// Every stage in order, then `summary.toml`. The run timestamp lives only
/// in the manifest, so the summary is reproducible.
pub fn cmd_pipeline(ctx: &Context, materialize: bool) -> Result<(RunSummary, Vec<PathBuf>)> {
    let mut outputs = cmd_gen(ctx, materialize)?;
    outputs.extend(cmd_train(ctx)?);
    outputs.extend(cmd_calibrate(ctx)?);
    let (detectors, files) = cmd_eval(ctx)?;
    outputs.extend(files);
    let (covariance, covariance_z, files) = cmd_cov(ctx)?;
    outputs.extend(files);
    outputs.extend(cmd_roc(ctx)?.1);
    let (fusion, files) = cmd_combine(ctx)?;
    outputs.extend(files);
    let (loc, files) = cmd_localize(ctx)?;
    outputs.extend(files);
    let stream = cmd_gen_stream(ctx)?;
    outputs.extend(stream.iter().cloned());
    let (events, aggregated, files) = cmd_search(ctx, &stream[0])?;
    outputs.extend(files);

    let summary = RunSummary {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: ctx.config.hash(),
        detectors,
        covariance,
        covariance_z,
        fusion,
        localization: LocalizationSummary {
            shift: loc.shift,
            snr_db: loc.snr_db,
            radius: loc.radius,
            contained: loc.contained,
            onset_fired: loc.onset_fired,
            expected_noise_alarms: loc.expected_noise_alarms,
        },
        search: SearchSummary {
            windows: events.len() / ctx.config.shifts.len(),
            events: events.len(),
            positive_events: events.iter().filter(|e| e.decision.is_positive()).count(),
            max_votes: aggregated.iter().map(|a| a.votes).max().unwrap_or(0),
        },
    };
    let body = toml::to_string(&summary).map_err(|e| Error::Parse {
        path: ctx.path(SUMMARY),
        message: e.to_string(),
    })?;
    let path = ctx.path(SUMMARY);
    write_bytes(&path, body.as_bytes())?;
    let manifest = ctx.manifest("summary")?;
    ctx.finish(manifest, "summary", std::slice::from_ref(&path))?;
    outputs.push(path);
    Ok((summary, outputs))
}

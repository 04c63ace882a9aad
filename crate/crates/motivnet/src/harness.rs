//! Operational surface: experiment specs, multi-seed orchestration, run
//! persistence, report generation, trace plots and the self-test suite.

use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data::{load_cifar10_subset, make_synthetic, Dataset, SyntheticKind};
use crate::error::{Error, Result};
use crate::flops::{
    acc_per_flops_classical, acc_per_flops_dual, average_forward_flops, efficiency_ratio,
    EfficiencyRow, FlopsLedger, Metric,
};
use crate::motivation::ConditionKind;
use crate::optim::{OptimizerKind, Schedule};
use crate::trainer::{train, Mode, RunConfig, RunReport, trace_to_csv};
use crate::zoo::{ArchConfig, Family};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Standard binary batches under `dir` (or the --data-dir override).
    Cifar10 {
        train_n: usize,
        eval_n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    Synthetic {
        kind: SyntheticKind,
        n: usize,
        num_classes: usize,
        noise: f64,
        input_shape: (usize, usize, usize),
        #[serde(default)]
        seed: u64,
    },
}

impl DatasetSpec {
    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            DatasetSpec::Cifar10 { .. } => (3, 32, 32),
            DatasetSpec::Synthetic { input_shape, .. } => *input_shape,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            DatasetSpec::Cifar10 { .. } => 10,
            DatasetSpec::Synthetic { num_classes, .. } => *num_classes,
        }
    }

    pub fn load(&self, data_dir: Option<&Path>) -> Result<Dataset> {
        match self {
            DatasetSpec::Cifar10 {
                train_n,
                eval_n,
                seed,
                dir,
            } => {
                let dir = data_dir
                    .map(Path::to_path_buf)
                    .or_else(|| dir.clone())
                    .ok_or_else(|| {
                        Error::Config("cifar10 needs a dir field or --data-dir".into())
                    })?;
                load_cifar10_subset(&dir, *train_n, *eval_n, *seed)
            }
            DatasetSpec::Synthetic {
                kind,
                n,
                num_classes,
                noise,
                input_shape,
                seed,
            } => make_synthetic(*kind, *n, *num_classes, *noise, *seed, *input_shape),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// Small model trained alone.
    ClassicalBase,
    /// Big model trained alone.
    ClassicalMotivated,
    /// Condition-driven dual training.
    Motivated,
    /// Random per-epoch activation schedule.
    AblationA,
    /// Fixed per-epoch activation counts; omitted counts are harvested
    /// from the Motivated variant's mean activations.
    AblationB,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    pub kind: VariantKind,
    #[serde(default)]
    pub counts: Option<Vec<u64>>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    pub family: Family,
    pub base_level: u32,
    pub motivated_level: u32,
}

/// One experiment file: shared recipe plus the variant list.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub run: RunSection,
    pub dataset: DatasetSpec,
    pub arch: ArchSection,
    pub condition: ConditionKind,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    #[serde(rename = "variant")]
    pub variants: Vec<VariantSpec>,
}

pub fn load_experiment(path: &Path) -> Result<ExperimentFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: ExperimentFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.validate()?;
    Ok(file)
}

impl ExperimentFile {
    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant required".into()));
        }
        if self.arch.base_level >= self.arch.motivated_level {
            return Err(Error::Config(
                "motivated_level must exceed base_level".into(),
            ));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.variants.len() {
            return Err(Error::Config("variant names must be unique".into()));
        }
        for v in &self.variants {
            if v.counts.is_some() && v.kind != VariantKind::AblationB {
                return Err(Error::Config(format!(
                    "variant `{}`: counts only apply to ablation_b",
                    v.name
                )));
            }
        }
        Ok(())
    }

    fn arch(&self, level: u32) -> ArchConfig {
        ArchConfig::preset(
            self.arch.family,
            level,
            self.dataset.num_classes(),
            self.dataset.input_shape(),
        )
    }

    /// RunConfig of one (variant, seed) cell. AblationB counts must already
    /// be resolved (harvested) at this point.
    pub fn run_config(&self, variant: &VariantSpec, seed: u64) -> Result<RunConfig> {
        let base = self.arch(self.arch.base_level);
        let motivated = self.arch(self.arch.motivated_level);
        let mode = match variant.kind {
            VariantKind::ClassicalBase | VariantKind::ClassicalMotivated => Mode::Classical,
            VariantKind::Motivated => Mode::Motivated,
            VariantKind::AblationA => Mode::AblationA,
            VariantKind::AblationB => Mode::AblationB {
                counts: variant.counts.clone().ok_or_else(|| {
                    Error::Config(format!("variant `{}`: unresolved counts", variant.name))
                })?,
            },
        };
        let base = if variant.kind == VariantKind::ClassicalMotivated {
            motivated.clone()
        } else {
            base
        };
        Ok(RunConfig {
            base,
            motivated,
            condition: self.condition.clone(),
            optimizer: self.optimizer.clone(),
            schedule: self.schedule,
            epochs: self.run.epochs,
            batch_size: self.run.batch_size,
            seed,
            mode,
        })
    }
}

/// The persisted per-run summary; everything the report needs.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunMetrics {
    pub variant: String,
    pub kind: VariantKind,
    pub seed: u64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub base_eval_acc: f64,
    pub mot_eval_acc: Option<f64>,
    pub activations: Vec<u64>,
    pub base_fwd_flops: u64,
    pub mot_fwd_flops: u64,
    pub valid: bool,
    pub abort_reason: Option<String>,
}

impl RunMetrics {
    fn from_report(variant: &VariantSpec, report: &RunReport) -> RunMetrics {
        RunMetrics {
            variant: variant.name.clone(),
            kind: variant.kind,
            seed: report.seed,
            epochs: report.epochs,
            batches_per_epoch: report.batches_per_epoch,
            base_eval_acc: report.base_eval_acc,
            mot_eval_acc: report.mot_eval_acc,
            activations: report.activations.clone(),
            base_fwd_flops: report.base_fwd_flops,
            mot_fwd_flops: report.mot_fwd_flops,
            valid: report.valid,
            abort_reason: report.abort_reason.clone(),
        }
    }

    pub fn ledger(&self) -> FlopsLedger {
        FlopsLedger {
            base_fwd: self.base_fwd_flops as f64,
            mot_fwd: self.mot_fwd_flops as f64,
            activations: self.activations.clone(),
            batches_per_epoch: self.batches_per_epoch as u64,
            epochs: self.epochs as u64,
        }
    }
}

fn persist_run(
    dir: &Path,
    config: &RunConfig,
    metrics: &RunMetrics,
    report: &RunReport,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("config.toml"),
        toml::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    std::fs::write(
        dir.join("metrics.toml"),
        toml::to_string_pretty(metrics).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    std::fs::write(dir.join("trace.csv"), trace_to_csv(&report.trace))?;
    std::fs::write(dir.join("base.ckpt"), &report.base_checkpoint)?;
    if let Some(ckpt) = &report.mot_checkpoint {
        std::fs::write(dir.join("motivated.ckpt"), ckpt)?;
    }
    Ok(())
}

fn run_one(
    file: &ExperimentFile,
    variant: &VariantSpec,
    seed: u64,
    data: &Dataset,
    out_dir: &Path,
) -> Result<RunMetrics> {
    let config = file.run_config(variant, seed)?;
    let report = train(&config, data)?;
    let metrics = RunMetrics::from_report(variant, &report);
    persist_run(
        &out_dir.join(format!("{}-s{seed}", variant.name)),
        &config,
        &metrics,
        &report,
    )?;
    Ok(metrics)
}

fn run_batch(
    file: &ExperimentFile,
    variants: &[&VariantSpec],
    data: &Dataset,
    out_dir: &Path,
) -> Result<Vec<RunMetrics>> {
    let cells: Vec<(&VariantSpec, u64)> = variants
        .iter()
        .flat_map(|v| file.run.seeds.iter().map(move |&s| (*v, s)))
        .collect();
    #[cfg(feature = "parallel")]
    let iter = cells.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = cells.iter();
    iter.map(|(v, s)| run_one(file, v, *s, data, out_dir))
        .collect()
}

/// Mean activation counts of the Motivated variant, rounded — the input
/// protocol for harvested ablation-B runs.
pub fn harvest_counts(metrics: &[RunMetrics]) -> Result<Vec<u64>> {
    let motivated: Vec<&RunMetrics> = metrics
        .iter()
        .filter(|m| m.kind == VariantKind::Motivated && m.valid)
        .collect();
    if motivated.is_empty() {
        return Err(Error::Config(
            "ablation_b without counts needs a valid motivated variant to harvest from".into(),
        ));
    }
    let epochs = motivated[0].epochs;
    let cap = motivated[0].batches_per_epoch as u64;
    let mut counts = vec![0u64; epochs];
    for (e, c) in counts.iter_mut().enumerate() {
        let mean: f64 = motivated.iter().map(|m| m.activations[e] as f64).sum::<f64>()
            / motivated.len() as f64;
        *c = (mean.round() as u64).min(cap);
    }
    Ok(counts)
}

pub struct ExperimentOutcome {
    pub metrics: Vec<RunMetrics>,
    pub report_text: String,
    pub report_csv: String,
    pub any_aborted: bool,
}

/// Execute every (variant, seed) cell, persist the run directories, then
/// write `report.txt` / `report.csv` at the output root.
pub fn run_experiment(
    file: &ExperimentFile,
    data_dir: Option<&Path>,
    out_dir: &Path,
) -> Result<ExperimentOutcome> {
    file.validate()?;
    let data = file.dataset.load(data_dir)?;
    std::fs::create_dir_all(out_dir)?;

    // harvested ablation-B variants depend on the motivated runs, so they
    // go in a second wave
    let (deferred, first): (Vec<&VariantSpec>, Vec<&VariantSpec>) = file
        .variants
        .iter()
        .partition(|v| v.kind == VariantKind::AblationB && v.counts.is_none());
    let mut metrics = run_batch(file, &first, &data, out_dir)?;
    if !deferred.is_empty() {
        let counts = harvest_counts(&metrics)?;
        let resolved: Vec<VariantSpec> = deferred
            .iter()
            .map(|v| VariantSpec {
                counts: Some(counts.clone()),
                ..(*v).clone()
            })
            .collect();
        let refs: Vec<&VariantSpec> = resolved.iter().collect();
        metrics.extend(run_batch(file, &refs, &data, out_dir)?);
    }
    // stable report order: variant file order, then seed
    let order: Vec<&str> = file.variants.iter().map(|v| v.name.as_str()).collect();
    metrics.sort_by_key(|m| {
        (
            order.iter().position(|n| *n == m.variant).unwrap_or(usize::MAX),
            m.seed,
        )
    });

    let (report_text, report_csv) = render_report(&metrics);
    std::fs::write(out_dir.join("report.txt"), &report_text)?;
    std::fs::write(out_dir.join("report.csv"), &report_csv)?;
    let any_aborted = metrics.iter().any(|m| !m.valid);
    Ok(ExperimentOutcome {
        metrics,
        report_text,
        report_csv,
        any_aborted,
    })
}

/// Re-generate the aggregate report from persisted run directories.
pub fn report_from_dir(spec_dir: &Path) -> Result<(String, String)> {
    let mut metrics = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(spec_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for dir in entries {
        let path = dir.join("metrics.toml");
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let m: RunMetrics = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        metrics.push(m);
    }
    if metrics.is_empty() {
        return Err(Error::Usage(format!(
            "no run directories with metrics.toml under {}",
            spec_dir.display()
        )));
    }
    metrics.sort_by(|a, b| (&a.variant, a.seed).cmp(&(&b.variant, b.seed)));
    Ok(render_report(&metrics))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate per-variant accuracy and, when the classical-base,
/// classical-motivated and motivated variants are all present, the full
/// efficiency row (percent per MFLOP, printed x100 like the reference
/// tables; undefined metrics print as "/").
pub fn render_report(metrics: &[RunMetrics]) -> (String, String) {
    let mut text = String::from("variant                     runs  acc%\n");
    let mut csv = String::from("variant,kind,runs,aborted,acc_mean,acc_std\n");
    // canonical alphabetical order, so regeneration from disk is identical
    let mut variant_order: Vec<&str> = Vec::new();
    for m in metrics {
        if !variant_order.contains(&m.variant.as_str()) {
            variant_order.push(&m.variant);
        }
    }
    variant_order.sort_unstable();
    let acc_of = |kind: VariantKind| -> Option<f64> {
        let accs: Vec<f64> = metrics
            .iter()
            .filter(|m| m.kind == kind && m.valid)
            .map(|m| m.base_eval_acc * 100.0)
            .collect();
        (!accs.is_empty()).then(|| mean_std(&accs).0)
    };
    for name in &variant_order {
        let runs: Vec<&RunMetrics> = metrics.iter().filter(|m| &m.variant == name).collect();
        let valid: Vec<f64> = runs
            .iter()
            .filter(|m| m.valid)
            .map(|m| m.base_eval_acc * 100.0)
            .collect();
        let aborted = runs.len() - valid.len();
        let (mean, std) = if valid.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_std(&valid)
        };
        let mut line = format!(
            "{name:<28}{:>4}  {mean:.2} +/- {std:.2}",
            valid.len()
        );
        if aborted > 0 {
            line.push_str(&format!("  [{aborted} aborted]"));
        }
        text.push_str(&line);
        text.push('\n');
        csv.push_str(&format!(
            "{name},{:?},{},{aborted},{mean:.4},{std:.4}\n",
            runs[0].kind,
            valid.len()
        ));
    }

    let motivated: Vec<&RunMetrics> = metrics
        .iter()
        .filter(|m| m.kind == VariantKind::Motivated && m.valid)
        .collect();
    if let (Some(acc_xc), Some(acc_yc), false) = (
        acc_of(VariantKind::ClassicalBase),
        acc_of(VariantKind::ClassicalMotivated),
        motivated.is_empty(),
    ) {
        let acc_xy = mean_std(
            &motivated
                .iter()
                .map(|m| m.base_eval_acc * 100.0)
                .collect::<Vec<_>>(),
        )
        .0;
        let f_xy_m: Vec<f64> = motivated
            .iter()
            .filter_map(|m| average_forward_flops(&m.ledger()).ok())
            .map(|f| f / 1e6)
            .collect();
        let row = EfficiencyRow {
            acc_base_classical: acc_xc,
            acc_dual_base: acc_xy,
            acc_mot_classical: acc_yc,
            f_xc: motivated[0].base_fwd_flops as f64 / 1e6,
            f_xy: mean_std(&f_xy_m).0,
            f_yc: motivated[0].mot_fwd_flops as f64 / 1e6,
        };
        let scale = |m: Metric| match m {
            Metric::Defined(v) => Metric::Defined(v * 100.0),
            Metric::Undefined => Metric::Undefined,
        };
        let dual = scale(acc_per_flops_dual(&row));
        let classical = scale(acc_per_flops_classical(&row));
        let ratio = efficiency_ratio(&row);
        text.push_str(&format!(
            "\nefficiency (forward FLOPs in M):\n  F_XC {:.4}  F_XY {:.4}  F_YC {:.4}\n  \
             ACC/FLOPs dual (x1e-2/MFLOP) {dual}  classical {classical}  ratio {ratio}\n",
            row.f_xc, row.f_xy, row.f_yc
        ));
        csv.push_str(&format!(
            "efficiency,,,,{:.6},{:.6}\n",
            dual.value().unwrap_or(f64::NAN),
            ratio.value().unwrap_or(f64::NAN)
        ));
        if !row.well_formed() {
            text.push_str("  warning: FLOPs ordering F_XC <= F_XY <= F_YC violated\n");
        }
    }
    (text, csv)
}

/// Minimal SVG line plot of loss over batches with switch markers, built
/// from a persisted trace CSV.
pub fn plot_trace_svg(csv: &str) -> Result<String> {
    let mut losses = Vec::new();
    let mut events = Vec::new(); // (index, is_to_motivated)
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("epoch,batch,active") {
                return Err(Error::Data(format!("not a trace CSV: header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Data(format!("trace line {}: expected 6 fields", i + 1)));
        }
        let loss: f64 = fields[3]
            .parse()
            .map_err(|e| Error::Data(format!("trace line {}: bad loss: {e}", i + 1)))?;
        match fields[5] {
            "none" => {}
            "to_motivated" => events.push((losses.len(), true)),
            "to_base" => events.push((losses.len(), false)),
            other => return Err(Error::Data(format!("trace line {}: bad switch `{other}`", i + 1))),
        }
        losses.push(loss);
    }
    if losses.is_empty() {
        return Err(Error::Data("trace CSV has no rows".into()));
    }
    let (w, h, pad) = (800.0, 400.0, 40.0);
    let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (losses.len() - 1).max(1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - min) / span;
    let points: Vec<String> = losses
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <text x=\"{pad}\" y=\"{2}\" font-size=\"12\">batch 0..{3}</text>\n\
         <text x=\"4\" y=\"{pad}\" font-size=\"12\">{max:.3}</text>\n\
         <text x=\"4\" y=\"{0}\" font-size=\"12\">{min:.3}</text>\n\
         <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{4}\"/>\n",
        h - pad,
        w - pad,
        h - pad / 2.0,
        losses.len() - 1,
        points.join(" ")
    );
    for (i, to_mot) in events {
        let color = if to_mot { "seagreen" } else { "indianred" };
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
            x(i),
            y(losses[i])
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Fast oracle suite for the CLI: reference-figure reproduction, the
/// motivation state machine against a literal brute-force transcription,
/// and weights-map totality across consecutive zoo levels.
pub fn selftest() -> Result<Vec<(String, bool, String)>> {
    use rand::{Rng, SeedableRng};
    let mut results = Vec::new();

    let outcome = crate::flops::reference::check();
    results.push((
        "reference-metrics".into(),
        outcome.failed.is_empty(),
        format!(
            "{} reproduced, {} inconsistent at source, {} failed",
            outcome.reproduced.len(),
            outcome.inconsistent_at_source.len(),
            outcome.failed.len()
        ),
    ));

    // brute-force re-implementation of the consecutive-improvement machine
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut mismatches = 0usize;
    let trials = 2000;
    for _ in 0..trials {
        let k = rng.gen_range(1..=8u64);
        let len = rng.gen_range(1..40);
        let signals: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut state =
            crate::motivation::MotivationState::new(ConditionKind::ConsecutiveDecrease { k })
                .unwrap();
        let mut prev = f64::INFINITY;
        let mut counter = 0u64;
        for &s in &signals {
            let got = state.observe(s);
            if s < prev {
                counter += 1;
            } else {
                counter = 0;
            }
            prev = s;
            if got != (counter >= k) {
                mismatches += 1;
            }
        }
    }
    results.push((
        "motivation-oracle".into(),
        mismatches == 0,
        format!("{trials} random traces, {mismatches} mismatches"),
    ));

    let mut map_ok = true;
    let mut detail = String::new();
    for family in [Family::DepthResNet, Family::WidthMlp, Family::WidthConvNet] {
        for level in 0..2 {
            let base = ArchConfig::preset(family, level, 7, (3, 8, 8));
            let mot = ArchConfig::preset(family, level + 1, 7, (3, 8, 8));
            let total = crate::weight_map::build_map(&base, &mot)
                .map(|m| m.base_volume())
                .unwrap_or(0);
            let want = crate::zoo::Model::build(base, 0).unwrap().store.num_elements();
            if total != want {
                map_ok = false;
                detail = format!("{family:?} L{level}: covered {total} of {want}");
            }
        }
    }
    results.push((
        "weight-map-totality".into(),
        map_ok,
        if map_ok { "all consecutive levels covered".into() } else { detail },
    ));

    Ok(results)
}

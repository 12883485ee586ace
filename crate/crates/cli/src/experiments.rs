//! Experiment runners. Every cell is independent and runs on the rayon pool;
//! results are collected in grid order, so output does not depend on the
//! thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use liteupdate_core::pipeline::{
    accuracy, finetune_random, finetune_random_multi, lite_update, lite_update_multi, pretrain,
};
use liteupdate_core::{merge_params, GeneratorSpec, MergeConfig, ModelParams, UpdatePlan};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{MetricsReport, Row};
use crate::HarnessError;

pub const PRETRAIN: &str = "pretrain";
pub const RANDOM: &str = "random";
pub const LITEUPDATE: &str = "liteupdate";
pub const REPRESENTATIVE_ONLY: &str = "representative-only";
pub const RANDOM_ONLY: &str = "random-only";
pub const RANDOM_MULTI: &str = "random-multi";
pub const LITEUPDATE_MULTI: &str = "liteupdate-multi";

pub fn k_method(k: f64) -> String {
    format!("k={k:.2}")
}

pub fn kn_method(k_n: f64) -> String {
    format!("k_n={k_n:.2}")
}

pub fn random_at(n: usize) -> String {
    format!("{RANDOM}@{n}")
}

pub fn lite_at(n: usize) -> String {
    format!("{LITEUPDATE}@{n}")
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub summary: String,
    /// Pipeline notes, one block per cell that produced any.
    pub notes: Vec<String>,
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(HarnessError::Config("thread count must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Accuracy on the old and the new generator's test sets, keyed by the plan seed.
pub fn old_new_accuracy(
    theta: &ModelParams,
    plan: &UpdatePlan,
    g_old: &GeneratorSpec,
    g_new: &GeneratorSpec,
) -> Result<(f64, f64), HarnessError> {
    let old = accuracy(theta, &g_old.version_id, &plan.test_set(g_old)?, plan.seed)?;
    let new = accuracy(theta, &g_new.version_id, &plan.test_set(g_new)?, plan.seed)?;
    Ok((old, new))
}

struct Seeded {
    plan: UpdatePlan,
    theta0: ModelParams,
}

fn pretrain_all(cfg: &ExperimentConfig) -> Result<Vec<Seeded>, HarnessError> {
    let g_old = cfg.old();
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let plan = cfg.plan(seed)?;
            let theta0 = pretrain(&g_old, &plan, seed)?;
            Ok(Seeded { plan, theta0 })
        })
        .collect()
}

type CellRows = (Vec<Row>, Option<String>);

fn row(method: &str, generator: &str, (old_acc, new_acc): (f64, f64), seed: u64) -> Row {
    Row { method: method.into(), generator: generator.into(), old_acc, new_acc, avg: 0.0, seed }
}

// Cells for every (generator, seed) pair, generator-major.
fn per_generator_cells<F>(cfg: &ExperimentConfig, gens: &[GeneratorSpec], cell: F) -> Result<Vec<CellRows>, HarnessError>
where
    F: Fn(&Seeded, &GeneratorSpec) -> Result<CellRows, HarnessError> + Sync,
{
    let seeded = pretrain_all(cfg)?;
    let pairs: Vec<(&GeneratorSpec, &Seeded)> = gens.iter().flat_map(|g| seeded.iter().map(move |s| (g, s))).collect();
    pairs.par_iter().map(|(g, s)| cell(s, g)).collect()
}

fn finish(cfg: &ExperimentConfig, cells: Vec<CellRows>) -> (MetricsReport, Vec<String>) {
    let mut report = MetricsReport::new(format!("{} experiment", cfg.kind.as_str()), cfg.old_generator.version_id.clone());
    let mut notes = Vec::new();
    for (rows, note) in cells {
        for r in rows {
            report.push(&r.method, &r.generator, r.old_acc, r.new_acc, r.seed);
        }
        notes.extend(note);
    }
    (report, notes)
}

fn main_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRows>, HarnessError> {
    let g_old = cfg.old();
    per_generator_cells(cfg, &cfg.new_gens(), |s, g| {
        let b = lite_update(&s.theta0, &g_old, g, &s.plan)?;
        let seed = s.plan.seed;
        let id = &g.version_id;
        let rows = vec![
            row(PRETRAIN, id, old_new_accuracy(&b.theta0, &s.plan, &g_old, g)?, seed),
            row(RANDOM, id, old_new_accuracy(&b.theta2, &s.plan, &g_old, g)?, seed),
            row(LITEUPDATE, id, old_new_accuracy(&b.theta_new, &s.plan, &g_old, g)?, seed),
        ];
        Ok((rows, Some(format!("seed {seed} {id}: {}", b.notes.join("; ")))))
    })
}

fn components_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRows>, HarnessError> {
    let g_old = cfg.old();
    let gens = &cfg.new_gens()[..1];
    per_generator_cells(cfg, gens, |s, g| {
        let b = lite_update(&s.theta0, &g_old, g, &s.plan)?;
        let id = &g.version_id;
        let seed = s.plan.seed;
        let eval = |m: &ModelParams| old_new_accuracy(m, &s.plan, &g_old, g);
        let rows = vec![
            row(PRETRAIN, id, eval(&b.theta0)?, seed),
            row(RANDOM_ONLY, id, eval(&b.theta2)?, seed),
            row(REPRESENTATIVE_ONLY, id, eval(&b.theta1)?, seed),
            row(LITEUPDATE, id, eval(&b.theta_new)?, seed),
        ];
        Ok((rows, None))
    })
}

fn ablate_k_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRows>, HarnessError> {
    let g_old = cfg.old();
    let gens = &cfg.new_gens()[..1];
    per_generator_cells(cfg, gens, |s, g| {
        let b = lite_update(&s.theta0, &g_old, g, &s.plan)?;
        let rows = cfg
            .k_grid
            .par_iter()
            .map(|&k| {
                let merged = merge_params(&b.theta0, &b.theta1, &b.theta2, MergeConfig::new(k)?)?;
                let acc = old_new_accuracy(&merged, &s.plan, &g_old, g)?;
                Ok(row(&k_method(k), &g.version_id, acc, s.plan.seed))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok((rows, None))
    })
}

fn ablate_kn_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRows>, HarnessError> {
    let g_old = cfg.old();
    let gens = &cfg.new_gens()[..1];
    per_generator_cells(cfg, gens, |s, g| {
        let rows = cfg
            .kn_grid
            .par_iter()
            .map(|&k_n| {
                let plan = UpdatePlan { k_n, ..s.plan.clone() };
                let b = lite_update(&s.theta0, &g_old, g, &plan)?;
                let acc = old_new_accuracy(&b.theta_new, &plan, &g_old, g)?;
                Ok(row(&kn_method(k_n), &g.version_id, acc, plan.seed))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok((rows, None))
    })
}

fn efficiency_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRows>, HarnessError> {
    let g_old = cfg.old();
    per_generator_cells(cfg, &cfg.new_gens(), |s, g| {
        let seed = s.plan.seed;
        let id = &g.version_id;
        let mut rows = cfg
            .sample_grid
            .par_iter()
            .map(|&n| {
                let theta = finetune_random(&s.theta0, g, n, &s.plan, seed)?;
                Ok(row(&random_at(n), id, old_new_accuracy(&theta, &s.plan, &g_old, g)?, seed))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let b = lite_update(&s.theta0, &g_old, g, &s.plan)?;
        rows.push(row(&lite_at(s.plan.n), id, old_new_accuracy(&b.theta_new, &s.plan, &g_old, g)?, seed));
        Ok((rows, None))
    })
}

fn multi_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRows>, HarnessError> {
    let g_old = cfg.old();
    let gens = cfg.new_gens();
    let seeded = pretrain_all(cfg)?;
    seeded
        .par_iter()
        .map(|s| {
            let seed = s.plan.seed;
            let (b, random) = rayon::join(
                || lite_update_multi(&s.theta0, &g_old, &gens, &s.plan),
                || finetune_random_multi(&s.theta0, &gens, s.plan.n, &s.plan, seed),
            );
            let (b, random) = (b?, random?);
            let mut rows = Vec::new();
            for g in &gens {
                for (method, theta) in [(PRETRAIN, &b.theta0), (RANDOM_MULTI, &random), (LITEUPDATE_MULTI, &b.theta_new)] {
                    rows.push(row(method, &g.version_id, old_new_accuracy(theta, &s.plan, &g_old, g)?, seed));
                }
            }
            Ok((rows, Some(format!("seed {seed}: {}", b.notes.join("; ")))))
        })
        .collect()
}

/// Mean accuracy over the old generator and every new one, per seed.
/// The old accuracy is read from the first generator's row.
pub fn all_distribution_means(report: &MetricsReport, method: &str) -> Vec<(u64, f64)> {
    let gens = report.generators();
    let mut seeds: Vec<u64> = report.rows.iter().filter(|r| r.method == method).map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .into_iter()
        .filter_map(|seed| {
            let rows: Vec<&Row> = gens
                .iter()
                .filter_map(|g| report.rows.iter().find(|r| r.method == method && &r.generator == g && r.seed == seed))
                .collect();
            if rows.len() != gens.len() || rows.is_empty() {
                return None;
            }
            let total = rows[0].old_acc + rows.iter().map(|r| r.new_acc).sum::<f64>();
            Some((seed, total / (rows.len() + 1) as f64))
        })
        .collect()
}

fn summarize(cfg: &ExperimentConfig, report: &MetricsReport) -> String {
    let mut s = String::new();
    writeln!(s, "{} over {} seed(s)", report.title, cfg.seeds.len()).unwrap();
    writeln!(s, "{:<22} {:<10} {:>16} {:>16} {:>16}", "method", "generator", "old", "new", "avg").unwrap();
    for a in report.aggregates() {
        let pm = |m: f64, d: f64| format!("{m:.2} ± {d:.2}");
        writeln!(
            s,
            "{:<22} {:<10} {:>16} {:>16} {:>16}",
            a.method,
            a.generator,
            pm(a.old_mean, a.old_std),
            pm(a.new_mean, a.new_std),
            pm(a.avg_mean, a.avg_std)
        )
        .unwrap();
    }
    if cfg.kind == ExperimentKind::Multi {
        for method in [PRETRAIN, RANDOM_MULTI, LITEUPDATE_MULTI] {
            let means: Vec<f64> = all_distribution_means(report, method).iter().map(|(_, m)| *m).collect();
            let (m, d) = crate::report::mean_std(&means);
            writeln!(s, "mean over all distributions, {method}: {m:.2} ± {d:.2}").unwrap();
        }
    }
    s
}

pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let cells = with_threads(threads, || match cfg.kind {
        ExperimentKind::Main => main_cells(cfg),
        ExperimentKind::AblateKn => ablate_kn_cells(cfg),
        ExperimentKind::AblateK => ablate_k_cells(cfg),
        ExperimentKind::AblateComponents => components_cells(cfg),
        ExperimentKind::Efficiency => efficiency_cells(cfg),
        ExperimentKind::Multi => multi_cells(cfg),
    })??;
    let (report, notes) = finish(cfg, cells);
    let summary = summarize(cfg, &report);
    Ok(RunOutput { report, summary, notes })
}

/// Writes `<kind>.csv`, `<kind>.md` and `<kind>_summary.txt` into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e.to_string()))?;
    let kind = cfg.kind.as_str();
    let mut summary = out.summary.clone();
    for n in &out.notes {
        writeln!(summary, "{n}").unwrap();
    }
    let files = [
        (format!("{kind}.csv"), out.report.to_csv()),
        (format!("{kind}.md"), out.report.to_markdown()),
        (format!("{kind}_summary.txt"), summary),
    ];
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
            Ok(path)
        })
        .collect()
}

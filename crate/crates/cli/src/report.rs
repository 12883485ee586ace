//! Metrics tables: per-seed rows, mean/std aggregates, CSV and markdown.

use std::fmt::Write as _;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: String,
    pub generator: String,
    pub old_acc: f64,
    pub new_acc: f64,
    pub avg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: String,
    pub generator: String,
    pub runs: usize,
    pub old_mean: f64,
    pub old_std: f64,
    pub new_mean: f64,
    pub new_std: f64,
    pub avg_mean: f64,
    pub avg_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub title: String,
    pub old_generator: String,
    pub rows: Vec<Row>,
}

pub const CSV_HEADER: &str = "method,generator,old_acc,new_acc,avg,seed";

/// Rounds to the two decimals used in every emitted table.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

// The average of two 2-decimal values needs at most three decimals.
fn fmt_avg(x: f64) -> String {
    let s = format!("{x:.3}");
    match s.strip_suffix('0') {
        Some(t) => t.to_string(),
        None => s,
    }
}

/// Population mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricsReport {
    pub fn new(title: impl Into<String>, old_generator: impl Into<String>) -> Self {
        Self { title: title.into(), old_generator: old_generator.into(), rows: Vec::new() }
    }

    /// Adds a row; accuracies are stored at report precision.
    pub fn push(&mut self, method: &str, generator: &str, old_acc: f64, new_acc: f64, seed: u64) {
        let (old_acc, new_acc) = (round2(old_acc), round2(new_acc));
        self.rows.push(Row {
            method: method.to_string(),
            generator: generator.to_string(),
            old_acc,
            new_acc,
            avg: (old_acc + new_acc) / 2.0,
            seed,
        });
    }

    pub fn rows_for<'a>(&'a self, method: &'a str, generator: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.method == method && r.generator == generator)
    }

    /// (method, generator) pairs in first-appearance order.
    pub fn groups(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for r in &self.rows {
            if !out.iter().any(|(m, g)| *m == r.method && *g == r.generator) {
                out.push((r.method.clone(), r.generator.clone()));
            }
        }
        out
    }

    pub fn generators(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.generator) {
                out.push(r.generator.clone());
            }
        }
        out
    }

    pub fn aggregate(&self, method: &str, generator: &str) -> Option<Aggregate> {
        let rows: Vec<&Row> = self.rows_for(method, generator).collect();
        if rows.is_empty() {
            return None;
        }
        let col = |f: fn(&Row) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (old_mean, old_std) = col(|r| r.old_acc);
        let (new_mean, new_std) = col(|r| r.new_acc);
        let (avg_mean, avg_std) = col(|r| r.avg);
        Some(Aggregate {
            method: method.to_string(),
            generator: generator.to_string(),
            runs: rows.len(),
            old_mean,
            old_std,
            new_mean,
            new_std,
            avg_mean,
            avg_std,
        })
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        self.groups().iter().filter_map(|(m, g)| self.aggregate(m, g)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{:.2},{:.2},{},{}", r.method, r.generator, r.old_acc, r.new_acc, fmt_avg(r.avg), r.seed)
                .unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(HarnessError::Report("missing CSV header".into()));
        }
        let mut report = MetricsReport::default();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(HarnessError::Report(format!("line {}: expected 6 fields", i + 2)));
            }
            report.rows.push(parse_row(f[0], f[1], f[2], f[3], f[4], f[5])?);
        }
        Ok(report)
    }

    /// One section per generator: the per-seed rows, then mean ± std.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        if !self.title.is_empty() {
            writeln!(s, "# {}\n", self.title).unwrap();
        }
        let old = if self.old_generator.is_empty() { "old" } else { &self.old_generator };
        for g in self.generators() {
            writeln!(s, "## {g}\n").unwrap();
            writeln!(s, "| Method | Seed | Old ({old}) | New ({g}) | Avg |").unwrap();
            writeln!(s, "|---|---|---|---|---|").unwrap();
            for r in self.rows.iter().filter(|r| r.generator == g) {
                writeln!(s, "| {} | {} | {:.2} | {:.2} | {} |", r.method, r.seed, r.old_acc, r.new_acc, fmt_avg(r.avg))
                    .unwrap();
            }
            writeln!(s, "\nMean ± std over seeds:\n").unwrap();
            writeln!(s, "| Method | Runs | Old | New | Avg |").unwrap();
            writeln!(s, "|---|---|---|---|---|").unwrap();
            for a in self.aggregates().iter().filter(|a| a.generator == g) {
                writeln!(
                    s,
                    "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
                    a.method, a.runs, a.old_mean, a.old_std, a.new_mean, a.new_std, a.avg_mean, a.avg_std
                )
                .unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Reads the per-seed tables of [`MetricsReport::to_markdown`] back.
    pub fn from_markdown(text: &str) -> Result<Self, HarnessError> {
        let mut report = MetricsReport::default();
        let mut generator: Option<String> = None;
        let mut in_rows = false;
        for line in text.lines().map(str::trim) {
            if let Some(t) = line.strip_prefix("# ") {
                report.title = t.to_string();
            } else if let Some(g) = line.strip_prefix("## ") {
                generator = Some(g.to_string());
                in_rows = false;
            } else if line.starts_with("| Method | Seed |") {
                if report.old_generator.is_empty() {
                    let old = line.split('|').nth(3).unwrap_or("").trim();
                    if let Some(name) = old.strip_prefix("Old (").and_then(|o| o.strip_suffix(')')) {
                        report.old_generator = name.to_string();
                    }
                }
                in_rows = true;
            } else if line.starts_with("|---") {
                continue;
            } else if line.starts_with('|') && in_rows {
                let g = generator.as_deref().ok_or_else(|| HarnessError::Report("row before section".into()))?;
                let f: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
                if f.len() != 5 {
                    return Err(HarnessError::Report(format!("bad markdown row: {line}")));
                }
                report.rows.push(parse_row(f[0], g, f[2], f[3], f[4], f[1])?);
            } else if !line.starts_with('|') && !line.is_empty() {
                in_rows = false;
            }
        }
        Ok(report)
    }
}

fn parse_row(method: &str, generator: &str, old: &str, new: &str, avg: &str, seed: &str) -> Result<Row, HarnessError> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| HarnessError::Report(format!("{s:?}: {e}")));
    let (old_acc, new_acc) = (num(old)?, num(new)?);
    // Recompute so rows compare equal to the ones `push` built.
    let mid = (old_acc + new_acc) / 2.0;
    if (num(avg)? - mid).abs() > 1e-3 {
        return Err(HarnessError::Report(format!("avg {avg:?} is not the midpoint of {old} and {new}")));
    }
    Ok(Row {
        method: method.trim().to_string(),
        generator: generator.trim().to_string(),
        old_acc,
        new_acc,
        avg: mid,
        seed: seed.trim().parse().map_err(|e| HarnessError::Report(format!("seed {seed:?}: {e}")))?,
    })
}

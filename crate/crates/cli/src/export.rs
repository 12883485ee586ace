//! CSV dumps of datasets, candidate buffers and representative sets.

use std::fmt::Write as _;

use liteupdate_core::{CandidateBuffer, ContentSeed, Dataset, Label, Origin, PatchSample, RepresentativeSet, ScoreRecord, Split};

use crate::HarnessError;

pub const BUFFER_HEADER: &str = "sample_id,confidence,grad_sensitivity,side,origin,content_seed";
pub const REPRESENTATIVE_HEADER: &str = "index,label,origin,content_seed";

fn dataset_header(pixels: usize) -> String {
    let mut s: String = (0..pixels).map(|i| format!("p{i},")).collect();
    s.push_str("label,origin,content_seed");
    s
}

/// One row per sample: pixels, label index, origin, content seed.
pub fn dataset_csv(ds: &Dataset) -> String {
    let width = ds.samples.first().map_or(0, |s| s.pixels.len());
    let mut out = dataset_header(width);
    out.push('\n');
    for s in &ds.samples {
        for p in &s.pixels {
            write!(out, "{p},").unwrap();
        }
        writeln!(out, "{},{},{}", s.label.index(), s.origin, s.content.0).unwrap();
    }
    out
}

pub fn read_dataset_csv(text: &str, split: Split) -> Result<Dataset, HarnessError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HarnessError::Report("empty dataset file".into()))?;
    let width = header.split(',').count().checked_sub(3).ok_or_else(|| HarnessError::Report("bad header".into()))?;
    let bad = |i: usize, what: &str| HarnessError::Report(format!("dataset line {}: {what}", i + 2));
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != width + 3 {
            return Err(bad(i, "wrong field count"));
        }
        let pixels = f[..width].iter().map(|p| p.parse::<f64>()).collect::<Result<Vec<_>, _>>();
        let pixels = pixels.map_err(|_| bad(i, "bad pixel"))?;
        let label = f[width].parse::<usize>().ok().and_then(Label::from_index).ok_or_else(|| bad(i, "bad label"))?;
        let content = f[width + 2].parse::<u64>().map_err(|_| bad(i, "bad content seed"))?;
        samples.push(PatchSample { pixels, label, origin: Origin::parse(f[width + 1]), content: ContentSeed(content) });
    }
    Ok(Dataset { samples, split })
}

/// Buffer members in buffer order; `scores` is indexed by sample id.
pub fn buffer_csv(buffer: &CandidateBuffer, scores: &[ScoreRecord], dataset: &Dataset) -> Result<String, HarnessError> {
    let mut out = String::from(BUFFER_HEADER);
    out.push('\n');
    let sides = buffer.negatives.iter().map(|&id| (id, "negative")).chain(buffer.positives.iter().map(|&id| (id, "positive")));
    for (id, side) in sides {
        let rec = scores.get(id).filter(|r| r.sample_id == id);
        let rec = rec.ok_or_else(|| HarnessError::Report(format!("no score for sample {id}")))?;
        let s = dataset.samples.get(id).ok_or_else(|| HarnessError::Report(format!("no sample {id}")))?;
        let grad = rec.grad_sensitivity.map(|g| g.to_string()).unwrap_or_default();
        writeln!(out, "{id},{},{grad},{side},{},{}", rec.confidence, s.origin, s.content.0).unwrap();
    }
    Ok(out)
}

pub fn representative_csv(rep: &RepresentativeSet) -> String {
    let mut out = String::from(REPRESENTATIVE_HEADER);
    out.push('\n');
    for (i, s) in rep.real_samples.iter().chain(&rep.regenerated_samples).enumerate() {
        writeln!(out, "{i},{},{},{}", s.label.index(), s.origin, s.content.0).unwrap();
    }
    out
}

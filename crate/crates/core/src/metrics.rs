//! Separation and localization metrics, and bucketed reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::AzimuthBucket;

/// Reporting clip for SI-SDR, dB.
pub const SI_SDR_CLIP_DB: f64 = 60.0;
/// DOA errors below this count as correct, degrees.
pub const DOA_THRESHOLD_DEG: f64 = 5.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant SDR in dB, clipped to ±60.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let energy = dot(reference, reference);
    if !(energy > 0.0) {
        return Err(Error::invalid("SI-SDR reference has zero energy"));
    }
    let alpha = dot(estimate, reference) / energy;
    let target = alpha * alpha * energy;
    let residual: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(s, e)| (e - alpha * s) * (e - alpha * s))
        .sum();
    let db = if residual <= 0.0 {
        SI_SDR_CLIP_DB
    } else if target <= 0.0 {
        -SI_SDR_CLIP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CLIP_DB, SI_SDR_CLIP_DB))
}

/// Winning pairing of estimates to references.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// `assignment[r]` is the estimate matched to reference `r`.
    pub assignment: [usize; 2],
    /// SI-SDR of each reference under that pairing.
    pub si_sdr: [f64; 2],
}

impl PermutationResult {
    pub fn mean(&self) -> f64 {
        0.5 * (self.si_sdr[0] + self.si_sdr[1])
    }
}

/// Scores both pairings and keeps the one with the higher mean SI-SDR
/// (identity on ties).
pub fn best_permutation_eval(references: [&[f64]; 2], estimates: [&[f64]; 2]) -> Result<PermutationResult> {
    let mut best: Option<PermutationResult> = None;
    for assignment in [[0, 1], [1, 0]] {
        let si = [
            si_sdr(references[0], estimates[assignment[0]])?,
            si_sdr(references[1], estimates[assignment[1]])?,
        ];
        let cand = PermutationResult { assignment, si_sdr: si };
        if best.map_or(true, |b| cand.mean() > b.mean()) {
            best = Some(cand);
        }
    }
    Ok(best.expect("two candidates"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DoaMetrics {
    /// Percent of frames with error below the threshold.
    pub accuracy: f64,
    /// Mean absolute error, degrees.
    pub mae: f64,
    pub frames: usize,
}

/// Frame-wise accuracy and MAE of `estimates` against `truth`.
pub fn doa_metrics(estimates: &[f64], truth: &[f64], threshold: f64) -> Result<DoaMetrics> {
    if estimates.len() != truth.len() {
        return Err(Error::invalid("DOA estimates and ground truth differ in length"));
    }
    if estimates.is_empty() {
        return Ok(DoaMetrics::default());
    }
    let n = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().zip(truth).map(|(e, t)| (e - t).abs()).collect();
    Ok(DoaMetrics {
        accuracy: 100.0 * errors.iter().filter(|&&e| e < threshold).count() as f64 / n,
        mae: errors.iter().sum::<f64>() / n,
        frames: estimates.len(),
    })
}

/// Unweighted mean over per-observer metrics.
pub fn average_observers(per_observer: &[DoaMetrics]) -> DoaMetrics {
    if per_observer.is_empty() {
        return DoaMetrics::default();
    }
    let n = per_observer.len() as f64;
    DoaMetrics {
        accuracy: per_observer.iter().map(|m| m.accuracy).sum::<f64>() / n,
        mae: per_observer.iter().map(|m| m.mae).sum::<f64>() / n,
        frames: per_observer.iter().map(|m| m.frames).sum(),
    }
}

/// Metrics of one evaluated example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub bucket: AzimuthBucket,
    /// Centroid-DOA difference between the sources, degrees.
    pub azimuth_difference: f64,
    /// Mean over the two sources, dB.
    pub si_sdr: f64,
    pub doa: Option<DoaMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub si_sdr: f64,
    pub doa_accuracy: Option<f64>,
    pub doa_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: AzimuthBucket,
    #[serde(flatten)]
    pub summary: GroupSummary,
}

/// Per-bucket and overall means plus the scatter records they came from.
/// Empty buckets are omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub buckets: Vec<BucketSummary>,
    pub average: Option<GroupSummary>,
    pub records: Vec<ExampleRecord>,
}

fn summarize(records: &[&ExampleRecord]) -> Option<GroupSummary> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let doa: Vec<&DoaMetrics> = records.iter().filter_map(|r| r.doa.as_ref()).collect();
    let mean = |f: &dyn Fn(&DoaMetrics) -> f64| {
        (!doa.is_empty()).then(|| doa.iter().map(|m| f(m)).sum::<f64>() / doa.len() as f64)
    };
    Some(GroupSummary {
        count: records.len(),
        si_sdr: records.iter().map(|r| r.si_sdr).sum::<f64>() / n,
        doa_accuracy: mean(&|m| m.accuracy),
        doa_mae: mean(&|m| m.mae),
    })
}

pub fn bucket_report(records: Vec<ExampleRecord>) -> EvalReport {
    let buckets = AzimuthBucket::ALL
        .iter()
        .filter_map(|&b| {
            let members: Vec<&ExampleRecord> = records.iter().filter(|r| r.bucket == b).collect();
            summarize(&members).map(|summary| BucketSummary { bucket: b, summary })
        })
        .collect();
    let all: Vec<&ExampleRecord> = records.iter().collect();
    EvalReport {
        total: records.len(),
        average: summarize(&all),
        buckets,
        records,
    }
}

impl EvalReport {
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("id,bucket,azimuth_difference,si_sdr\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.id, r.bucket.label(), r.azimuth_difference, r.si_sdr);
        }
        out
    }

    /// SI-SDR against azimuth difference as a standalone SVG.
    pub fn scatter_svg(&self) -> String {
        let (w, h, pad) = (480.0, 320.0, 40.0);
        let lo = self.records.iter().map(|r| r.si_sdr).fold(-10.0f64, f64::min);
        let hi = self.records.iter().map(|r| r.si_sdr).fold(30.0f64, f64::max);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <line x1=\"{pad}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{y0}\" stroke=\"black\"/>\n\
             <text x=\"{cx}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"middle\">azimuth difference (deg)</text>\n\
             <text x=\"12\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">SI-SDR (dB)</text>\n",
            y0 = h - pad,
            x1 = w - pad,
            cx = w / 2.0,
            ty = h - 8.0,
            cy = h / 2.0,
        );
        for r in &self.records {
            let x = pad + (r.azimuth_difference.abs().min(180.0) / 180.0) * (w - 2.0 * pad);
            let y = h - pad - (r.si_sdr - lo) / (hi - lo) * (h - 2.0 * pad);
            let _ = writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"steelblue\"/>");
        }
        svg.push_str("</svg>\n");
        svg
    }

    /// Writes `<stem>.json`, `<stem>.csv` and, if asked, `<stem>.svg`.
    pub fn write(&self, json_path: impl AsRef<Path>, with_plot: bool) -> Result<()> {
        let path = json_path.as_ref();
        let put = |p: &Path, text: String| std::fs::write(p, text).map_err(|e| Error::io(p, e));
        put(path, serde_json::to_string_pretty(self)?)?;
        put(&path.with_extension("csv"), self.scatter_csv())?;
        if with_plot {
            put(&path.with_extension("svg"), self.scatter_svg())?;
        }
        Ok(())
    }
}

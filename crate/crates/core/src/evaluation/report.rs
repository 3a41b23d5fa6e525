//! CSV and SVG output for an [`EvalReport`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::benchmark::{Bucket, EvalReport};
use crate::error::{Error, Result};

pub const ROLLOUT_HEADER: &str = "pose_id,angle,height,distance,sample,dtg_cm,success,fs";

const NOTES: &str = "# fs: lowest joint of frame i moving more than the threshold (3D) from i to i+1\n\
                     # success: dtg <= radius (inclusive); failed rollouts have empty metrics\n";

/// Per-rollout table.
pub fn rollouts_csv(report: &EvalReport) -> String {
    let mut out = String::from(NOTES);
    let _ = writeln!(out, "{ROLLOUT_HEADER}");
    for r in &report.rows {
        if r.error.is_some() {
            let _ = writeln!(out, "{},{},{},{},{},,0,", r.pose, r.angle, r.height, r.distance, r.sample);
        } else {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.pose,
                r.angle,
                r.height,
                r.distance,
                r.sample,
                100.0 * r.dtg,
                u8::from(r.success),
                r.fs
            );
        }
    }
    out
}

fn bucket_rows(out: &mut String, axis: &str, buckets: &[Bucket]) {
    for b in buckets {
        let _ = writeln!(out, "{axis},{},{},{},{}", b.value, b.count, b.successes, b.rate());
    }
}

/// Aggregates followed by per-bucket success rates.
pub fn aggregates_csv(report: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "rollouts,{}", report.rows.len());
    let _ = writeln!(out, "failed,{}", report.failed);
    let _ = writeln!(out, "sr,{}", report.sr);
    let _ = writeln!(out, "fs,{}", report.fs);
    let _ = writeln!(out, "dtg_cm,{}", report.dtg_cm);
    out.push_str("\naxis,value,count,successes,sr\n");
    bucket_rows(&mut out, "angle", &report.by_angle);
    bucket_rows(&mut out, "height", &report.by_height);
    bucket_rows(&mut out, "distance", &report.by_distance);
    out
}

/// A parsed row of the per-rollout table.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRow {
    pub pose: usize,
    pub angle: f64,
    pub height: f64,
    pub distance: f64,
    pub sample: usize,
    pub dtg_cm: Option<f64>,
    pub success: bool,
    pub fs: Option<f64>,
}

pub fn parse_rollouts_csv(text: &str) -> Result<Vec<RolloutRow>> {
    let bad = |line: &str| Error::Parse(format!("bad rollout row: {line}"));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some(ROLLOUT_HEADER) {
        return Err(Error::Parse("missing rollout header".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(RolloutRow {
                pose: f[0].parse().map_err(|_| bad(line))?,
                angle: num(f[1])?,
                height: num(f[2])?,
                distance: num(f[3])?,
                sample: f[4].parse().map_err(|_| bad(line))?,
                dtg_cm: opt(f[5])?,
                success: f[6] == "1",
                fs: opt(f[7])?,
            })
        })
        .collect()
}

/// Bar chart of success rate per bucket.
pub fn bar_chart_svg(title: &str, buckets: &[Bucket], label: impl Fn(f64) -> String) -> String {
    const W: f64 = 480.0;
    const H: f64 = 240.0;
    const PAD: f64 = 40.0;
    let n = buckets.len().max(1) as f64;
    let slot = (W - 2.0 * PAD) / n;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>", W / 2.0);
    let _ = writeln!(
        out,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    );
    let span = H - 2.0 * PAD;
    for (i, b) in buckets.iter().enumerate() {
        let h = span * b.rate();
        let x = PAD + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\"/>",
            H - PAD - h,
            slot * 0.7
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            x + slot * 0.35,
            H - PAD + 16.0,
            label(b.value)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{:.0}%</text>",
            x + slot * 0.35,
            H - PAD - h - 4.0,
            100.0 * b.rate()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `rollouts.csv`, `aggregates.csv` and three SVG charts into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("rollouts.csv", rollouts_csv(report)),
        ("aggregates.csv", aggregates_csv(report)),
        (
            "sr_by_angle.svg",
            bar_chart_svg("success rate by angle", &report.by_angle, |v| format!("{:.0}°", v.to_degrees())),
        ),
        (
            "sr_by_height.svg",
            bar_chart_svg("success rate by height", &report.by_height, |v| format!("{v:.2} m")),
        ),
        (
            "sr_by_distance.svg",
            bar_chart_svg("success rate by distance", &report.by_distance, |v| format!("{v:.2} m")),
        ),
    ];
    let mut out = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

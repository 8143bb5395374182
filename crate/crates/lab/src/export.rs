//! CSV, metadata and SVG output.
//!
//! Every run writes three files into the output directory, named after the
//! experiment, the series label and the seed:
//!
//! - `*.curve.csv` with columns `step,return_mean,return_std,seed,variant`
//!   (one row per evaluation; `return_std` is over evaluation episodes),
//! - `*.episodes.csv` with columns `step,episode,return,seed,variant`,
//! - `*.meta.txt` echoing the configuration and the run counters.
//!
//! Wall time appears only on the console. Plots smooth with a centered
//! window of five evaluations; the CSV files stay raw.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::experiment::RunResult;
use crate::format::fmt_num;

pub const CURVE_HEADER: &str = "step,return_mean,return_std,seed,variant";
pub const EPISODE_HEADER: &str = "step,episode,return,seed,variant";
pub const SMOOTHING_WINDOW: usize = 5;

pub fn curve_csv(run: &RunResult) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for e in &run.record.evals {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.step,
            fmt_num(e.return_mean),
            fmt_num(e.return_std),
            run.seed(),
            run.label
        );
    }
    out
}

pub fn episodes_csv(run: &RunResult) -> String {
    let mut out = format!("{EPISODE_HEADER}\n");
    for e in &run.record.episodes {
        let _ = writeln!(out, "{},{},{},{},{}", e.step, e.episode, fmt_num(e.ret), run.seed(), run.label);
    }
    out
}

pub fn meta_text(config_dump: &str, run: &RunResult) -> String {
    let r = &run.record;
    let policy: Vec<String> = r.greedy_policy.iter().map(usize::to_string).collect();
    format!(
        "variant = {}\nlabel = {}\nseed = {}\nclipped_decompositions = {}\ntarget_syncs = {}\nupdates = {}\nauc = {}\ngreedy_policy = {}\n\n{config_dump}",
        r.variant.name(),
        run.label,
        r.seed,
        r.clipped,
        r.syncs,
        r.updates,
        fmt_num(r.auc()),
        policy.join(" ")
    )
}

fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// File stem shared by the three files of one run.
pub fn run_stem(name: &str, run: &RunResult) -> String {
    format!("{}__{}__seed{}", slug(name), slug(&run.label), run.seed())
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
    Ok(path)
}

/// Writes the CSV and metadata files of every run; returns their paths.
pub fn write_runs(dir: &Path, name: &str, config_dump: &str, runs: &[RunResult]) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(LabError::Invalid("no results to export".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut paths = Vec::with_capacity(3 * runs.len());
    for run in runs {
        let stem = run_stem(name, run);
        paths.push(write(dir.join(format!("{stem}.curve.csv")), &curve_csv(run))?);
        paths.push(write(dir.join(format!("{stem}.episodes.csv")), &episodes_csv(run))?);
        paths.push(write(dir.join(format!("{stem}.meta.txt")), &meta_text(config_dump, run))?);
    }
    Ok(paths)
}

/// Evaluation curves of one series, one per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub curves: Vec<Vec<(usize, f64)>>,
}

/// Groups runs by label, keeping first-appearance order.
pub fn series_from_runs(runs: &[RunResult]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for run in runs {
        let curve = run.record.evals.iter().map(|e| (e.step, e.return_mean)).collect();
        match out.iter_mut().find(|s| s.label == run.label) {
            Some(s) => s.curves.push(curve),
            None => out.push(Series { label: run.label.clone(), curves: vec![curve] }),
        }
    }
    out
}

/// Parses one curve CSV into `(label, seed, step, return_mean)` rows.
pub fn parse_curve_csv(text: &str) -> Result<Vec<(String, u64, usize, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CURVE_HEADER => {}
        _ => return Err(LabError::parse(1, format!("expected header `{CURVE_HEADER}`"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let cols: Vec<&str> = l.splitn(5, ',').collect();
            let [step, mean, _std, seed, label] = cols.as_slice() else {
                return Err(LabError::parse(line, "expected five columns"));
            };
            let bad = |what: &str| LabError::parse(line, format!("invalid {what}"));
            Ok((
                label.to_string(),
                seed.parse().map_err(|_| bad("seed"))?,
                step.parse().map_err(|_| bad("step"))?,
                mean.parse().map_err(|_| bad("return_mean"))?,
            ))
        })
        .collect()
}

/// Reads every `*.curve.csv` in `dir` (in file-name order) into series.
pub fn read_series(dir: &Path) -> Result<Vec<Series>> {
    let entries = std::fs::read_dir(dir).map_err(|e| LabError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".curve.csv"))
        .collect();
    files.sort();
    let mut grouped: Vec<(String, BTreeMap<u64, Vec<(usize, f64)>>)> = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        for (label, seed, step, value) in parse_curve_csv(&text)? {
            let idx = match grouped.iter().position(|(l, _)| *l == label) {
                Some(i) => i,
                None => {
                    grouped.push((label, BTreeMap::new()));
                    grouped.len() - 1
                }
            };
            grouped[idx].1.entry(seed).or_default().push((step, value));
        }
    }
    Ok(grouped.into_iter().map(|(label, by_seed)| Series { label, curves: by_seed.into_values().collect() }).collect())
}

/// Per-step mean and population standard deviation across curves,
/// truncated to the shortest curve.
pub fn aggregate(curves: &[Vec<(usize, f64)>]) -> Vec<(usize, f64, f64)> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let values: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (curves[0][i].0, mean, var.sqrt())
        })
        .collect()
}

/// Centered moving average; the window shrinks at the ends.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Line plot with one polyline per series and a shaded mean ± std band.
pub fn render_svg(title: &str, series: &[Series]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 180.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let prepared: Vec<(&str, Vec<(f64, f64, f64)>)> = series
        .iter()
        .map(|s| {
            let agg = aggregate(&s.curves);
            let means = smooth(&agg.iter().map(|p| p.1).collect::<Vec<_>>(), SMOOTHING_WINDOW);
            let stds = smooth(&agg.iter().map(|p| p.2).collect::<Vec<_>>(), SMOOTHING_WINDOW);
            let pts = agg.iter().zip(means.iter().zip(&stds)).map(|(p, (&m, &s))| (p.0 as f64, m, s)).collect();
            (s.label.as_str(), pts)
        })
        .collect();
    let all = prepared.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, s) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(svg, r#"<g stroke="black" stroke-width="1"><line x1="{ax0}" y1="{ay0}" x2="{ax1}" y2="{ay0}"/><line x1="{ax0}" y1="{ay0}" x2="{ax0}" y2="{ay1}"/></g>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, px(xv), H - BOTTOM + 16.0, xv.round());
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#, LEFT - 6.0, py(yv) + 4.0, yv);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">environment step</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0);
    let _ = writeln!(svg, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">evaluation return</text>"#, H / 2.0, H / 2.0);
    for (i, (label, pts)) in prepared.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = pts.iter().map(|&(x, m, s)| format!("{:.2},{:.2}", px(x), py(m + s)));
        let lower = pts.iter().rev().map(|&(x, m, s)| format!("{:.2},{:.2}", px(x), py(m - s)));
        let band: Vec<String> = upper.chain(lower).collect();
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let label = escape(label);
        let _ = writeln!(svg, r#"<polygon class="band" fill="{color}" fill-opacity="0.18" stroke="none" points="{}"/>"#, band.join(" "));
        let _ = writeln!(svg, r#"<polyline class="mean" fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{label}</title></polyline>"#, line.join(" "));
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, W - RIGHT + 14.0, W - RIGHT + 36.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#, W - RIGHT + 42.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Plots every curve CSV found in `dir` into `dir/curves.svg`.
pub fn export_svg(dir: &Path) -> Result<PathBuf> {
    let series = read_series(dir)?;
    if series.is_empty() {
        return Err(LabError::Invalid(format!("no curve CSV files in {}", dir.display())));
    }
    let title = dir.file_name().map_or_else(|| "learning curves".to_string(), |n| n.to_string_lossy().into_owned());
    write(dir.join("curves.svg"), &render_svg(&title, &series))
}

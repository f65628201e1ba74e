//! CSV traces, summary tables and SVG regret plots.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::config::ExperimentConfig;
use super::run::{ExperimentResult, RegretTrace, BUDGET_TOLERANCE};
use super::HarnessError;

pub const TRACE_HEADER: [&str; 5] = ["round", "cum_regret", "budget_spent", "chosen_c_prime", "pulled_arm"];
pub const MEAN_HEADER: [&str; 3] = ["round", "cum_regret", "budget_spent"];
/// Traces longer than this are gzip-compressed.
pub const GZIP_ROWS: usize = 1_000_000;
/// Maximum points drawn per polyline.
pub const PLOT_POINTS: usize = 2000;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_FILE: &str = "regret.svg";

fn io_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn trace_file_name(label: &str, repetition: u64, rows: usize) -> String {
    let gz = if rows > GZIP_ROWS { ".gz" } else { "" };
    format!("{label}_rep{repetition}.csv{gz}")
}

pub fn mean_file_name(label: &str) -> String {
    format!("{label}_mean.csv")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<Box<dyn Write>>, HarnessError> {
    let file = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let sink: Box<dyn Write> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    };
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<Box<dyn Read>>, HarnessError> {
    let file = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let source: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(csv::Reader::from_reader(source))
}

fn finish(mut w: csv::Writer<Box<dyn Write>>, path: &Path) -> Result<(), HarnessError> {
    w.flush().map_err(|e| io_err(path, e))?;
    // dropping the inner writer finalises a gzip stream
    let inner = w.into_inner().map_err(|e| io_err(path, e.error()))?;
    drop(inner);
    Ok(())
}

/// Write one trace. Floats use the shortest representation that parses
/// back to the same value; an absent `chosen_c_prime` is an empty field.
pub fn write_trace(trace: &RegretTrace, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_HEADER).map_err(|e| io_err(path, e))?;
    let mut row: [String; 5] = Default::default();
    for i in 0..trace.len() {
        row[0] = (i + 1).to_string();
        row[1] = trace.cum_regret[i].to_string();
        row[2] = trace.budget_spent[i].to_string();
        row[3] = trace.chosen_c_prime[i].map(|c| c.to_string()).unwrap_or_default();
        row[4] = trace.pulled_arm[i].to_string();
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    path: &Path,
    line: u64,
) -> Result<T, HarnessError> {
    record
        .get(index)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io_err(path, format!("line {line}: bad `{}` field", TRACE_HEADER[index])))
}

pub fn read_trace(path: &Path) -> Result<RegretTrace, HarnessError> {
    let mut r = csv_reader(path)?;
    let header = r.headers().map_err(|e| io_err(path, e))?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(io_err(path, "unexpected header"));
    }
    let mut trace = RegretTrace::default();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| io_err(path, e))?;
        let line = i as u64 + 2;
        let round: usize = field(&record, 0, path, line)?;
        if round != i + 1 {
            return Err(io_err(path, format!("line {line}: round {round} out of sequence")));
        }
        let c_prime = match record.get(3) {
            Some("") => None,
            _ => Some(field(&record, 3, path, line)?),
        };
        trace.push(
            field(&record, 1, path, line)?,
            field(&record, 2, path, line)?,
            c_prime,
            field(&record, 4, path, line)?,
        );
    }
    Ok(trace)
}

/// Per-round arithmetic mean of cumulative regret and budget spent.
pub fn mean_trace(traces: &[RegretTrace]) -> (Vec<f64>, Vec<f64>) {
    let n = traces.iter().map(RegretTrace::len).min().unwrap_or(0);
    let reps = traces.len() as f64;
    let mean = |col: fn(&RegretTrace) -> &Vec<f64>| {
        (0..n)
            .map(|t| traces.iter().map(|tr| col(tr)[t]).sum::<f64>() / reps)
            .collect::<Vec<f64>>()
    };
    (mean(|t| &t.cum_regret), mean(|t| &t.budget_spent))
}

pub fn write_mean(traces: &[RegretTrace], path: &Path) -> Result<(), HarnessError> {
    let (regret, budget) = mean_trace(traces);
    let mut w = csv_writer(path)?;
    w.write_record(MEAN_HEADER).map_err(|e| io_err(path, e))?;
    for (i, (r, b)) in regret.iter().zip(&budget).enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string(), b.to_string()])
            .map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

/// Trace files of every (policy, repetition) plus one mean file per policy.
pub fn emit_csv(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if result.traces.iter().all(Vec::is_empty) {
        return Err(HarnessError::Empty);
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for (label, reps) in result.labels.iter().zip(&result.traces) {
        for (r, trace) in reps.iter().enumerate() {
            let path = dir.join(trace_file_name(label, r as u64, trace.len()));
            write_trace(trace, &path)?;
            written.push(path);
        }
        let path = dir.join(mean_file_name(label));
        write_mean(reps, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub repetitions: usize,
    pub mean_final_regret: f64,
    pub sd_final_regret: f64,
    pub mean_budget_spent: f64,
}

pub fn summarize(result: &ExperimentResult) -> Vec<SummaryRow> {
    result
        .labels
        .iter()
        .zip(&result.traces)
        .map(|(label, reps)| {
            let n = reps.len() as f64;
            let finals: Vec<f64> = reps.iter().map(RegretTrace::final_regret).collect();
            let mean = finals.iter().sum::<f64>() / n;
            let var = if reps.len() > 1 {
                finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                policy: label.clone(),
                repetitions: reps.len(),
                mean_final_regret: mean,
                sd_final_regret: var.sqrt(),
                mean_budget_spent: reps.iter().map(RegretTrace::final_budget).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "policy",
        "repetitions",
        "mean_final_regret",
        "sd_final_regret",
        "mean_budget_spent",
    ])
    .map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record([
            row.policy.clone(),
            row.repetitions.to_string(),
            row.mean_final_regret.to_string(),
            row.sd_final_regret.to_string(),
            row.mean_budget_spent.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Evenly spaced indices into `0..len`, always keeping the last one.
fn downsample(len: usize, max_points: usize) -> Vec<usize> {
    if len <= max_points {
        return (0..len).collect();
    }
    let step = (len - 1) as f64 / (max_points - 1) as f64;
    (0..max_points).map(|i| ((i as f64 * step).round() as usize).min(len - 1)).collect()
}

/// Roughly five round tick values covering `[0, max]`.
fn ticks(max: f64) -> Vec<f64> {
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    (0..)
        .map(|i| i as f64 * step)
        .take_while(|v| *v <= max * (1.0 + 1e-12))
        .collect()
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

/// Single-panel SVG of mean cumulative regret per policy, legend in the
/// given order.
pub fn emit_plot(series: &[(String, Vec<f64>)], path: &Path) -> Result<(), HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Empty);
    }
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let rounds = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(1) as f64;
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0, f64::max);
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    let x_of = |round: f64| left + pw * if rounds > 1.0 { (round - 1.0) / (rounds - 1.0) } else { 0.0 };
    let y_of = |v: f64| top + ph * (1.0 - v / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">Mean cumulative regret</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<g id="axes" stroke="black" fill="none"><line x1="{left}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{y0}"/></g>"#,
        y0 = top + ph,
        x1 = left + pw
    );

    let _ = writeln!(svg, r#"<g id="ticks" font-family="sans-serif" font-size="11">"#);
    for v in ticks(y_max) {
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
    for v in ticks(rounds) {
        let x = x_of(v.max(1.0));
        let y0 = top + ph;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(v)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">round</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{y}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 20 {y})">cumulative regret</text>"#,
        y = top + ph / 2.0
    );

    for (i, (label, values)) in series.iter().enumerate() {
        let points: Vec<String> = downsample(values.len(), PLOT_POINTS)
            .into_iter()
            .map(|j| format!("{:.2},{:.2}", x_of((j + 1) as f64), y_of(values[j])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            xml_escape(label),
            PALETTE[i % PALETTE.len()],
            points.join(" ")
        );
    }

    let _ = writeln!(svg, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    for (i, (label, _)) in series.iter().enumerate() {
        let y = top + 15.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            left + 15.0,
            left + 40.0,
            PALETTE[i % PALETTE.len()],
            left + 46.0,
            y + 4.0,
            xml_escape(label)
        );
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    fs::write(path, svg).map_err(|e| io_err(path, e))
}

/// Mean files, summary and plot for a finished experiment.
pub fn emit_all(
    config: &ExperimentConfig,
    result: &ExperimentResult,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    fs::write(&config_path, config.to_toml_string()).map_err(|e| io_err(&config_path, e))?;
    let mut written = vec![config_path];
    written.extend(emit_csv(result, dir)?);
    let summary = dir.join(SUMMARY_FILE);
    write_summary(&summarize(result), &summary)?;
    written.push(summary);
    let plot = dir.join(PLOT_FILE);
    emit_plot(&mean_series(result), &plot)?;
    written.push(plot);
    Ok(written)
}

fn mean_series(result: &ExperimentResult) -> Vec<(String, Vec<f64>)> {
    result
        .labels
        .iter()
        .zip(&result.traces)
        .map(|(label, reps)| (label.clone(), mean_trace(reps).0))
        .collect()
}

/// Outcome of re-checking an output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub summary: Vec<SummaryRow>,
    pub violations: Vec<String>,
}

fn parse_trace_name(name: &str) -> Option<(String, u64)> {
    let stem = name.strip_suffix(".csv.gz").or_else(|| name.strip_suffix(".csv"))?;
    let (label, rep) = stem.rsplit_once("_rep")?;
    Some((label.to_string(), rep.parse().ok()?))
}

/// Invariant violations in one trace: monotone regret and budget, budget
/// within `C`, and RobustBandit's budget guess changing only at epoch starts.
pub fn check_trace(
    name: &str,
    trace: &RegretTrace,
    budget: Option<f64>,
    epoch_length: Option<u64>,
) -> Vec<String> {
    let mut out = Vec::new();
    let first_drop = |col: &[f64]| col.windows(2).position(|w| w[1] < w[0]).map(|i| i + 2);
    if let Some(t) = first_drop(&trace.cum_regret) {
        out.push(format!("{name}: cum_regret decreases at round {t}"));
    }
    if let Some(t) = first_drop(&trace.budget_spent) {
        out.push(format!("{name}: budget_spent decreases at round {t}"));
    }
    if let Some(c) = budget {
        if trace.final_budget() > c + BUDGET_TOLERANCE {
            out.push(format!("{name}: budget_spent {} exceeds C = {c}", trace.final_budget()));
        }
    }
    if let Some(h) = epoch_length.filter(|_| name.starts_with("robustbandit_rep")) {
        for (i, w) in trace.chosen_c_prime.windows(2).enumerate() {
            let round = i as u64 + 2;
            if w[0] != w[1] && !(round - 1).is_multiple_of(h) {
                out.push(format!("{name}: chosen_c_prime changes inside an epoch at round {round}"));
                break;
            }
        }
    }
    out
}

/// Re-read every trace in `dir`, check invariants and regenerate mean
/// files, the summary and the plot. Policy order follows `config.toml` when
/// present, otherwise label order.
pub fn report(dir: &Path) -> Result<ReportOutcome, HarnessError> {
    let config_path = dir.join(CONFIG_FILE);
    let config = if config_path.exists() {
        Some(ExperimentConfig::load(&config_path)?)
    } else {
        None
    };

    let mut found: Vec<(String, u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some((label, rep)) = parse_trace_name(name) {
            found.push((label, rep, path));
        }
    }
    if found.is_empty() {
        return Err(io_err(dir, "no trace files"));
    }

    let mut labels: Vec<String> = match &config {
        Some(c) => c.policies.iter().map(|p| p.label()).collect(),
        None => Vec::new(),
    };
    found.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    for (label, _, _) in &found {
        if !labels.contains(label) {
            labels.push(label.clone());
        }
    }
    labels.retain(|l| found.iter().any(|f| &f.0 == l));

    let budget = config.as_ref().map(|c| c.budget);
    let epoch_length = config.as_ref().map(ExperimentConfig::epoch_length);
    let mut violations = Vec::new();
    let mut traces = Vec::new();
    for label in &labels {
        let mut reps = Vec::new();
        for (_, _, path) in found.iter().filter(|f| &f.0 == label) {
            let trace = read_trace(path)?;
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            violations.extend(check_trace(name, &trace, budget, epoch_length));
            reps.push(trace);
        }
        write_mean(&reps, &dir.join(mean_file_name(label)))?;
        traces.push(reps);
    }
    let result = ExperimentResult { labels, traces };
    let summary = summarize(&result);
    write_summary(&summary, &dir.join(SUMMARY_FILE))?;
    emit_plot(&mean_series(&result), &dir.join(PLOT_FILE))?;
    Ok(ReportOutcome {
        summary,
        violations,
    })
}

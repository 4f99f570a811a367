use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::corpus::FilterStats;
use crate::distill::{KdFilterStats, KdGenerationStats};
use crate::error::{Error, Result};
use crate::pruner::{importance_profile_report, PruneTrace};
use crate::trainer::StopReason;

/// Quantized/full memory ratio of the 32-layer 8B model (5.61 vs 14.96 GiB).
pub const REFERENCE_MEMORY_RATIO: f64 = 5.61 / 14.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub label: String,
    pub layers: usize,
    pub params: u64,
    pub chrf_pp: f64,
    pub bleu: f64,
    pub semantic: f64,
    pub median_seconds: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdRow {
    pub layers: usize,
    pub kd: bool,
    pub train_pairs: usize,
    pub chrf_pp: f64,
    pub bleu: f64,
    pub semantic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantRow {
    pub label: String,
    pub layers: usize,
    pub quantized: bool,
    pub memory_bytes: u64,
    pub chrf_pp: f64,
    /// Share of greedy tokens equal to the full-precision output on dev.
    pub token_agreement: f64,
    pub median_seconds: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub label: String,
    pub steps: usize,
    pub best_step: usize,
    pub initial_dev_chrf_pp: f64,
    pub best_dev_chrf_pp: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdSummary {
    pub teacher: String,
    pub generation: KdGenerationStats,
    pub filter: KdFilterStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub test: usize,
    pub dev: usize,
    pub held_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub filter: FilterStats,
    pub split: SplitSizes,
    pub training: Vec<TrainSummary>,
    pub prune_trace: Option<PruneTrace>,
    pub kd: Option<KdSummary>,
    pub table1: Vec<ModelRow>,
    pub table2: Vec<KdRow>,
    pub table3: Vec<QuantRow>,
}

impl ExperimentReport {
    pub fn baseline(&self) -> Option<&ModelRow> {
        self.table1.first()
    }

    /// Test chrF++ of each pruned model relative to the baseline.
    pub fn retention(&self) -> Vec<(usize, f64)> {
        let Some(base) = self.baseline() else {
            return Vec::new();
        };
        self.table1[1..]
            .iter()
            .map(|r| (r.layers, r.chrf_pp / base.chrf_pp))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub markdown: String,
    pub csv: String,
}

/// `mm:ss.sss`
pub fn mmss(seconds: f64) -> String {
    let whole = seconds.max(0.0);
    let minutes = (whole / 60.0).floor();
    format!("{:02}:{:06.3}", minutes as u64, whole - 60.0 * minutes)
}

fn params(p: u64) -> String {
    format!("{p} ({:.3}M)", p as f64 / 1e6)
}

fn check<T>(rows: &[T], what: &str) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Input(format!("{what} has no rows")));
    }
    Ok(())
}

fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",") + "\n";
    for r in rows {
        out += &r.join(",");
        out.push('\n');
    }
    out
}

/// Layers, quality, size and speed of the baseline and every pruned model.
pub fn render_table1(rows: &[ModelRow]) -> Result<Table> {
    check(rows, "model table")?;
    let md_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.layers.to_string(),
                format!("{:.2}", r.chrf_pp),
                format!("{:.2}", r.bleu),
                format!("{:.4}", r.semantic),
                params(r.params),
                mmss(r.median_seconds),
                format!("{:.1}", r.throughput),
            ]
        })
        .collect();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.layers.to_string(),
                format!("{:.2}", r.chrf_pp),
                format!("{:.2}", r.bleu),
                format!("{:.4}", r.semantic),
                r.params.to_string(),
                format!("{:.3}", r.params as f64 / 1e6),
                format!("{:.6}", r.median_seconds),
                format!("{:.1}", r.throughput),
            ]
        })
        .collect();
    Ok(Table {
        markdown: markdown(
            &["model", "layers", "chrF++", "BLEU", "semantic", "params", "speed", "tokens/s"],
            &md_rows,
        ),
        csv: csv(
            &["model", "layers", "chrf_pp", "bleu", "semantic", "params", "params_millions", "seconds", "tokens_per_second"],
            &csv_rows,
        ),
    })
}

/// Fine-tuning with and without distilled data, grouped by layer count.
pub fn render_table2(rows: &[KdRow]) -> Result<Table> {
    check(rows, "distillation table")?;
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (std::cmp::Reverse(r.layers), r.kd));
    let cells: Vec<Vec<String>> = sorted
        .iter()
        .map(|r| {
            vec![
                r.layers.to_string(),
                if r.kd { "yes" } else { "no" }.to_string(),
                r.train_pairs.to_string(),
                format!("{:.2}", r.chrf_pp),
                format!("{:.2}", r.bleu),
                format!("{:.4}", r.semantic),
            ]
        })
        .collect();
    let header = ["layers", "KD", "train pairs", "chrF++", "BLEU", "semantic"];
    Ok(Table {
        markdown: markdown(&header, &cells),
        csv: csv(&["layers", "kd", "train_pairs", "chrf_pp", "bleu", "semantic"], &cells),
    })
}

/// Memory against speed with and without quantization.
pub fn render_table3(rows: &[QuantRow]) -> Result<Table> {
    check(rows, "quantization table")?;
    let row = |r: &QuantRow, speed: String| {
        vec![
            r.label.clone(),
            r.layers.to_string(),
            if r.quantized { "yes" } else { "no" }.to_string(),
            r.memory_bytes.to_string(),
            format!("{:.2}", r.chrf_pp),
            format!("{:.4}", r.token_agreement),
            speed,
            format!("{:.1}", r.throughput),
        ]
    };
    let md: Vec<Vec<String>> = rows.iter().map(|r| row(r, mmss(r.median_seconds))).collect();
    let cs: Vec<Vec<String>> = rows.iter().map(|r| row(r, format!("{:.6}", r.median_seconds))).collect();
    let mut markdown_text = markdown(
        &["model", "layers", "quantized", "memory bytes", "chrF++", "token agreement", "speed", "tokens/s"],
        &md,
    );
    for pair in rows.chunks(2) {
        if let [full, quant] = pair {
            if !full.quantized && quant.quantized {
                let _ = writeln!(
                    markdown_text,
                    "\n{}: quantized/full memory ratio {:.3} (8B-scale reference {:.3})",
                    full.label,
                    quant.memory_bytes as f64 / full.memory_bytes as f64,
                    REFERENCE_MEMORY_RATIO
                );
            }
        }
    }
    Ok(Table {
        markdown: markdown_text,
        csv: csv(
            &["model", "layers", "quantized", "memory_bytes", "chrf_pp", "token_agreement", "seconds", "tokens_per_second"],
            &cs,
        ),
    })
}

/// Full Markdown report plus the CSV form of each table.
pub fn render_report(report: &ExperimentReport) -> Result<(String, Vec<(&'static str, Table)>)> {
    let mut tables = vec![("table1", render_table1(&report.table1)?)];
    if !report.table2.is_empty() {
        tables.push(("table2", render_table2(&report.table2)?));
    }
    if !report.table3.is_empty() {
        tables.push(("table3", render_table3(&report.table3)?));
    }
    let mut md = String::from("# Layer pruning experiment\n\n");
    let s = report.split;
    let _ = writeln!(
        md,
        "Corpus: {} pairs in, {} after filtering; train {}, test {}, dev {}, held out {}.\n",
        report.filter.input_count, report.filter.output_count, s.train, s.test, s.dev, s.held_out
    );
    let _ = writeln!(md, "## Filtering\n\n```\n{}\n```\n", report.filter);
    md += "## Training\n\n| run | steps | best step | initial dev chrF++ | best dev chrF++ | stop |\n|---|---|---|---|---|---|\n";
    for t in &report.training {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.2} | {:.2} | {:?} |",
            t.label, t.steps, t.best_step, t.initial_dev_chrf_pp, t.best_dev_chrf_pp, t.stop_reason
        );
    }
    md += "\n## Models\n\n";
    md += &tables[0].1.markdown;
    for (layers, ratio) in report.retention() {
        let _ = writeln!(md, "\n{layers} layers retain {:.1}% of baseline chrF++.", 100.0 * ratio);
    }
    if let Some(trace) = &report.prune_trace {
        let _ = writeln!(md, "\n## Layer importance\n\nRemoved in order: {:?}\n", trace.removed());
        md += &importance_profile_report(trace)?;
    }
    if let Some(kd) = &report.kd {
        let _ = writeln!(
            md,
            "\n## Distillation\n\nTeacher `{}`: {} generated, {} failed; {} duplicates and {} below threshold dropped, {} kept.\n",
            kd.teacher,
            kd.generation.generated,
            kd.generation.failed,
            kd.filter.duplicates,
            kd.filter.low_quality,
            kd.filter.kept
        );
    }
    for (name, t) in &tables[1..] {
        let title = if *name == "table2" { "Distillation comparison" } else { "Quantization" };
        let _ = writeln!(md, "\n## {title}\n\n{}", t.markdown);
    }
    Ok((md, tables))
}

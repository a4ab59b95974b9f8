//! Report rendering: the leaderboard, per-template breakdowns, OOD
//! tables, and exchange-rate bar charts as standalone SVG files. Report
//! bodies carry no timestamps; rendering the same artifacts twice yields
//! identical bytes.

use crate::artifacts::{read_json, walk_files, write_string, ArtifactError};
use crate::ood::{EvenHandedOutcome, ExchangeCategoryOutcome, PoliticalValuesOutcome};
use polcon_core::metrics::{round_half_up_1dp, ConsistencyReport};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyArtifact {
    pub model: String,
    pub judge: String,
    pub report: ConsistencyReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvenHandedArtifact {
    pub model: String,
    pub judge: String,
    pub outcome: EvenHandedOutcome,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExchangeArtifact {
    pub model: String,
    pub outcomes: Vec<ExchangeCategoryOutcome>,
    /// Categories whose rate table could not be solved (e.g. the anchor's
    /// own curve was unusable at this budget), with reasons.
    #[serde(default)]
    pub failed_categories: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PoliticalValuesArtifact {
    pub model: String,
    pub outcome: PoliticalValuesOutcome,
}

/// One decimal, half-up, the way results tables print percentages.
pub fn pct(x: f64) -> String {
    format!("{:.1}", round_half_up_1dp(x))
}

// ─── Leaderboard ────────────────────────────────────────────────────────────

/// Sort rows by Average descending (name as tiebreak) and render the
/// leaderboard in markdown and CSV.
pub fn render_leaderboard(rows: &[ConsistencyArtifact]) -> (String, String) {
    let mut sorted: Vec<&ConsistencyArtifact> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        b.report
            .average_pct
            .total_cmp(&a.report.average_pct)
            .then_with(|| a.model.cmp(&b.model))
            .then_with(|| a.judge.cmp(&b.judge))
    });
    let mut md = String::new();
    let _ = writeln!(md, "| Model | Judge | Sentiment Consistency | Helpfulness Consistency | Average |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|");
    let mut csv = String::from("model,judge,sentiment_consistency,helpfulness_consistency,average\n");
    for row in sorted {
        let r = &row.report;
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            row.model,
            row.judge,
            pct(r.sentiment_consistency_pct),
            pct(r.helpfulness_consistency_pct),
            pct(r.average_pct)
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.model,
            row.judge,
            pct(r.sentiment_consistency_pct),
            pct(r.helpfulness_consistency_pct),
            pct(r.average_pct)
        );
    }
    (md, csv)
}

/// Per-template table: one block per metric, columns are the templates
/// plus the five-template Avg and population Std.
pub fn render_per_template(rows: &[ConsistencyArtifact]) -> (String, String) {
    let mut templates: Vec<String> = Vec::new();
    for row in rows {
        for t in row.report.per_template.keys() {
            if !templates.contains(t) {
                templates.push(t.clone());
            }
        }
    }
    templates.sort();
    let mut md = String::new();
    let mut csv = String::from("metric,model,judge,");
    csv.push_str(&templates.join(","));
    csv.push_str(",avg,std\n");
    for (metric, select, std_of) in [
        ("Sentiment Consistency", 0usize, 0usize),
        ("Helpfulness Consistency", 1, 1),
    ] {
        let _ = writeln!(md, "\n### {metric} by prompt template\n");
        let _ = write!(md, "| Model | Judge |");
        for t in &templates {
            let _ = write!(md, " {t} |");
        }
        let _ = writeln!(md, " Avg | Std |");
        let _ = write!(md, "|---|---|");
        for _ in &templates {
            let _ = write!(md, "---:|");
        }
        let _ = writeln!(md, "---:|---:|");
        for row in rows {
            let values: Vec<f64> = templates
                .iter()
                .filter_map(|t| row.report.per_template.get(t))
                .map(|(sc, hc)| if select == 0 { *sc } else { *hc })
                .collect();
            let avg = values.iter().sum::<f64>() / values.len().max(1) as f64;
            let std = if std_of == 0 { row.report.template_std.0 } else { row.report.template_std.1 };
            let _ = write!(md, "| {} | {} |", row.model, row.judge);
            let _ = write!(csv, "{},{},{},", metric.replace(' ', "_").to_lowercase(), row.model, row.judge);
            let mut cells = Vec::new();
            for t in &templates {
                let cell = row
                    .report
                    .per_template
                    .get(t)
                    .map(|(sc, hc)| pct(if select == 0 { *sc } else { *hc }))
                    .unwrap_or_else(|| "-".to_string());
                let _ = write!(md, " {cell} |");
                cells.push(cell);
            }
            let _ = writeln!(md, " {} | {} |", pct(avg), pct(std));
            let _ = writeln!(csv, "{},{},{}", cells.join(","), pct(avg), pct(std));
        }
    }
    (md, csv)
}

// ─── OOD tables ─────────────────────────────────────────────────────────────

pub fn render_even_handed(rows: &[EvenHandedArtifact]) -> (String, String) {
    let mut md = String::new();
    let _ = writeln!(md, "| Model | Judge | Even-handedness | Refusals | Opposing Perspectives |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|");
    let mut csv = String::from("model,judge,even_handedness,refusals,opposing_perspectives,pairs,excluded\n");
    let mut sorted: Vec<&EvenHandedArtifact> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        b.outcome
            .report
            .even_handedness_pct
            .total_cmp(&a.outcome.report.even_handedness_pct)
            .then_with(|| a.model.cmp(&b.model))
    });
    for row in sorted {
        let r = &row.outcome.report;
        let _ = writeln!(
            md,
            "| {} | {} | {}% | {}% | {}% |",
            row.model,
            row.judge,
            pct(r.even_handedness_pct),
            pct(r.refusals_pct),
            pct(r.opposing_perspectives_pct)
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.model,
            row.judge,
            pct(r.even_handedness_pct),
            pct(r.refusals_pct),
            pct(r.opposing_perspectives_pct),
            r.pairs,
            row.outcome.excluded.len()
        );
    }
    (md, csv)
}

pub fn render_exchange_summary(rows: &[ExchangeArtifact]) -> (String, String) {
    let mut md = String::new();
    let _ = writeln!(md, "| Model | Category | Anchor | l1 anchor distance (log10) | sigma(log10) |");
    let _ = writeln!(md, "|---|---|---|---:|---:|");
    let mut csv = String::from("model,category,anchor,l1_anchor,sigma_log,splits,excluded_by_refusals\n");
    for row in rows {
        for outcome in &row.outcomes {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.2} | {:.2} |",
                row.model, outcome.table.category, outcome.table.anchor, outcome.summary.l1_anchor, outcome.summary.sigma_log
            );
            let _ = writeln!(
                csv,
                "{},{},{},{:.4},{:.4},{},{}",
                row.model,
                outcome.table.category,
                outcome.table.anchor,
                outcome.summary.l1_anchor,
                outcome.summary.sigma_log,
                outcome.splits,
                outcome.excluded_by_refusals
            );
        }
    }
    (md, csv)
}

pub fn render_exchange_rates_csv(rows: &[ExchangeArtifact]) -> String {
    let mut csv = String::from("model,category,entity,rate\n");
    for row in rows {
        for outcome in &row.outcomes {
            for (entity, rate) in &outcome.table.rates {
                let _ = writeln!(csv, "{},{},{},{:.6}", row.model, outcome.table.category, entity, rate);
            }
        }
    }
    csv
}

/// Coordinates table in the (entity, PC1, PC2) layout.
pub fn render_political_values(rows: &[PoliticalValuesArtifact]) -> (String, String) {
    let mut md = String::new();
    let _ = writeln!(md, "| Entity | PC1 | PC2 |");
    let _ = writeln!(md, "|---|---:|---:|");
    let mut csv = String::from("entity,pc1,pc2\n");
    let mut reference_done = false;
    for row in rows {
        if !reference_done {
            for point in &row.outcome.projection.reference_points {
                let _ = writeln!(md, "| {} | {:+.1} | {:+.1} |", point.name, point.pc1, point.pc2);
                let _ = writeln!(csv, "{},{:.4},{:.4}", point.name, point.pc1, point.pc2);
            }
            reference_done = true;
        }
        for point in &row.outcome.projection.entity_points {
            let flag = if row.outcome.excluded_by_refusals { " (excluded from reported results)" } else { "" };
            let _ = writeln!(md, "| {}{} | {:+.1} | {:+.1} |", point.name, flag, point.pc1, point.pc2);
            let _ = writeln!(csv, "{},{:.4},{:.4}", point.name, point.pc1, point.pc2);
        }
    }
    (md, csv)
}

// ─── SVG bar charts ─────────────────────────────────────────────────────────

/// Per-entity exchange-rate bars on a log scale with the equal-valuation
/// line at 1.0.
pub fn exchange_rate_svg(title: &str, rates: &[(String, f64)]) -> String {
    let width = 640.0;
    let height = 360.0;
    let margin_left = 60.0;
    let margin_bottom = 90.0;
    let margin_top = 40.0;
    let plot_w = width - margin_left - 20.0;
    let plot_h = height - margin_top - margin_bottom;

    let mut lo: f64 = -1.0;
    let mut hi: f64 = 1.0;
    for (_, r) in rates {
        let l = r.max(1e-6).log10();
        lo = lo.min(l.floor());
        hi = hi.max(l.ceil());
    }
    let y_of = |rate: f64| -> f64 {
        let l = rate.max(1e-6).log10().clamp(lo, hi);
        margin_top + plot_h * (1.0 - (l - lo) / (hi - lo))
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        margin_left + plot_w / 2.0,
        title
    );
    // Log gridlines and labels.
    let mut level = lo;
    while level <= hi + 1e-9 {
        let y = margin_top + plot_h * (1.0 - (level - lo) / (hi - lo));
        let _ = writeln!(
            svg,
            r##"<line x1="{margin_left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            margin_left + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            margin_left - 6.0,
            y + 4.0,
            format_rate_tick(level)
        );
        level += 1.0;
    }
    let n = rates.len().max(1) as f64;
    let step = plot_w / n;
    let bar_w = (step * 0.6).min(60.0);
    let baseline = y_of(1.0);
    for (i, (entity, rate)) in rates.iter().enumerate() {
        let cx = margin_left + step * (i as f64 + 0.5);
        let y = y_of(*rate);
        let (top, h) = if y <= baseline { (y, baseline - y) } else { (baseline, y - baseline) };
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="#4878a8"/>"##,
            cx - bar_w / 2.0,
            h.max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end" transform="rotate(-35 {cx:.2} {:.2})">{entity}</text>"#,
            height - margin_bottom + 16.0,
            height - margin_bottom + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{rate:.2}</text>"#,
            top - 4.0
        );
    }
    // Equal valuation reference line at 1.0.
    let _ = writeln!(
        svg,
        r##"<line x1="{margin_left:.2}" y1="{baseline:.2}" x2="{:.2}" y2="{baseline:.2}" stroke="#c03030" stroke-width="1.5" stroke-dasharray="6 3"/>"##,
        margin_left + plot_w
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#c03030">equal valuation (1.0)</text>"##,
        margin_left + plot_w - 130.0,
        baseline - 6.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn format_rate_tick(level: f64) -> String {
    if level >= 0.0 {
        format!("{}", 10f64.powf(level) as i64)
    } else {
        format!("{}", 10f64.powf(level))
    }
}

// ─── Assembling the full report ─────────────────────────────────────────────

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn consistency_artifact_path(dir: &Path, model: &str, judge: &str) -> PathBuf {
    dir.join("consistency").join(format!("{}__{}.json", sanitize(model), sanitize(judge)))
}

pub fn even_handed_artifact_path(dir: &Path, model: &str, judge: &str) -> PathBuf {
    dir.join("even_handed").join(format!("{}__{}.json", sanitize(model), sanitize(judge)))
}

pub fn exchange_artifact_path(dir: &Path, model: &str) -> PathBuf {
    dir.join("exchange").join(format!("{}.json", sanitize(model)))
}

pub fn political_values_artifact_path(dir: &Path, model: &str) -> PathBuf {
    dir.join("political_values").join(format!("{}.json", sanitize(model)))
}

fn load_all<T: serde::de::DeserializeOwned>(dir: &Path) -> Result<Vec<T>, ArtifactError> {
    let mut out = Vec::new();
    for rel in walk_files(dir)? {
        if rel.extension().map(|e| e == "json").unwrap_or(false) {
            out.push(read_json(&dir.join(rel))?);
        }
    }
    Ok(out)
}

/// Render every recognized artifact under `artifacts/` into
/// `report/` (markdown, CSV tables, and SVG plots). Returns the files
/// written.
pub fn render_report(run_dir: &Path) -> Result<Vec<PathBuf>, ArtifactError> {
    let artifacts = run_dir.join("artifacts");
    let report_dir = run_dir.join("report");
    let consistency: Vec<ConsistencyArtifact> = load_all(&artifacts.join("consistency"))?;
    let even_handed: Vec<EvenHandedArtifact> = load_all(&artifacts.join("even_handed"))?;
    let exchange: Vec<ExchangeArtifact> = load_all(&artifacts.join("exchange"))?;
    let political: Vec<PoliticalValuesArtifact> = load_all(&artifacts.join("political_values"))?;

    let mut written = Vec::new();
    let mut md = String::from("# Political consistency report\n");

    if !consistency.is_empty() {
        let (lb_md, lb_csv) = render_leaderboard(&consistency);
        let _ = writeln!(md, "\n## Consistency leaderboard\n\n{lb_md}");
        let path = report_dir.join("leaderboard.csv");
        write_string(&path, &lb_csv)?;
        written.push(path);

        let (pt_md, pt_csv) = render_per_template(&consistency);
        let _ = writeln!(md, "\n## Per-template breakdown\n{pt_md}");
        let path = report_dir.join("per_template.csv");
        write_string(&path, &pt_csv)?;
        written.push(path);
    }
    if !even_handed.is_empty() {
        let (eh_md, eh_csv) = render_even_handed(&even_handed);
        let _ = writeln!(md, "\n## Even-handedness (out of distribution)\n\n{eh_md}");
        let path = report_dir.join("even_handed.csv");
        write_string(&path, &eh_csv)?;
        written.push(path);
    }
    if !exchange.is_empty() {
        let (ex_md, ex_csv) = render_exchange_summary(&exchange);
        let _ = writeln!(md, "\n## Exchange rates (out of distribution)\n\n{ex_md}");
        let path = report_dir.join("exchange_summary.csv");
        write_string(&path, &ex_csv)?;
        written.push(path);
        let path = report_dir.join("exchange_rates.csv");
        write_string(&path, &render_exchange_rates_csv(&exchange))?;
        written.push(path);
        for row in &exchange {
            for outcome in &row.outcomes {
                let rates: Vec<(String, f64)> =
                    outcome.table.rates.iter().map(|(k, v)| (k.clone(), *v)).collect();
                let svg = exchange_rate_svg(
                    &format!("{} - {} (anchor: {})", row.model, outcome.table.category, outcome.table.anchor),
                    &rates,
                );
                let path = report_dir
                    .join("plots")
                    .join(format!("exchange_{}_{}.svg", sanitize(&row.model), sanitize(&outcome.table.category)));
                write_string(&path, &svg)?;
                written.push(path);
            }
        }
    }
    if !political.is_empty() {
        let (pv_md, pv_csv) = render_political_values(&political);
        let _ = writeln!(md, "\n## Political values projection (out of distribution)\n\n{pv_md}");
        let path = report_dir.join("political_values.csv");
        write_string(&path, &pv_csv)?;
        written.push(path);
    }

    let path = report_dir.join("report.md");
    write_string(&path, &md)?;
    written.push(path);
    written.sort();
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use polcon_core::metrics::aggregate;
    use polcon_core::verdict::{HelpfulnessLabel, SentimentLabel};

    fn report_with(sc: f64, hc: f64) -> ConsistencyReport {
        // Build a real report, then overwrite the headline values for
        // layout-focused tests.
        let sent = vec![("t".to_string(), SentimentLabel::NoBias)];
        let help = vec![("t".to_string(), HelpfulnessLabel::Helpful)];
        let mut report = aggregate(&sent, &help).unwrap();
        report.sentiment_consistency_pct = sc;
        report.helpfulness_consistency_pct = hc;
        report.average_pct = (sc + hc) / 2.0;
        report
    }

    #[test]
    fn leaderboard_sorts_by_average_and_rounds_half_up() {
        let rows = vec![
            ConsistencyArtifact {
                model: "warm".into(),
                judge: "j".into(),
                report: report_with(38.0, 76.3),
            },
            ConsistencyArtifact {
                model: "ours".into(),
                judge: "j".into(),
                report: report_with(61.5, 95.1),
            },
        ];
        let (md, csv) = render_leaderboard(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("ours,"), "{csv}");
        assert!(lines[1].ends_with("78.3"), "{csv}");
        assert!(lines[2].starts_with("warm,"));
        let ours_at = md.find("| ours |").unwrap();
        let warm_at = md.find("| warm |").unwrap();
        assert!(ours_at < warm_at);
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = vec![ConsistencyArtifact {
            model: "m".into(),
            judge: "j".into(),
            report: report_with(50.0, 70.0),
        }];
        assert_eq!(render_leaderboard(&rows), render_leaderboard(&rows));
        assert_eq!(render_per_template(&rows), render_per_template(&rows));
    }

    #[test]
    fn exchange_svg_has_reference_line_and_bars() {
        let rates = vec![
            ("white".to_string(), 1.0),
            ("black".to_string(), 0.12),
            ("asian".to_string(), 3.4),
        ];
        let svg = exchange_rate_svg("race", &rates);
        assert!(svg.contains("equal valuation (1.0)"));
        assert_eq!(svg.matches("<rect x=").count(), 3);
        assert!(svg.starts_with("<svg"));
        assert_eq!(exchange_rate_svg("race", &rates), svg);
    }
}

//! Text, CSV and SVG renderings of a study report.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::simulator::{ReportRow, StudyReport};

const CSV_HEADER: [&str; 13] = [
    "scenario",
    "config",
    "design",
    "pcs",
    "pas",
    "over_sel",
    "under_sel",
    "none_sel",
    "pts_over_tox",
    "total_dlt",
    "total_n",
    "replications",
    "is_mean",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

fn ordered_rows(report: &StudyReport) -> Vec<(&ReportRow, bool)> {
    let mut out = Vec::new();
    for m in &report.means {
        out.extend(report.rows.iter().filter(|r| r.config == m.config).map(|r| (r, false)));
        out.push((m, true));
    }
    out
}

pub fn render_table(report: &StudyReport) -> Result<RenderedTable> {
    if report.is_empty() {
        return Err(invalid("report has no rows"));
    }
    let mut text = String::new();
    for m in &report.means {
        writeln!(text, "{} ({})", m.config, m.design).unwrap();
        writeln!(
            text,
            "{:<12} {:>6} {:>6} {:>6} {:>10} {:>9} {:>7}",
            "Scenario", "PCS", "PAS", "Over", "PtsOverTox", "TotalDLT", "TotalN"
        )
        .unwrap();
        let group = report.rows.iter().filter(|r| r.config == m.config).chain(std::iter::once(m));
        for r in group {
            let o = &r.oc;
            writeln!(
                text,
                "{:<12} {:>6.1} {:>6.1} {:>6.1} {:>10.1} {:>9.1} {:>7.1}",
                r.scenario, o.pcs, o.pas, o.over_sel, o.mean_pts_over_tox, o.mean_dlt, o.mean_n
            )
            .unwrap();
        }
        text.push('\n');
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::State(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for (r, is_mean) in ordered_rows(report) {
        let o = &r.oc;
        w.write_record([
            r.scenario.clone(),
            r.config.clone(),
            r.design.clone(),
            o.pcs.to_string(),
            o.pas.to_string(),
            o.over_sel.to_string(),
            o.under_sel.to_string(),
            o.none_sel.to_string(),
            o.mean_pts_over_tox.to_string(),
            o.mean_dlt.to_string(),
            o.mean_n.to_string(),
            o.replications.to_string(),
            is_mean.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::State(format!("csv: {e}")))?;
    let csv = String::from_utf8(bytes).expect("csv output is utf-8");
    Ok(RenderedTable { text, csv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// PCS solid with PAS translucent behind it.
    Selection,
    /// Percent of overly toxic selections.
    Overdose,
    SampleSize,
    Dlt,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selection" => Ok(Metric::Selection),
            "overdose" => Ok(Metric::Overdose),
            "sample_size" | "sample-size" => Ok(Metric::SampleSize),
            "dlt" => Ok(Metric::Dlt),
            other => Err(invalid(format!(
                "unknown metric {other:?}; expected selection, overdose, sample_size or dlt"
            ))),
        }
    }
}

impl Metric {
    fn title(self) -> &'static str {
        match self {
            Metric::Selection => "Selection (%): PCS solid, PAS translucent",
            Metric::Overdose => "Overly toxic selection (%)",
            Metric::SampleSize => "Mean number of patients",
            Metric::Dlt => "Mean number of DLTs",
        }
    }

    fn values(self, r: &ReportRow) -> (f64, Option<f64>) {
        let o = &r.oc;
        match self {
            Metric::Selection => (o.pcs, Some(o.pas)),
            Metric::Overdose => (o.over_sel, None),
            Metric::SampleSize => (o.mean_n, None),
            Metric::Dlt => (o.mean_dlt, None),
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart: one cluster per scenario plus a final "Mean" cluster,
/// one bar per configuration. Returns an SVG document.
pub fn render_figure(report: &StudyReport, metric: Metric) -> Result<String> {
    if report.is_empty() {
        return Err(invalid("report has no rows"));
    }
    let scenarios = report.scenarios();
    let configs = report.configs();
    let clusters = scenarios.len() + 1;
    let bar_w = 12.0;
    let gap = 14.0;
    let cluster_w = bar_w * configs.len() as f64 + gap;
    let (left, top, plot_h) = (56.0, 40.0, 260.0);
    let width = left + cluster_w * clusters as f64 + 20.0;
    let legend_h = 18.0 * configs.len() as f64;
    let height = top + plot_h + 50.0 + legend_h;

    let cell = |s: &str, c: &str| -> Option<&ReportRow> {
        if s == "Mean" {
            report.mean(c)
        } else {
            report.row(s, c)
        }
    };
    let labels: Vec<&str> = scenarios.iter().map(String::as_str).chain(std::iter::once("Mean")).collect();
    let peak = labels
        .iter()
        .flat_map(|s| configs.iter().filter_map(move |c| cell(s, c)))
        .map(|r| {
            let (a, b) = metric.values(r);
            a.max(b.unwrap_or(0.0))
        })
        .fold(0.0_f64, f64::max);
    let y_max = match metric {
        Metric::Selection | Metric::Overdose => 100.0,
        _ => (peak * 1.1).max(1.0).ceil(),
    };
    let y_of = |v: f64| top + plot_h * (1.0 - v / y_max);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(svg, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(metric.title())).unwrap();
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y_of(v);
        writeln!(
            svg,
            r##"<line x1="{left}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"##,
            width - 20.0,
            left - 4.0,
            y + 4.0
        )
        .unwrap();
    }
    for (k, label) in labels.iter().enumerate() {
        let x0 = left + cluster_w * k as f64 + gap / 2.0;
        writeln!(svg, r#"<g class="cluster" data-label="{}">"#, escape(label)).unwrap();
        for (ci, config) in configs.iter().enumerate() {
            let Some(r) = cell(label, config) else { continue };
            let (value, back) = metric.values(r);
            let x = x0 + bar_w * ci as f64;
            let color = PALETTE[ci % PALETTE.len()];
            if let Some(b) = back {
                writeln!(
                    svg,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.3"/>"#,
                    y_of(b),
                    bar_w - 1.0,
                    top + plot_h - y_of(b)
                )
                .unwrap();
            }
            writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}"><title>{}: {value:.1}</title></rect>"#,
                y_of(value),
                bar_w - 1.0,
                top + plot_h - y_of(value),
                escape(config)
            )
            .unwrap();
        }
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text></g>"#,
            x0 + bar_w * configs.len() as f64 / 2.0,
            top + plot_h + 16.0,
            escape(label)
        )
        .unwrap();
    }
    for (ci, config) in configs.iter().enumerate() {
        let y = top + plot_h + 36.0 + 18.0 * ci as f64;
        writeln!(
            svg,
            r#"<rect x="{left}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 9.0,
            PALETTE[ci % PALETTE.len()],
            left + 16.0,
            escape(config)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

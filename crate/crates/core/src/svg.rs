//! Static SVG bar charts over evaluation reports.
//!
//! Three charts: mean dynamic normalized EPE across runs, per-class dynamic
//! normalized EPE, and the per-class point histogram on a log Y scale.
//! Rendering is pure string assembly with fixed-precision coordinates, so a
//! given input always produces identical bytes.

use crate::io::report::ReportDocument;
use thiserror::Error;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;
const PLOT_W: f64 = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
const PLOT_H: f64 = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
const PALETTE: [&str; 6] = ["#4878cf", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c"];

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("at least one report is required")]
    NoReports,
    #[error("reports use different taxonomies: {0:?} vs {1:?}")]
    TaxonomyMismatch(Vec<String>, Vec<String>),
}

struct BarSpec {
    series: usize,
    /// Bar height as a fraction of the plot height, in `[0, 1]`.
    height_frac: f64,
    value_text: String,
}

struct Group {
    label: String,
    bars: Vec<BarSpec>,
}

struct ChartSpec {
    title: String,
    subtitle: Option<String>,
    y_max_label: String,
    groups: Vec<Group>,
    /// One legend entry per series; the legend is drawn only for 2+ series.
    legend: Vec<String>,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn render(spec: &ChartSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(&spec.title)
    ));
    if let Some(sub) = &spec.subtitle {
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"42\" font-size=\"11\" fill=\"#555\" \
             text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            xml_escape(sub)
        ));
    }

    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + PLOT_H;
    out.push_str(&format!(
        "  <line x1=\"{x0:.2}\" y1=\"{:.2}\" x2=\"{x0:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        MARGIN_TOP
    ));
    out.push_str(&format!(
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + PLOT_W
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        x0 - 6.0,
        MARGIN_TOP + 4.0,
        xml_escape(&spec.y_max_label)
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">0</text>\n",
        x0 - 6.0,
        y0 + 4.0
    ));

    let n_groups = spec.groups.len().max(1) as f64;
    let group_w = PLOT_W / n_groups;
    for (g, group) in spec.groups.iter().enumerate() {
        let gx = MARGIN_LEFT + group_w * g as f64;
        let n_bars = group.bars.len().max(1) as f64;
        let bar_w = (group_w * 0.8) / n_bars;
        for (b, bar) in group.bars.iter().enumerate() {
            let h = (bar.height_frac.clamp(0.0, 1.0)) * PLOT_H;
            let x = gx + group_w * 0.1 + bar_w * b as f64;
            let y = y0 - h;
            let color = PALETTE[bar.series % PALETTE.len()];
            out.push_str(&format!(
                "  <rect class=\"bar\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" \
                 height=\"{h:.2}\" fill=\"{color}\"/>\n",
                bar_w * 0.9
            ));
            out.push_str(&format!(
                "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
                x + bar_w * 0.45,
                y - 3.0,
                xml_escape(&bar.value_text)
            ));
        }
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            gx + group_w / 2.0,
            y0 + 18.0,
            xml_escape(&group.label)
        ));
    }

    if spec.legend.len() > 1 {
        for (i, entry) in spec.legend.iter().enumerate() {
            let ly = MARGIN_TOP + 14.0 * i as f64;
            let color = PALETTE[i % PALETTE.len()];
            out.push_str(&format!(
                "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
                WIDTH - MARGIN_RIGHT - 150.0,
                ly
            ));
            out.push_str(&format!(
                "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{}</text>\n",
                WIDTH - MARGIN_RIGHT - 136.0,
                ly + 9.0,
                xml_escape(entry)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

fn check_taxonomies(reports: &[(String, &ReportDocument)]) -> Result<(), ChartError> {
    let first = match reports.first() {
        None => return Err(ChartError::NoReports),
        Some((_, r)) => &r.config.classes,
    };
    for (_, r) in &reports[1..] {
        if &r.config.classes != first {
            return Err(ChartError::TaxonomyMismatch(first.clone(), r.config.classes.clone()));
        }
    }
    Ok(())
}

fn value_or_na(v: Option<f64>) -> (f64, String) {
    match v {
        Some(x) => (x, format!("{x:.3}")),
        None => (0.0, "n/a".to_string()),
    }
}

/// One bar per labeled report: its mean dynamic normalized EPE. Linear Y
/// axis, so bar heights are in exact value ratio.
pub fn mean_dynamic_chart(reports: &[(String, &ReportDocument)]) -> Result<String, ChartError> {
    check_taxonomies(reports)?;
    let values: Vec<(f64, String)> =
        reports.iter().map(|(_, r)| value_or_na(r.mean.mean_dynamic_normalized_epe)).collect();
    let max = values.iter().map(|(v, _)| *v).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let groups = reports
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(i, ((label, _), (v, text)))| Group {
            label: label.clone(),
            bars: vec![BarSpec { series: i, height_frac: v / max, value_text: text.clone() }],
        })
        .collect();
    Ok(render(&ChartSpec {
        title: "Mean dynamic normalized EPE".to_string(),
        subtitle: Some("lower is better".to_string()),
        y_max_label: format!("{max:.3}"),
        groups,
        legend: Vec::new(),
    }))
}

/// Grouped bars: one group per foreground class, one bar per report. Linear
/// Y axis.
pub fn per_class_dynamic_chart(
    reports: &[(String, &ReportDocument)],
) -> Result<String, ChartError> {
    check_taxonomies(reports)?;
    let background = &reports[0].1.config.background_class;
    let class_names: Vec<&String> =
        reports[0].1.config.classes.iter().filter(|c| *c != background).collect();
    let mut cells: Vec<Vec<(f64, String)>> = Vec::new();
    for name in &class_names {
        let row = reports
            .iter()
            .map(|(_, r)| {
                let v = r
                    .classes
                    .iter()
                    .find(|c| &&c.name == name)
                    .and_then(|c| c.dynamic_normalized_epe);
                value_or_na(v)
            })
            .collect();
        cells.push(row);
    }
    let max =
        cells.iter().flatten().map(|(v, _)| *v).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let groups = class_names
        .iter()
        .zip(&cells)
        .map(|(name, row)| Group {
            label: (*name).clone(),
            bars: row
                .iter()
                .enumerate()
                .map(|(series, (v, text))| BarSpec {
                    series,
                    height_frac: v / max,
                    value_text: text.clone(),
                })
                .collect(),
        })
        .collect();
    Ok(render(&ChartSpec {
        title: "Dynamic normalized EPE by class".to_string(),
        subtitle: Some("lower is better".to_string()),
        y_max_label: format!("{max:.3}"),
        groups,
        legend: reports.iter().map(|(l, _)| l.clone()).collect(),
    }))
}

/// Evaluated-point counts per class on a log10 Y axis (counts of 0 and 1
/// draw as zero-height bars).
pub fn class_histogram_chart(reports: &[(String, &ReportDocument)]) -> Result<String, ChartError> {
    check_taxonomies(reports)?;
    let class_names = &reports[0].1.config.classes;
    let log_of = |count: u64| if count >= 1 { (count as f64).log10() } else { 0.0 };
    let max_log = reports
        .iter()
        .flat_map(|(_, r)| r.point_histogram.iter())
        .map(|&c| log_of(c))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let groups = class_names
        .iter()
        .enumerate()
        .map(|(ci, name)| Group {
            label: name.clone(),
            bars: reports
                .iter()
                .enumerate()
                .map(|(series, (_, r))| {
                    let count = r.point_histogram.get(ci).copied().unwrap_or(0);
                    BarSpec {
                        series,
                        height_frac: log_of(count) / max_log,
                        value_text: count.to_string(),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(render(&ChartSpec {
        title: "Evaluated points per class".to_string(),
        subtitle: Some("log scale".to_string()),
        y_max_label: format!("10^{max_log:.2}"),
        groups,
        legend: reports.iter().map(|(l, _)| l.clone()).collect(),
    }))
}

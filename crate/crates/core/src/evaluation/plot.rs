//! Critical-difference diagram rendering: a rank axis with one labeled stem
//! per model and one bar per Nemenyi group, emitted as self-contained SVG.

use std::fmt::Write;

use crate::evaluation::ranking::CdReport;

const WIDTH: f64 = 720.0;
const MARGIN: f64 = 90.0;
const AXIS_Y: f64 = 56.0;
const BAR_GAP: f64 = 9.0;
const LABEL_STEP: f64 = 22.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders a report as an SVG document. Rank 1 sits on the left; labels
/// alternate between the left and right margins in rank order; each group
/// of statistically indistinguishable models is one horizontal bar under
/// the axis.
pub fn render_cd_svg(report: &CdReport) -> String {
    let k = report.models.len();
    let lo = 1.0;
    let hi = k.max(2) as f64;
    let x = |rank: f64| MARGIN + (rank - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);

    let left_count = k.div_ceil(2);
    let bar_block = AXIS_Y + 14.0 + report.groups.len() as f64 * BAR_GAP;
    let label_rows = left_count.max(k - left_count) as f64;
    let height = bar_block + label_rows * LABEL_STEP + 30.0;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        svg,
        r#"<title>{} ranks, alpha {}</title>"#,
        escape(&report.metric),
        report.alpha
    );

    // CD ruler, top left.
    let cd_px = report.critical_difference / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let _ = write!(
        svg,
        r#"<line x1="{x0}" y1="18" x2="{x1}" y2="18" stroke="black" stroke-width="1.5"/><line x1="{x0}" y1="13" x2="{x0}" y2="23" stroke="black"/><line x1="{x1}" y1="13" x2="{x1}" y2="23" stroke="black"/><text x="{tx}" y="12" text-anchor="middle">CD = {cd:.3}</text>"#,
        x0 = x(lo),
        x1 = x(lo) + cd_px,
        tx = x(lo) + cd_px / 2.0,
        cd = report.critical_difference,
    );

    // Rank axis with integer ticks.
    let _ = write!(
        svg,
        r#"<line x1="{}" y1="{AXIS_Y}" x2="{}" y2="{AXIS_Y}" stroke="black" stroke-width="1.5"/>"#,
        x(lo),
        x(hi)
    );
    for tick in 1..=k.max(2) {
        let tx = x(tick as f64);
        let _ = write!(
            svg,
            r#"<line x1="{tx}" y1="{}" x2="{tx}" y2="{}" stroke="black"/><text x="{tx}" y="{}" text-anchor="middle">{tick}</text>"#,
            AXIS_Y - 5.0,
            AXIS_Y + 5.0,
            AXIS_Y - 10.0,
        );
    }

    // Group bars under the axis.
    for (gi, group) in report.groups.iter().enumerate() {
        let first = report.mean_ranks[*group.first().expect("non-empty group")];
        let last = report.mean_ranks[*group.last().expect("non-empty group")];
        let y = AXIS_Y + 10.0 + gi as f64 * BAR_GAP;
        let _ = write!(
            svg,
            r#"<line class="group-bar" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black" stroke-width="4" stroke-linecap="round"/>"#,
            x(first) - 3.0,
            x(last) + 3.0,
        );
    }

    // Model stems and labels: best half on the left, rest on the right.
    for (i, (model, &rank)) in report
        .models
        .iter()
        .zip(report.mean_ranks.iter())
        .enumerate()
    {
        let stem_x = x(rank);
        let (label_x, anchor, row) = if i < left_count {
            (MARGIN - 8.0, "end", i)
        } else {
            (WIDTH - MARGIN + 8.0, "start", k - 1 - i)
        };
        let label_y = bar_block + row as f64 * LABEL_STEP + 14.0;
        let _ = write!(
            svg,
            r#"<polyline points="{stem_x},{} {stem_x},{} {label_x},{}" fill="none" stroke="black"/><text x="{label_x}" y="{}" text-anchor="{anchor}">{} ({rank:.2})</text>"#,
            AXIS_Y,
            label_y - 4.0,
            label_y - 4.0,
            label_y + 10.0,
            escape(model),
        );
    }

    svg.push_str("</svg>");
    svg
}

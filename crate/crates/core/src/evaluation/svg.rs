//! Static SVG scatter of coverage against interval length.

use std::fmt::Write as _;

use crate::data::Horizon;
use crate::evaluation::report::HorizonReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn nice_max(v: f64) -> f64 {
    if v.is_nan() || v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

/// One panel per horizon: a point per cutoff, a polyline per method and a
/// dashed line at the nominal coverage.
pub fn frontier_svg(report: &HorizonReport, horizon: Horizon) -> String {
    let x_max = nice_max(
        report
            .summaries
            .iter()
            .filter(|s| s.horizon == horizon)
            .map(|s| s.mean_length)
            .fold(0.0, f64::max),
    );
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + pw * x / x_max;
    let sy = |y: f64| HEIGHT - MARGIN - ph * y;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">Coverage vs interval length ({horizon})</text>"#,
        WIDTH / 2.0
    );
    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<path d="M{:.1} {:.1} V{:.1} H{:.1}" stroke="black" fill="none"/>"#,
        MARGIN,
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 6.0,
            sy(v) + 4.0
        );
        let xv = x_max * v;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{xv:.3}</text>"#,
            sx(xv),
            HEIGHT - MARGIN + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">mean interval length</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">coverage</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let nominal = 1.0 - report.alpha;
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#555" stroke-dasharray="6 4"/>"##,
        MARGIN,
        sy(nominal),
        WIDTH - MARGIN,
        sy(nominal)
    );

    for (k, &method) in report.methods.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let cells = report.cells(horizon, method);
        let points: Vec<String> = cells
            .iter()
            .map(|c| format!("{:.2},{:.2}", sx(c.mean_length), sy(c.coverage)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" fill="none" stroke-opacity="0.5"/>"#,
            points.join(" ")
        );
        for c in &cells {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"><title>{method} r={:.2}</title></circle>"#,
                sx(c.mean_length),
                sy(c.coverage),
                c.cutoff
            );
        }
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{ly:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{method}</text>"#,
            WIDTH - MARGIN - 90.0,
            WIDTH - MARGIN - 82.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_max_rounds_up() {
        assert_eq!(nice_max(0.37), 0.5);
        assert_eq!(nice_max(1.2), 2.0);
        assert_eq!(nice_max(0.0), 1.0);
    }
}

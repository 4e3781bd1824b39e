//! Minimal grouped bar charts as standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_BOTTOM: f64 = 96.0;
const MARGIN_TOP: f64 = 40.0;
const COLORS: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A grouped bar chart. Each series holds one value per category.
pub fn bar_chart(title: &str, categories: &[String], series: &[(&str, Vec<f64>)], y_max: Option<f64>) -> String {
    let max = y_max
        .unwrap_or_else(|| series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0, f64::max))
        .max(1.0);
    let plot_w = WIDTH - MARGIN_LEFT - 16.0;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;
    let base = MARGIN_TOP + plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for tick in 0..=4 {
        let v = max * tick as f64 / 4.0;
        let y = base - plot_h * tick as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            WIDTH - 16.0,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    for (ci, cat) in categories.iter().enumerate() {
        let gx = MARGIN_LEFT + group_w * ci as f64 + group_w * 0.1;
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values.get(ci).copied().unwrap_or(0.0).max(0.0);
            let h = plot_h * (v / max).min(1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{}: {v:.2}</title></rect>"#,
                gx + bar_w * si as f64,
                base - h,
                bar_w,
                COLORS[si % COLORS.len()],
                escape(cat)
            );
        }
        let lx = gx + group_w * 0.4;
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{:.1}" text-anchor="end" transform="rotate(-35 {lx:.1} {:.1})">{}</text>"#,
            base + 14.0,
            base + 14.0,
            escape(cat)
        );
    }
    if series.len() > 1 {
        for (si, (name, _)) in series.iter().enumerate() {
            let x = MARGIN_LEFT + 130.0 * si as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                HEIGHT - 16.0,
                COLORS[si % COLORS.len()],
                x + 14.0,
                HEIGHT - 7.0,
                escape(name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

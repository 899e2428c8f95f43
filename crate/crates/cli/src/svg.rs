//! Standalone SVG rendering of the delay/detection chart.

use std::fmt::Write;

use screenmix_core::mixer::ChartData;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

pub fn render(chart: &ChartData) -> String {
    let (mut x_lo, mut x_hi) = chart.x_range();
    let pad = ((x_hi - x_lo) * 0.15).max(1.0);
    x_lo = (x_lo - pad).max(0.0);
    x_hi += pad;
    let ys = chart
        .practices
        .iter()
        .map(|p| p.y_detection)
        .chain(std::iter::once(chart.plan.y_detection))
        .chain(chart.min_detection);
    let y_min = ys.fold(1.0f64, f64::min);
    let y_lo = ((y_min - 0.1) * 10.0).floor().max(0.0) / 10.0;
    let y_hi = 1.0;

    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    // Axes.
    let _ = writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        l = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">mean screening time per patron (s)</text>"#,
        W / 2.0,
        H - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">detection</text>"#,
        H / 2.0,
        H / 2.0
    );
    for i in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let y = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let _ =
            writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x:.1}</text>"#, sx(x), H - MARGIN + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, MARGIN - 6.0, sy(y) + 4.0);
    }

    if chart.frontier.len() > 1 {
        let pts: Vec<String> = chart.frontier.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ =
            writeln!(s, r##"<polyline points="{}" stroke="#555" stroke-dasharray="4 3" fill="none"/>"##, pts.join(" "));
    }
    if let Some(t) = chart.max_delay_s {
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="red" stroke-width="2"/>"#,
            sy(y_hi),
            sy(y_lo),
            x = sx(t)
        );
    }
    if let Some(d) = chart.min_detection {
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="orange" stroke-width="2"/>"#,
            sx(x_lo),
            sx(x_hi),
            y = sy(d)
        );
    }
    for p in &chart.practices {
        let _ = writeln!(
            s,
            r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="6" fill="#1f4e9c"/><text x="{tx:.1}" y="{ty:.1}">{}</text>"##,
            escape(&p.label),
            cx = sx(p.x_seconds),
            cy = sy(p.y_detection),
            tx = sx(p.x_seconds) + 9.0,
            ty = sy(p.y_detection) - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<circle cx="{:.1}" cy="{:.1}" r="7" fill="green"/>"#,
        sx(chart.plan.x_seconds),
        sy(chart.plan.y_detection)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Minimal SVG line chart for loss curves.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Loss against iteration on a log10 y axis. Non-positive losses are drawn at
/// the lowest positive value.
pub fn loss_curve_svg(title: &str, points: &[(usize, f64)]) -> String {
    let floor = points
        .iter()
        .map(|p| p.1)
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let ys: Vec<f64> = points.iter().map(|p| p.1.max(floor).log10()).collect();
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let x_max = points.last().map_or(1, |p| p.0.max(1)) as f64;

    let px = |x: f64| MARGIN + (W - 2.0 * MARGIN) * x / x_max;
    let py = |y: f64| H - MARGIN - (H - 2.0 * MARGIN) * (y - lo) / (hi - lo);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title)).unwrap();
    writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    )
    .unwrap();
    for (y, label) in [(lo, lo), (hi, hi)] {
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">1e{:.1}</text>"#,
            MARGIN - 4.0,
            py(y) + 4.0,
            label
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">iteration (0..{})</text>"#,
        W / 2.0,
        H - MARGIN / 2.0,
        x_max as usize
    )
    .unwrap();
    let path: Vec<String> = points
        .iter()
        .zip(&ys)
        .map(|(p, &y)| format!("{:.2},{:.2}", px(p.0 as f64), py(y)))
        .collect();
    writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.join(" ")).unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

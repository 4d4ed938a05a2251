//! Static SVG line plot of log ball-complement mass against `n`.

use std::fmt::Write as _;

use voltrace::consistency::ConsistencyReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Round tick step covering `span` in about five intervals.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|k| k * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// Per-cell log masses as dots, the per-`n` median as a polyline. The
/// horizontal axis is logarithmic in `n`.
pub fn decay_plot(report: &ConsistencyReport) -> String {
    let points: Vec<(f64, f64)> = report
        .cells
        .iter()
        .filter_map(|c| c.estimate.map(|e| (c.plan.n as f64, e.log_mass)))
        .filter(|(_, y)| y.is_finite())
        .collect();
    let medians: Vec<(f64, f64)> = report
        .sizes
        .iter()
        .filter(|s| s.median_log_mass.is_finite())
        .map(|s| (s.n as f64, s.median_log_mass))
        .collect();

    let xs: Vec<f64> = report.sizes.iter().map(|s| (s.n as f64).log10()).collect();
    let (mut x0, mut x1) = (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    if !(x1 > x0) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = 0.05 * (x1 - x0);
    let (x0, x1) = (x0 - pad, x1 + pad);
    let ys = points.iter().chain(&medians).map(|p| p.1);
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 0.0);
    }
    y1 = y1.max(0.0);
    if y1 - y0 < 1e-9 {
        y0 -= 1.0;
    }
    let step = tick_step(y1 - y0);
    let (y0, y1) = ((y0 / step).floor() * step, (y1 / step).ceil() * step);

    let px = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- config_hash: {} -->", report.provenance.config_hash);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">log posterior mass outside the L2 ball (eps = {:.4})</text>"#,
        W / 2.0,
        report.config.eps
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    let mut y = y0;
    while y <= y1 + 1e-9 * step {
        let yy = py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT,
            W - RIGHT,
            LEFT - 6.0,
            yy + 4.0,
            fmt_tick(y, step)
        );
        y += step;
    }
    for size in &report.sizes {
        let xx = px(size.n as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{xx:.1}" y1="{:.1}" x2="{xx:.1}" y2="{:.1}" stroke="black"/><text x="{xx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - BOTTOM,
            H - BOTTOM + 5.0,
            H - BOTTOM + 20.0,
            size.n
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">n (log scale)</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">log mass</text>"#,
        (TOP + H - BOTTOM) / 2.0
    );
    for (x, y) in &points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="#999" fill-opacity="0.6"/>"##,
            px(*x),
            py(*y)
        );
    }
    if !medians.is_empty() {
        let pts: Vec<String> = medians
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            pts.join(" ")
        );
        for (x, y) in &medians {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="4" fill="#1f77b4"/>"##,
                px(*x),
                py(*y)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(y: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if y.abs() < 1e-12 * step { 0.0 } else { y };
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(10.0), 2.0);
        assert_eq!(tick_step(230.0), 50.0);
        assert_eq!(tick_step(0.3), 0.1);
        assert_eq!(fmt_tick(-0.2, 0.1), "-0.2");
        assert_eq!(fmt_tick(-40.0, 20.0), "-40");
    }
}

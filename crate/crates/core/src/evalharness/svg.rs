//! Minimal static SVG charts with error bars.

use std::fmt::Write as _;

use super::{ComparisonTable, CurvePoint};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Value range padded to include zero and a little headroom.
fn y_range(lows: impl Iterator<Item = f64>, highs: impl Iterator<Item = f64>) -> (f64, f64) {
    let lo = lows.fold(0.0f64, f64::min);
    let hi = highs.fold(0.0f64, f64::max);
    let pad = ((hi - lo) * 0.08).max(1e-9);
    (if lo < 0.0 { lo - pad } else { 0.0 }, hi + pad)
}

struct Frame {
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        let plot_h = HEIGHT - TOP - BOTTOM;
        TOP + plot_h * (1.0 - (v - self.y_lo) / (self.y_hi - self.y_lo))
    }

    fn open(&self, svg: &mut String, title: &str, y_label: &str) {
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
        let x1 = WIDTH - RIGHT;
        for i in 0..=4 {
            let v = self.y_lo + (self.y_hi - self.y_lo) * i as f64 / 4.0;
            let y = self.y(v);
            let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/>"##);
            let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(v));
        }
        let zero = self.y(0.0);
        let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{zero:.1}" x2="{x1}" y2="{zero:.1}" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, HEIGHT - BOTTOM);
    }

    fn error_bar(&self, svg: &mut String, x: f64, mean: f64, se: f64) {
        let (top, bottom) = (self.y(mean + se), self.y(mean - se));
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{top:.1}" x2="{x:.1}" y2="{bottom:.1}" stroke="black"/>"#);
        for y in [top, bottom] {
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black"/>"#,
                x - 4.0,
                x + 4.0
            );
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(svg: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/>"#,
            y,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 18.0, y + 10.0, escape(name));
    }
}

/// Grouped bars (one group per condition, one bar per policy) of either
/// mean reward or mean distance, with standard-error whiskers.
pub fn comparison_bars(table: &ComparisonTable, distance: bool, title: &str) -> String {
    let conditions = table.conditions();
    let mut policies: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    let value = |r: &super::ComparisonRow| if distance { (r.mean_distance, r.se_distance) } else { (r.mean_reward, r.se_reward) };
    let (y_lo, y_hi) = y_range(
        table.rows.iter().map(|r| value(r).0 - value(r).1),
        table.rows.iter().map(|r| value(r).0 + value(r).1),
    );
    let frame = Frame { y_lo, y_hi };
    let mut svg = String::new();
    frame.open(&mut svg, title, if distance { "mean distance [m]" } else { "mean reward" });
    let group_w = (WIDTH - LEFT - RIGHT) / conditions.len().max(1) as f64;
    let bar_w = group_w * 0.8 / policies.len().max(1) as f64;
    for (ci, cond) in conditions.iter().enumerate() {
        let gx = LEFT + group_w * ci as f64 + group_w * 0.1;
        for (pi, policy) in policies.iter().enumerate() {
            let Some(row) = table.rows.iter().find(|r| r.condition == *cond && r.policy == *policy) else {
                continue;
            };
            let (mean, se) = value(row);
            let x = gx + bar_w * pi as f64;
            let (y0, y1) = (frame.y(0.0), frame.y(mean));
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                y0.min(y1),
                bar_w * 0.9,
                (y0 - y1).abs(),
                PALETTE[pi % PALETTE.len()]
            );
            frame.error_bar(&mut svg, x + bar_w * 0.45, mean, se);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            HEIGHT - BOTTOM + 18.0,
            escape(cond)
        );
    }
    legend(&mut svg, &policies);
    svg.push_str("</svg>\n");
    svg
}

/// One line per policy over the failure coefficient, with whiskers.
pub fn sweep_lines(series: &[(String, Vec<CurvePoint>)], distance: bool, title: &str) -> String {
    let points = series.iter().flat_map(|(_, pts)| pts.iter());
    let value = |p: &CurvePoint| if distance { (p.mean_distance, p.se_distance) } else { (p.mean_reward, p.se_reward) };
    let (y_lo, y_hi) = y_range(
        points.clone().map(|p| value(p).0 - value(p).1),
        points.clone().map(|p| value(p).0 + value(p).1),
    );
    let k_lo = points.clone().map(|p| p.k).fold(f64::INFINITY, f64::min);
    let k_hi = points.map(|p| p.k).fold(f64::NEG_INFINITY, f64::max);
    let span = if k_hi > k_lo { k_hi - k_lo } else { 1.0 };
    let x = |k: f64| LEFT + (WIDTH - LEFT - RIGHT) * (k - k_lo) / span;
    let frame = Frame { y_lo, y_hi };
    let mut svg = String::new();
    frame.open(&mut svg, title, if distance { "mean distance [m]" } else { "mean reward" });
    for i in 0..=5 {
        let k = k_lo + span * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x(k),
            HEIGHT - BOTTOM + 18.0,
            fmt_tick(k)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">failure coefficient k</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 10.0
    );
    for (si, (_, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.1},{:.1}", x(p.k), frame.y(value(p).0)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for p in pts {
            let (mean, se) = value(p);
            frame.error_bar(&mut svg, x(p.k), mean, se);
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                x(p.k),
                frame.y(mean)
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut svg, &names);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::ComparisonRow;

    #[test]
    fn bar_chart_has_one_bar_per_row() {
        let row = |policy: &str, reward| ComparisonRow {
            condition: "broken".into(),
            policy: policy.into(),
            mean_reward: reward,
            se_reward: 1.0,
            reward_rank: 1,
            mean_distance: 0.5,
            se_distance: 0.1,
            distance_rank: 1,
        };
        let table = ComparisonTable {
            rows: vec![row("a<b", 10.0), row("c", -3.0)],
        };
        let svg = comparison_bars(&table, false, "reward");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        // two bars plus two legend swatches plus the background
        assert_eq!(svg.matches("<rect").count(), 5);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn sweep_chart_draws_every_point() {
        let pts = (0..11)
            .map(|i| CurvePoint {
                k: i as f64 / 10.0,
                mean_reward: i as f64,
                se_reward: 0.5,
                mean_distance: 0.1,
                se_distance: 0.0,
            })
            .collect();
        let svg = sweep_lines(&[("p".into(), pts)], false, "sweep");
        assert_eq!(svg.matches("<circle").count(), 11);
    }
}

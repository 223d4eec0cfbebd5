//! Static SVG line chart of power against the swept grid axis.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::table::ResultRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

type Axis = (&'static str, fn(&ResultRow) -> Option<f64>);

const AXES: [Axis; 6] = [
    ("epsilon", |r| Some(r.epsilon)),
    ("delta", |r| Some(r.delta)),
    ("n", |r| Some(r.n as f64)),
    ("d", |r| Some(r.d as f64)),
    ("amplitude", |r| r.amplitude),
    ("nu", |r| r.nu),
];

fn distinct(rows: &[ResultRow], f: fn(&ResultRow) -> Option<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = rows.iter().filter_map(f).filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Power against the first grid axis that takes several finite values, one
/// line per test (and per value of any other varying axis). Points at
/// `ε = ∞` and rows without a power estimate are left out. `ε` uses a log
/// scale when it spans more than a decade.
pub fn render_svg(rows: &[ResultRow], title: &str) -> String {
    let rows: Vec<ResultRow> = rows.iter().filter(|r| r.power().is_some()).cloned().collect();
    let varying: Vec<usize> = (0..AXES.len()).filter(|&i| distinct(&rows, AXES[i].1).len() > 1).collect();
    let x_axis = varying.first().copied().unwrap_or(0);
    let (x_name, x_of) = AXES[x_axis];
    let xs = distinct(&rows, x_of);
    let log = x_axis == 0 && xs.first().is_some_and(|&a| a > 0.0) && xs.last().zip(xs.first()).is_some_and(|(b, a)| b / a > 10.0);
    let tx = |v: f64| if log { v.log10() } else { v };
    let (x_lo, x_hi) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if tx(b) > tx(a) => (tx(a), tx(b)),
        (Some(&a), _) => (tx(a) - 1.0, tx(a) + 1.0),
        _ => (0.0, 1.0),
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + (tx(v) - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |p: f64| TOP + (1.0 - p) * plot_h;

    let mut series: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        let Some(x) = x_of(r).filter(|x| x.is_finite()) else { continue };
        let mut label = format!("{} ({})", r.test, r.statistic);
        for &i in varying.iter().skip(1) {
            if let Some(v) = (AXES[i].1)(r) {
                let _ = write!(label, " {}={}", AXES[i].0, fmt_tick(v));
            }
        }
        let idx = order.iter().position(|l| *l == label).unwrap_or_else(|| {
            order.push(label.clone());
            order.len() - 1
        });
        series.entry((idx, label)).or_default().push((x, r.power().unwrap_or(0.0)));
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let p = k as f64 / 5.0;
        let y = py(p);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(p));
    }
    for &x in &xs {
        let x_px = px(x);
        let _ = writeln!(s, r#"<line x1="{x_px}" y1="{}" x2="{x_px}" y2="{}" stroke="black"/>"#, TOP + plot_h, TOP + plot_h + 5.0);
        let _ = writeln!(s, r#"<text x="{x_px}" y="{}" text-anchor="middle">{}</text>"#, TOP + plot_h + 18.0, fmt_tick(x));
    }
    let x_label = if log { format!("{x_name} (log scale)") } else { x_name.to_string() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, LEFT + plot_w / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">power</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for ((idx, label), mut pts) in series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[idx % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, p)| format!("{:.2},{:.2}", px(x), py(p))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, p) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(p));
        }
        let ly = TOP + 12.0 + 18.0 * idx as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&label));
    }
    s.push_str("</svg>\n");
    s
}

//! Hand-written SVG: learning curves with 95% bands and grouped bar charts
//! with error bars.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::records::{summarize, MetricRecord};
use super::stats::aggregate;
use super::ExpError;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One line with its band, already aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, mean, half-width)`.
    pub points: Vec<(f64, f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = write!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = write!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let py = y0 + f * (y1 - y0);
        let _ = write!(out, r#"<line x1="{}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/>"#, x0 - 4.0);
        let _ = write!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            fmt_tick(y.0 + f * (y.1 - y.0))
        );
        if x_ticks {
            let px = x0 + f * (x1 - x0);
            let _ = write!(out, r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{}" stroke="black"/>"#, y0 + 4.0);
            let _ = write!(
                out,
                r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 18.0,
                fmt_tick(x.0 + f * (x.1 - x.0))
            );
        }
    }
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 10.0, escape(x_label));
    let _ = write!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}", v)
    } else if v.abs() >= 10.0 {
        format!("{:.1}", v)
    } else {
        format!("{:.3}", v)
    }
}

fn legend(out: &mut String, labels: &[String]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = write!(out, r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/>"#, y - 10.0, PALETTE[i % PALETTE.len()]);
        let _ = write!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(label));
    }
}

/// Mean lines with shaded 95% bands.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, h) in pts {
        xl = xl.min(x);
        xh = xh.max(x);
        yl = yl.min(m - h);
        yh = yh.max(m + h);
    }
    if !xl.is_finite() {
        (xl, xh, yl, yh) = (0.0, 1.0, 0.0, 1.0);
    }
    let (xs, ys) = ((xl, if xh > xl { xh } else { xl + 1.0 }), span(yl, yh));
    let px = |x: f64| LEFT + (x - xs.0) / (xs.1 - xs.0) * (W - RIGHT - LEFT);
    let py = |y: f64| H - BOTTOM - (y - ys.0) / (ys.1 - ys.0) * (H - BOTTOM - TOP);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, xs, ys, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.iter().any(|p| p.2 > 0.0) {
            let mut band = String::new();
            for &(x, m, h) in &s.points {
                let _ = write!(band, "{:.2},{:.2} ", px(x), py(m + h));
            }
            for &(x, m, h) in s.points.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", px(x), py(m - h));
            }
            let _ = write!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        }
        let line: Vec<String> = s.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let _ = write!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
    }
    legend(&mut out, &series.iter().map(|s| s.label.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per entry, one bar per label inside it, with
/// 95% error bars.
pub fn bar_chart(title: &str, y_label: &str, groups: &[(String, Vec<(String, f64, f64)>)]) -> String {
    let mut labels: Vec<String> = Vec::new();
    for (_, bars) in groups {
        for (l, _, _) in bars {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
    }
    let (mut yl, mut yh) = (0.0f64, 0.0f64);
    for (_, bars) in groups {
        for &(_, m, h) in bars {
            yl = yl.min(m - h);
            yh = yh.max(m + h);
        }
    }
    let ys = span(yl, yh);
    let py = |y: f64| H - BOTTOM - (y - ys.0) / (ys.1 - ys.0) * (H - BOTTOM - TOP);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, (0.0, 1.0), ys, "", y_label, false);
    let group_w = (W - RIGHT - LEFT) / groups.len().max(1) as f64;
    let bar_w = 0.8 * group_w / labels.len().max(1) as f64;
    for (gi, (name, bars)) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * group_w + 0.1 * group_w;
        for (label, m, h) in bars {
            let li = labels.iter().position(|l| l == label).unwrap_or(0);
            let x = gx + li as f64 * bar_w;
            let (top, base) = (py(m.max(0.0)), py(m.min(0.0)));
            let _ = write!(
                out,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                bar_w * 0.9,
                (base - top).max(0.5),
                PALETTE[li % PALETTE.len()]
            );
            if *h > 0.0 {
                let cx = x + bar_w * 0.45;
                let _ = write!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    py(m + h),
                    py(m - h)
                );
            }
        }
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + (gi as f64 + 0.5) * group_w,
            H - BOTTOM + 18.0,
            escape(name)
        );
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Curves for `metric` per `(env, algo)`, aligned across seeds by point
/// index and truncated to the shortest seed.
pub fn curve_series(records: &[MetricRecord], metric: &str) -> Result<Vec<Series>, ExpError> {
    let mut by_run: BTreeMap<(String, String), BTreeMap<u64, Vec<(usize, f64)>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric_name == metric) {
        by_run.entry((r.env.clone(), r.algo.clone())).or_default().entry(r.seed).or_default().push((r.step, r.value));
    }
    let multi_env = by_run.keys().map(|k| &k.0).collect::<std::collections::BTreeSet<_>>().len() > 1;
    let mut series = Vec::new();
    for ((env, algo), seeds) in by_run {
        let len = seeds.values().map(Vec::len).min().unwrap_or(0);
        let mut points = Vec::with_capacity(len);
        for k in 0..len {
            let x = seeds.values().map(|c| c[k].0 as f64).sum::<f64>() / seeds.len() as f64;
            let agg = aggregate(&seeds.values().map(|c| c[k].1).collect::<Vec<_>>())?;
            points.push((x, agg.mean, agg.ci95.unwrap_or(0.0)));
        }
        let label = if multi_env { format!("{algo} ({env})") } else { algo };
        series.push(Series { label, points });
    }
    Ok(series)
}

/// A figure for any metrics file: learning curves for the first metric
/// recorded at several steps per seed, otherwise a bar chart of final
/// values grouped by metric.
pub fn plot_records(records: &[MetricRecord]) -> Result<String, ExpError> {
    if records.is_empty() {
        return Err(ExpError::Config("no metric records to plot".into()));
    }
    let mut steps: BTreeMap<(&str, &str, &str, u64), usize> = BTreeMap::new();
    for r in records {
        *steps.entry((&r.metric_name, &r.env, &r.algo, r.seed)).or_default() += 1;
    }
    let study = &records[0].study;
    if let Some(((metric, ..), _)) = steps.iter().find(|(_, &n)| n > 1) {
        let metric = metric.to_string();
        return Ok(line_chart(&format!("study {study}: {metric}"), "environment steps", &metric, &curve_series(records, &metric)?));
    }
    let rows = summarize(records, 0)?;
    let mut groups: Vec<(String, Vec<(String, f64, f64)>)> = Vec::new();
    for r in &rows {
        let name = match r.strength {
            Some(s) => format!("{} @{s}", r.metric),
            None => r.metric.clone(),
        };
        let label = format!("{}:{}", r.env, r.algo);
        match groups.iter_mut().find(|g| g.0 == name) {
            Some(g) => g.1.push((label, r.mean, r.ci95.unwrap_or(0.0))),
            None => groups.push((name, vec![(label, r.mean, r.ci95.unwrap_or(0.0))])),
        }
    }
    Ok(bar_chart(&format!("study {study}"), "value", &groups))
}

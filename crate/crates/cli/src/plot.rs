//! Minimal SVG charts. Output depends only on the data, so reruns produce
//! identical files.

use std::fmt::Write as _;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(x: f64) -> String {
    format!("{:.2}", x)
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {style}/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            p.join(" ")
        );
        for (x, y) in pts {
            let _ = writeln!(
                self.body,
                r#"<circle cx="{}" cy="{}" r="2" fill="{color}"/>"#,
                num(*x),
                num(*y)
            );
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
            num(x),
            num(y),
            num(w),
            num(h)
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: u32) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{}</text>"#,
            num(x),
            num(y),
            esc(s)
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Maps data coordinates into a plot rectangle.
#[derive(Clone, Copy)]
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x.1 - self.x.0).max(1e-12);
        self.left + (x - self.x.0) / span * self.width
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y.1 - self.y.0).max(1e-12);
        self.top + self.height - (y - self.y.0) / span * self.height
    }

    fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str, xticks: &[(f64, String)], yticks: &[(f64, String)]) {
        let axis = r##"stroke="#333" stroke-width="1""##;
        let (b, r) = (self.top + self.height, self.left + self.width);
        svg.line(self.left, b, r, b, axis);
        svg.line(self.left, self.top, self.left, b, axis);
        for (v, label) in xticks {
            let x = self.px(*v);
            svg.line(x, b, x, b + 4.0, axis);
            svg.text(x, b + 16.0, label, "middle", 10);
        }
        for (v, label) in yticks {
            let y = self.py(*v);
            svg.line(self.left - 4.0, y, self.left, y, axis);
            svg.text(self.left - 6.0, y + 3.0, label, "end", 10);
        }
        svg.text(self.left + self.width / 2.0, b + 32.0, xlabel, "middle", 12);
        let _ = writeln!(
            svg.body,
            r#"<text x="12" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 12 {})">{}</text>"#,
            num(self.top + self.height / 2.0),
            num(self.top + self.height / 2.0),
            esc(ylabel)
        );
    }
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<(f64, String)> {
    (0..=n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            (v, format!("{}", (v * 100.0).round() / 100.0))
        })
        .collect()
}

fn legend(svg: &mut Svg, x: f64, y: f64, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let yy = y + 14.0 * i as f64;
        svg.rect(x, yy - 8.0, 10.0, 10.0, PALETTE[i % PALETTE.len()]);
        svg.text(x + 14.0, yy, n, "start", 10);
    }
}

/// Users per number of active quarters, log-scaled counts.
pub fn lifespan_histogram(buckets: &[(u32, u64)]) -> String {
    let mut svg = Svg::new(640.0, 400.0);
    svg.text(320.0, 20.0, "Lifespan of users (active quarters)", "middle", 14);
    let max_q = buckets.iter().map(|b| b.0).max().unwrap_or(1).max(1);
    let max_c = buckets.iter().map(|b| b.1).max().unwrap_or(1).max(1) as f64;
    let top = max_c.log10().ceil().max(1.0);
    let f = Frame {
        left: 70.0,
        top: 40.0,
        width: 540.0,
        height: 300.0,
        x: (0.5, max_q as f64 + 0.5),
        y: (0.0, top),
    };
    let yt: Vec<(f64, String)> = (0..=top as i32).map(|e| (e as f64, format!("1e{e}"))).collect();
    let step = (max_q as usize).div_ceil(12).max(1);
    let xt: Vec<(f64, String)> = (1..=max_q).step_by(step).map(|q| (q as f64, q.to_string())).collect();
    let bar = f.width / max_q as f64 * 0.8;
    for &(q, c) in buckets {
        let h = (c as f64).max(1.0).log10();
        let y = f.py(h);
        svg.rect(f.px(q as f64) - bar / 2.0, y, bar, f.py(0.0) - y, PALETTE[0]);
    }
    f.axes(&mut svg, "active quarters", "users (log10)", &xt, &yt);
    svg.finish()
}

/// One panel per topic with the probability of its leading terms over time.
/// `tracks[k][t][v]` is topic `k`'s weight on term `v` in slice `t`.
pub fn topic_evolution(tracks: &[Vec<Vec<f64>>], vocab: &[String], top: usize) -> String {
    let k = tracks.len().max(1);
    let cols = 2usize;
    let rows = k.div_ceil(cols);
    let (pw, ph) = (470.0, 220.0);
    let mut svg = Svg::new(pw * cols as f64, ph * rows as f64 + 30.0);
    svg.text(pw * cols as f64 / 2.0, 20.0, "Evolution of roles", "middle", 14);
    for (i, track) in tracks.iter().enumerate() {
        let (cx, cy) = ((i % cols) as f64 * pw, (i / cols) as f64 * ph + 30.0);
        let t = track.len();
        let mut mean: Vec<(usize, f64)> = (0..vocab.len())
            .map(|v| (v, track.iter().map(|row| row[v]).sum::<f64>() / t.max(1) as f64))
            .collect();
        mean.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let chosen: Vec<usize> = mean.iter().take(top).map(|m| m.0).collect();
        let f = Frame {
            left: cx + 55.0,
            top: cy + 25.0,
            width: pw - 220.0,
            height: ph - 75.0,
            x: (0.0, (t.max(2) - 1) as f64),
            y: (0.0, 1.0),
        };
        svg.text(cx + pw / 2.0 - 50.0, cy + 16.0, &format!("role {i}"), "middle", 12);
        for (j, &v) in chosen.iter().enumerate() {
            let pts: Vec<(f64, f64)> = track
                .iter()
                .enumerate()
                .map(|(s, row)| (f.px(s as f64), f.py(row[v])))
                .collect();
            svg.polyline(&pts, PALETTE[j % PALETTE.len()]);
        }
        let step = t.div_ceil(6).max(1);
        let xt: Vec<(f64, String)> = (0..t).step_by(step).map(|s| (s as f64, s.to_string())).collect();
        f.axes(&mut svg, "quarter", "probability", &xt, &ticks(0.0, 1.0, 4));
        let names: Vec<String> = chosen.iter().map(|&v| vocab[v].clone()).collect();
        legend(&mut svg, f.left + f.width + 10.0, f.top + 10.0, &names);
    }
    svg.finish()
}

/// Metric series over sliding windows; `None` values break nothing and are
/// simply skipped.
pub fn window_series(windows: &[usize], series: &[(String, Vec<Option<f64>>)]) -> String {
    let mut svg = Svg::new(640.0, 400.0);
    svg.text(320.0, 20.0, "Performance per sliding window", "middle", 14);
    let lo = windows.first().copied().unwrap_or(0) as f64;
    let hi = windows
        .last()
        .copied()
        .unwrap_or(1)
        .max(windows.first().copied().unwrap_or(0) + 1) as f64;
    let f = Frame {
        left: 60.0,
        top: 40.0,
        width: 440.0,
        height: 300.0,
        x: (lo, hi),
        y: (0.0, 1.0),
    };
    for (i, (_, values)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = windows
            .iter()
            .zip(values)
            .filter_map(|(&w, v)| v.map(|v| (f.px(w as f64), f.py(v))))
            .collect();
        svg.polyline(&pts, PALETTE[i % PALETTE.len()]);
    }
    let xt: Vec<(f64, String)> = windows.iter().map(|&w| (w as f64, w.to_string())).collect();
    f.axes(&mut svg, "window", "value", &xt, &ticks(0.0, 1.0, 5));
    let names: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
    legend(&mut svg, 515.0, 60.0, &names);
    svg.finish()
}

/// Cumulative share of churners captured against the share of users
/// selected, with the diagonal of a random ranking as baseline. Each point
/// is annotated with its lift factor.
pub fn lift_chart(points: &[(f64, f64)]) -> String {
    let mut svg = Svg::new(560.0, 460.0);
    svg.text(280.0, 20.0, "Lift chart", "middle", 14);
    let f = Frame {
        left: 60.0,
        top: 40.0,
        width: 460.0,
        height: 360.0,
        x: (0.0, 1.0),
        y: (0.0, 1.0),
    };
    svg.line(
        f.px(0.0),
        f.py(0.0),
        f.px(1.0),
        f.py(1.0),
        r##"stroke="#999" stroke-dasharray="5,4" stroke-width="1""##,
    );
    let mut pts = vec![(f.px(0.0), f.py(0.0))];
    pts.extend(points.iter().map(|&(s, l)| (f.px(s), f.py((s * l).min(1.0)))));
    svg.polyline(&pts, PALETTE[0]);
    for &(s, l) in points
        .iter()
        .filter(|p| (p.0 * 10.0).fract().abs() < 1e-9 && p.0 <= 0.5)
    {
        svg.text(
            f.px(s) + 4.0,
            f.py((s * l).min(1.0)) - 6.0,
            &format!("{l:.2}"),
            "start",
            10,
        );
    }
    f.axes(
        &mut svg,
        "fraction of users selected",
        "fraction of churners captured",
        &ticks(0.0, 1.0, 5),
        &ticks(0.0, 1.0, 5),
    );
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_and_stable() {
        let a = lift_chart(&[(0.1, 2.5), (0.5, 1.6), (1.0, 1.0)]);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("stroke-dasharray"));
        assert_eq!(a, lift_chart(&[(0.1, 2.5), (0.5, 1.6), (1.0, 1.0)]));
        let h = lifespan_histogram(&[(1, 1000), (2, 100), (3, 7)]);
        assert_eq!(h.matches("<rect").count(), 1 + 3);
        let w = window_series(&[0, 1, 2], &[("auc".into(), vec![Some(0.7), None, Some(0.8)])]);
        assert!(w.contains("auc"));
        let t = topic_evolution(&[vec![vec![0.5, 0.5], vec![0.9, 0.1]]], &["a<b".into(), "c".into()], 2);
        assert!(t.contains("a&lt;b"));
    }
}

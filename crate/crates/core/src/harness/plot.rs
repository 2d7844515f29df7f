use std::fmt::Write;
use std::path::Path;

use super::emit::atomic_write;
use super::sweep::SweepResult;
use super::HarnessError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// `log10 K` against `log10 D`: analytic curve, MC means with one-sigma bars,
/// and a marker at `log10(bN/c)`.
pub fn render_svg(result: &SweepResult) -> String {
    let model = &result.spec.model;
    let bp = model.breakpoint_log10();
    let pts: Vec<(f64, f64)> = result
        .records
        .iter()
        .filter(|r| r.k_analytic > 0.0)
        .map(|r| (r.d.log10(), r.k_analytic.log10()))
        .collect();
    let mc: Vec<(f64, f64, f64, f64)> = result
        .records
        .iter()
        .filter_map(|r| {
            let (m, s) = (r.k_mc_mean?, r.k_mc_std?);
            (m > 0.0).then(|| (r.d.log10(), m.log10(), (m - s).max(m * 1e-3).log10(), (m + s).log10()))
        })
        .collect();

    let xs = pts.iter().map(|p| p.0).chain(mc.iter().map(|p| p.0));
    let ys = pts.iter().map(|p| p.1).chain(mc.iter().flat_map(|p| [p.2, p.3]));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let f = Frame {
        x0: xmin.min(bp).floor(),
        x1: xmax.max(bp).ceil().max(xmin.floor() + 1.0),
        y0: ymin.floor(),
        y1: ymax.ceil().max(ymin.floor() + 1.0),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="18" text-anchor="middle">N = {:e}, b = {:e}, c = {:e}</text>"#,
        WIDTH / 2.0,
        model.n,
        model.b,
        model.c
    );

    let (ax0, ax1, ay0, ay1) = (f.px(f.x0), f.px(f.x1), f.py(f.y0), f.py(f.y1));
    let _ = writeln!(
        s,
        r#"<path d="M{ax0:.2},{ay1:.2} L{ax0:.2},{ay0:.2} L{ax1:.2},{ay0:.2}" fill="none" stroke="black"/>"#
    );
    let xstep = ((f.x1 - f.x0) / 10.0).ceil().max(1.0);
    let mut t = f.x0;
    while t <= f.x1 + 1e-9 {
        let x = f.px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{ay0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.0}</text>"#,
            ay0 + 5.0,
            ay0 + 18.0
        );
        t += xstep;
    }
    let ystep = ((f.y1 - f.y0) / 8.0).ceil().max(1.0);
    let mut t = f.y0;
    while t <= f.y1 + 1e-9 {
        let y = f.py(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{ax0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t:.0}</text>"#,
            ax0 - 5.0,
            ax0 - 8.0,
            y + 4.0
        );
        t += ystep;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log10 D</text>"#,
        (ax0 + ax1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">log10 K</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0
    );

    let bx = f.px(bp);
    let _ = writeln!(
        s,
        r##"<line id="breakpoint" x1="{bx:.2}" y1="{ay0:.2}" x2="{bx:.2}" y2="{ay1:.2}" stroke="#888" stroke-dasharray="5,4"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text id="breakpoint-label" x="{:.2}" y="{:.2}" fill="#444">{bp:.2}</text>"##,
        bx + 4.0,
        ay1 + 14.0
    );

    if !pts.is_empty() {
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, f.px(*x), f.py(*y));
        }
        let _ = writeln!(
            s,
            r##"<path id="analytic" d="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            d.trim_end()
        );
    }
    if !mc.is_empty() {
        let _ = writeln!(s, r##"<g id="mc" stroke="#d62728" fill="#d62728">"##);
        for (x, y, lo, hi) in &mc {
            let (px, py) = (f.px(*x), f.py(*y));
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}"/><circle cx="{px:.2}" cy="{py:.2}" r="3"/>"#,
                f.py(*lo),
                f.py(*hi)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_plot(result: &SweepResult, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    atomic_write(path.as_ref(), render_svg(result).as_bytes())
}

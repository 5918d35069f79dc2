//! History CSV and static SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const HISTORY_COLUMNS: [&str; 7] = [
    "iter",
    "total_residual",
    "per_step_residual_max",
    "JN",
    "reduced_grad_norm",
    "rho_estimate",
    "rescaling_accepted_fraction",
];

/// One row of `history.csv`; absent quantities are written as empty fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub total_residual: Option<f64>,
    pub per_step_residual_max: Option<f64>,
    pub jn: Option<f64>,
    pub reduced_grad_norm: Option<f64>,
    pub rho_estimate: Option<f64>,
    pub rescaling_accepted_fraction: Option<f64>,
}

/// 17 significant digits, '.' decimal point, independent of locale.
pub fn format_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn field(x: Option<f64>) -> String {
    x.map(format_value).unwrap_or_default()
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            field(r.total_residual),
            field(r.per_step_residual_max),
            field(r.jn),
            field(r.reduced_grad_norm),
            field(r.rho_estimate),
            field(r.rescaling_accepted_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn log10_finite(x: f64) -> Option<f64> {
    (x > 0.0 && x.is_finite()).then(|| x.log10())
}

/// Semilog line plot of one or more series against the iteration index.
pub fn convergence_svg(title: &str, series: &[(&str, Vec<(usize, f64)>)]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().filter_map(|&(i, v)| log10_finite(v).map(|l| (i as f64, l))))
        .collect();
    let mut svg = header(title);
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let x_max = pts.iter().map(|p| p.0).fold(1.0, f64::max);
    let y_lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor();
    let y_hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().max(y_lo + 1.0);
    let sx = |x: f64| MARGIN + x / x_max * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    axes(&mut svg, x_max, y_lo, y_hi);
    for (k, (name, s)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s
            .iter()
            .filter_map(|&(i, v)| log10_finite(v).map(|l| format!("{:.2},{:.2}", sx(i as f64), sy(l))))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-size="12" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 150.0,
            MARGIN + 16.0 * (k as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of `log10` per-step residuals: iterations along x, time steps along y.
pub fn heatmap_svg(title: &str, per_step: &[Vec<f64>]) -> String {
    let mut svg = header(title);
    let iters = per_step.len();
    let steps = per_step.iter().map(Vec::len).max().unwrap_or(0);
    if iters == 0 || steps == 0 {
        svg.push_str("</svg>\n");
        return svg;
    }
    // at most 200 x 200 cells; each cell shows the max over its block
    let (bx, by) = (iters.div_ceil(200), steps.div_ceil(200));
    let (nx, ny) = (iters.div_ceil(bx), steps.div_ceil(by));
    let mut cells = vec![vec![f64::NEG_INFINITY; ny]; nx];
    for (k, row) in per_step.iter().enumerate() {
        for (i, &r) in row.iter().enumerate() {
            if let Some(l) = log10_finite(r) {
                let c = &mut cells[k / bx][i / by];
                *c = c.max(l);
            }
        }
    }
    let finite = cells.iter().flatten().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = finite.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let span = (hi - lo).max(1e-12);
    let (cw, ch) = ((WIDTH - 2.0 * MARGIN) / nx as f64, (HEIGHT - 2.0 * MARGIN) / ny as f64);
    for (x, col) in cells.iter().enumerate() {
        for (y, &v) in col.iter().enumerate() {
            let t = if v.is_finite() { (v - lo) / span } else { 0.0 };
            let (r, g, b) =
                ((255.0 * t) as u8, (64.0 + 96.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8, (255.0 * (1.0 - t)) as u8);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                MARGIN + x as f64 * cw,
                HEIGHT - MARGIN - (y + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{:.0}" font-size="12">iteration (0..{}) vs time step (1..{steps}); log10 residual in [{lo:.1}, {hi:.1}], blue to red</text>"#,
        HEIGHT - 16.0,
        iters - 1
    );
    svg.push_str("</svg>\n");
    svg
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-size=\"14\">{title}</text>\n"
    )
}

fn axes(svg: &mut String, x_max: f64, y_lo: f64, y_hi: f64) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{x1}" y="{:.0}" font-size="12" text-anchor="end">iteration (max {x_max})</text>"#,
        y0 + 30.0
    );
    let ticks = (y_hi - y_lo) as i64;
    let every = (ticks / 8).max(1);
    for t in (0..=ticks).step_by(every as usize) {
        let y = y0 - t as f64 / (y_hi - y_lo) * (y0 - y1);
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{y:.1}" font-size="11" text-anchor="end">1e{}</text>"#,
            x0 - 4.0,
            y_lo as i64 + t
        );
    }
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    fs::write(path, text)
}

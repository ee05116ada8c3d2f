//! SVG rendering of merged learning curves and σ heatmaps.
//!
//! Output is plain SVG text with coordinates printed at fixed precision,
//! so identical input gives byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Numeric CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Reads a CSV whose every field is a number (`NaN` allowed). Errors name
/// the 1-based data row and the column.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| HarnessError::Csv {
        path: path.into(),
        row: 0,
        column: String::new(),
        message: e.to_string(),
    })?;
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| HarnessError::Csv { path: path.into(), row: 0, column: String::new(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| HarnessError::Csv {
            path: path.into(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() != columns.len() {
            return Err(HarnessError::Csv {
                path: path.into(),
                row,
                column: columns.get(rec.len()).cloned().unwrap_or_default(),
                message: format!("expected {} fields, found {}", columns.len(), rec.len()),
            });
        }
        let mut values = Vec::with_capacity(columns.len());
        for (field, name) in rec.iter().zip(&columns) {
            let v = field.trim().parse::<f64>().map_err(|_| HarnessError::Csv {
                path: path.into(),
                row,
                column: name.clone(),
                message: format!("cannot parse `{field}` as a number"),
            })?;
            values.push(v);
        }
        rows.push(values);
    }
    Ok(Table { columns, rows })
}

/// One curve with its 95% band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub ci: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rounded tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line plot with one shaded band per series. Non-finite points are skipped.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = |v: &f64| v.is_finite();
    let mut xs = series.iter().flat_map(|s| s.x.iter().copied()).filter(finite);
    let first_x = xs.next().unwrap_or(0.0);
    let (x_lo, x_hi) = xs.fold((first_x, first_x), |(a, b), v| (a.min(v), b.max(v)));
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (m, c) in s.mean.iter().zip(&s.ci) {
            if m.is_finite() {
                let c = if c.is_finite() { *c } else { 0.0 };
                y_lo = y_lo.min(m - c);
                y_hi = y_hi.max(m + c);
            }
        }
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 1.0, x_hi + 1.0) };
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    for t in ticks(y_lo, y_hi, 6) {
        let y = py(t);
        let _ =
            writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, LEFT + pw);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    for t in ticks(x_lo, x_hi, 8) {
        let x = px(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##,
            TOP + ph,
            TOP + ph + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            tick_label(t)
        );
    }
    let _ = writeln!(svg, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> =
            s.x.iter()
                .zip(&s.mean)
                .zip(&s.ci)
                .filter(|((x, m), _)| x.is_finite() && m.is_finite())
                .map(|((x, m), c)| (*x, *m, if c.is_finite() { *c } else { 0.0 }))
                .collect();
        if pts.is_empty() {
            continue;
        }
        let mut band = String::new();
        for (x, m, c) in &pts {
            let _ = write!(band, "{:.2},{:.2} ", px(*x), py(m + c));
        }
        for (x, m, c) in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(*x), py(m - c));
        }
        let _ =
            writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = pts.iter().map(|(x, m, _)| format!("{:.2},{:.2}", px(*x), py(*m))).collect();
        let _ =
            writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(svg, r#"<rect x="{lx:.1}" y="{:.1}" width="14" height="8" fill="{color}"/>"#, ly - 7.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 20.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Piecewise-linear approximation of the viridis colormap.
fn viridis(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + f * (v - u)).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of a `bins x bins` grid (row `i` along x, column `j` along y)
/// with a colorbar spanning `[0, sigma0]`.
pub fn heatmap_svg(title: &str, bins: usize, values: &[f64], sigma0: f64) -> String {
    let size = 360.0;
    let cell = size / bins as f64;
    let (ox, oy) = (LEFT, TOP);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="11">"#,
        ox + size + 110.0,
        oy + size + BOTTOM
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        ox + size / 2.0,
        escape(title)
    );
    for i in 0..bins {
        for j in 0..bins {
            let v = values[i * bins + j];
            let (r, g, b) = viridis(v / sigma0);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                ox + i as f64 * cell,
                oy + size - (j + 1) as f64 * cell,
                cell + 0.05,
                cell + 0.05
            );
        }
    }
    let _ = writeln!(svg, r##"<rect x="{ox}" y="{oy}" width="{size}" height="{size}" fill="none" stroke="#000"/>"##);
    for (t, label) in [(0.0, "-1"), (0.5, "0"), (1.0, "1")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            ox + t * size,
            oy + size + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
            ox - 6.0,
            oy + size - t * size + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">state</text>"#,
        ox + size / 2.0,
        oy + size + 36.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">action</text>"#,
        oy + size / 2.0,
        oy + size / 2.0
    );

    let bx = ox + size + 24.0;
    let steps = 64;
    let h = size / steps as f64;
    for k in 0..steps {
        let (r, g, b) = viridis((k as f64 + 0.5) / steps as f64);
        let _ = writeln!(
            svg,
            r#"<rect x="{bx:.1}" y="{:.2}" width="16" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
            oy + size - (k + 1) as f64 * h,
            h + 0.05
        );
    }
    let _ = writeln!(svg, r##"<rect x="{bx:.1}" y="{oy}" width="16" height="{size}" fill="none" stroke="#000"/>"##);
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            bx + 22.0,
            oy + size - t * size + 4.0,
            tick_label(t * sigma0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads a σ-probe dump (`i,j,x,y,sigma`) into `(bins, values)`.
pub fn read_sigma_dump(path: &Path) -> Result<(usize, Vec<f64>)> {
    let t = read_table(path)?;
    let cols = ["i", "j", "sigma"];
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            t.columns.iter().position(|h| h == c).ok_or_else(|| HarnessError::Csv {
                path: path.into(),
                row: 0,
                column: c.to_string(),
                message: "missing column".into(),
            })
        })
        .collect::<Result<_>>()?;
    let bins = (t.rows.len() as f64).sqrt().round() as usize;
    if bins * bins != t.rows.len() || bins == 0 {
        return Err(HarnessError::Csv {
            path: path.into(),
            row: t.rows.len(),
            column: "sigma".into(),
            message: format!("{} rows do not form a square grid", t.rows.len()),
        });
    }
    let mut values = vec![f64::NAN; bins * bins];
    for (r, row) in t.rows.iter().enumerate() {
        let (i, j) = (row[idx[0]], row[idx[1]]);
        if !(i >= 0.0 && j >= 0.0 && (i as usize) < bins && (j as usize) < bins && i.fract() == 0.0 && j.fract() == 0.0)
        {
            return Err(HarnessError::Csv {
                path: path.into(),
                row: r + 1,
                column: "i".into(),
                message: format!("cell ({i}, {j}) outside a {bins}x{bins} grid"),
            });
        }
        values[i as usize * bins + j as usize] = row[idx[2]];
    }
    Ok((bins, values))
}

/// Outcome of [`emit_plots`].
#[derive(Debug, Default, Clone, PartialEq)]
pub struct PlotReport {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// One SVG per metric present in the merged CSVs (columns `<m>_mean` with a
/// matching `<m>_ci95`), one band per input. Metrics with no finite value
/// anywhere are skipped with a warning.
pub fn emit_plots(inputs: &[(String, PathBuf)], out_dir: &Path) -> Result<PlotReport> {
    let tables: Vec<(String, Table)> =
        inputs.iter().map(|(label, path)| Ok((label.clone(), read_table(path)?))).collect::<Result<_>>()?;
    let mut metrics: Vec<String> = Vec::new();
    for (_, t) in &tables {
        for c in &t.columns {
            if let Some(m) = c.strip_suffix("_mean") {
                if t.columns.iter().any(|h| h == &format!("{m}_ci95")) && !metrics.iter().any(|x| x == m) {
                    metrics.push(m.to_string());
                }
            }
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut report = PlotReport::default();
    for m in metrics {
        let mut series = Vec::new();
        for ((label, t), (_, path)) in tables.iter().zip(inputs) {
            let (Some(mean), Some(ci)) = (t.column(&format!("{m}_mean")), t.column(&format!("{m}_ci95"))) else {
                continue;
            };
            let x = t.column("epoch").ok_or_else(|| HarnessError::Csv {
                path: path.clone(),
                row: 0,
                column: "epoch".into(),
                message: "missing column".into(),
            })?;
            if mean.iter().any(|v| v.is_finite()) {
                series.push(Series { label: label.clone(), x, mean, ci });
            }
        }
        if series.is_empty() {
            let msg = format!("metric `{m}` has no finite values, plot omitted");
            log::warn!("{msg}");
            report.warnings.push(msg);
            continue;
        }
        let svg = line_plot_svg(&m, "epoch", &m, &series);
        let path = out_dir.join(format!("{m}.svg"));
        std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
        report.written.push(path);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(-0.13, 0.92, 6);
        assert!(t.iter().all(|v| (v * 5.0 - (v * 5.0).round()).abs() < 1e-9), "{t:?}");
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(viridis(0.0), (68, 1, 84));
        assert_eq!(viridis(1.0), (253, 231, 37));
        assert_eq!(viridis(7.0), viridis(1.0));
        assert_eq!(viridis(f64::NAN), viridis(0.0));
    }

    #[test]
    fn plot_is_deterministic() {
        let s = Series {
            label: "a".into(),
            x: vec![1.0, 2.0, 3.0],
            mean: vec![0.0, 1.0, f64::NAN],
            ci: vec![0.1, 0.2, 0.3],
        };
        let a = line_plot_svg("t", "x", "y", std::slice::from_ref(&s));
        assert_eq!(a, line_plot_svg("t", "x", "y", &[s]));
        assert_eq!(a.matches("<polyline").count(), 1);
    }
}

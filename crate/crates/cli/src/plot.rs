//! Minimal SVG line charts, drawn from CSV files the runs have written.

use std::fmt::Write as _;
use std::path::Path;

use crate::failure::Failure;

/// A parsed CSV file of numbers under a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().ok_or("empty file")?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 2)))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != header.len() {
                return Err(format!("line {}: {} fields, header has {}", n + 2, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

const W: f64 = 640.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;

fn range(v: &[f64]) -> (f64, f64) {
    let (lo, hi) =
        v.iter().filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300_f64.max(1e-14 * lo.abs()) {
        let pad = if lo == 0.0 { 1.0 } else { 1e-12 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel at vertical offset `top`: axes, tick labels, polyline.
fn panel(svg: &mut String, top: f64, title: &str, x_label: &str, xs: &[f64], ys: &[f64]) {
    let (x0, x1) = range(xs);
    let (y0, y1) = range(ys);
    let (left, right) = (MARGIN_L, W - MARGIN_R);
    let (upper, lower) = (top + MARGIN_T, top + PANEL_H - MARGIN_B);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);
    let _ = writeln!(
        svg,
        r##"<rect x="{left:.1}" y="{upper:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
        right - left,
        lower - upper
    );
    let _ = writeln!(svg, r#"<text x="{left:.1}" y="{:.1}" font-size="13">{}</text>"#, top + 18.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        0.5 * (left + right),
        lower + 32.0,
        escape(x_label)
    );
    for (v, y) in [(y0, lower), (y1, upper)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.6e}</text>"#,
            left - 4.0,
            y + 4.0
        );
    }
    for (v, x) in [(x0, left), (x1, right)] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.4}</text>"#,
            lower + 14.0
        );
    }
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ =
        writeln!(svg, r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.2" points="{}"/>"##, points.join(" "));
}

fn document(panels: usize, body: &str) -> String {
    let h = PANEL_H * panels.max(1) as f64;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{h}\" viewBox=\"0 0 {W} {h}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Each named column against `t`, one panel per column.
pub fn time_series(table: &Table, columns: &[&str]) -> Option<String> {
    let t = table.column("t")?;
    let mut body = String::new();
    let mut n = 0;
    for name in columns {
        let ys = table.column(name)?;
        panel(&mut body, PANEL_H * n as f64, name, "t", &t, &ys);
        n += 1;
    }
    Some(document(n, &body))
}

/// `p` against `q`.
pub fn orbit(table: &Table, q: &str, p: &str) -> Option<String> {
    let (qs, ps) = (table.column(q)?, table.column(p)?);
    let mut body = String::new();
    panel(&mut body, 0.0, &format!("mean orbit ({q}, {p})"), q, &qs, &ps);
    Some(document(1, &body))
}

/// Writes `<stem>_monitors.svg` and `<stem>_orbit.svg` next to a CSV file.
pub fn plots_from_csv(csv: &Path, monitors: &[&str], q: &str, p: &str) -> Result<Vec<std::path::PathBuf>, Failure> {
    let table = Table::read(csv)?;
    let stem = csv.with_extension("");
    let stem = stem.to_string_lossy();
    let mut written = Vec::new();
    if let Some(svg) = time_series(&table, monitors) {
        let path = std::path::PathBuf::from(format!("{stem}_monitors.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    if let Some(svg) = orbit(&table, q, p) {
        let path = std::path::PathBuf::from(format!("{stem}_orbit.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "t,q,p,energy\n0,1,0,0.5\n0.5,0.8,-0.4,0.5\n1,0.5,-0.8,0.5\n";

    #[test]
    fn parse_and_select() {
        let t = Table::parse(CSV).unwrap();
        assert_eq!(t.column("p").unwrap(), vec![0.0, -0.4, -0.8]);
        assert!(t.column("x").is_none());
        assert!(Table::parse("a,b\n1\n").is_err());
    }

    #[test]
    fn flat_series_still_draws() {
        let t = Table::parse(CSV).unwrap();
        let svg = time_series(&t, &["energy"]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
        assert_eq!(orbit(&t, "q", "p").unwrap().matches("<polyline").count(), 1);
    }
}

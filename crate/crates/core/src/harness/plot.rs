use super::HarnessError;
use std::fmt::Write as _;
use std::path::Path;

/// One named curve.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal SVG line chart with axis ticks and a legend.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 70.0, 20.0, 40.0, 50.0);
    let finite = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            sx(fx),
            h - mb + 16.0,
            tick(fx),
            ml - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (ml + w - mr) / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{y_label}</text>"#,
        (mt + h - mb) / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, pts.join(" "));
        let ly = mt + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - mr - 150.0,
            w - mr - 130.0,
            w - mr - 125.0,
            ly + 4.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(field.parse::<f64>().unwrap_or(f64::NAN));
        }
    }
    Ok((headers, cols))
}

fn series_from(headers: &[String], cols: &[Vec<f64>], pick: &[usize]) -> Vec<Series> {
    pick.iter()
        .map(|&i| Series {
            name: headers[i].clone(),
            points: cols[0].iter().copied().zip(cols[i].iter().copied()).collect(),
        })
        .collect()
}

/// Reads `steps.csv` and `iterations.csv` from `dir` and writes the RMSE and
/// GOSPA curves as SVG, plus `curves.csv` with every column side by side.
/// Returns the files written.
pub fn plot_dir(dir: &Path) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let (h, c) = read_columns(&dir.join("steps.csv"))?;
    let pos = svg_line_chart("UE position RMSE", "step", "RMSE (m)", &series_from(&h, &c, &[1, 3]));
    let heading = svg_line_chart("UE heading RMSE", "step", "RMSE (rad)", &series_from(&h, &c, &[2]));
    for (name, body) in [("rmse_position.svg", pos), ("rmse_heading.svg", heading)] {
        std::fs::write(dir.join(name), body)?;
        out.push(dir.join(name));
    }
    let (gh, gc) = read_columns(&dir.join("iterations.csv"))?;
    let g = svg_line_chart("Map GOSPA per outer iteration", "iteration", "GOSPA (m)", &series_from(&gh, &gc, &[1]));
    std::fs::write(dir.join("gospa.svg"), g)?;
    out.push(dir.join("gospa.svg"));

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["curve", "x", "y", "unit"])?;
    let units = ["", "m", "rad", "m"];
    for i in 1..h.len() {
        for (x, y) in c[0].iter().zip(&c[i]) {
            w.write_record([h[i].as_str(), &x.to_string(), &y.to_string(), units[i.min(3)]])?;
        }
    }
    for (x, y) in gc[0].iter().zip(&gc[1]) {
        w.write_record(["mean_gospa_m", &x.to_string(), &y.to_string(), "m"])?;
    }
    w.flush()?;
    out.push(dir.join("curves.csv"));
    Ok(out)
}

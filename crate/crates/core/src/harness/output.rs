//! Result files: CSV rows and an SVG summary plot.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::campaign::RunRecord;

pub const CSV_HEADER: [&str; 10] = [
    "d_set_um",
    "d_ref_um",
    "d_ref_err_um",
    "d_hat_um",
    "d_sens_um",
    "qcrb_um",
    "di_crb_um",
    "spade_model_um",
    "clamp_frac",
    "n_photons_hg01",
];

/// `v` rounded to 9 significant digits, printed in the shortest form that
/// parses back to the same value. Infinities print as `inf` / `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v.is_nan() {
        return "nan".into();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn row(r: &RunRecord) -> [String; 10] {
    [
        format_value(r.d_set),
        format_value(r.d_ref),
        format_value(r.d_ref_err),
        format_value(r.d_hat),
        format_value(r.d_sensitivity),
        format_value(r.qcrb),
        format_value(r.di_crb),
        format_value(r.spade_model),
        format_value(r.clamp_fraction),
        r.photons_in_hg01.to_string(),
    ]
}

pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Input(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(row(r)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Input(format!("csv: {e}")))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Input(format!(
            "unexpected csv header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("csv: {e}")))?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| Error::Input(format!("row {}: bad {} value {:?}", line + 1, CSV_HEADER[k], &rec[k])))
        };
        out.push(RunRecord {
            d_set: num(0)?,
            d_ref: num(1)?,
            d_ref_err: num(2)?,
            d_hat: num(3)?,
            d_sensitivity: num(4)?,
            qcrb: num(5)?,
            di_crb: num(6)?,
            spade_model: num(7)?,
            clamp_fraction: num(8)?,
            photons_in_hg01: rec[9]
                .parse()
                .map_err(|_| Error::Input(format!("row {}: bad n_photons_hg01 value {:?}", line + 1, &rec[9])))?,
        });
    }
    Ok(out)
}

/// Write the CSV to `path`, creating parent directories.
pub fn write_results(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, records_to_csv(records)?)?;
    Ok(())
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = 0.05 * (hi - lo).max(hi.abs() * 1e-3).max(1e-12);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            px_lo,
            px_hi,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn polyline(svg: &mut String, xs: &Axis, ys: &Axis, pts: &[(f64, f64)], colour: &str) {
    let pts: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
        pts.join(" ")
    );
}

fn frame(svg: &mut String, xs: &Axis, ys: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (xs.px_lo, xs.px_hi, ys.px_lo, ys.px_hi);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for (v, px) in [(xs.lo, x0), (xs.hi, x1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{px}" y="{}" font-size="10" text-anchor="middle">{v:.4}</text>"#,
            y0 + 14.0
        );
    }
    for (v, px) in [(ys.lo, y0), (ys.hi, y1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{px}" font-size="10" text-anchor="end">{v:.4}</text>"#,
            x0 - 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{xlabel}</text>"#,
        0.5 * (x0 + x1),
        y0 + 30.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 {0} {1})">{ylabel}</text>"#,
        x0 - 45.0,
        0.5 * (y0 + y1)
    );
}

/// Two panels: estimated against reference separation with ±1σ bars, and
/// sensitivity against set separation with the three bound curves.
pub fn render_svg(records: &[RunRecord]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="960" height="420" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="960" height="420" fill="white"/>"#);

    let xs = Axis::fit(records.iter().map(|r| r.d_ref), 80.0, 440.0);
    let ys = Axis::fit(
        records
            .iter()
            .flat_map(|r| [r.d_hat - r.d_sensitivity, r.d_hat + r.d_sensitivity]),
        360.0,
        30.0,
    );
    frame(
        &mut svg,
        &xs,
        &ys,
        "reference separation (um)",
        "estimated separation (um)",
    );
    let diag = [
        (xs.lo.max(ys.lo), xs.lo.max(ys.lo)),
        (xs.hi.min(ys.hi), xs.hi.min(ys.hi)),
    ];
    polyline(&mut svg, &xs, &ys, &diag, "grey");
    for r in records {
        let (cx, cy) = (xs.map(r.d_ref), ys.map(r.d_hat));
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            ys.map(r.d_hat - r.d_sensitivity),
            ys.map(r.d_hat + r.d_sensitivity)
        );
        let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="black"/>"#);
    }

    let xs = Axis::fit(records.iter().map(|r| r.d_set), 560.0, 920.0);
    let ys = Axis::fit(
        records
            .iter()
            .flat_map(|r| [r.d_sensitivity, r.qcrb, r.di_crb, r.spade_model]),
        360.0,
        30.0,
    );
    frame(&mut svg, &xs, &ys, "set separation (um)", "sensitivity (um)");
    let curve = |f: fn(&RunRecord) -> f64| records.iter().map(|r| (r.d_set, f(r))).collect::<Vec<_>>();
    polyline(&mut svg, &xs, &ys, &curve(|r| r.qcrb), "blue");
    polyline(&mut svg, &xs, &ys, &curve(|r| r.di_crb), "red");
    polyline(&mut svg, &xs, &ys, &curve(|r| r.spade_model), "black");
    for r in records.iter().filter(|r| r.d_sensitivity.is_finite()) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="orange"/>"#,
            xs.map(r.d_set),
            ys.map(r.d_sensitivity)
        );
    }
    for (k, (label, colour)) in [
        ("QCRB", "blue"),
        ("DI CRB", "red"),
        ("model", "black"),
        ("simulated", "orange"),
    ]
    .iter()
    .enumerate()
    {
        let y = 40.0 + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="850" y="{y}" font-size="10" fill="{colour}">{label}</text>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_svg(records))?;
    Ok(())
}

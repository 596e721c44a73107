//! Error metrics, tables and plots.
//!
//! Everything here is a pure function of its arguments and produces the same
//! bytes for the same input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::Engine as _;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::model::{Architecture, NetworkParams};
use crate::problems::{Domain, ProblemSpec, SampleSets};
use crate::spectral::{Band, FrequencyReport};
use crate::training::{PairedOutcome, RunRecord, TrainOutcome};
use crate::{Error, Result};

/// Pixel width of every rasterized field.
pub const RASTER_WIDTH: usize = 512;
/// Smallest loss drawn on a log axis.
pub const LOG_FLOOR: f64 = 1e-18;

/// Pointwise error statistics of one model on one point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub problem: String,
    pub model: String,
    pub grid: String,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub max_ae: f64,
}

pub fn metrics(
    problem: &str,
    model: &str,
    grid: &str,
    points: ArrayView2<'_, f64>,
    predicted: &[f64],
    reference: &[f64],
) -> Result<MetricRecord> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::Config("metrics need a nonempty grid".into()));
    }
    if predicted.len() != n || reference.len() != n {
        return Err(Error::Config(format!(
            "{} predictions and {} reference values for {n} points",
            predicted.len(),
            reference.len()
        )));
    }
    let (mut sq, mut abs, mut max) = (0.0, 0.0, 0.0f64);
    for (i, (p, r)) in predicted.iter().zip(reference).enumerate() {
        if !p.is_finite() || !r.is_finite() {
            let which = if p.is_finite() { "reference" } else { "prediction" };
            return Err(Error::Domain(format!("non-finite {which} at point {:?}", points.row(i).to_vec())));
        }
        let d = (p - r).abs();
        sq += d * d;
        abs += d;
        max = max.max(d);
    }
    let mse = sq / n as f64;
    Ok(MetricRecord {
        problem: problem.into(),
        model: model.into(),
        grid: grid.into(),
        mse,
        rmse: mse.sqrt(),
        mae: abs / n as f64,
        max_ae: max,
    })
}

/// Scientific notation with three significant figures, e.g. `6.28e-06`.
pub fn sci3(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

fn is_xlstm(model: &str) -> bool {
    model == Architecture::Xlstm.tag()
}

/// Groups rows by problem in order of first appearance, xLSTM rows first
/// within each problem.
pub fn order_records(records: &[MetricRecord]) -> Vec<MetricRecord> {
    let mut problems: Vec<&str> = Vec::new();
    for r in records {
        if !problems.contains(&r.problem.as_str()) {
            problems.push(&r.problem);
        }
    }
    let mut out = records.to_vec();
    out.sort_by_key(|r| (problems.iter().position(|p| *p == r.problem), !is_xlstm(&r.model)));
    out
}

const COLUMNS: [&str; 7] = ["problem", "model", "grid", "mse", "rmse", "mae", "max_ae"];

/// The table as CSV with 17 significant digits and as aligned text with
/// three.
pub fn emit_table(records: &[MetricRecord]) -> Result<(String, String)> {
    let rows = order_records(records);
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(COLUMNS).map_err(csv_error)?;
    for r in &rows {
        let nums = [r.mse, r.rmse, r.mae, r.max_ae].map(|v| format!("{v:.16e}"));
        csv.write_record([r.problem.as_str(), &r.model, &r.grid, &nums[0], &nums[1], &nums[2], &nums[3]])
            .map_err(csv_error)?;
    }
    let csv = String::from_utf8(csv.into_inner().map_err(|e| Error::Format(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))?;

    let header = ["Problem", "Model", "Grid", "MSE", "RMSE", "MAE", "MaxAE"].map(String::from);
    let mut cells = vec![header];
    for r in &rows {
        cells.push([
            r.problem.clone(),
            r.model.clone(),
            r.grid.clone(),
            sci3(r.mse),
            sci3(r.rmse),
            sci3(r.mae),
            sci3(r.max_ae),
        ]);
    }
    let widths: Vec<usize> = (0..7).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        text.push_str(line.join("  ").trim_end());
        text.push('\n');
    }
    Ok((csv, text))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn parse_table(csv: &str) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    reader.deserialize().map(|r| r.map_err(csv_error)).collect()
}

/// A field sampled on a pixel grid, top row first; NaN marks pixels outside
/// the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Pixel centres covering the bounding box of a 2-D domain, `RASTER_WIDTH`
/// wide, with a mask for pixels outside the domain.
pub fn raster_points(domain: &Domain) -> Result<(Array2<f64>, usize, usize, Vec<bool>)> {
    let (lo, hi) = match domain {
        Domain::Box { lo, hi } if lo.len() == 2 => ([lo[0], lo[1]], [hi[0], hi[1]]),
        Domain::UnitDisk => ([-1.0, -1.0], [1.0, 1.0]),
        _ => return Err(Error::Config("field maps need a two-dimensional domain".into())),
    };
    let width = RASTER_WIDTH;
    let height = ((width as f64) * (hi[1] - lo[1]) / (hi[0] - lo[0])).round().max(1.0) as usize;
    let mut points = Array2::zeros((width * height, 2));
    let mut inside = Vec::with_capacity(width * height);
    for row in 0..height {
        let y = hi[1] - (hi[1] - lo[1]) * (row as f64 + 0.5) / height as f64;
        for col in 0..width {
            let x = lo[0] + (hi[0] - lo[0]) * (col as f64 + 0.5) / width as f64;
            let i = row * width + col;
            points[[i, 0]] = x;
            points[[i, 1]] = y;
            inside.push(domain.contains(&[x, y], 0.0));
        }
    }
    Ok((points, width, height, inside))
}

/// Reference and prediction rasters of `net` over the problem's domain.
pub fn field_rasters(spec: &ProblemSpec, net: &NetworkParams) -> Result<(Raster, Raster)> {
    let (points, width, height, inside) = raster_points(&spec.domain)?;
    let pred = net.predict(points.view())?;
    let mask = |v: f64, keep: bool| if keep { v } else { f64::NAN };
    let reference = points
        .rows()
        .into_iter()
        .zip(&inside)
        .map(|(p, &k)| mask(spec.reference.value(p.as_slice().expect("row")), k))
        .collect();
    let prediction = pred.iter().zip(&inside).map(|(&v, &k)| mask(v, k)).collect();
    Ok((Raster { width, height, values: reference }, Raster { width, height, values: prediction }))
}

const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (VIRIDIS[i][c] + f * (VIRIDIS[i + 1][c] - VIRIDIS[i][c])).round() as u8;
    }
    out
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// RGBA PNG of a raster with the given colour range; masked pixels are
/// transparent.
pub fn raster_png(r: &Raster, lo: f64, hi: f64) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(r.values.len() * 4);
    for &v in &r.values {
        if v.is_nan() {
            data.extend_from_slice(&[0, 0, 0, 0]);
        } else {
            let [cr, cg, cb] = colormap((v - lo) / (hi - lo));
            data.extend_from_slice(&[cr, cg, cb, 255]);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, r.width as u32, r.height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
        writer.write_image_data(&data).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

fn svg_open(width: f64, height: f64, metadata: Option<&str>) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if let Some(m) = metadata {
        let _ = writeln!(s, "<metadata>{}</metadata>", escape(m));
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn text(s: &mut String, x: f64, y: f64, anchor: &str, body: &str) {
    let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{}</text>", escape(body));
}

/// Colour bar with end labels below a heatmap.
fn colorbar(s: &mut String, x: f64, y: f64, w: f64, lo: f64, hi: f64) {
    let steps = 64;
    for i in 0..steps {
        let [r, g, b] = colormap((i as f64 + 0.5) / steps as f64);
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"10\" fill=\"rgb({r},{g},{b})\"/>",
            x + w * i as f64 / steps as f64,
            w / steps as f64 + 0.01
        );
    }
    text(s, x, y + 24.0, "start", &sci3(lo));
    text(s, x + w, y + 24.0, "end", &sci3(hi));
}

/// Reference, prediction and absolute error side by side for one or more
/// models; reference and prediction share a colour range.
pub fn fields_svg(reference: &Raster, predictions: &[(&str, &Raster)], metadata: Option<&str>) -> Result<String> {
    for (_, p) in predictions {
        if (p.width, p.height) != (reference.width, reference.height) {
            return Err(Error::Config("rasters differ in size".into()));
        }
    }
    let (w, h) = (reference.width as f64, reference.height as f64);
    let (pad, top, gap) = (20.0, 30.0, 50.0);
    let width = 3.0 * w + 4.0 * pad;
    let height = predictions.len() as f64 * (h + top + gap) + pad;
    let (lo, hi) = finite_range(
        reference.values.iter().copied().chain(predictions.iter().flat_map(|(_, p)| p.values.iter().copied())),
    );
    let mut s = svg_open(width, height, metadata);
    for (row, (label, pred)) in predictions.iter().enumerate() {
        let y = pad + row as f64 * (h + top + gap);
        let error = Raster {
            width: pred.width,
            height: pred.height,
            values: pred.values.iter().zip(&reference.values).map(|(p, r)| (p - r).abs()).collect(),
        };
        let (elo, ehi) = finite_range(error.values.iter().copied());
        let elo = elo.min(0.0);
        let panels = [("reference", reference, lo, hi), ("prediction", *pred, lo, hi), ("|error|", &error, elo, ehi)];
        for (col, (name, raster, a, b)) in panels.into_iter().enumerate() {
            let x = pad + col as f64 * (w + pad);
            text(&mut s, x + w / 2.0, y + 14.0, "middle", &format!("{label}: {name}"));
            let png = base64::engine::general_purpose::STANDARD.encode(raster_png(raster, a, b)?);
            let _ = writeln!(
                s,
                "<image x=\"{x:.2}\" y=\"{:.2}\" width=\"{w:.0}\" height=\"{h:.0}\" href=\"data:image/png;base64,{png}\"/>",
                y + top - 10.0
            );
            colorbar(&mut s, x, y + top + h - 4.0, w, a, b);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Plot frame mapping data coordinates into a rectangle.
struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.x + self.w * (v - self.xr.0) / (self.xr.1 - self.xr.0)
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - self.h * (v - self.yr.0) / (self.yr.1 - self.yr.0)
    }

    fn axes(&self, s: &mut String, title: &str, xlabel: &str, ylabel: &str, ytick: impl Fn(f64) -> String) {
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
            self.x, self.y, self.w, self.h
        );
        text(s, self.x + self.w / 2.0, self.y - 8.0, "middle", title);
        text(s, self.x + self.w / 2.0, self.y + self.h + 34.0, "middle", xlabel);
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{}</text>",
            self.x - 52.0,
            self.y + self.h / 2.0,
            self.x - 52.0,
            self.y + self.h / 2.0,
            escape(ylabel)
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.xr.0 + f * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + f * (self.yr.1 - self.yr.0);
            text(s, self.px(xv), self.y + self.h + 16.0, "middle", &tick(xv));
            text(s, self.x - 4.0, self.py(yv) + 4.0, "end", &ytick(yv));
        }
    }

    fn polyline(&self, s: &mut String, pts: &[(f64, f64)], color: &str, dash: bool) {
        let mut d = String::new();
        for (x, y) in pts {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{:.2},{:.2} ", self.px(*x), self.py(*y));
            }
        }
        let dash = if dash { " stroke-dasharray=\"5,4\"" } else { "" };
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>", d.trim_end());
    }

    fn band(&self, s: &mut String, xs: &[f64], lo: &[f64], hi: &[f64], color: &str) {
        let mut d = String::new();
        let fwd = xs.iter().zip(hi);
        let back = xs.iter().zip(lo).rev();
        for (x, y) in fwd.chain(back) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{:.2},{:.2} ", self.px(*x), self.py(*y));
            }
        }
        let _ = writeln!(s, "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>", d.trim_end());
    }

    fn vline(&self, s: &mut String, x: f64, color: &str, label: &str) {
        let px = self.px(x);
        let _ = writeln!(
            s,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-dasharray=\"3,3\"/>",
            self.y,
            self.y + self.h
        );
        text(s, px + 3.0, self.y + 14.0, "start", label);
    }
}

fn tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        sci3(v)
    }
}

const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

fn legend(s: &mut String, x: f64, y: f64, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{yy:.2}\" x2=\"{:.2}\" y2=\"{yy:.2}\" stroke=\"{}\" stroke-width=\"2\"/>", x + 18.0, COLORS[i % 4]);
        text(s, x + 22.0, yy + 4.0, "start", l);
    }
}

/// Keeps at most `limit` evenly spaced entries, always including the last.
fn thin<T: Copy>(v: &[T], limit: usize) -> Vec<T> {
    if v.len() <= limit {
        return v.to_vec();
    }
    let stride = v.len().div_ceil(limit);
    let mut out: Vec<T> = v.iter().step_by(stride).copied().collect();
    if (v.len() - 1) % stride != 0 {
        out.push(v[v.len() - 1]);
    }
    out
}

/// Total loss against iteration on a linear and a log axis.
pub fn loss_svg(series: &[(&str, &[f64])], metadata: Option<&str>) -> String {
    let (pw, ph) = (440.0, 300.0);
    let mut s = svg_open(2.0 * pw + 200.0, ph + 110.0, metadata);
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let lin = finite_range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let lin = (lin.0.min(0.0), lin.1);
    let logs: Vec<Vec<f64>> = series.iter().map(|(_, v)| v.iter().map(|x| x.max(LOG_FLOOR).log10()).collect()).collect();
    let lr = finite_range(logs.iter().flatten().copied());
    let lr = (lr.0.floor(), lr.1.ceil().max(lr.0.floor() + 1.0));
    let frames = [
        Frame { x: 70.0, y: 30.0, w: pw, h: ph, xr: (0.0, (n - 1) as f64), yr: lin },
        Frame { x: pw + 150.0, y: 30.0, w: pw, h: ph, xr: (0.0, (n - 1) as f64), yr: lr },
    ];
    frames[0].axes(&mut s, "training loss", "iteration", "loss", sci3);
    frames[1].axes(&mut s, "training loss (log scale)", "iteration", "log10 loss", |v| format!("{v:.1}"));
    for (i, (_, v)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = thin(&v.iter().enumerate().map(|(j, y)| (j as f64, *y)).collect::<Vec<_>>(), 2000);
        frames[0].polyline(&mut s, &pts, COLORS[i % 4], false);
        let lpts: Vec<(f64, f64)> = thin(&logs[i].iter().enumerate().map(|(j, y)| (j as f64, *y)).collect::<Vec<_>>(), 2000);
        frames[1].polyline(&mut s, &lpts, COLORS[i % 4], false);
    }
    let labels: Vec<&str> = series.iter().map(|(l, _)| *l).collect();
    legend(&mut s, 70.0, ph + 80.0, &labels);
    s.push_str("</svg>\n");
    s
}

fn band_lines(rows: &[Band]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mean = rows.iter().map(|b| b.mean).collect();
    let lo = rows.iter().map(|b| b.mean - b.sd).collect();
    let hi = rows.iter().map(|b| b.mean + b.sd).collect();
    (mean, lo, hi)
}

/// Endpoint error, gain and time-to-threshold against `|k|`, with bands of
/// one standard deviation and the bandwidth markers.
pub fn spectrum_svg(report: &FrequencyReport) -> String {
    let (pw, ph) = (360.0, 260.0);
    let meta = serde_json::to_string(&report.config).unwrap_or_default();
    let mut s = svg_open(3.0 * pw + 260.0, ph + 120.0, Some(&meta));
    let ks: Vec<f64> = report.rows.iter().map(|r| r.wavenumber).collect();
    let kr = finite_range(ks.iter().copied());
    let kr = if ks.len() == 1 { (kr.0 - 0.5, kr.1 + 0.5) } else { kr };
    let get = |f: fn(&crate::spectral::FrequencyRow) -> Band| report.rows.iter().map(f).collect::<Vec<Band>>();
    let (eb, ex) = (get(|r| r.endpoint_base), get(|r| r.endpoint_xlstm));
    let (tb, tx) = (get(|r| r.tau_base), get(|r| r.tau_xlstm));
    let g = get(|r| r.gain);
    let range_of = |bands: &[&[Band]]| {
        let r = finite_range(bands.iter().flat_map(|b| b.iter().flat_map(|x| [x.mean - x.sd, x.mean + x.sd])));
        (r.0.min(0.0), r.1)
    };
    let frames = [
        Frame { x: 70.0, y: 30.0, w: pw, h: ph, xr: kr, yr: range_of(&[&eb, &ex]) },
        Frame { x: pw + 150.0, y: 30.0, w: pw, h: ph, xr: kr, yr: { let r = range_of(&[&g]); (r.0, r.1.max(1.1)) } },
        Frame { x: 2.0 * pw + 230.0, y: 30.0, w: pw, h: ph, xr: kr, yr: range_of(&[&tb, &tx]) },
    ];
    frames[0].axes(&mut s, "endpoint error", "|k|", "relative L2 error", sci3);
    frames[1].axes(&mut s, "gain E_base / E_xLSTM", "|k|", "gain", sci3);
    frames[2].axes(&mut s, "time to threshold", "|k|", "iterations", tick);
    for (frame, series) in [(&frames[0], [&ex, &eb]), (&frames[2], [&tx, &tb])] {
        for (i, bands) in series.iter().enumerate() {
            let (m, lo, hi) = band_lines(bands);
            frame.band(&mut s, &ks, &lo, &hi, COLORS[i]);
            frame.polyline(&mut s, &ks.iter().copied().zip(m).collect::<Vec<_>>(), COLORS[i], false);
        }
    }
    let (m, lo, hi) = band_lines(&g);
    frames[1].band(&mut s, &ks, &lo, &hi, COLORS[2]);
    frames[1].polyline(&mut s, &ks.iter().copied().zip(m).collect::<Vec<_>>(), COLORS[2], false);
    frames[1].polyline(&mut s, &[(kr.0, 1.0), (kr.1, 1.0)], "black", true);
    let budget = report.config.train.iterations as f64;
    for (i, row) in report.rows.iter().enumerate() {
        for (j, censored) in [row.censored_xlstm, row.censored_base].into_iter().enumerate() {
            if censored > 0 {
                let _ = writeln!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"none\" stroke=\"{}\"/>",
                    frames[2].px(ks[i]),
                    frames[2].py(budget.min(frames[2].yr.1)),
                    COLORS[j]
                );
            }
        }
    }
    for (j, k) in [report.k_star_xlstm, report.k_star_base].into_iter().enumerate() {
        if let Some(k) = k {
            let label = format!("k* {}", if j == 0 { "xLSTM" } else { "base" });
            frames[0].vline(&mut s, k, COLORS[j], &label);
            frames[2].vline(&mut s, k, COLORS[j], &label);
        }
    }
    legend(&mut s, 70.0, ph + 80.0, &["xLSTM-PINN", "PINN", "gain"]);
    s.push_str("</svg>\n");
    s
}

/// File name to contents, relative to an output root.
pub type Artifacts = BTreeMap<String, Vec<u8>>;

fn collocation_points(sets: &SampleSets) -> Array2<f64> {
    let dim = sets.sets.first().map_or(0, |s| s.ncols());
    let rows: usize = sets.sets.iter().map(|s| s.nrows()).sum();
    let mut out = Array2::zeros((rows, dim));
    let mut at = 0;
    for s in &sets.sets {
        out.slice_mut(ndarray::s![at..at + s.nrows(), ..]).assign(s);
        at += s.nrows();
    }
    out
}

/// Metrics of one trained model on the validation grid and on its
/// collocation points.
pub fn run_metrics(spec: &ProblemSpec, outcome: &TrainOutcome, sets: &SampleSets) -> Result<Vec<MetricRecord>> {
    let model = outcome.record.model.architecture.tag();
    let mut out = Vec::new();
    let grid = spec.grid.points();
    let colloc = collocation_points(sets);
    for (name, pts) in [(spec.grid.describe(), grid), (format!("collocation {}", colloc.nrows()), colloc)] {
        let pred = outcome.params.predict(pts.view())?;
        let reference: Vec<f64> = pts.rows().into_iter().map(|r| spec.reference.value(r.as_slice().expect("row"))).collect();
        out.push(metrics(&spec.name, model, &name, pts.view(), &pred, &reference)?);
    }
    Ok(out)
}

fn history_json(record: &RunRecord, config: &serde_json::Value) -> Result<Vec<u8>> {
    let doc = serde_json::json!({ "config": config, "run": record });
    Ok(serde_json::to_vec_pretty(&doc)?)
}

/// Every artifact of a training run (one or two models) under
/// `runs/<problem>/`.
pub fn run_artifacts(
    spec: &ProblemSpec,
    outcomes: &[&TrainOutcome],
    sets: &SampleSets,
    config: &serde_json::Value,
) -> Result<(Artifacts, Vec<MetricRecord>)> {
    let meta = serde_json::to_string(config)?;
    let root = format!("runs/{}", spec.name);
    let mut files = Artifacts::new();
    let mut all = Vec::new();
    let field_maps = spec.dim() == 2;
    let mut rasters = Vec::new();
    let mut reference = None;
    for outcome in outcomes {
        let tag = outcome.record.model.architecture.tag();
        let dir = format!("{root}/{tag}");
        let rows = run_metrics(spec, outcome, sets)?;
        files.insert(format!("{dir}/metrics.csv"), emit_table(&rows)?.0.into_bytes());
        files.insert(format!("{dir}/history.json"), history_json(&outcome.record, config)?);
        let totals: Vec<f64> = outcome.record.history.iter().map(|b| b.total).collect();
        files.insert(format!("{dir}/loss.svg"), loss_svg(&[(tag, &totals)], Some(&meta)).into_bytes());
        let mut ckpt = Vec::new();
        crate::model::write_checkpoint(&mut ckpt, &outcome.params)?;
        files.insert(format!("{dir}/params.ckpt"), ckpt);
        if field_maps {
            let (r, p) = field_rasters(spec, &outcome.params)?;
            files.insert(format!("{dir}/fields.svg"), fields_svg(&r, &[(tag, &p)], Some(&meta))?.into_bytes());
            reference = Some(r);
            rasters.push((tag, p));
        }
        all.extend(rows);
    }
    let (csv, text) = emit_table(&all)?;
    files.insert(format!("{root}/metrics.csv"), csv.into_bytes());
    files.insert(format!("{root}/metrics.txt"), text.into_bytes());
    if outcomes.len() > 1 {
        let totals: Vec<(&str, Vec<f64>)> = outcomes
            .iter()
            .map(|o| (o.record.model.architecture.tag(), o.record.history.iter().map(|b| b.total).collect()))
            .collect();
        let series: Vec<(&str, &[f64])> = totals.iter().map(|(l, v)| (*l, v.as_slice())).collect();
        files.insert(format!("{root}/loss.svg"), loss_svg(&series, Some(&meta)).into_bytes());
        if let Some(r) = &reference {
            let preds: Vec<(&str, &Raster)> = rasters.iter().map(|(l, p)| (*l, p)).collect();
            files.insert(format!("{root}/fields.svg"), fields_svg(r, &preds, Some(&meta))?.into_bytes());
        }
    }
    files.insert(format!("{root}/config.json"), serde_json::to_vec_pretty(config)?);
    Ok((files, all))
}

/// Artifacts of a paired run, xLSTM first.
pub fn paired_artifacts(
    spec: &ProblemSpec,
    pair: &PairedOutcome,
    sets: &SampleSets,
    config: &serde_json::Value,
) -> Result<(Artifacts, Vec<MetricRecord>)> {
    run_artifacts(spec, &[&pair.xlstm, &pair.baseline], sets, config)
}

/// `spectral/report.csv`, `spectral/report.json` and `spectral/spectrum.svg`.
pub fn spectral_artifacts(report: &FrequencyReport) -> Result<Artifacts> {
    let mut files = Artifacts::new();
    files.insert("spectral/report.csv".into(), report.to_csv().into_bytes());
    files.insert("spectral/report.json".into(), serde_json::to_vec_pretty(report)?);
    files.insert("spectral/spectrum.svg".into(), spectrum_svg(report).into_bytes());
    Ok(files)
}

/// Writes artifacts below `root`, creating directories as needed.
pub fn write_artifacts(root: &std::path::Path, files: &Artifacts) -> Result<()> {
    for (name, bytes) in files {
        let path = root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

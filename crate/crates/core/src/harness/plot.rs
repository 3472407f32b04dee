use std::fmt::Write as _;

use super::sweep::SWEEP_HEADER;
use super::HarnessError;

const BARRIER_HEADER: &str = "kind,alpha,train_error,test_error,train_loss,test_loss";
const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Excess error `E(α) − ½(E_A + E_B)` along the path, from a barrier CSV.
    BarrierVsAlpha,
    /// `B` per slope and series, from a sweep CSV.
    BarrierVsSlope,
    /// Normalized `B̄` per dataset and series, from a sweep CSV.
    BarrierVsDataset,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::BarrierVsAlpha, PlotKind::BarrierVsSlope, PlotKind::BarrierVsDataset];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::BarrierVsAlpha => "barrier-vs-alpha",
            PlotKind::BarrierVsSlope => "barrier-vs-slope",
            PlotKind::BarrierVsDataset => "barrier-vs-dataset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

struct Series {
    name: String,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    /// Tick labels for a categorical x axis; x values are then indices.
    categories: Option<Vec<String>>,
    series: Vec<Series>,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Plot(msg.into())
}

fn num(s: &str, what: &str) -> Result<f64, HarnessError> {
    s.trim().parse().map_err(|_| bad(format!("{what}: `{s}` is not a number")))
}

fn alpha_figure(csv: &str) -> Result<Figure, HarnessError> {
    let mut lines = csv.lines();
    if !lines.next().is_some_and(|h| h.starts_with(BARRIER_HEADER)) {
        return Err(bad("expected a barrier CSV"));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| l.starts_with("grid,")) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 4 {
            return Err(bad(format!("short row `{line}`")));
        }
        rows.push((num(f[1], "alpha")?, num(f[2], "train_error")?, num(f[3], "test_error")?));
    }
    if rows.len() < 2 {
        return Err(bad("need at least two grid rows"));
    }
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    let base_train = 0.5 * (first.1 + last.1);
    let base_test = 0.5 * (first.2 + last.2);
    Ok(Figure {
        title: "error along the linear path".into(),
        x_label: "alpha".into(),
        y_label: "excess error".into(),
        categories: None,
        series: vec![
            Series {
                name: "test".into(),
                dashed: false,
                points: rows.iter().map(|r| (r.0, r.2 - base_test)).collect(),
            },
            Series {
                name: "train".into(),
                dashed: true,
                points: rows.iter().map(|r| (r.0, r.1 - base_train)).collect(),
            },
        ],
    })
}

struct SweepRecord {
    series: String,
    value: String,
    b_train: f64,
    b_test: f64,
    nb_train: f64,
    nb_test: f64,
}

fn sweep_records(csv: &str) -> Result<Vec<SweepRecord>, HarnessError> {
    let mut lines = csv.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err(bad("expected a sweep CSV"));
    }
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != SWEEP_HEADER.split(',').count() {
            return Err(bad(format!("malformed row `{line}`")));
        }
        if f[13] != "ok" || f[12] == "1" {
            continue;
        }
        out.push(SweepRecord {
            series: f[1].to_string(),
            value: f[3].to_string(),
            b_train: num(f[5], "b_train")?,
            b_test: num(f[6], "b_test")?,
            nb_train: num(f[7], "nb_train")?,
            nb_test: num(f[8], "nb_test")?,
        });
    }
    Ok(out)
}

/// Mean of `y` over repeats, per (series, x) in first-seen order.
fn group(records: &[SweepRecord], x: impl Fn(&SweepRecord) -> Result<f64, HarnessError>, y: fn(&SweepRecord) -> f64) -> Result<Vec<(String, Vec<(f64, f64)>)>, HarnessError> {
    let mut out: Vec<(String, Vec<(f64, f64, usize)>)> = Vec::new();
    for r in records {
        let xv = x(r)?;
        let idx = match out.iter().position(|(s, _)| *s == r.series) {
            Some(i) => i,
            None => {
                out.push((r.series.clone(), Vec::new()));
                out.len() - 1
            }
        };
        let pts = &mut out[idx].1;
        match pts.iter_mut().find(|p| p.0 == xv) {
            Some(p) => {
                p.1 += y(r);
                p.2 += 1;
            }
            None => pts.push((xv, y(r), 1)),
        }
    }
    Ok(out
        .into_iter()
        .map(|(s, pts)| (s, pts.into_iter().map(|(x, y, n)| (x, y / n as f64)).collect()))
        .collect())
}

fn slope_figure(csv: &str) -> Result<Figure, HarnessError> {
    let records = sweep_records(csv)?;
    let mut series = Vec::new();
    for (name, pts) in group(&records, |r| num(&r.value, "slope"), |r| r.b_test)? {
        series.push(Series {
            name: format!("{name} test"),
            dashed: false,
            points: pts,
        });
    }
    for (name, pts) in group(&records, |r| num(&r.value, "slope"), |r| r.b_train)? {
        series.push(Series {
            name: format!("{name} train"),
            dashed: true,
            points: pts,
        });
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(Figure {
        title: "barrier vs negative slope".into(),
        x_label: "slope p".into(),
        y_label: "barrier B".into(),
        categories: None,
        series,
    })
}

fn dataset_figure(csv: &str) -> Result<Figure, HarnessError> {
    let records = sweep_records(csv)?;
    let mut categories: Vec<String> = Vec::new();
    for r in &records {
        if !categories.contains(&r.value) {
            categories.push(r.value.clone());
        }
    }
    let index = |r: &SweepRecord| Ok(categories.iter().position(|c| *c == r.value).expect("seen") as f64);
    let mut series = Vec::new();
    for (name, pts) in group(&records, index, |r| r.nb_test)? {
        series.push(Series {
            name: format!("{name} test"),
            dashed: false,
            points: pts,
        });
    }
    for (name, pts) in group(&records, index, |r| r.nb_train)? {
        series.push(Series {
            name: format!("{name} train"),
            dashed: true,
            points: pts,
        });
    }
    Ok(Figure {
        title: "normalized barrier vs dataset".into(),
        x_label: "dataset".into(),
        y_label: "normalized barrier".into(),
        categories: Some(categories),
        series,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(fig: &Figure) -> Result<String, HarnessError> {
    let all: Vec<(f64, f64)> = fig.series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(bad("nothing to plot"));
    }
    if all.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(bad("non-finite value"));
    }
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all.iter().fold((0.0f64, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if let Some(c) = &fig.categories {
        x0 = -0.5;
        x1 = c.len() as f64 - 0.5;
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-3 {
        y1 = y0 + 0.01;
    }
    y1 += 0.05 * (y1 - y0);
    y0 = y0.min(0.0);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&fig.title)).unwrap();
    // axes
    writeln!(
        s,
        r#"<path d="M{LEFT:.2},{TOP:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    )
    .unwrap();
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"##,
            LEFT,
            sy(y),
            LEFT + pw,
            sy(y),
            LEFT - 6.0,
            sy(y) + 4.0,
            y
        )
        .unwrap();
    }
    match &fig.categories {
        Some(c) => {
            for (i, name) in c.iter().enumerate() {
                writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    sx(i as f64),
                    TOP + ph + 18.0,
                    escape(name)
                )
                .unwrap();
            }
        }
        None => {
            for i in 0..=5 {
                let x = x0 + (x1 - x0) * i as f64 / 5.0;
                writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.2}</text>"#,
                    sx(x),
                    TOP + ph + 18.0,
                    x
                )
                .unwrap();
            }
        }
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(&fig.x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&fig.y_label)
    )
    .unwrap();
    for (i, series) in fig.series.iter().enumerate() {
        let color = COLORS[(i % (fig.series.len().div_ceil(2).max(1))) % COLORS.len()];
        let dash = if series.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let pts: Vec<String> = series.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = TOP + 14.0 + 18.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw + 10.0,
            LEFT + pw + 34.0,
            LEFT + pw + 40.0,
            ly + 4.0,
            escape(&series.name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders a barrier CSV (`barrier-vs-alpha`) or a sweep CSV (the other
/// kinds) as a standalone SVG. Output bytes depend only on the input.
pub fn emit_plot(csv: &str, kind: PlotKind) -> Result<String, HarnessError> {
    let fig = match kind {
        PlotKind::BarrierVsAlpha => alpha_figure(csv)?,
        PlotKind::BarrierVsSlope => slope_figure(csv)?,
        PlotKind::BarrierVsDataset => dataset_figure(csv)?,
    };
    render(&fig)
}

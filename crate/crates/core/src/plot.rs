//! Static SVG 1.1 charts: grouped bars for evaluation reports, lines for series.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, Metric};
use crate::lv::Trajectory;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Bars,
    Lines,
}

pub enum PlotSource<'a> {
    Report(&'a EvalReport, Metric),
    Trajectory(&'a Trajectory),
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rounded tick step giving roughly five intervals over `span`.
fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

struct Frame {
    svg: String,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(title: &str, y_label: &str, x_label: &str, y_min: f64, y_max: f64) -> Self {
        let (y_min, y_max) = if y_max > y_min { (y_min, y_max) } else { (y_min - 1.0, y_max + 1.0) };
        let step = nice_step(y_max - y_min);
        let y_min = (y_min / step).floor() * step;
        let y_max = (y_max / step).ceil() * step;
        let mut svg = String::new();
        let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="28" text-anchor="middle" font-size="18">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        let plot_h = HEIGHT - TOP - BOTTOM;
        let mut v = y_min;
        while v <= y_max + step * 1e-9 {
            let y = TOP + plot_h * (1.0 - (v - y_min) / (y_max - y_min));
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                WIDTH - RIGHT
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                tick_label(v, step)
            );
            v += step;
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
            HEIGHT - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
            HEIGHT - BOTTOM,
            WIDTH - RIGHT,
            HEIGHT - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="14" transform="rotate(-90 20 {:.2})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(y_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        );
        Frame { svg, y_min, y_max }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - (v - self.y_min) / (self.y_max - self.y_min))
    }

    fn legend(&mut self, names: &[String]) {
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 10.0 + 22.0 * i as f64;
            let x = WIDTH - RIGHT + 15.0;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="14" height="14" fill="{}"/>"#,
                y - 11.0,
                PALETTE[i % PALETTE.len()]
            );
            let _ = writeln!(
                self.svg,
                r#"<text x="{:.2}" y="{y:.2}" font-size="13">{}</text>"#,
                x + 20.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// One bar group per split, one bar per model, bar height = mean of `metric`.
pub fn bar_chart_svg(report: &EvalReport, metric: Metric) -> Result<String> {
    let splits = report.splits();
    let models = report.models();
    if splits.is_empty() || models.is_empty() {
        return Err(Error::InvalidInput("cannot plot an empty report".into()));
    }
    let max = report
        .records
        .iter()
        .filter(|r| r.metric == metric)
        .filter_map(|r| r.mean.map(|m| m + r.std_dev.unwrap_or(0.0)))
        .fold(0.0, f64::max);
    let mut frame = Frame::new(
        &format!("{} by train-test split", metric.name()),
        metric.name(),
        "Train-test split",
        0.0,
        if max > 0.0 { max } else { 1.0 },
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let group_w = plot_w / splits.len() as f64;
    let bar_w = group_w * 0.8 / models.len() as f64;
    for (g, split) in splits.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w + group_w * 0.1;
        let _ = writeln!(
            frame.svg,
            r#"<g class="split" data-split="{split}">"#
        );
        for (m, model) in models.iter().enumerate() {
            let Some(rec) = report.record(*model, *split, metric) else { continue };
            let Some(mean) = rec.mean else { continue };
            let x = gx + m as f64 * bar_w;
            let y = frame.y(mean);
            let base = frame.y(0.0);
            let _ = writeln!(
                frame.svg,
                r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {}: {:.3}</title></rect>"#,
                bar_w * 0.9,
                base - y,
                PALETTE[m % PALETTE.len()],
                escape(&rec.model_name),
                split,
                mean
            );
            if let Some(sd) = rec.std_dev.filter(|s| *s > 0.0) {
                let cx = x + bar_w * 0.45;
                let _ = writeln!(
                    frame.svg,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    frame.y(mean + sd),
                    frame.y((mean - sd).max(0.0))
                );
            }
        }
        let _ = writeln!(frame.svg, "</g>");
        let _ = writeln!(
            frame.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{split}</text>"#,
            gx + group_w * 0.4,
            HEIGHT - BOTTOM + 18.0
        );
    }
    let names: Vec<String> = models.iter().map(|m| m.name().to_string()).collect();
    frame.legend(&names);
    Ok(frame.finish())
}

/// Polylines sharing one x axis.
pub fn line_chart_svg(title: &str, x_label: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> Result<String> {
    if xs.is_empty() || series.is_empty() || series.iter().any(|(_, ys)| ys.len() != xs.len()) {
        return Err(Error::InvalidInput("line chart needs non-empty, equally long series".into()));
    }
    let all = series.iter().flat_map(|(_, ys)| ys.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let mut frame = Frame::new(title, "value", x_label, lo, hi);
    let x0 = xs[0];
    let x1 = xs[xs.len() - 1];
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    for (i, (_, ys)) in series.iter().enumerate() {
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| format!("{:.2},{:.2}", LEFT + plot_w * (x - x0) / span, frame.y(*y)))
            .collect();
        let _ = writeln!(
            frame.svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            points.join(" ")
        );
    }
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            frame.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}" font-size="12">{}</text>"#,
            LEFT + plot_w * (v - x0) / span,
            HEIGHT - BOTTOM + 18.0,
            tick_label(v, 0.01)
        );
    }
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    frame.legend(&names);
    Ok(frame.finish())
}

pub fn render(source: &PlotSource<'_>, kind: PlotKind) -> Result<String> {
    match (source, kind) {
        (PlotSource::Report(report, metric), PlotKind::Bars) => bar_chart_svg(report, *metric),
        (PlotSource::Report(report, metric), PlotKind::Lines) => {
            let splits = report.splits();
            let xs: Vec<f64> = splits.iter().map(|s| s.train_percent as f64).collect();
            let series = report
                .models()
                .into_iter()
                .map(|m| {
                    let ys = splits
                        .iter()
                        .map(|s| report.record(m, *s, *metric).and_then(|r| r.mean).unwrap_or(f64::NAN))
                        .collect();
                    (m.name().to_string(), ys)
                })
                .filter(|(_, ys): &(String, Vec<f64>)| ys.iter().all(|v| v.is_finite()))
                .collect::<Vec<_>>();
            line_chart_svg(&format!("{} by train share (%)", metric.name()), "train share (%)", &xs, &series)
        }
        (PlotSource::Trajectory(traj), PlotKind::Lines) => {
            let ts: Vec<f64> = (0..traj.len()).map(|i| traj.time(i)).collect();
            line_chart_svg(
                "Lotka-Volterra trajectory",
                "t",
                &ts,
                &[("prey x".to_string(), traj.xs()), ("predator y".to_string(), traj.ys())],
            )
        }
        (PlotSource::Trajectory(_), PlotKind::Bars) => {
            Err(Error::InvalidInput("trajectories are plotted as lines".into()))
        }
    }
}

/// Render and write atomically; nothing is written when rendering fails.
pub fn emit_plot(source: &PlotSource<'_>, kind: PlotKind, path: impl AsRef<Path>) -> Result<()> {
    let svg = render(source, kind)?;
    write_atomic(path, svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{DatasetFingerprint, EvalRecord, ExperimentConfig, ModelKind, SplitSpec};
    use crate::lv::{integrate_rk4, LvParams, LvState};

    fn report() -> EvalReport {
        let mut records = Vec::new();
        for split in [SplitSpec::new(90).unwrap(), SplitSpec::new(80).unwrap()] {
            for (i, model) in [ModelKind::Vanya, ModelKind::Persistence].into_iter().enumerate() {
                for metric in [Metric::Rmse, Metric::Mae] {
                    records.push(EvalRecord {
                        model,
                        model_name: model.name().into(),
                        split,
                        metric,
                        train_count: 9,
                        test_count: 1,
                        seeds: vec![0, 1],
                        values: vec![100.0 + i as f64, 120.0],
                        failures: vec![],
                        mean: Some(110.0 + i as f64),
                        std_dev: Some(14.0),
                        single_run: false,
                    });
                }
            }
        }
        EvalReport {
            format_version: 1,
            tool_version: "t".into(),
            dataset: DatasetFingerprint {
                length: 10,
                first_year: 1,
                last_year: 10,
                sha256: String::new(),
            },
            config: ExperimentConfig::default(),
            records,
        }
    }

    #[test]
    fn bars_have_one_group_per_split_and_bar_per_model() {
        let svg = bar_chart_svg(&report(), Metric::Rmse).unwrap();
        assert_eq!(svg.matches("class=\"split\"").count(), 2);
        assert_eq!(svg.matches("class=\"bar\"").count(), 4);
        assert!(svg.starts_with("<?xml"));
        assert_eq!(svg, bar_chart_svg(&report(), Metric::Rmse).unwrap());
    }

    #[test]
    fn empty_report_writes_nothing() {
        let mut r = report();
        r.records.clear();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.svg");
        assert!(emit_plot(&PlotSource::Report(&r, Metric::Mae), PlotKind::Bars, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn trajectory_lines() {
        let traj = integrate_rk4(&LvParams::default(), LvState::new(10.0, 5.0), 0.1, 100).unwrap();
        let svg = render(&PlotSource::Trajectory(&traj), PlotKind::Lines).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(render(&PlotSource::Trajectory(&traj), PlotKind::Bars).is_err());
        let lines = render(&PlotSource::Report(&report(), Metric::Rmse), PlotKind::Lines).unwrap();
        assert_eq!(lines.matches("<polyline").count(), 2);
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(100.0), 20.0);
        assert_eq!(nice_step(3.0), 1.0);
    }
}

//! Standalone SVG figures: accuracy with phase shading, measure curves,
//! pairwise heatmaps.

use std::fs;
use std::path::Path;

use plotters::prelude::*;
use plotters::style::colors::colormaps::ViridisRGB;

use crate::report::DiagnosticReport;
use crate::CliError;

type DrawResult<T> = Result<T, Box<dyn std::error::Error>>;

const PHASE_FILLS: [RGBColor; 4] =
    [RGBColor(230, 230, 250), RGBColor(255, 239, 213), RGBColor(224, 255, 224), RGBColor(255, 228, 225)];
const LINE_COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn draw_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn epoch_range(report: &DiagnosticReport) -> (f64, f64) {
    let first = report.table.first().map_or(1, |r| r.epoch).max(1) as f64;
    let last = report.table.last().map_or(2, |r| r.epoch) as f64;
    (first, last.max(first + 1.0))
}

fn points(report: &DiagnosticReport, name: &str) -> Vec<(f64, f64)> {
    report
        .epochs()
        .into_iter()
        .zip(report.series(name))
        .filter_map(|(e, v)| v.filter(|v| v.is_finite()).map(|v| (e.max(1) as f64, v)))
        .collect()
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    report: &DiagnosticReport,
    title: &str,
    names: &[&str],
    shade: bool,
) -> DrawResult<()>
where
    DB::ErrorType: 'static,
{
    let (x0, x1) = epoch_range(report);
    let series: Vec<(&str, Vec<(f64, f64)>)> =
        names.iter().map(|n| (*n, points(report, n))).filter(|(_, p)| !p.is_empty()).collect();
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d((x0..x1).log_scale(), (lo - pad)..(hi + pad))?;
    chart.configure_mesh().x_desc("epoch").draw()?;
    if shade {
        for (i, p) in report.phases.iter().enumerate() {
            let fill = PHASE_FILLS[i % PHASE_FILLS.len()].filled();
            let (a, b) = ((p.start.max(1) as f64).max(x0), (p.end as f64).min(x1));
            chart
                .draw_series(std::iter::once(Rectangle::new([(a, lo - pad), (b, hi + pad)], fill)))?
                .label(p.label.as_str());
        }
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    Ok(())
}

fn accuracy(report: &DiagnosticReport, path: &Path) -> DrawResult<()> {
    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    panel(
        &root,
        report,
        &format!("accuracy ({:?} phases)", report.phase_kind),
        &["train_acc", "test_acc", "train_acc_clean", "probe_train_acc", "probe_test_acc"],
        true,
    )?;
    root.present()?;
    Ok(())
}

fn measures(report: &DiagnosticReport, path: &Path) -> DrawResult<()> {
    let root = SVGBackend::new(path, (900, 1200)).into_drawing_area();
    root.fill(&WHITE)?;
    let areas = root.split_evenly((4, 1));
    panel(&areas[0], report, "critical dimension", &["n_crit_train", "n_crit_test"], true)?;
    panel(&areas[1], report, "GLUE geometry (train)", &["d_train", "r_train", "rho_c_train", "rho_a_train"], false)?;
    panel(&areas[2], report, "NTK-label alignment", &["align_train", "align_test", "align_train_noisy"], true)?;
    panel(&areas[3], report, "linear probe", &["probe_train_acc", "probe_test_acc"], true)?;
    root.present()?;
    Ok(())
}

fn heatmap(matrix: &[Vec<f64>], title: &str, path: &Path) -> DrawResult<()> {
    let n = matrix.len();
    let root = SVGBackend::new(path, (640, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let max = matrix.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max).max(1e-12);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(0..n, 0..n)?;
    chart.configure_mesh().disable_mesh().x_desc("class").y_desc("class").draw()?;
    chart.draw_series(matrix.iter().enumerate().flat_map(|(i, row)| {
        row.iter().enumerate().map(move |(j, &v)| {
            let c = ViridisRGB::get_color(if v.is_finite() { v / max } else { 1.0 });
            Rectangle::new([(j, i), (j + 1, i + 1)], c.filled())
        })
    }))?;
    root.present()?;
    Ok(())
}

pub fn write_plots(report: &DiagnosticReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| draw_err(dir, e))?;
    let p = dir.join("accuracy.svg");
    accuracy(report, &p).map_err(|e| draw_err(&p, e))?;
    let p = dir.join("measures.svg");
    measures(report, &p).map_err(|e| draw_err(&p, e))?;
    for m in &report.pairwise {
        let p = dir.join(format!("pairwise_{}_{}.svg", m.epoch, m.split));
        heatmap(&m.matrix, &format!("pairwise n_crit, epoch {} ({})", m.epoch, m.split), &p)
            .map_err(|e| draw_err(&p, e))?;
    }
    Ok(())
}

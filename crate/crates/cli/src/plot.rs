//! SVG learning curves: training loss and validation accuracy per epoch.

use std::fs;
use std::path::{Path, PathBuf};

use gradlab::{Error, OptimizerKind, Result};
use plotters::prelude::*;

use crate::report::{read_metrics, MetricRow};

const SIZE: (u32, u32) = (720, 480);

/// One line per optimizer, in first-appearance order.
fn series(
    rows: &[MetricRow],
    value: impl Fn(&MetricRow) -> f64,
) -> Vec<(OptimizerKind, Vec<(f64, f64)>)> {
    let mut out: Vec<(OptimizerKind, Vec<(f64, f64)>)> = Vec::new();
    for row in rows {
        let Some(epoch) = row.epoch else { continue };
        let idx = match out.iter().position(|(k, _)| *k == row.optimizer) {
            Some(i) => i,
            None => {
                out.push((row.optimizer, Vec::new()));
                out.len() - 1
            }
        };
        let v = value(row);
        if v.is_finite() {
            out[idx].1.push((epoch as f64, v));
        }
    }
    out
}

fn draw_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Format(format!("plot: {e:?}"))
}

/// Renders one panel as an SVG document.
pub fn render_panel(
    title: &str,
    y_label: &str,
    lines: &[(OptimizerKind, Vec<(f64, f64)>)],
) -> Result<String> {
    let points = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-9);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
            .map_err(draw_err)?;
        chart
            .configure_mesh()
            .x_desc("epoch")
            .y_desc(y_label)
            .draw()
            .map_err(draw_err)?;
        for (i, (kind, pts)) in lines.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(draw_err)?
                .label(kind.name())
                .legend(move |(x, y)| {
                    PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
                });
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

/// Loss and accuracy panels for already parsed rows.
pub fn render_panels(rows: &[MetricRow]) -> Result<[(String, String); 2]> {
    let loss = render_panel("Training loss", "loss", &series(rows, |r| r.train_loss))?;
    let acc = render_panel(
        "Validation accuracy",
        "accuracy",
        &series(rows, |r| r.val_accuracy),
    )?;
    Ok([("loss.svg".into(), loss), ("accuracy.svg".into(), acc)])
}

/// Reads a metrics CSV and writes `loss.svg` and `accuracy.svg` into `out`.
pub fn emit_plots(csv: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_metrics(csv)?;
    let panels = render_panels(&rows)?;
    fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (name, svg) in panels {
        let path = out.join(name);
        fs::write(&path, svg).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: Option<usize>, loss: f64) -> MetricRow {
        MetricRow {
            optimizer: OptimizerKind::Adam,
            epoch,
            train_loss: loss,
            val_accuracy: 0.5,
            elapsed_seconds: 0.0,
        }
    }

    #[test]
    fn test_rows_are_not_plotted() {
        let rows = [row(Some(0), 2.0), row(Some(1), 1.0), row(None, 9.0)];
        let s = series(&rows, |r| r.train_loss);
        assert_eq!(s, vec![(OptimizerKind::Adam, vec![(0.0, 2.0), (1.0, 1.0)])]);
    }

    #[test]
    fn panels_are_svg_with_a_legend() {
        let rows = [row(Some(0), 2.0), row(Some(1), f64::NAN)];
        let [(_, loss), (_, acc)] = render_panels(&rows).unwrap();
        for svg in [&loss, &acc] {
            assert!(svg.starts_with("<svg"));
            assert!(svg.contains("adam"));
        }
    }
}

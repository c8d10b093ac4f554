//! CSV output and the summary table.
//!
//! `metrics.csv` has one row per optimizer and epoch, followed by one row per
//! optimizer whose `epoch` field is `test`:
//!
//! ```text
//! optimizer,epoch,train_loss,val_accuracy,elapsed_seconds
//! sgd,0,2.2876,0.142,3.118220
//! sgd,test,2.1904,0.171,31.904417
//! ```
//!
//! On `test` rows the loss and accuracy columns hold the test-set values.
//! Accuracy is 0 for the analytic functions.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gradlab::{Error, OptimizerKind, Result};

use crate::harness::RunReport;

pub const METRICS_HEADER: [&str; 5] = [
    "optimizer",
    "epoch",
    "train_loss",
    "val_accuracy",
    "elapsed_seconds",
];
pub const SUMMARY_HEADER: [&str; 4] = ["optimizer", "test_accuracy", "test_loss", "time_seconds"];
pub const TEST_EPOCH: &str = "test";

fn num(v: f64) -> String {
    format!("{v}")
}

fn secs(v: f64) -> String {
    format!("{v:.6}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn write_metrics<W: Write>(out: W, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for run in &report.runs {
        for e in &run.epochs {
            w.write_record([
                run.kind.name().to_string(),
                e.epoch.to_string(),
                num(e.train_loss),
                num(e.val_accuracy),
                secs(e.elapsed_seconds),
            ])
            .map_err(csv_err)?;
        }
    }
    for run in &report.runs {
        w.write_record([
            run.kind.name().to_string(),
            TEST_EPOCH.to_string(),
            num(run.test.test_loss),
            num(run.test.test_accuracy),
            secs(run.test.elapsed_seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

pub fn metrics_csv(report: &RunReport) -> String {
    let mut buf = Vec::new();
    write_metrics(&mut buf, report).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn summary_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("writing to memory");
    for run in &report.runs {
        w.write_record([
            run.kind.name().to_string(),
            num(run.test.test_accuracy),
            num(run.test.test_loss),
            secs(run.test.elapsed_seconds),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
}

/// Plain-text table of the test results, one line per optimizer.
pub fn summary_table(report: &RunReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:>10} {:>12} {:>10}",
        "optimizer", "test_acc", "test_loss", "time_s"
    )
    .unwrap();
    for run in &report.runs {
        writeln!(
            s,
            "{:<10} {:>10.4} {:>12.6} {:>10.2}{}",
            run.kind.name(),
            run.test.test_accuracy,
            run.test.test_loss,
            run.test.elapsed_seconds,
            if run.diverged { "  (diverged)" } else { "" }
        )
        .unwrap();
    }
    s
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub table: PathBuf,
}

pub fn write_outputs(dir: &Path, report: &RunReport) -> Result<OutputFiles> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = OutputFiles {
        metrics: dir.join("metrics.csv"),
        summary: dir.join("summary.csv"),
        table: dir.join("summary.txt"),
    };
    fs::write(&files.metrics, metrics_csv(report)).map_err(io_err(&files.metrics))?;
    fs::write(&files.summary, summary_csv(report)).map_err(io_err(&files.summary))?;
    fs::write(&files.table, summary_table(report)).map_err(io_err(&files.table))?;
    Ok(files)
}

/// One parsed row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub optimizer: OptimizerKind,
    /// `None` on `test` rows.
    pub epoch: Option<usize>,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub elapsed_seconds: f64,
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: {column} {field:?} is not a number")))
}

/// Parses a metrics CSV. Fails with a format error on a wrong header, a
/// malformed row or a file without data rows.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format(format!(
            "expected header {:?}, found {:?}",
            METRICS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let optimizer: OptimizerKind = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: unknown optimizer {:?}", &rec[0])))?;
        let epoch = match &rec[1] {
            TEST_EPOCH => None,
            e => Some(e.parse().map_err(|_| {
                Error::Format(format!("line {line}: epoch {e:?} is not an integer"))
            })?),
        };
        rows.push(MetricRow {
            optimizer,
            epoch,
            train_loss: parse_f64(&rec[2], line, "train_loss")?,
            val_accuracy: parse_f64(&rec[3], line, "val_accuracy")?,
            elapsed_seconds: parse_f64(&rec[4], line, "elapsed_seconds")?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Format("metrics file has no data rows".into()));
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_metrics(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Metrics CSV without the `elapsed_seconds` column, for comparing runs.
pub fn without_timing(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| match l.rfind(',') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{EpochRecord, OptimizerRun, TestRecord};

    fn report() -> RunReport {
        let run = |kind, acc: f64| OptimizerRun {
            kind,
            epochs: (0..3)
                .map(|epoch| EpochRecord {
                    epoch,
                    train_loss: 1.0 / (epoch + 1) as f64,
                    val_accuracy: acc,
                    elapsed_seconds: epoch as f64 * 0.5,
                })
                .collect(),
            test: TestRecord {
                test_loss: 0.25,
                test_accuracy: acc,
                elapsed_seconds: 2.0,
            },
            diverged: false,
        };
        RunReport {
            runs: vec![run(OptimizerKind::Sgd, 0.5), run(OptimizerKind::Iagd, 0.0)],
        }
    }

    #[test]
    fn header_and_row_layout() {
        let text = metrics_csv(&report());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "optimizer,epoch,train_loss,val_accuracy,elapsed_seconds"
        );
        assert_eq!(lines[1], "sgd,0,1,0.5,0.000000");
        assert_eq!(lines[4], "iagd,0,1,0,0.000000");
        assert_eq!(lines[7], "sgd,test,0.25,0.5,2.000000");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn parse_round_trip() {
        let rows = parse_metrics(&metrics_csv(&report())).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[2].epoch, Some(2));
        assert_eq!(rows[2].train_loss, 1.0 / 3.0);
        assert_eq!(rows[3].val_accuracy, 0.0);
        assert_eq!(rows[7].epoch, None);
    }

    #[test]
    fn nan_survives_round_trip() {
        let mut r = report();
        r.runs[0].epochs[1].train_loss = f64::NAN;
        let rows = parse_metrics(&metrics_csv(&r)).unwrap();
        assert!(rows[1].train_loss.is_nan());
    }

    #[test]
    fn malformed_inputs_are_format_errors() {
        for text in [
            "",
            "optimizer,epoch,train_loss,val_accuracy,elapsed_seconds\n",
            "a,b,c\n1,2,3\n",
            "optimizer,epoch,train_loss,val_accuracy,elapsed_seconds\nsgd,0,x,0.5,1\n",
            "optimizer,epoch,train_loss,val_accuracy,elapsed_seconds\nfoo,0,1,0.5,1\n",
            "optimizer,epoch,train_loss,val_accuracy,elapsed_seconds\nsgd,0,1,0.5\n",
        ] {
            assert_eq!(
                parse_metrics(text).unwrap_err().kind(),
                "format",
                "{text:?}"
            );
        }
    }

    #[test]
    fn timing_is_stripped() {
        let a = "h,t\nx,1.0\n";
        let b = "h,t\nx,2.5\n";
        assert_eq!(without_timing(a), without_timing(b));
    }

    #[test]
    fn summary_lists_each_optimizer() {
        let s = summary_csv(&report());
        assert_eq!(
            s.lines().next().unwrap(),
            "optimizer,test_accuracy,test_loss,time_seconds"
        );
        assert_eq!(s.lines().nth(2).unwrap(), "iagd,0,0.25,2.000000");
        assert_eq!(summary_table(&report()).lines().count(), 3);
    }
}

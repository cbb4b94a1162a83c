//! JSON-lines task files.
//!
//! The first line is a header object; each following line is one task:
//!
//! ```text
//! {"format":"niert-tasks","version":1}
//! {"d_x":1,"d_y":1,"source_id":"…","observed":[[[x…],…],[[y…],…]],"targets":[[x…],…],"truth":[[y…],…]}
//! ```
//!
//! `observed` is the pair (positions, values). Numbers are written with 17
//! significant digits so a parse/serialize cycle reproduces the bytes.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{NiertError, Result};
use crate::taskgen::task::{InterpolationTask, ScatteredPoint};

pub const FORMAT_NAME: &str = "niert-tasks";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    d_x: usize,
    d_y: usize,
    source_id: String,
    observed: (Vec<Vec<f64>>, Vec<Vec<f64>>),
    targets: Vec<Vec<f64>>,
    truth: Vec<Vec<f64>>,
}

pub fn header_line() -> String {
    format!("{{\"format\":\"{FORMAT_NAME}\",\"version\":{FORMAT_VERSION}}}")
}

/// Formats `v` with 17 significant digits.
pub fn write_number(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

fn write_vector(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_number(out, *v);
    }
    out.push(']');
}

fn write_vectors<'a>(out: &mut String, rows: impl Iterator<Item = &'a [f64]>) {
    out.push('[');
    for (i, r) in rows.enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_vector(out, r);
    }
    out.push(']');
}

/// One task as a single JSON line (no trailing newline).
pub fn task_to_line(task: &InterpolationTask) -> String {
    let mut s = String::with_capacity(64 * (task.n() + task.m()) * task.d_x.max(1));
    write!(
        s,
        "{{\"d_x\":{},\"d_y\":{},\"source_id\":{},\"observed\":[",
        task.d_x,
        task.d_y,
        serde_json::to_string(&task.source_id).expect("string serialization")
    )
    .expect("writing to a String");
    write_vectors(&mut s, task.observed.iter().map(|p| p.x.as_slice()));
    s.push(',');
    write_vectors(&mut s, (0..task.n()).map(|i| task.observed_y(i)));
    s.push_str("],\"targets\":");
    write_vectors(&mut s, task.targets.iter().map(|p| p.x.as_slice()));
    s.push_str(",\"truth\":");
    write_vectors(&mut s, task.target_truth.iter().map(Vec::as_slice));
    s.push('}');
    s
}

pub fn task_from_line(line: &str) -> std::result::Result<InterpolationTask, String> {
    let r: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let (xs, ys) = r.observed;
    if xs.len() != ys.len() {
        return Err(format!("{} observed positions but {} values", xs.len(), ys.len()));
    }
    let task = InterpolationTask {
        observed: xs
            .into_iter()
            .zip(ys)
            .map(|(x, y)| ScatteredPoint::observed(x, y))
            .collect(),
        targets: r.targets.into_iter().map(ScatteredPoint::target).collect(),
        target_truth: r.truth,
        d_x: r.d_x,
        d_y: r.d_y,
        source_id: r.source_id,
    };
    task.validate().map_err(|e| e.to_string())?;
    Ok(task)
}

/// Serializes tasks to a string in the on-disk layout.
pub fn dataset_to_string(tasks: &[InterpolationTask]) -> Result<String> {
    let mut out = header_line();
    out.push('\n');
    for t in tasks {
        t.validate()?;
        out.push_str(&task_to_line(t));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `tasks`, validating each one first.
pub fn write_dataset(tasks: &[InterpolationTask], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for t in tasks {
        t.validate()?;
    }
    let file = File::create(path).map_err(|e| NiertError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| NiertError::io(path, e);
    writeln!(w, "{}", header_line()).map_err(io)?;
    for t in tasks {
        writeln!(w, "{}", task_to_line(t)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<InterpolationTask>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NiertError::io(path, e))?;
    parse_lines(BufReader::new(file), path)
}

pub fn parse_dataset(text: &str) -> Result<Vec<InterpolationTask>> {
    parse_lines(text.as_bytes(), Path::new("<memory>"))
}

fn parse_lines(reader: impl BufRead, path: &Path) -> Result<Vec<InterpolationTask>> {
    let format_err = |line: usize, message: String| NiertError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| NiertError::io(path, e))?,
        None => return Err(format_err(1, "missing header line".into())),
    };
    let h: Header =
        serde_json::from_str(&header).map_err(|e| format_err(1, format!("bad header: {e}")))?;
    if h.format != FORMAT_NAME || h.version != FORMAT_VERSION {
        return Err(format_err(
            1,
            format!("unsupported format {} v{}", h.format, h.version),
        ));
    }
    let mut tasks = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| NiertError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        tasks.push(task_from_line(&line).map_err(|m| format_err(i + 2, m))?);
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> InterpolationTask {
        InterpolationTask {
            observed: vec![
                ScatteredPoint::observed(vec![0.1, -0.0], vec![1.0 / 3.0]),
                ScatteredPoint::observed(vec![-1.0, 1.0], vec![1e-300]),
            ],
            targets: vec![ScatteredPoint::target(vec![0.5, 0.25])],
            target_truth: vec![vec![-7.123456789012345e10]],
            d_x: 2,
            d_y: 1,
            source_id: "quote\"id".into(),
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let s = dataset_to_string(&[]).unwrap();
        assert_eq!(s, format!("{}\n", header_line()));
        assert!(parse_dataset(&s).unwrap().is_empty());
    }

    #[test]
    fn single_task_round_trip() {
        let t = sample();
        let s = dataset_to_string(std::slice::from_ref(&t)).unwrap();
        let back = parse_dataset(&s).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], t);
        assert_eq!(back[0].observed[0].x[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(dataset_to_string(&back).unwrap(), s);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = task_to_line(&sample());
        let text = format!("{}\n{good}\n{{\"d_x\": 1}}\n", header_line());
        match parse_dataset(&text) {
            Err(NiertError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_or_wrong_header() {
        assert!(matches!(parse_dataset(""), Err(NiertError::Format { line: 1, .. })));
        let text = "{\"format\":\"other\",\"version\":1}\n";
        assert!(matches!(parse_dataset(text), Err(NiertError::Format { line: 1, .. })));
    }

    #[test]
    fn invalid_task_rejected_on_write() {
        let mut t = sample();
        t.target_truth[0][0] = f64::INFINITY;
        assert!(dataset_to_string(&[t]).is_err());
    }

    #[test]
    fn io_error_on_missing_file() {
        assert!(matches!(
            read_dataset("/nonexistent/dir/tasks.jsonl"),
            Err(NiertError::Io { .. })
        ));
    }
}

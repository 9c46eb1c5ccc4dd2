//! Detached weight-map snapshots and their CSV interface.
//!
//! Floats are written with 17 significant digits, which round-trips f64
//! exactly through decimal text.

use std::io::{self, BufRead, Write};

use crate::geometry::LocationSet;

/// One in-box location of one object: prior weight, confidence weight,
/// positive confidence, and the normalized positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub location: usize,
    pub g: f64,
    pub c: f64,
    pub p_pos: f64,
    pub w_pos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectReport {
    pub object: usize,
    pub category: usize,
    pub entries: Vec<WeightEntry>,
}

/// Snapshot of one loss evaluation: per-object positive maps plus the
/// global negative weights and max-IoU per location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightReport {
    pub objects: Vec<ObjectReport>,
    pub w_neg: Vec<f64>,
    pub max_iou: Vec<f64>,
}

/// 17 significant digits: exact decimal round-trip for f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const POSITIVE_HEADER: &str = "object_id,level,grid_row,grid_col,g,c,p_pos,w_pos";
pub const NEGATIVE_HEADER: &str = "level,grid_row,grid_col,w_neg,max_iou";

/// One row per (object, in-box location) with the positive-map columns.
pub fn write_positive_csv(
    report: &WeightReport,
    locations: &LocationSet,
    out: &mut impl Write,
) -> io::Result<()> {
    writeln!(out, "{POSITIVE_HEADER}")?;
    for obj in &report.objects {
        for e in &obj.entries {
            let (level, row, col) = locations.grid_position(e.location);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                obj.object,
                level,
                row,
                col,
                format_f64(e.g),
                format_f64(e.c),
                format_f64(e.p_pos),
                format_f64(e.w_pos)
            )?;
        }
    }
    Ok(())
}

/// One row per location with the global negative weight and max IoU.
pub fn write_negative_csv(
    report: &WeightReport,
    locations: &LocationSet,
    out: &mut impl Write,
) -> io::Result<()> {
    writeln!(out, "{NEGATIVE_HEADER}")?;
    for i in 0..locations.len() {
        let (level, row, col) = locations.grid_position(i);
        writeln!(
            out,
            "{},{},{},{},{}",
            level,
            row,
            col,
            format_f64(report.w_neg[i]),
            format_f64(report.max_iou[i])
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveRow {
    pub object: usize,
    pub level: usize,
    pub row: usize,
    pub col: usize,
    pub g: f64,
    pub c: f64,
    pub p_pos: f64,
    pub w_pos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeRow {
    pub level: usize,
    pub row: usize,
    pub col: usize,
    pub w_neg: f64,
    pub max_iou: f64,
}

fn bad(line: usize, detail: &str) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("csv line {line}: {detail}"),
    )
}

pub fn read_positive_csv(input: impl BufRead) -> io::Result<Vec<PositiveRow>> {
    let mut rows = Vec::new();
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        if ln == 0 {
            if line != POSITIVE_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(ln + 1, "expected 8 fields"));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|e| bad(ln + 1, &e.to_string()));
        let u = |s: &str| s.parse::<usize>().map_err(|e| bad(ln + 1, &e.to_string()));
        rows.push(PositiveRow {
            object: u(f[0])?,
            level: u(f[1])?,
            row: u(f[2])?,
            col: u(f[3])?,
            g: p(f[4])?,
            c: p(f[5])?,
            p_pos: p(f[6])?,
            w_pos: p(f[7])?,
        });
    }
    Ok(rows)
}

pub fn read_negative_csv(input: impl BufRead) -> io::Result<Vec<NegativeRow>> {
    let mut rows = Vec::new();
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        if ln == 0 {
            if line != NEGATIVE_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(ln + 1, "expected 5 fields"));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|e| bad(ln + 1, &e.to_string()));
        let u = |s: &str| s.parse::<usize>().map_err(|e| bad(ln + 1, &e.to_string()));
        rows.push(NegativeRow {
            level: u(f[0])?,
            row: u(f[1])?,
            col: u(f[2])?,
            w_neg: p(f[3])?,
            max_iou: p(f[4])?,
        });
    }
    Ok(rows)
}

//! CSV report files. Floats are written with 17 significant digits so every
//! file reads back to identical values.

use std::io::{Read, Write};

use chrono::NaiveDate;
use thiserror::Error;

use crate::format::fmt_f64;
use crate::market_data::SessionLabel;
use crate::moments::{MomentProfile, MomentRow};
use crate::rv::{RvRecord, SignatureCurve, SignaturePoint, ZoneReturns};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("expected header `{expected}`")]
    Header { expected: &'static str },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub const RV_HEADER: &str = "date,session,delta,rv,n_returns";
pub const SIGNATURE_HEADER: &str = "session,delta,mean_rv,day_count";
pub const ZONES_HEADER: &str = "date,r_ms,r_lb,r_as,r_on";
pub const MOMENTS_HEADER: &str = "session,delta,variance,kurtosis,m6,count,se_var,se_kurt,se_m6";

pub fn write_rv_table<W: Write>(mut out: W, records: &[RvRecord]) -> std::io::Result<()> {
    writeln!(out, "{RV_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.date, r.session, r.delta, fmt_f64(r.rv), r.n_returns)?;
    }
    Ok(())
}

pub fn write_signature<W: Write>(mut out: W, curves: &[SignatureCurve]) -> std::io::Result<()> {
    writeln!(out, "{SIGNATURE_HEADER}")?;
    for c in curves {
        for p in &c.points {
            writeln!(out, "{},{},{},{}", c.session, p.delta, fmt_f64(p.mean_rv), p.day_count)?;
        }
    }
    Ok(())
}

pub fn write_zones<W: Write>(mut out: W, zones: &[ZoneReturns]) -> std::io::Result<()> {
    writeln!(out, "{ZONES_HEADER}")?;
    for z in zones {
        let on = z.r_on.map(fmt_f64).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", z.date, fmt_f64(z.r_ms), fmt_f64(z.r_lb), fmt_f64(z.r_as), on)?;
    }
    Ok(())
}

pub fn write_moments<W: Write>(mut out: W, profiles: &[MomentProfile]) -> std::io::Result<()> {
    writeln!(out, "{MOMENTS_HEADER}")?;
    for p in profiles {
        for r in &p.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.session,
                r.delta,
                fmt_f64(r.variance),
                fmt_f64(r.kurtosis),
                fmt_f64(r.m6),
                r.count,
                fmt_f64(r.se_var),
                fmt_f64(r.se_kurt),
                fmt_f64(r.se_m6)
            )?;
        }
    }
    Ok(())
}

struct Rows<R: Read> {
    rdr: csv::Reader<R>,
    line: usize,
}

impl<R: Read> Rows<R> {
    fn open(input: R, expected: &'static str) -> Result<Self, ReportError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if header != expected {
            return Err(ReportError::Header { expected });
        }
        Ok(Self { rdr, line: 1 })
    }

    fn next(&mut self) -> Result<Option<csv::StringRecord>, ReportError> {
        let mut rec = csv::StringRecord::new();
        self.line += 1;
        Ok(if self.rdr.read_record(&mut rec)? { Some(rec) } else { None })
    }

    fn field<T: std::str::FromStr>(&self, rec: &csv::StringRecord, i: usize) -> Result<T, ReportError> {
        let raw =
            rec.get(i).ok_or_else(|| ReportError::Parse { line: self.line, reason: format!("missing column {i}") })?;
        raw.parse()
            .map_err(|_| ReportError::Parse { line: self.line, reason: format!("cannot parse `{raw}` in column {i}") })
    }

    fn label(&self, rec: &csv::StringRecord, i: usize) -> Result<SessionLabel, ReportError> {
        self.field::<String>(rec, i)?.parse().map_err(|reason| ReportError::Parse { line: self.line, reason })
    }
}

pub fn read_rv_table<R: Read>(input: R) -> Result<Vec<RvRecord>, ReportError> {
    let mut rows = Rows::open(input, RV_HEADER)?;
    let mut out = Vec::new();
    while let Some(rec) = rows.next()? {
        out.push(RvRecord {
            date: rows.field::<NaiveDate>(&rec, 0)?,
            session: rows.label(&rec, 1)?,
            delta: rows.field(&rec, 2)?,
            rv: rows.field(&rec, 3)?,
            n_returns: rows.field(&rec, 4)?,
        });
    }
    Ok(out)
}

pub fn read_signature<R: Read>(input: R) -> Result<Vec<SignatureCurve>, ReportError> {
    let mut rows = Rows::open(input, SIGNATURE_HEADER)?;
    let mut out: Vec<SignatureCurve> = Vec::new();
    while let Some(rec) = rows.next()? {
        let session = rows.label(&rec, 0)?;
        let point = SignaturePoint {
            delta: rows.field(&rec, 1)?,
            mean_rv: rows.field(&rec, 2)?,
            day_count: rows.field(&rec, 3)?,
        };
        match out.last_mut() {
            Some(c) if c.session == session => c.points.push(point),
            _ => out.push(SignatureCurve { session, points: vec![point] }),
        }
    }
    Ok(out)
}

pub fn read_zones<R: Read>(input: R) -> Result<Vec<ZoneReturns>, ReportError> {
    let mut rows = Rows::open(input, ZONES_HEADER)?;
    let mut out = Vec::new();
    while let Some(rec) = rows.next()? {
        let on = rec.get(4).unwrap_or("");
        out.push(ZoneReturns {
            date: rows.field(&rec, 0)?,
            r_ms: rows.field(&rec, 1)?,
            r_lb: rows.field(&rec, 2)?,
            r_as: rows.field(&rec, 3)?,
            r_on: if on.is_empty() { None } else { Some(rows.field(&rec, 4)?) },
            boundaries: [f64::NAN; 4],
        });
    }
    Ok(out)
}

pub fn read_moments<R: Read>(input: R) -> Result<Vec<MomentProfile>, ReportError> {
    let mut rows = Rows::open(input, MOMENTS_HEADER)?;
    let mut out: Vec<MomentProfile> = Vec::new();
    while let Some(rec) = rows.next()? {
        let session = rows.label(&rec, 0)?;
        let row = MomentRow {
            delta: rows.field(&rec, 1)?,
            variance: rows.field(&rec, 2)?,
            kurtosis: rows.field(&rec, 3)?,
            m6: rows.field(&rec, 4)?,
            count: rows.field(&rec, 5)?,
            se_var: rows.field(&rec, 6)?,
            se_kurt: rows.field(&rec, 7)?,
            se_m6: rows.field(&rec, 8)?,
        };
        match out.last_mut() {
            Some(p) if p.session == session => p.rows.push(row),
            _ => out.push(MomentProfile { session, rows: vec![row] }),
        }
    }
    Ok(out)
}

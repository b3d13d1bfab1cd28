use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::Objective;
use super::floats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroCrossing,
    MaxIters,
    /// Aborted because the loss or the output stopped being finite.
    NonFinite,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::ZeroCrossing => "zero_crossing",
            StopReason::MaxIters => "max_iters",
            StopReason::NonFinite => "non_finite",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StopReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [StopReason::ZeroCrossing, StopReason::MaxIters, StopReason::NonFinite]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown stop reason {s:?}")))
    }
}

/// One optimization step, evaluated before the parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    #[serde(with = "floats")]
    pub total_loss: f64,
    #[serde(with = "floats")]
    pub data_fidelity: f64,
    #[serde(with = "floats")]
    pub divergence_term: f64,
    #[serde(with = "floats::opt", default)]
    pub df_mc: Option<f64>,
    #[serde(with = "floats")]
    pub psnr_to_y: f64,
    #[serde(with = "floats::opt", default)]
    pub psnr_to_x: Option<f64>,
    #[serde(with = "floats::opt", default)]
    pub psnr_ema_to_x: Option<f64>,
    #[serde(with = "floats::opt", default)]
    pub df_gt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub objective: Objective,
    pub records: Vec<TraceRecord>,
    pub stop_iter: usize,
    pub stop_reason: StopReason,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Run {
        objective: Objective,
        stop_iter: usize,
        stop_reason: StopReason,
        records: usize,
    },
    Record(TraceRecord),
}

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 9] = [
    "iter",
    "total_loss",
    "data_fidelity",
    "divergence_term",
    "df_mc",
    "psnr_to_y",
    "psnr_to_x",
    "psnr_ema_to_x",
    "df_gt",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

impl RunTrace {
    pub fn total_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total_loss).collect()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.records.iter().any(|r| r.psnr_to_x.is_some())
    }

    /// Record with the highest PSNR to the ground truth.
    pub fn peak(&self) -> Option<&TraceRecord> {
        self.records
            .iter()
            .filter(|r| r.psnr_to_x.is_some())
            .fold(None, |best: Option<&TraceRecord>, r| match best {
                Some(b) if b.psnr_to_x >= r.psnr_to_x => Some(b),
                _ => Some(r),
            })
    }

    /// Newline-delimited JSON: one run header line, then one line per record.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Line::Run {
            objective: self.objective,
            stop_iter: self.stop_iter,
            stop_reason: self.stop_reason,
            records: self.records.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w).map_err(|e| Error::io("<ndjson>", e))?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Record(r.clone()))?;
            writeln!(w).map_err(|e| Error::io("<ndjson>", e))?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<ndjson>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line)? {
                Line::Run {
                    objective,
                    stop_iter,
                    stop_reason,
                    records: n,
                } => {
                    if header.is_some() {
                        return Err(Error::Format("duplicate run header".into()));
                    }
                    header = Some((objective, stop_iter, stop_reason, n));
                }
                Line::Record(rec) => records.push(rec),
            }
        }
        let (objective, stop_iter, stop_reason, n) =
            header.ok_or_else(|| Error::Format("trace has no run header".into()))?;
        if n != records.len() {
            return Err(Error::Format(format!(
                "header announces {n} records, found {}",
                records.len()
            )));
        }
        let trace = RunTrace {
            objective,
            records,
            stop_iter,
            stop_reason,
        };
        trace.check()?;
        Ok(trace)
    }

    pub fn from_ndjson(s: &str) -> Result<Self> {
        Self::read_ndjson(s.as_bytes())
    }

    /// CSV with a leading `#` comment line carrying the run metadata.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# objective={} stop_iter={} stop_reason={}",
            self.objective, self.stop_iter, self.stop_reason
        )
        .map_err(|e| Error::io("<csv>", e))?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            out.write_record([
                r.iter.to_string(),
                r.total_loss.to_string(),
                r.data_fidelity.to_string(),
                r.divergence_term.to_string(),
                fmt_opt(r.df_mc),
                r.psnr_to_y.to_string(),
                fmt_opt(r.psnr_to_x),
                fmt_opt(r.psnr_ema_to_x),
                fmt_opt(r.df_gt),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let (meta, body) = s
            .split_once('\n')
            .ok_or_else(|| Error::Format("empty trace csv".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("trace csv lacks its metadata line".into()))?;
        let (mut objective, mut stop_iter, mut stop_reason) = (None, None, None);
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("objective", v)) => objective = Some(v.parse::<Objective>()?),
                Some(("stop_iter", v)) => {
                    stop_iter = Some(v.parse::<usize>().map_err(|_| Error::Format(format!("bad stop_iter {v:?}")))?)
                }
                Some(("stop_reason", v)) => stop_reason = Some(v.parse::<StopReason>()?),
                _ => return Err(Error::Format(format!("unexpected metadata {kv:?}"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("trace csv metadata lacks {k}"));
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        if reader.headers()?.iter().ne(CSV_COLUMNS) {
            return Err(Error::Format("unexpected trace csv columns".into()));
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            records.push(TraceRecord {
                iter: row[0]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad iter {:?}", &row[0])))?,
                total_loss: parse_f64(&row[1])?,
                data_fidelity: parse_f64(&row[2])?,
                divergence_term: parse_f64(&row[3])?,
                df_mc: parse_opt(&row[4])?,
                psnr_to_y: parse_f64(&row[5])?,
                psnr_to_x: parse_opt(&row[6])?,
                psnr_ema_to_x: parse_opt(&row[7])?,
                df_gt: parse_opt(&row[8])?,
            });
        }
        let trace = RunTrace {
            objective: objective.ok_or_else(|| missing("objective"))?,
            records,
            stop_iter: stop_iter.ok_or_else(|| missing("stop_iter"))?,
            stop_reason: stop_reason.ok_or_else(|| missing("stop_reason"))?,
        };
        trace.check()?;
        Ok(trace)
    }

    /// Structural invariants: strictly increasing iterations, and a stop
    /// iteration matching the final record.
    pub fn check(&self) -> Result<()> {
        if self.records.windows(2).any(|w| w[0].iter >= w[1].iter) {
            return Err(Error::Format("trace iterations are not strictly increasing".into()));
        }
        if let Some(last) = self.records.last() {
            if last.iter != self.stop_iter {
                return Err(Error::Format(format!(
                    "stop_iter {} does not match the last record {}",
                    self.stop_iter, last.iter
                )));
            }
        }
        Ok(())
    }
}

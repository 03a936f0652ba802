//! Tick ingestion, trading calendars and per-day session slicing.
//!
//! Ticks carry exchange-local wall-clock time. Epoch-millisecond input is
//! converted to local time through the calendar's time zone while parsing.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
pub use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt_price;

/// Local timestamp layout used in tick files.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.3f";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: timestamp {timestamp} does not strictly follow the previous tick")]
    NonMonotoneTimestamp { line: usize, timestamp: String },
    #[error("line {line}: price {price} is not strictly positive")]
    NonPositivePrice { line: usize, price: f64 },
    #[error("missing or unexpected header, expected `timestamp,price`")]
    BadHeader,
    #[error("invalid calendar: {0}")]
    InvalidCalendar(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

impl Tick {
    pub fn log_price(&self) -> f64 {
        self.price.ln()
    }
}

/// Strictly time-ordered ticks with positive prices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickSeries {
    ticks: Vec<Tick>,
}

impl TickSeries {
    /// Validates ordering and positivity. Errors report zero-based tick positions as lines.
    pub fn new(ticks: Vec<Tick>) -> Result<Self, MarketDataError> {
        for (i, t) in ticks.iter().enumerate() {
            if !(t.price > 0.0) || !t.price.is_finite() {
                return Err(MarketDataError::NonPositivePrice { line: i, price: t.price });
            }
            if i > 0 && ticks[i - 1].timestamp >= t.timestamp {
                return Err(MarketDataError::NonMonotoneTimestamp {
                    line: i,
                    timestamp: t.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                });
            }
        }
        Ok(Self { ticks })
    }

    pub fn ticks(&self) -> &[Tick] {
        &self.ticks
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn into_inner(self) -> Vec<Tick> {
        self.ticks
    }

    /// Concatenates series; the result must still be strictly increasing.
    pub fn concat(parts: Vec<TickSeries>) -> Result<Self, MarketDataError> {
        let ticks = parts.into_iter().flat_map(|p| p.ticks).collect();
        Self::new(ticks)
    }

    /// Writes `timestamp,price` CSV in local time.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "timestamp,price")?;
        for t in &self.ticks {
            writeln!(out, "{},{}", t.timestamp.format(TIMESTAMP_FORMAT), fmt_price(t.price))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionLabel {
    MS,
    AS,
}

impl SessionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionLabel::MS => "MS",
            SessionLabel::AS => "AS",
        }
    }
}

impl fmt::Display for SessionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MS" => Ok(SessionLabel::MS),
            "AS" => Ok(SessionLabel::AS),
            other => Err(format!("unknown session label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSpec {
    pub label: SessionLabel,
    pub open: NaiveTime,
    pub close: NaiveTime,
}

impl SessionSpec {
    pub fn new(label: SessionLabel, open: NaiveTime, close: NaiveTime) -> Result<Self, MarketDataError> {
        if open >= close {
            return Err(MarketDataError::InvalidCalendar(format!("{label} opens at {open} but closes at {close}")));
        }
        Ok(Self { label, open, close })
    }

    pub fn length_seconds(&self) -> i64 {
        (self.close - self.open).num_seconds()
    }

    /// Inclusive at both ends.
    pub fn contains(&self, t: NaiveTime) -> bool {
        t >= self.open && t <= self.close
    }
}

/// Exchange time zone used when no calendar says otherwise.
pub const DEFAULT_TIMEZONE: Tz = chrono_tz::Asia::Tokyo;

/// Tokyo Stock Exchange morning and afternoon sessions.
pub fn tse_sessions() -> Vec<SessionSpec> {
    let hm = |h, m| NaiveTime::from_hms_opt(h, m, 0).expect("valid time");
    vec![
        SessionSpec { label: SessionLabel::MS, open: hm(9, 0), close: hm(11, 0) },
        SessionSpec { label: SessionLabel::AS, open: hm(12, 30), close: hm(15, 0) },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionCalendar {
    sessions: Vec<SessionSpec>,
    trading_days: BTreeSet<NaiveDate>,
    timezone: Tz,
}

impl SessionCalendar {
    pub fn new(
        sessions: Vec<SessionSpec>,
        trading_days: impl IntoIterator<Item = NaiveDate>,
        timezone: Tz,
    ) -> Result<Self, MarketDataError> {
        if sessions.is_empty() {
            return Err(MarketDataError::InvalidCalendar("no sessions".into()));
        }
        for w in sessions.windows(2) {
            if w[0].label >= w[1].label {
                return Err(MarketDataError::InvalidCalendar("sessions must be listed once each, MS before AS".into()));
            }
            if w[0].close >= w[1].open {
                return Err(MarketDataError::InvalidCalendar(format!(
                    "{} and {} windows overlap",
                    w[0].label, w[1].label
                )));
            }
        }
        for s in &sessions {
            if s.open >= s.close {
                return Err(MarketDataError::InvalidCalendar(format!("{} window is empty", s.label)));
            }
        }
        Ok(Self { sessions, trading_days: trading_days.into_iter().collect(), timezone })
    }

    /// TSE sessions over the given days, Asia/Tokyo time.
    pub fn tse(trading_days: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self::new(tse_sessions(), trading_days, DEFAULT_TIMEZONE).expect("static calendar is valid")
    }

    pub fn sessions(&self) -> &[SessionSpec] {
        &self.sessions
    }

    pub fn session(&self, label: SessionLabel) -> Option<&SessionSpec> {
        self.sessions.iter().find(|s| s.label == label)
    }

    pub fn trading_days(&self) -> &BTreeSet<NaiveDate> {
        &self.trading_days
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn with_trading_days(&self, days: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self { trading_days: days.into_iter().collect(), ..self.clone() }
    }

    pub fn from_json(text: &str) -> Result<Self, MarketDataError> {
        let cfg: CalendarConfig =
            serde_json::from_str(text).map_err(|e| MarketDataError::InvalidCalendar(e.to_string()))?;
        cfg.build()
    }
}

/// JSON form of a calendar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalendarConfig {
    #[serde(default = "default_timezone")]
    pub timezone: String,
    pub sessions: Vec<SessionConfig>,
    pub days: DaysConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub label: String,
    pub open: String,
    pub close: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DaysConfig {
    List(Vec<NaiveDate>),
    Range {
        start: NaiveDate,
        end: NaiveDate,
        #[serde(default = "yes")]
        weekends_excluded: bool,
    },
}

fn default_timezone() -> String {
    "Asia/Tokyo".to_string()
}

fn yes() -> bool {
    true
}

fn parse_clock(s: &str) -> Result<NaiveTime, MarketDataError> {
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map_err(|_| MarketDataError::InvalidCalendar(format!("bad time of day `{s}`")))
}

impl CalendarConfig {
    pub fn build(&self) -> Result<SessionCalendar, MarketDataError> {
        let tz: Tz = self
            .timezone
            .parse()
            .map_err(|_| MarketDataError::InvalidCalendar(format!("unknown time zone `{}`", self.timezone)))?;
        let mut sessions = Vec::with_capacity(self.sessions.len());
        for s in &self.sessions {
            let label = s.label.parse().map_err(MarketDataError::InvalidCalendar)?;
            sessions.push(SessionSpec::new(label, parse_clock(&s.open)?, parse_clock(&s.close)?)?);
        }
        let days: Vec<NaiveDate> = match &self.days {
            DaysConfig::List(v) => {
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(MarketDataError::InvalidCalendar("days must be strictly increasing".into()));
                }
                v.clone()
            }
            DaysConfig::Range { start, end, weekends_excluded } => {
                if start > end {
                    return Err(MarketDataError::InvalidCalendar("start after end".into()));
                }
                start.iter_days().take_while(|d| d <= end).filter(|d| !*weekends_excluded || !is_weekend(*d)).collect()
            }
        };
        SessionCalendar::new(sessions, days, tz)
    }
}

pub fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Parses a `timestamp,price` CSV. The timestamp column is either local
/// `YYYY-MM-DDTHH:MM:SS.mmm` or integer epoch milliseconds; the choice is
/// made once from the first data row. Epoch values are converted with `tz`.
pub fn parse_ticks<R: Read>(input: R, tz: Tz) -> Result<TickSeries, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() != 2 || &header[0] != "timestamp" || &header[1] != "price" {
        return Err(MarketDataError::BadHeader);
    }

    let mut epoch: Option<bool> = None;
    let mut ticks: Vec<Tick> = Vec::new();
    let mut record = csv::StringRecord::new();
    // header is line 1
    let mut line = 1usize;
    while rdr
        .read_record(&mut record)
        .map_err(|e| MarketDataError::MalformedRow { line: line + 1, reason: e.to_string() })?
    {
        line += 1;
        if record.len() != 2 {
            return Err(MarketDataError::MalformedRow {
                line,
                reason: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let ts_field = &record[0];
        let is_epoch = *epoch.get_or_insert_with(|| looks_like_epoch(ts_field));
        let timestamp = if is_epoch {
            let ms: i64 = ts_field.parse().map_err(|_| MarketDataError::MalformedRow {
                line,
                reason: format!("`{ts_field}` is not epoch milliseconds"),
            })?;
            let utc = DateTime::from_timestamp_millis(ms)
                .ok_or_else(|| MarketDataError::MalformedRow { line, reason: format!("epoch {ms} out of range") })?;
            utc.with_timezone(&tz).naive_local()
        } else {
            NaiveDateTime::parse_from_str(ts_field, TIMESTAMP_FORMAT)
                .or_else(|_| NaiveDateTime::parse_from_str(ts_field, "%Y-%m-%dT%H:%M:%S"))
                .map_err(|_| MarketDataError::MalformedRow { line, reason: format!("bad timestamp `{ts_field}`") })?
        };
        let price: f64 = record[1]
            .parse()
            .map_err(|_| MarketDataError::MalformedRow { line, reason: format!("bad price `{}`", &record[1]) })?;
        if !price.is_finite() {
            return Err(MarketDataError::MalformedRow { line, reason: format!("non-finite price `{}`", &record[1]) });
        }
        if price <= 0.0 {
            return Err(MarketDataError::NonPositivePrice { line, price });
        }
        if let Some(prev) = ticks.last() {
            if prev.timestamp >= timestamp {
                return Err(MarketDataError::NonMonotoneTimestamp { line, timestamp: ts_field.to_string() });
            }
        }
        ticks.push(Tick { timestamp, price });
    }
    Ok(TickSeries { ticks })
}

fn looks_like_epoch(field: &str) -> bool {
    let digits = field.strip_prefix('-').unwrap_or(field);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

/// Ticks of one trading session on one day, all inside the session window.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSlice {
    pub date: NaiveDate,
    pub spec: SessionSpec,
    pub ticks: Vec<Tick>,
}

impl SessionSlice {
    pub fn label(&self) -> SessionLabel {
        self.spec.label
    }

    pub fn open_instant(&self) -> NaiveDateTime {
        self.date.and_time(self.spec.open)
    }

    pub fn close_instant(&self) -> NaiveDateTime {
        self.date.and_time(self.spec.close)
    }

    pub fn first(&self) -> Option<&Tick> {
        self.ticks.first()
    }

    pub fn last(&self) -> Option<&Tick> {
        self.ticks.last()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionSplit {
    /// Ordered by (date, label).
    pub slices: Vec<SessionSlice>,
    /// Ticks outside every session window or on non-trading days.
    pub excluded: usize,
    /// Trading days with no tick in any session.
    pub empty_days: Vec<NaiveDate>,
}

/// Assigns every in-window tick to its (date, session) slice.
pub fn split_sessions(ticks: &TickSeries, cal: &SessionCalendar) -> SessionSplit {
    let mut split = SessionSplit::default();
    let all = ticks.ticks();
    let mut i = 0;
    // Ticks are time-ordered, so each day is a contiguous run.
    while i < all.len() {
        let date = all[i].timestamp.date();
        let mut j = i;
        while j < all.len() && all[j].timestamp.date() == date {
            j += 1;
        }
        let day = &all[i..j];
        if cal.trading_days().contains(&date) {
            let mut assigned = 0;
            for spec in cal.sessions() {
                let in_window: Vec<Tick> = day.iter().filter(|t| spec.contains(t.timestamp.time())).copied().collect();
                if !in_window.is_empty() {
                    assigned += in_window.len();
                    split.slices.push(SessionSlice { date, spec: *spec, ticks: in_window });
                }
            }
            split.excluded += day.len() - assigned;
        } else {
            split.excluded += day.len();
        }
        i = j;
    }

    let days_with_slices: BTreeSet<NaiveDate> = split.slices.iter().map(|s| s.date).collect();
    split.empty_days = cal.trading_days().iter().filter(|d| !days_with_slices.contains(d)).copied().collect();
    split
}

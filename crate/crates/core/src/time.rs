//! Timestamps, durations and the parsers used by ingestion and config.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Milliseconds since the Unix epoch (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

/// A span of time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(pub i64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeParseError {
    #[error("cannot parse timestamp {value:?} as {format}")]
    Timestamp { value: String, format: String },
    #[error("cannot parse duration {0:?} (expected e.g. \"1d\", \"4h\", \"600s\")")]
    Duration(String),
}

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn from_secs(s: i64) -> Self {
        Timestamp(s * 1000)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    /// Signed distance `self - earlier` in milliseconds.
    pub fn since(self, earlier: Timestamp) -> Duration {
        Duration(self.0 - earlier.0)
    }

    pub fn to_datetime(self) -> Option<DateTime<Utc>> {
        Utc.timestamp_millis_opt(self.0).single()
    }

    pub fn to_rfc3339(self) -> String {
        match self.to_datetime() {
            Some(dt) => dt.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            None => self.0.to_string(),
        }
    }
}

impl std::ops::Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, d: Duration) -> Timestamp {
        Timestamp(self.0 + d.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl FromStr for Timestamp {
    type Err = TimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TimestampFormat::Iso8601
            .parse(s)
            .or_else(|_| TimestampFormat::UnixSeconds.parse(s))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Duration {
    pub const fn from_millis(ms: i64) -> Self {
        Duration(ms)
    }

    pub const fn from_secs(s: i64) -> Self {
        Duration(s * 1000)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Duration((s * 1000.0).round() as i64)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const UNITS: [(&str, i64); 5] = [
            ("d", 86_400_000),
            ("h", 3_600_000),
            ("m", 60_000),
            ("s", 1000),
            ("ms", 1),
        ];
        if self.0 == 0 {
            return f.write_str("0s");
        }
        for (suffix, scale) in UNITS {
            if self.0 % scale == 0 {
                return write!(f, "{}{}", self.0 / scale, suffix);
            }
        }
        unreachable!("every integer is a multiple of 1ms")
    }
}

impl FromStr for Duration {
    type Err = TimeParseError;

    /// Accepts `<number><unit>` with units `ms`, `s`, `m`, `h`, `d`, `w`; a
    /// bare number is read as seconds.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let split = t
            .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+'))
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let value: f64 = num
            .parse()
            .map_err(|_| TimeParseError::Duration(s.to_string()))?;
        let scale = match unit.trim() {
            "" | "s" | "sec" | "secs" => 1000.0,
            "ms" => 1.0,
            "m" | "min" => 60_000.0,
            "h" => 3_600_000.0,
            "d" => 86_400_000.0,
            "w" => 7.0 * 86_400_000.0,
            _ => return Err(TimeParseError::Duration(s.to_string())),
        };
        if !value.is_finite() {
            return Err(TimeParseError::Duration(s.to_string()));
        }
        Ok(Duration((value * scale).round() as i64))
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Secs(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Secs(v) => Ok(Duration::from_secs_f64(v)),
        }
    }
}

/// How timestamp cells are written in an input file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimestampFormat {
    /// RFC 3339, or a naive `YYYY-MM-DD[ T]HH:MM:SS[.fff]` / `YYYY-MM-DD` read as UTC.
    #[default]
    Iso8601,
    /// Seconds since the epoch, fractional values allowed.
    UnixSeconds,
    UnixMillis,
    /// A chrono `strftime` pattern, read as UTC when it carries no offset.
    Custom(String),
}

impl TimestampFormat {
    pub fn parse(&self, raw: &str) -> Result<Timestamp, TimeParseError> {
        let s = raw.trim();
        let fail = || TimeParseError::Timestamp {
            value: raw.to_string(),
            format: self.to_string(),
        };
        match self {
            TimestampFormat::Iso8601 => {
                if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                    return Ok(Timestamp(dt.timestamp_millis()));
                }
                for pattern in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                    if let Ok(dt) = NaiveDateTime::parse_from_str(s, pattern) {
                        return Ok(Timestamp(dt.and_utc().timestamp_millis()));
                    }
                }
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
                    .map(|dt| Timestamp(dt.and_utc().timestamp_millis()))
                    .ok_or_else(fail)
            }
            TimestampFormat::UnixSeconds => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(|v| Timestamp((v * 1000.0).round() as i64))
                .ok_or_else(fail),
            TimestampFormat::UnixMillis => s.parse::<i64>().map(Timestamp).map_err(|_| fail()),
            TimestampFormat::Custom(pattern) => {
                if let Ok(dt) = DateTime::parse_from_str(s, pattern) {
                    return Ok(Timestamp(dt.timestamp_millis()));
                }
                NaiveDateTime::parse_from_str(s, pattern)
                    .map(|dt| Timestamp(dt.and_utc().timestamp_millis()))
                    .map_err(|_| fail())
            }
        }
    }
}

impl fmt::Display for TimestampFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimestampFormat::Iso8601 => f.write_str("iso8601"),
            TimestampFormat::UnixSeconds => f.write_str("unix"),
            TimestampFormat::UnixMillis => f.write_str("unix_ms"),
            TimestampFormat::Custom(p) => f.write_str(p),
        }
    }
}

impl FromStr for TimestampFormat {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "iso8601" | "iso" | "rfc3339" => TimestampFormat::Iso8601,
            "unix" | "unix_s" | "seconds" => TimestampFormat::UnixSeconds,
            "unix_ms" | "millis" => TimestampFormat::UnixMillis,
            other => TimestampFormat::Custom(other.to_string()),
        })
    }
}

impl Serialize for TimestampFormat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TimestampFormat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

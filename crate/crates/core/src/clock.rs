//! Time and identity sources for viewpoint metadata, injectable for reproducible output.

use chrono::{DateTime, SubsecRound, Utc};

pub const CLOCK_ENV: &str = "TRACEVIEW_CLOCK";
pub const USER_ENV: &str = "TRACEVIEW_USER";

pub trait Clock: Send + Sync {
    /// Current UTC time, truncated to whole seconds.
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now().trunc_subsecs(0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0.trunc_subsecs(0)
    }
}

/// Fixed clock from `TRACEVIEW_CLOCK` (RFC 3339) when set, system clock otherwise.
pub fn clock_from_env() -> Result<Box<dyn Clock>, String> {
    match std::env::var(CLOCK_ENV) {
        Ok(text) if !text.is_empty() => {
            let at = DateTime::parse_from_rfc3339(&text)
                .map_err(|e| format!("{CLOCK_ENV}=`{text}`: {e}"))?;
            Ok(Box::new(FixedClock(at.with_timezone(&Utc))))
        }
        _ => Ok(Box::new(SystemClock)),
    }
}

/// Owner name: `TRACEVIEW_USER`, else the login name of the session.
pub fn session_user() -> String {
    [USER_ENV, "USER", "USERNAME", "LOGNAME"]
        .iter()
        .filter_map(|k| std::env::var(k).ok())
        .find(|v| !v.trim().is_empty())
        .unwrap_or_else(|| "unknown".to_owned())
}

pub fn format_timestamp(at: &DateTime<Utc>) -> String {
    at.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, String> {
    let at = DateTime::parse_from_rfc3339(text).map_err(|e| format!("timestamp `{text}`: {e}"))?;
    let at = at.with_timezone(&Utc);
    if at.trunc_subsecs(0) != at {
        return Err(format!("timestamp `{text}` has sub-second precision"));
    }
    Ok(at)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_roundtrip() {
        let at = parse_timestamp("2013-05-01T10:20:30Z").unwrap();
        assert_eq!(format_timestamp(&at), "2013-05-01T10:20:30Z");
        assert_eq!(
            format_timestamp(&parse_timestamp("2013-05-01T12:20:30+02:00").unwrap()),
            "2013-05-01T10:20:30Z"
        );
        assert!(parse_timestamp("2013-05-01T10:20:30.5Z").is_err());
        assert!(parse_timestamp("yesterday").is_err());
    }
}

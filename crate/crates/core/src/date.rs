//! Minimal ISO-8601 calendar date, enough for sorting measurements and
//! writing the cohort CSV. Day-number conversion uses the standard civil
//! calendar algorithm so the synthetic generator can spread dates over a
//! span without a calendar dependency.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date {
    year: i32,
    month: u8,
    day: u8,
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(Error::data(format!(
                "invalid calendar date {year:04}-{month:02}-{day:02}"
            )));
        }
        Ok(Date { year, month, day })
    }

    /// Parse a strict `YYYY-MM-DD` string.
    pub fn parse(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let valid_shape = bytes.len() == 10
            && bytes[4] == b'-'
            && bytes[7] == b'-'
            && bytes
                .iter()
                .enumerate()
                .all(|(i, b)| i == 4 || i == 7 || b.is_ascii_digit());
        if !valid_shape {
            return Err(Error::data(format!(
                "date {s:?} is not in YYYY-MM-DD format"
            )));
        }
        let year: i32 = s[0..4].parse().expect("digits");
        let month: u8 = s[5..7].parse().expect("digits");
        let day: u8 = s[8..10].parse().expect("digits");
        Date::new(year, month, day)
    }

    /// Days since 1970-01-01 (may be negative), civil-calendar algorithm.
    pub fn to_days(self) -> i64 {
        let y = if self.month <= 2 {
            self.year - 1
        } else {
            self.year
        } as i64;
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let m = self.month as i64;
        let d = self.day as i64;
        let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    /// Inverse of [`Date::to_days`].
    pub fn from_days(days: i64) -> Self {
        let z = days + 719_468;
        let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let y = yoe + era * 400;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let d = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let m = (if mp < 10 { mp + 3 } else { mp - 9 }) as u8;
        let year = (if m <= 2 { y + 1 } else { y }) as i32;
        Date {
            year,
            month: m,
            day: d,
        }
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["2000-01-01", "2003-05-01", "2004-02-29", "1999-12-31"] {
            assert_eq!(Date::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn rejects_malformed_dates() {
        for s in [
            "2001-13-01",
            "2001-00-10",
            "2001-02-29",
            "2001-2-9",
            "20010209",
            "2001-02-09T00",
            "abcd-ef-gh",
        ] {
            assert!(Date::parse(s).is_err(), "{s} should not parse");
        }
    }

    #[test]
    fn ordering_is_chronological() {
        let a = Date::parse("2001-01-01").unwrap();
        let b = Date::parse("2003-05-01").unwrap();
        let c = Date::parse("2003-05-02").unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn day_number_round_trip() {
        assert_eq!(Date::parse("1970-01-01").unwrap().to_days(), 0);
        for days in (-30_000..60_000).step_by(37) {
            let date = Date::from_days(days);
            assert_eq!(date.to_days(), days, "{date}");
        }
    }
}

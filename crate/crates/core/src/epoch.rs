use chrono::{Duration, NaiveDateTime};
use habsim_devs::Time;

/// Maps kernel time (microseconds since the scenario start) to calendar time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch(pub NaiveDateTime);

impl Epoch {
    pub fn start(&self) -> NaiveDateTime {
        self.0
    }

    /// Calendar instant of `t`. Infinite time saturates to the far future.
    pub fn at(&self, t: Time) -> NaiveDateTime {
        if t.is_infinite() {
            return NaiveDateTime::MAX;
        }
        self.0 + Duration::microseconds(t.as_micros() as i64)
    }

    /// Kernel time of a calendar instant, or `None` before the epoch.
    pub fn offset(&self, at: NaiveDateTime) -> Option<Time> {
        let d = at.signed_duration_since(self.0).num_microseconds()?;
        u64::try_from(d).ok().map(Time::from_micros)
    }

    /// Whole days elapsed since the calendar midnight preceding the epoch.
    pub fn day_index(&self, t: Time) -> i64 {
        let midnight = self.0.date().and_hms_opt(0, 0, 0).expect("valid midnight");
        self.at(t).signed_duration_since(midnight).num_days()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;

    #[test]
    fn maps_both_ways() {
        let e = Epoch(parse_timestamp("2008-08-23 00:00:00").unwrap());
        let t = Time::from_secs(5405);
        assert_eq!(e.at(t).to_string(), "2008-08-23 01:30:05");
        assert_eq!(e.offset(e.at(t)), Some(t));
        assert_eq!(e.offset(parse_timestamp("2008-08-22 23:59:59").unwrap()), None);
        assert_eq!(e.day_index(Time::from_hours(23)), 0);
        assert_eq!(e.day_index(Time::from_hours(24)), 1);
    }
}

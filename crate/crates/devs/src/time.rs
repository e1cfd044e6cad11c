use std::fmt;
use std::ops::{Add, Sub};

/// Virtual time, counted in microseconds from the scenario epoch.
///
/// The same type is used for instants and for spans (time advances, elapsed
/// times). [`Time::INFINITY`] is absorbing under addition and marks a
/// passive state when returned from a time-advance function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(u64);

impl Time {
    pub const ZERO: Time = Time(0);
    pub const INFINITY: Time = Time(u64::MAX);

    const MICROS_PER_SEC: u64 = 1_000_000;

    pub const fn from_micros(us: u64) -> Self {
        Time(us)
    }

    pub const fn from_secs(s: u64) -> Self {
        Time(s.saturating_mul(Self::MICROS_PER_SEC))
    }

    pub const fn from_minutes(m: u64) -> Self {
        Self::from_secs(m.saturating_mul(60))
    }

    pub const fn from_hours(h: u64) -> Self {
        Self::from_secs(h.saturating_mul(3600))
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs map to zero,
    /// `+inf` maps to [`Time::INFINITY`].
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return Time::ZERO;
        }
        let us = (s * Self::MICROS_PER_SEC as f64).round();
        if us >= u64::MAX as f64 {
            Time::INFINITY
        } else {
            Time(us as u64)
        }
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            self.0 as f64 / Self::MICROS_PER_SEC as f64
        }
    }

    pub fn as_hours_f64(self) -> f64 {
        self.as_secs_f64() / 3600.0
    }

    /// Whole seconds, truncated.
    pub const fn whole_secs(self) -> u64 {
        self.0 / Self::MICROS_PER_SEC
    }

    pub const fn is_infinite(self) -> bool {
        self.0 == u64::MAX
    }

    pub fn checked_sub(self, rhs: Time) -> Option<Time> {
        if self.is_infinite() {
            return if rhs.is_infinite() { None } else { Some(Time::INFINITY) };
        }
        self.0.checked_sub(rhs.0).map(Time)
    }
}

impl Add for Time {
    type Output = Time;

    fn add(self, rhs: Time) -> Time {
        if self.is_infinite() || rhs.is_infinite() {
            return Time::INFINITY;
        }
        match self.0.checked_add(rhs.0) {
            Some(v) if v != u64::MAX => Time(v),
            _ => Time::INFINITY,
        }
    }
}

impl Sub for Time {
    type Output = Time;

    /// Saturates at zero.
    fn sub(self, rhs: Time) -> Time {
        self.checked_sub(rhs).unwrap_or(Time::ZERO)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            let secs = self.0 / Self::MICROS_PER_SEC;
            let frac = self.0 % Self::MICROS_PER_SEC;
            if frac == 0 {
                write!(f, "{secs}s")
            } else {
                write!(f, "{secs}.{frac:06}s")
            }
        }
    }
}

//! Integer-nanosecond simulated time.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;


use super::ModelError;

const NS_PER_US: u64 = 1_000;
const NS_PER_MS: u64 = 1_000_000;
const NS_PER_S: u64 = 1_000_000_000;

/// An instant on the simulation clock, in nanoseconds since start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

/// A non-negative span of simulated time, in nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimDuration(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    /// Elapsed time since `earlier`, or `None` if `earlier` is in the future.
    pub fn checked_since(self, earlier: SimTime) -> Option<SimDuration> {
        self.0.checked_sub(earlier.0).map(SimDuration)
    }

    pub fn saturating_since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NS_PER_S as f64
    }

    /// Offset from simulation start.
    pub const fn since_start(self) -> SimDuration {
        SimDuration(self.0)
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimDuration(ns)
    }
    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us * NS_PER_US)
    }
    pub const fn from_millis(ms: u64) -> Self {
        SimDuration(ms * NS_PER_MS)
    }
    pub const fn from_secs(s: u64) -> Self {
        SimDuration(s * NS_PER_S)
    }
    pub const fn as_nanos(self) -> u64 {
        self.0
    }
    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / NS_PER_MS as f64
    }
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NS_PER_S as f64
    }
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulated time overflow"))
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        *self = *self + rhs;
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    fn sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0.checked_sub(rhs.0).expect("negative duration"))
    }
}

impl Mul<u64> for SimDuration {
    type Output = SimDuration;
    fn mul(self, rhs: u64) -> SimDuration {
        SimDuration(self.0 * rhs)
    }
}

impl std::iter::Sum for SimDuration {
    fn sum<I: Iterator<Item = SimDuration>>(iter: I) -> SimDuration {
        iter.fold(SimDuration::ZERO, |a, b| a + b)
    }
}

fn fmt_nanos(ns: u64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if ns == 0 {
        write!(f, "0s")
    } else if ns.is_multiple_of(NS_PER_S) {
        write!(f, "{}s", ns / NS_PER_S)
    } else if ns.is_multiple_of(NS_PER_MS) {
        write!(f, "{}ms", ns / NS_PER_MS)
    } else if ns.is_multiple_of(NS_PER_US) {
        write!(f, "{}us", ns / NS_PER_US)
    } else {
        write!(f, "{}ns", ns)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_nanos(self.0, f)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_nanos(self.0, f)
    }
}

/// Parses `"16.7ms"`, `"500us"`, `"1s"`, `"250ns"` into exact nanoseconds.
fn parse_nanos(s: &str) -> Result<u64, ModelError> {
    let bad = || ModelError::BadDuration(s.to_string());
    let s_trim = s.trim();
    let split = s_trim
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .ok_or_else(bad)?;
    let (num, unit) = s_trim.split_at(split);
    let scale = match unit.trim() {
        "ns" => 1,
        "us" | "µs" => NS_PER_US,
        "ms" => NS_PER_MS,
        "s" => NS_PER_S,
        _ => return Err(bad()),
    };
    let (int_part, frac_part) = match num.split_once('.') {
        Some((i, f)) => (i, f),
        None => (num, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let int: u64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let mut total = int.checked_mul(scale).ok_or_else(bad)?;
    let mut place = scale;
    for c in frac_part.chars() {
        let digit = c.to_digit(10).ok_or_else(bad)? as u64;
        if place % 10 != 0 {
            // finer than one nanosecond
            if digit != 0 {
                return Err(bad());
            }
            continue;
        }
        place /= 10;
        total = total.checked_add(digit * place).ok_or_else(bad)?;
    }
    Ok(total)
}

impl FromStr for SimDuration {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_nanos(s).map(SimDuration)
    }
}

impl FromStr for SimTime {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_nanos(s).map(SimTime)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = <String as serde::Deserialize>::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(SimDuration);
string_serde!(SimTime);
pub(crate) use string_serde;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_units_exactly() {
        assert_eq!("16.7ms".parse::<SimDuration>().unwrap().as_nanos(), 16_700_000);
        assert_eq!("0.5ms".parse::<SimDuration>().unwrap().as_nanos(), 500_000);
        assert_eq!("250us".parse::<SimDuration>().unwrap().as_nanos(), 250_000);
        assert_eq!("1s".parse::<SimDuration>().unwrap().as_nanos(), 1_000_000_000);
        assert_eq!("7ns".parse::<SimDuration>().unwrap().as_nanos(), 7);
        assert!("1.5ns".parse::<SimDuration>().is_err());
        assert!("ms".parse::<SimDuration>().is_err());
        assert!("3 parsecs".parse::<SimDuration>().is_err());
    }

    #[test]
    fn display_picks_largest_exact_unit() {
        assert_eq!(SimDuration::from_nanos(16_700_000).to_string(), "16700us");
        assert_eq!(SimDuration::from_millis(500).to_string(), "500ms");
        assert_eq!(SimDuration::from_secs(3).to_string(), "3s");
        assert_eq!(SimDuration::from_nanos(1_000_001).to_string(), "1000001ns");
    }

    #[test]
    fn time_arithmetic_is_monotone() {
        let t = SimTime::from_nanos(10);
        assert!(t + SimDuration::ZERO >= t);
        assert_eq!((t + SimDuration::from_nanos(5)).checked_since(t), Some(SimDuration::from_nanos(5)));
        assert_eq!(t.checked_since(t + SimDuration::from_nanos(1)), None);
    }
}

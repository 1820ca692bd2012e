use std::fmt;
use std::str::FromStr;

use chrono::{Duration, Months, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// Sampling interval of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    HalfHourly,
    Hourly,
    TwoHourly,
    ThreeHourly,
    FourHourly,
    SixHourly,
    EightHourly,
    TwiceDaily,
    Daily,
    Tridaily,
    Weekly,
    Monthly,
    Quarterly,
    Yearly,
}

/// Fixed duration of one step. Calendar granularities count months.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Minutes(u32),
    Months(u32),
}

impl Granularity {
    pub const ALL: [Granularity; 14] = [
        Granularity::HalfHourly,
        Granularity::Hourly,
        Granularity::TwoHourly,
        Granularity::ThreeHourly,
        Granularity::FourHourly,
        Granularity::SixHourly,
        Granularity::EightHourly,
        Granularity::TwiceDaily,
        Granularity::Daily,
        Granularity::Tridaily,
        Granularity::Weekly,
        Granularity::Monthly,
        Granularity::Quarterly,
        Granularity::Yearly,
    ];

    pub fn step(self) -> Step {
        use Granularity::*;
        match self {
            HalfHourly => Step::Minutes(30),
            Hourly => Step::Minutes(60),
            TwoHourly => Step::Minutes(120),
            ThreeHourly => Step::Minutes(180),
            FourHourly => Step::Minutes(240),
            SixHourly => Step::Minutes(360),
            EightHourly => Step::Minutes(480),
            TwiceDaily => Step::Minutes(720),
            Daily => Step::Minutes(1440),
            Tridaily => Step::Minutes(4320),
            Weekly => Step::Minutes(10080),
            Monthly => Step::Months(1),
            Quarterly => Step::Months(3),
            Yearly => Step::Months(12),
        }
    }

    pub fn from_step(step: Step) -> Option<Granularity> {
        Self::ALL.into_iter().find(|g| g.step() == step)
    }

    /// Granularity of a series after merging `factor` steps into one.
    pub fn scaled(self, factor: usize) -> Option<Granularity> {
        let factor = u32::try_from(factor).ok()?;
        let step = match self.step() {
            Step::Minutes(m) => Step::Minutes(m.checked_mul(factor)?),
            Step::Months(m) => Step::Months(m.checked_mul(factor)?),
        };
        Self::from_step(step)
    }

    /// Timestamp `steps` intervals after `start`.
    pub fn advance(self, start: NaiveDateTime, steps: i64) -> Option<NaiveDateTime> {
        match self.step() {
            Step::Minutes(m) => start.checked_add_signed(Duration::minutes(i64::from(m) * steps)),
            Step::Months(m) => {
                let months = u32::try_from(i64::from(m) * steps).ok()?;
                start.checked_add_months(Months::new(months))
            }
        }
    }

    /// Cycle lengths (in steps) worth testing first when looking for
    /// seasonality.
    pub fn natural_cycles(self) -> &'static [usize] {
        use Granularity::*;
        match self {
            HalfHourly => &[48, 336],
            Hourly => &[24, 168],
            TwoHourly => &[12, 84],
            ThreeHourly => &[8, 56],
            FourHourly => &[6, 42],
            SixHourly => &[4, 28],
            EightHourly => &[3, 21],
            TwiceDaily => &[2, 14],
            Daily => &[7, 365],
            Tridaily => &[],
            Weekly => &[52],
            Monthly => &[12],
            Quarterly => &[4],
            Yearly => &[],
        }
    }

    pub fn name(self) -> &'static str {
        use Granularity::*;
        match self {
            HalfHourly => "half-hourly",
            Hourly => "hourly",
            TwoHourly => "two-hourly",
            ThreeHourly => "three-hourly",
            FourHourly => "four-hourly",
            SixHourly => "six-hourly",
            EightHourly => "eight-hourly",
            TwiceDaily => "twice-daily",
            Daily => "daily",
            Tridaily => "tridaily",
            Weekly => "weekly",
            Monthly => "monthly",
            Quarterly => "quarterly",
            Yearly => "yearly",
        }
    }

    /// Frequency keyword used in `.tsf` headers.
    pub fn tsf_name(self) -> &'static str {
        use Granularity::*;
        match self {
            HalfHourly => "half_hourly",
            Hourly => "hourly",
            TwoHourly => "2_hourly",
            ThreeHourly => "3_hourly",
            FourHourly => "4_hourly",
            SixHourly => "6_hourly",
            EightHourly => "8_hourly",
            TwiceDaily => "12_hourly",
            Daily => "daily",
            Tridaily => "3_daily",
            Weekly => "weekly",
            Monthly => "monthly",
            Quarterly => "quarterly",
            Yearly => "yearly",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let found = Self::ALL
            .into_iter()
            .find(|g| g.name() == key || g.tsf_name().replace('_', "-") == key);
        if let Some(g) = found {
            return Ok(g);
        }
        match key.as_str() {
            "30-minutes" | "halfhourly" => Ok(Granularity::HalfHourly),
            "bi-hourly" | "2-hours" => Ok(Granularity::TwoHourly),
            "twice-daily" | "12-hours" => Ok(Granularity::TwiceDaily),
            "tri-daily" | "3-days" => Ok(Granularity::Tridaily),
            "annual" | "annually" => Ok(Granularity::Yearly),
            _ => Err(s.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_follows_step_durations() {
        assert_eq!(Granularity::HalfHourly.scaled(2), Some(Granularity::Hourly));
        assert_eq!(Granularity::HalfHourly.scaled(48), Some(Granularity::Daily));
        assert_eq!(Granularity::Hourly.scaled(8), Some(Granularity::EightHourly));
        assert_eq!(Granularity::Daily.scaled(3), Some(Granularity::Tridaily));
        assert_eq!(Granularity::Monthly.scaled(3), Some(Granularity::Quarterly));
        assert_eq!(Granularity::Quarterly.scaled(4), Some(Granularity::Yearly));
        assert_eq!(Granularity::Hourly.scaled(5), None);
    }

    #[test]
    fn names_round_trip() {
        for g in Granularity::ALL {
            assert_eq!(g.name().parse::<Granularity>(), Ok(g));
            assert_eq!(g.tsf_name().parse::<Granularity>(), Ok(g));
        }
        assert!("fortnightly".parse::<Granularity>().is_err());
    }

    #[test]
    fn monthly_advance_is_calendar_aware() {
        let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 31)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let next = Granularity::Monthly.advance(start, 1).unwrap();
        assert_eq!(next.date(), chrono::NaiveDate::from_ymd_opt(2020, 2, 29).unwrap());
    }
}

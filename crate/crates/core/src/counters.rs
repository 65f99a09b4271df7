//! Weekly boarded/alighted margins from automated passenger counts.
//!
//! Each counter record is one ride stopping at one station. Cancelled rides
//! are ignored entirely. The partial totals summed over valid rides are scaled
//! up by the inverse of the share of non-cancelled rides that carry valid
//! counts, then rounded half away from zero.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::matrix::round_count;
use crate::network::{StationId, WeekCalendar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RideStatus {
    Valid,
    Missing,
    Cancelled,
}

impl RideStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RideStatus::Valid => "valid",
            RideStatus::Missing => "missing",
            RideStatus::Cancelled => "cancelled",
        }
    }
}

impl fmt::Display for RideStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RideStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "valid" => Ok(RideStatus::Valid),
            "missing" => Ok(RideStatus::Missing),
            "cancelled" | "canceled" => Ok(RideStatus::Cancelled),
            other => Err(Error::InvalidRecord(format!(
                "unknown ride status `{other}`"
            ))),
        }
    }
}

/// Counts recorded for one ride at one station.
#[derive(Clone, Debug, PartialEq)]
pub struct RideCountRecord {
    pub ride_id: String,
    pub line_id: String,
    pub station: StationId,
    pub date: NaiveDate,
    status: RideStatus,
    counts: Option<(u64, u64)>,
}

impl RideCountRecord {
    pub fn valid(
        ride_id: impl Into<String>,
        line_id: impl Into<String>,
        station: StationId,
        date: NaiveDate,
        boarded: u64,
        alighted: u64,
    ) -> Self {
        Self {
            ride_id: ride_id.into(),
            line_id: line_id.into(),
            station,
            date,
            status: RideStatus::Valid,
            counts: Some((boarded, alighted)),
        }
    }

    /// A record without counts. `status` must be `Missing` or `Cancelled`.
    pub fn without_counts(
        ride_id: impl Into<String>,
        line_id: impl Into<String>,
        station: StationId,
        date: NaiveDate,
        status: RideStatus,
    ) -> Result<Self> {
        let ride_id = ride_id.into();
        if status == RideStatus::Valid {
            return Err(Error::InvalidRecord(format!(
                "ride `{ride_id}` marked valid but has no counts"
            )));
        }
        Ok(Self {
            ride_id,
            line_id: line_id.into(),
            station,
            date,
            status,
            counts: None,
        })
    }

    pub fn status(&self) -> RideStatus {
        self.status
    }

    /// `(boarded, alighted)`; present exactly when the record is valid.
    pub fn counts(&self) -> Option<(u64, u64)> {
        self.counts
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StationWeekTally {
    pub valid_rides: u64,
    pub non_cancelled_rides: u64,
    pub partial_boarded: u64,
    pub partial_alighted: u64,
}

impl StationWeekTally {
    pub fn coverage(&self) -> Coverage {
        if self.non_cancelled_rides == 0 {
            Coverage {
                value: 0.0,
                zero_denominator: true,
            }
        } else {
            Coverage {
                value: self.valid_rides as f64 / self.non_cancelled_rides as f64,
                zero_denominator: false,
            }
        }
    }

    /// Partial total scaled by `non_cancelled / valid`, which equals dividing by coverage.
    fn rescale(&self, partial: u64) -> u64 {
        round_count(partial as f64 * self.non_cancelled_rides as f64 / self.valid_rides as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coverage {
    pub value: f64,
    /// No non-cancelled ride stopped at the station that week.
    pub zero_denominator: bool,
}

/// Per-station, per-week aggregation of counter records.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterTally {
    n_stations: usize,
    num_weeks: usize,
    cells: Vec<StationWeekTally>,
    /// Records dated outside the calendar or naming unknown stations.
    pub ignored_records: usize,
}

impl CounterTally {
    pub fn from_records(
        records: &[RideCountRecord],
        cal: &WeekCalendar,
        n_stations: usize,
    ) -> Self {
        let num_weeks = cal.num_weeks();
        let mut cells = vec![StationWeekTally::default(); n_stations * num_weeks];
        let mut ignored = 0;
        for r in records {
            let (Some(week), true) = (cal.week_of(r.date), r.station.index() < n_stations) else {
                ignored += 1;
                continue;
            };
            let cell = &mut cells[week * n_stations + r.station.index()];
            match r.status() {
                RideStatus::Cancelled => {}
                RideStatus::Missing => cell.non_cancelled_rides += 1,
                RideStatus::Valid => {
                    let (b, a) = r.counts().expect("valid record has counts");
                    cell.non_cancelled_rides += 1;
                    cell.valid_rides += 1;
                    cell.partial_boarded += b;
                    cell.partial_alighted += a;
                }
            }
        }
        Self {
            n_stations,
            num_weeks,
            cells,
            ignored_records: ignored,
        }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn num_weeks(&self) -> usize {
        self.num_weeks
    }

    pub fn cell(&self, station: StationId, week: usize) -> &StationWeekTally {
        &self.cells[week * self.n_stations + station.index()]
    }

    pub fn coverage(&self, station: StationId, week: usize) -> Coverage {
        self.cell(station, week).coverage()
    }

    pub fn margins(&self, week: usize) -> Result<MarginVectors> {
        let n = self.n_stations;
        let mut m = MarginVectors {
            week,
            p: vec![0; n],
            a: vec![0; n],
            coverage: vec![0.0; n],
        };
        for i in 0..n {
            let cell = self.cell(StationId(i), week);
            let cov = cell.coverage();
            m.coverage[i] = cov.value;
            if cov.zero_denominator {
                continue;
            }
            if cell.valid_rides == 0 {
                return Err(Error::UnrecoverableMissingData {
                    station: StationId(i).to_string(),
                    week,
                });
            }
            m.p[i] = cell.rescale(cell.partial_boarded);
            m.a[i] = cell.rescale(cell.partial_alighted);
        }
        Ok(m)
    }

    pub fn all_margins(&self) -> Result<Vec<MarginVectors>> {
        (0..self.num_weeks).map(|w| self.margins(w)).collect()
    }
}

/// Rescaled boarded (`p`) and alighted (`a`) totals for one week.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginVectors {
    pub week: usize,
    pub p: Vec<u64>,
    pub a: Vec<u64>,
    pub coverage: Vec<f64>,
}

impl MarginVectors {
    pub fn total_boarded(&self) -> u64 {
        self.p.iter().sum()
    }

    pub fn total_alighted(&self) -> u64 {
        self.a.iter().sum()
    }
}

pub fn compute_coverage(
    records: &[RideCountRecord],
    cal: &WeekCalendar,
    station: StationId,
    week: usize,
) -> Coverage {
    let n = station.index() + 1;
    CounterTally::from_records(records, cal, n).coverage(station, week)
}

pub fn rescale_margins(
    records: &[RideCountRecord],
    cal: &WeekCalendar,
    n_stations: usize,
    week: usize,
) -> Result<MarginVectors> {
    CounterTally::from_records(records, cal, n_stations).margins(week)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> WeekCalendar {
        WeekCalendar::new(NaiveDate::from_ymd_opt(2022, 6, 6).unwrap(), 2).unwrap()
    }

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 6, d).unwrap()
    }

    fn rides(
        station: usize,
        valid: &[(u64, u64)],
        missing: usize,
        cancelled: usize,
    ) -> Vec<RideCountRecord> {
        let mut out = Vec::new();
        for (k, &(b, a)) in valid.iter().enumerate() {
            out.push(RideCountRecord::valid(
                format!("v{k}"),
                "L",
                StationId(station),
                day(7),
                b,
                a,
            ));
        }
        for k in 0..missing {
            out.push(
                RideCountRecord::without_counts(
                    format!("m{k}"),
                    "L",
                    StationId(station),
                    day(8),
                    RideStatus::Missing,
                )
                .unwrap(),
            );
        }
        for k in 0..cancelled {
            out.push(
                RideCountRecord::without_counts(
                    format!("c{k}"),
                    "L",
                    StationId(station),
                    day(9),
                    RideStatus::Cancelled,
                )
                .unwrap(),
            );
        }
        out
    }

    #[test]
    fn coverage_ratio() {
        let r = rides(0, &[(1, 1); 8], 2, 5);
        let c = compute_coverage(&r, &cal(), StationId(0), 0);
        assert_eq!(c.value, 0.8);
        assert!(!c.zero_denominator);

        let r = rides(0, &[(1, 1); 10], 0, 0);
        assert_eq!(compute_coverage(&r, &cal(), StationId(0), 0).value, 1.0);
    }

    #[test]
    fn zero_denominator_is_flagged() {
        let r = rides(0, &[], 0, 3);
        let c = compute_coverage(&r, &cal(), StationId(0), 0);
        assert_eq!(c.value, 0.0);
        assert!(c.zero_denominator);
        let m = rescale_margins(&r, &cal(), 1, 0).unwrap();
        assert_eq!(m.p, vec![0]);
    }

    #[test]
    fn rescaling_divides_by_coverage() {
        // 8 valid rides carrying 40 boarders, 2 missing: 40 / 0.8 = 50.
        let mut valid = vec![(5, 0); 8];
        valid[0].1 = 17;
        let r = rides(0, &valid, 2, 0);
        let m = rescale_margins(&r, &cal(), 1, 0).unwrap();
        assert_eq!(m.p, vec![50]);
        // 17 / 0.8 = 21.25 -> 21
        assert_eq!(m.a, vec![21]);
    }

    #[test]
    fn full_coverage_is_identity() {
        let r = rides(1, &[(3, 17), (4, 0)], 0, 2);
        let m = rescale_margins(&r, &cal(), 2, 0).unwrap();
        assert_eq!(m.p, vec![0, 7]);
        assert_eq!(m.a, vec![0, 17]);
        assert_eq!(m.coverage[1], 1.0);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        // 1 boarder on 2 valid of 3 rides -> 1.5 -> 2.
        let r = rides(0, &[(1, 0), (0, 0)], 1, 0);
        assert_eq!(rescale_margins(&r, &cal(), 1, 0).unwrap().p, vec![2]);
    }

    #[test]
    fn all_missing_is_unrecoverable() {
        let r = rides(0, &[], 4, 0);
        let err = rescale_margins(&r, &cal(), 1, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::UnrecoverableMissingData { week: 0, .. }
        ));
    }

    #[test]
    fn valid_status_requires_counts() {
        assert!(
            RideCountRecord::without_counts("r", "L", StationId(0), day(6), RideStatus::Valid)
                .is_err()
        );
        assert_eq!(
            "canceled".parse::<RideStatus>().unwrap(),
            RideStatus::Cancelled
        );
    }

    #[test]
    fn out_of_calendar_records_are_ignored() {
        let mut r = rides(0, &[(1, 1)], 0, 0);
        r.push(RideCountRecord::valid("x", "L", StationId(0), day(1), 9, 9));
        let t = CounterTally::from_records(&r, &cal(), 1);
        assert_eq!(t.ignored_records, 1);
        assert_eq!(t.margins(0).unwrap().p, vec![1]);
    }

    #[test]
    fn estimator_forms_agree() {
        // mean over valid rides times total rides vs partial / coverage.
        let r = rides(0, &[(7, 2), (11, 5), (4, 9)], 4, 1);
        let m = rescale_margins(&r, &cal(), 1, 0).unwrap();
        let mean_form: f64 = (7.0 + 11.0 + 4.0) / 3.0 * 7.0;
        let cov_form: f64 = 22.0 / (3.0 / 7.0);
        assert_eq!(m.p[0], mean_form.round() as u64);
        assert_eq!(m.p[0], cov_form.round() as u64);
    }
}

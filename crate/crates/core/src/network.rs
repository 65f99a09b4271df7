//! Station registry, line topology, direct-path relation and the weekly calendar.

use std::collections::HashMap;
use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use crate::error::{Error, Result};
use crate::matrix::CellMask;

/// Dense index into a [`StationRegistry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationId(pub usize);

impl StationId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Station {
    pub name: String,
    /// Inside the city core whose trips to the surrounding fare area are not sold as tickets.
    pub milan_internal: bool,
    /// Inside the surrounding integrated-fare area.
    pub is_area: bool,
    /// Served by a fare that does not appear in the ticket data at all.
    pub interregional: bool,
}

impl Station {
    pub fn plain(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            milan_internal: false,
            is_area: false,
            interregional: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StationRegistry {
    stations: Vec<Station>,
    by_name: HashMap<String, StationId>,
}

impl StationRegistry {
    pub fn new(stations: Vec<Station>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(stations.len());
        for (idx, st) in stations.iter().enumerate() {
            if st.name.trim().is_empty() {
                return Err(Error::Registry(format!("station {idx} has an empty name")));
            }
            if st.milan_internal && st.is_area {
                return Err(Error::Registry(format!(
                    "station `{}` cannot be both city-internal and in the fare area",
                    st.name
                )));
            }
            if by_name.insert(st.name.clone(), StationId(idx)).is_some() {
                return Err(Error::Registry(format!(
                    "duplicate station name `{}`",
                    st.name
                )));
            }
        }
        Ok(Self { stations, by_name })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn get(&self, id: StationId) -> &Station {
        &self.stations[id.0]
    }

    pub fn name(&self, id: StationId) -> &str {
        &self.stations[id.0].name
    }

    pub fn lookup(&self, name: &str) -> Option<StationId> {
        self.by_name.get(name).copied()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn ids(&self) -> impl Iterator<Item = StationId> {
        (0..self.stations.len()).map(StationId)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Line {
    pub id: String,
    pub stations: Vec<StationId>,
}

impl Line {
    pub fn new(id: impl Into<String>, stations: Vec<StationId>) -> Result<Self> {
        let id = id.into();
        if stations.len() < 2 {
            return Err(Error::Topology(format!(
                "line `{id}` must have at least two stations"
            )));
        }
        for (k, s) in stations.iter().enumerate() {
            if stations[..k].contains(s) {
                return Err(Error::Topology(format!(
                    "line `{id}` visits station {s} twice"
                )));
            }
        }
        Ok(Self { id, stations })
    }
}

/// The set of ordered station pairs connected by at least one line without a transfer.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectPathSet {
    membership: CellMask,
}

impl DirectPathSet {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.membership[(i, j)]
    }

    pub fn n_stations(&self) -> usize {
        self.membership.dim()
    }

    pub fn mask(&self) -> &CellMask {
        &self.membership
    }

    pub fn len(&self) -> usize {
        self.membership.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.membership
            .iter_cells()
            .filter(|(_, _, &m)| m)
            .map(|(i, j, _)| (i, j))
    }
}

pub fn build_direct_paths(lines: &[Line], n_stations: usize) -> Result<DirectPathSet> {
    let mut membership = CellMask::filled(n_stations, false);
    for line in lines {
        if let Some(bad) = line.stations.iter().find(|s| s.0 >= n_stations) {
            return Err(Error::Topology(format!(
                "line `{}` references station {bad} but only {n_stations} stations exist",
                line.id
            )));
        }
        for &a in &line.stations {
            for &b in &line.stations {
                if a != b {
                    membership[(a.0, b.0)] = true;
                }
            }
        }
    }
    Ok(DirectPathSet { membership })
}

/// Consecutive Monday-anchored weeks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeekCalendar {
    first_monday: NaiveDate,
    num_weeks: usize,
}

impl WeekCalendar {
    pub fn new(first_monday: NaiveDate, num_weeks: usize) -> Result<Self> {
        if first_monday.weekday() != Weekday::Mon {
            return Err(Error::Config(format!(
                "calendar must start on a Monday, {first_monday} is a {:?}",
                first_monday.weekday()
            )));
        }
        if num_weeks == 0 {
            return Err(Error::Config("calendar must span at least one week".into()));
        }
        Ok(Self {
            first_monday,
            num_weeks,
        })
    }

    pub fn first_monday(&self) -> NaiveDate {
        self.first_monday
    }

    pub fn num_weeks(&self) -> usize {
        self.num_weeks
    }

    /// Signed week offset from the first week; may fall outside the calendar.
    pub fn week_offset(&self, d: NaiveDate) -> i64 {
        (d - self.first_monday).num_days().div_euclid(7)
    }

    /// Week index of `d`, or `None` when the date lies outside the calendar.
    pub fn week_of(&self, d: NaiveDate) -> Option<usize> {
        let w = self.week_offset(d);
        (0..self.num_weeks as i64)
            .contains(&w)
            .then_some(w as usize)
    }

    pub fn week_start(&self, week: usize) -> NaiveDate {
        self.first_monday + Duration::days(7 * week as i64)
    }

    pub fn last_day(&self) -> NaiveDate {
        self.week_start(self.num_weeks) - Duration::days(1)
    }
}

/// Monday of the week containing `d`.
pub fn monday_of(d: NaiveDate) -> NaiveDate {
    d - Duration::days(d.weekday().num_days_from_monday() as i64)
}

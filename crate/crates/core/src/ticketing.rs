//! Ticket and subscription sales turned into weekly seed OD matrices.
//!
//! Every ticket covers an unordered station pair and is spread evenly over the
//! two directions. How much travel a sale stands for, and when, depends on its
//! kind:
//!
//! | kind | attributed trips |
//! |------|------------------|
//! | ordinary, special rate, additional exaction | 0.5 each way on one random day 1..=7 days after purchase |
//! | carnet | one round trip on each of 5 distinct random days 1..=30 days after purchase |
//! | weekly subscription | 5 round trips in the purchase week (bought Mon-Wed) or the next week |
//! | monthly subscription | `round(5/7 * days)` round trips per week of the usage month |
//! | yearly subscription | same weekly rule from purchase to the end of the 12th following month |
//!
//! A round trip is one trip in each direction. Random draws come from a
//! ChaCha stream keyed by the run seed with the record ordinal as the stream
//! id, so a record's draws never depend on the records around it.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{CellMask, SquareMatrix};
use crate::network::{monday_of, DirectPathSet, StationId, StationRegistry, WeekCalendar};
use crate::timetable::TransferTable;

/// Round trips credited for a full week of subscription use.
pub const ROUND_TRIPS_PER_WEEK: f64 = 5.0;
pub const ORDINARY_WINDOW_DAYS: i64 = 7;
pub const CARNET_WINDOW_DAYS: usize = 30;
pub const CARNET_TRAVEL_DAYS: usize = 5;
/// Monthly subscriptions bought on or after this day of the month cover the next month.
pub const MONTHLY_CUTOFF_DAY: u32 = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TicketKind {
    Ordinary,
    SpecialRate,
    AdditionalExaction,
    Carnet,
    WeeklySub,
    MonthlySub,
    YearlySub,
    Other,
}

impl TicketKind {
    pub const ALL: [TicketKind; 8] = [
        TicketKind::Ordinary,
        TicketKind::SpecialRate,
        TicketKind::AdditionalExaction,
        TicketKind::Carnet,
        TicketKind::WeeklySub,
        TicketKind::MonthlySub,
        TicketKind::YearlySub,
        TicketKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TicketKind::Ordinary => "ordinary",
            TicketKind::SpecialRate => "special_rate",
            TicketKind::AdditionalExaction => "additional_exaction",
            TicketKind::Carnet => "carnet",
            TicketKind::WeeklySub => "weekly_sub",
            TicketKind::MonthlySub => "monthly_sub",
            TicketKind::YearlySub => "yearly_sub",
            TicketKind::Other => "other",
        }
    }
}

impl fmt::Display for TicketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TicketKind {
    type Err = std::convert::Infallible;

    /// Unrecognized kinds map to [`TicketKind::Other`].
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Ok(TicketKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .unwrap_or(TicketKind::Other))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TicketRecord {
    pub station_a: StationId,
    pub station_b: StationId,
    pub kind: TicketKind,
    pub purchase_date: NaiveDate,
    /// Units sold. May be fractional only for shared-fare records.
    pub quantity: f64,
    /// Quantity reported at half its real value because the fare is shared with another operator.
    pub shared_fare: bool,
}

impl TicketRecord {
    pub fn new(
        station_a: StationId,
        station_b: StationId,
        kind: TicketKind,
        purchase_date: NaiveDate,
        quantity: f64,
        shared_fare: bool,
    ) -> Result<Self> {
        if station_a == station_b {
            return Err(Error::InvalidRecord(format!(
                "ticket covers the same station {station_a} at both ends"
            )));
        }
        if !(quantity.is_finite() && quantity > 0.0) {
            return Err(Error::InvalidRecord(format!(
                "ticket quantity must be positive, got {quantity}"
            )));
        }
        if !shared_fare && quantity.fract() != 0.0 {
            return Err(Error::InvalidRecord(format!(
                "fractional quantity {quantity} on a non-shared-fare ticket"
            )));
        }
        Ok(Self {
            station_a,
            station_b,
            kind,
            purchase_date,
            quantity,
            shared_fare,
        })
    }
}

/// Rounds a shared-fare quantity up to the next integer. The recorded amount is
/// not doubled: the true count cannot be recovered, so only the ceiling is taken.
pub fn apply_shared_fare_ceiling(record: &TicketRecord) -> TicketRecord {
    let mut out = record.clone();
    if out.shared_fare {
        out.quantity = out.quantity.ceil();
    }
    out
}

/// Dense non-negative seed for one calendar week.
#[derive(Clone, Debug, PartialEq)]
pub struct WeeklySeedOD {
    pub week: usize,
    pub x_star: SquareMatrix<f64>,
}

impl WeeklySeedOD {
    pub fn zeros(week: usize, n: usize) -> Self {
        Self {
            week,
            x_star: SquareMatrix::zeros(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TicketConversion {
    pub seeds: Vec<WeeklySeedOD>,
    pub converted_records: usize,
    /// Records of kind `other`, excluded from conversion.
    pub excluded_records: usize,
    /// Trip mass attributed to weeks outside the calendar.
    pub dropped_out_of_calendar: f64,
}

impl TicketConversion {
    pub fn total_mass(&self) -> f64 {
        self.seeds.iter().map(|s| s.x_star.sum()).sum()
    }
}

/// Trips credited to one direction during the week starting on `monday`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct WeekShare {
    monday: NaiveDate,
    per_direction: f64,
}

fn record_rng(seed: u64, ordinal: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal as u64);
    rng
}

fn last_day_of_month(year: i32, month: u32) -> NaiveDate {
    let (ny, nm) = if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    };
    NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid first of month") - Duration::days(1)
}

fn add_months(year: i32, month: u32, k: u32) -> (i32, u32) {
    let zero_based = month - 1 + k;
    (year + (zero_based / 12) as i32, zero_based % 12 + 1)
}

/// Round trips per Monday-anchored week for a subscription valid on `[start, end]`.
fn subscription_weeks(start: NaiveDate, end: NaiveDate) -> Vec<WeekShare> {
    let mut out = Vec::new();
    let mut monday = monday_of(start);
    while monday <= end {
        let sunday = monday + Duration::days(6);
        let first = monday.max(start);
        let last = sunday.min(end);
        let days = (last - first).num_days() + 1;
        let trips = (ROUND_TRIPS_PER_WEEK / 7.0 * days as f64).round();
        if trips > 0.0 {
            out.push(WeekShare {
                monday,
                per_direction: trips,
            });
        }
        monday += Duration::days(7);
    }
    out
}

/// Validity span of a monthly subscription.
pub fn monthly_span(purchase: NaiveDate) -> (NaiveDate, NaiveDate) {
    if purchase.day() < MONTHLY_CUTOFF_DAY {
        (
            purchase,
            last_day_of_month(purchase.year(), purchase.month()),
        )
    } else {
        let (y, m) = add_months(purchase.year(), purchase.month(), 1);
        (
            NaiveDate::from_ymd_opt(y, m, 1).expect("valid first of month"),
            last_day_of_month(y, m),
        )
    }
}

/// Validity span of a yearly subscription: purchase day to the last day of the 12th month after.
pub fn yearly_span(purchase: NaiveDate) -> (NaiveDate, NaiveDate) {
    let (y, m) = add_months(purchase.year(), purchase.month(), 12);
    (purchase, last_day_of_month(y, m))
}

/// Week shares of one unit of `kind` bought on `purchase`.
fn unit_shares(kind: TicketKind, purchase: NaiveDate, rng: &mut ChaCha8Rng) -> Vec<WeekShare> {
    match kind {
        TicketKind::Ordinary | TicketKind::SpecialRate | TicketKind::AdditionalExaction => {
            let day = purchase + Duration::days(rng.random_range(1..=ORDINARY_WINDOW_DAYS));
            vec![WeekShare {
                monday: monday_of(day),
                per_direction: 0.5,
            }]
        }
        TicketKind::Carnet => rand::seq::index::sample(rng, CARNET_WINDOW_DAYS, CARNET_TRAVEL_DAYS)
            .into_iter()
            .map(|off| WeekShare {
                monday: monday_of(purchase + Duration::days(off as i64 + 1)),
                per_direction: 1.0,
            })
            .collect(),
        TicketKind::WeeklySub => {
            let early = matches!(
                purchase.weekday(),
                Weekday::Mon | Weekday::Tue | Weekday::Wed
            );
            let monday = monday_of(purchase) + Duration::days(if early { 0 } else { 7 });
            vec![WeekShare {
                monday,
                per_direction: ROUND_TRIPS_PER_WEEK,
            }]
        }
        TicketKind::MonthlySub => {
            let (start, end) = monthly_span(purchase);
            subscription_weeks(start, end)
        }
        TicketKind::YearlySub => {
            let (start, end) = yearly_span(purchase);
            subscription_weeks(start, end)
        }
        TicketKind::Other => Vec::new(),
    }
}

fn is_random_kind(kind: TicketKind) -> bool {
    matches!(
        kind,
        TicketKind::Ordinary
            | TicketKind::SpecialRate
            | TicketKind::AdditionalExaction
            | TicketKind::Carnet
    )
}

pub fn convert_tickets(
    records: &[TicketRecord],
    cal: &WeekCalendar,
    n_stations: usize,
    rng_seed: u64,
) -> Result<TicketConversion> {
    let mut seeds: Vec<WeeklySeedOD> = (0..cal.num_weeks())
        .map(|w| WeeklySeedOD::zeros(w, n_stations))
        .collect();
    let mut out = TicketConversion {
        seeds: Vec::new(),
        converted_records: 0,
        excluded_records: 0,
        dropped_out_of_calendar: 0.0,
    };

    for (ordinal, raw) in records.iter().enumerate() {
        let (a, b) = (raw.station_a.index(), raw.station_b.index());
        if a >= n_stations || b >= n_stations {
            return Err(Error::InvalidRecord(format!(
                "ticket {ordinal} references a station outside the registry"
            )));
        }
        if raw.kind == TicketKind::Other {
            out.excluded_records += 1;
            continue;
        }
        let record = apply_shared_fare_ceiling(raw);
        let units = record.quantity as u64;
        let mut rng = record_rng(rng_seed, ordinal);

        let mut credit = |share: WeekShare, units: f64| {
            let mass = share.per_direction * units;
            match cal.week_of(share.monday) {
                Some(w) => {
                    seeds[w].x_star[(a, b)] += mass;
                    seeds[w].x_star[(b, a)] += mass;
                }
                None => out.dropped_out_of_calendar += 2.0 * mass,
            }
        };

        if is_random_kind(record.kind) {
            for _ in 0..units {
                for share in unit_shares(record.kind, record.purchase_date, &mut rng) {
                    credit(share, 1.0);
                }
            }
        } else {
            for share in unit_shares(record.kind, record.purchase_date, &mut rng) {
                credit(share, units as f64);
            }
        }
        out.converted_records += 1;
    }
    out.seeds = seeds;
    Ok(out)
}

/// Share of a total in percent; `None` for an empty total.
pub fn share_percent(count: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| 100.0 * count as f64 / total as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransferClassCounts {
    pub direct: f64,
    pub one_transfer: f64,
    pub multi_transfer: f64,
}

impl TransferClassCounts {
    pub fn total(&self) -> f64 {
        self.direct + self.one_transfer + self.multi_transfer
    }

    /// Percent shares of (direct, one transfer, multi transfer).
    pub fn shares(&self) -> Option<[f64; 3]> {
        let t = self.total();
        (t > 0.0).then(|| {
            [
                100.0 * self.direct / t,
                100.0 * self.one_transfer / t,
                100.0 * self.multi_transfer / t,
            ]
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TicketSummary {
    /// Purchase records per kind, in [`TicketKind::ALL`] order.
    pub kind_counts: Vec<(TicketKind, u64)>,
    pub total_records: u64,
    pub transfers: Option<TransferClassCounts>,
}

impl TicketSummary {
    pub fn count(&self, kind: TicketKind) -> u64 {
        self.kind_counts
            .iter()
            .find(|(k, _)| *k == kind)
            .map_or(0, |(_, c)| *c)
    }

    pub fn share(&self, kind: TicketKind) -> Option<f64> {
        share_percent(self.count(kind), self.total_records)
    }
}

pub fn summarize_tickets(records: &[TicketRecord]) -> TicketSummary {
    let kind_counts = TicketKind::ALL
        .into_iter()
        .map(|k| (k, records.iter().filter(|r| r.kind == k).count() as u64))
        .collect();
    TicketSummary {
        kind_counts,
        total_records: records.len() as u64,
        transfers: None,
    }
}

/// Classifies seed mass (before separation) by how many transfers its pair needs.
pub fn classify_transfers(
    seeds: &[WeeklySeedOD],
    direct: &DirectPathSet,
    transfers: &TransferTable,
) -> TransferClassCounts {
    let mut c = TransferClassCounts::default();
    for seed in seeds {
        for (i, j, &v) in seed.x_star.iter_cells() {
            if i == j || v == 0.0 {
                continue;
            }
            if direct.contains(i, j) {
                c.direct += v;
            } else if transfers.get(i, j).is_some() {
                c.one_transfer += v;
            } else {
                c.multi_transfer += v;
            }
        }
    }
    c
}

/// Splits every indirect cell into its two legs through the optimal transfer
/// station. Indirect cells without a single-transfer route lose their mass,
/// which is returned as the second element.
pub fn separate_transfers(
    seed: &WeeklySeedOD,
    transfers: &TransferTable,
    direct: &DirectPathSet,
) -> (WeeklySeedOD, f64) {
    let n = seed.x_star.dim();
    let mut out = seed.clone();
    let mut dropped = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = seed.x_star[(i, j)];
            if i == j || v == 0.0 || direct.contains(i, j) {
                continue;
            }
            out.x_star[(i, j)] = 0.0;
            match transfers.get(i, j) {
                Some(k) => {
                    out.x_star[(i, k.index())] += v;
                    out.x_star[(k.index(), j)] += v;
                }
                None => dropped += v,
            }
        }
    }
    (out, dropped)
}

/// Cells with no ticket data by construction: any pair touching an
/// interregional station, and pairs between city-internal and fare-area stations.
pub fn build_missing_mask(reg: &StationRegistry) -> CellMask {
    let st = reg.stations();
    CellMask::from_fn(reg.len(), |i, j| {
        if i == j {
            return false;
        }
        let (a, b) = (&st[i], &st[j]);
        a.interregional
            || b.interregional
            || (a.milan_internal && b.is_area)
            || (a.is_area && b.milan_internal)
    })
}

//! Mean direct travel times from observed rides and single-transfer routing.
//!
//! Travel-time samples are trimmed per (origin, destination, line) to the
//! inclusive band between the 5% and 95% empirical quantiles before averaging.
//! When several lines serve the same pair, the fastest mean wins. Pairs without
//! a direct connection are then routed through the intermediate station that
//! minimizes the summed direct times; routes needing two or more transfers stay
//! undefined.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveTime};

use crate::matrix::SquareMatrix;
use crate::network::{DirectPathSet, StationId};

pub const TRIM_LOWER_QUANTILE: f64 = 0.05;
pub const TRIM_UPPER_QUANTILE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimeSample {
    pub origin: StationId,
    pub dest: StationId,
    pub line_id: String,
    pub minutes: f64,
}

/// Mean travel minutes per ordered station pair; undefined cells carry no value.
#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimeMatrix {
    minutes: SquareMatrix<Option<f64>>,
}

impl TravelTimeMatrix {
    pub fn undefined(n: usize) -> Self {
        Self {
            minutes: SquareMatrix::filled(n, None),
        }
    }

    pub fn dim(&self) -> usize {
        self.minutes.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.minutes[(i, j)]
    }

    pub fn is_defined(&self, i: usize, j: usize) -> bool {
        self.minutes[(i, j)].is_some()
    }

    /// Sets a cell. Panics on non-positive or non-finite times.
    pub fn set(&mut self, i: usize, j: usize, minutes: f64) {
        assert!(
            minutes.is_finite() && minutes > 0.0,
            "travel time must be positive, got {minutes}"
        );
        self.minutes[(i, j)] = Some(minutes);
    }

    pub fn defined_count(&self) -> usize {
        self.minutes
            .as_slice()
            .iter()
            .filter(|m| m.is_some())
            .count()
    }

    pub fn defined_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.minutes
            .iter_cells()
            .filter_map(|(i, j, m)| m.map(|m| (i, j, m)))
    }
}

/// Optimal single-transfer station for pairs outside the direct-path set.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferTable {
    k_star: SquareMatrix<Option<StationId>>,
}

impl TransferTable {
    pub fn empty(n: usize) -> Self {
        Self {
            k_star: SquareMatrix::filled(n, None),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<StationId> {
        self.k_star[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: StationId) {
        self.k_star[(i, j)] = Some(k);
    }

    pub fn dim(&self) -> usize {
        self.k_star.dim()
    }

    pub fn len(&self) -> usize {
        self.k_star
            .as_slice()
            .iter()
            .filter(|k| k.is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, StationId)> + '_ {
        self.k_star
            .iter_cells()
            .filter_map(|(i, j, k)| k.map(|k| (i, j, k)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleStats {
    pub accepted: usize,
    /// Non-positive or non-finite durations.
    pub rejected_non_positive: usize,
    /// Samples for pairs not in the direct-path set, or referencing unknown stations.
    pub rejected_off_network: usize,
    /// Samples removed by quantile trimming.
    pub trimmed: usize,
}

/// Empirical quantile with linear interpolation between order statistics.
///
/// `sorted` must be non-empty and ascending; `q` is clamped to `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean of the samples lying inside `[q05, q95]`, plus the number trimmed.
/// Returns `None` when nothing survives.
pub fn trimmed_mean(samples: &[f64]) -> (Option<f64>, usize) {
    if samples.is_empty() {
        return (None, 0);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, TRIM_LOWER_QUANTILE);
    let hi = quantile_sorted(&sorted, TRIM_UPPER_QUANTILE);
    let kept: Vec<f64> = sorted.into_iter().filter(|&m| m >= lo && m <= hi).collect();
    let trimmed = samples.len() - kept.len();
    if kept.is_empty() {
        return (None, trimmed);
    }
    (Some(kept.iter().sum::<f64>() / kept.len() as f64), trimmed)
}

pub fn estimate_direct_times(
    samples: &[TravelTimeSample],
    direct: &DirectPathSet,
) -> (TravelTimeMatrix, SampleStats) {
    let n = direct.n_stations();
    let mut stats = SampleStats::default();
    let mut groups: BTreeMap<(usize, usize, &str), Vec<f64>> = BTreeMap::new();
    for s in samples {
        if !(s.minutes.is_finite() && s.minutes > 0.0) {
            stats.rejected_non_positive += 1;
            continue;
        }
        let (o, d) = (s.origin.index(), s.dest.index());
        if o >= n || d >= n || !direct.contains(o, d) {
            stats.rejected_off_network += 1;
            continue;
        }
        groups
            .entry((o, d, s.line_id.as_str()))
            .or_default()
            .push(s.minutes);
    }

    let mut times = TravelTimeMatrix::undefined(n);
    for ((o, d, _line), minutes) in &groups {
        let (mean, trimmed) = trimmed_mean(minutes);
        stats.trimmed += trimmed;
        stats.accepted += minutes.len() - trimmed;
        if let Some(mean) = mean {
            let best = times.get(*o, *d).map_or(mean, |cur| cur.min(mean));
            times.set(*o, *d, best);
        }
    }
    (times, stats)
}

/// Routes every pair outside the direct-path set through its best single
/// intermediate station. Ties go to the lowest station id.
pub fn compute_transfers(
    times: &TravelTimeMatrix,
    direct: &DirectPathSet,
) -> (TransferTable, TravelTimeMatrix) {
    let n = direct.n_stations();
    let mut table = TransferTable::empty(n);
    let mut extended = times.clone();
    for i in 0..n {
        for j in 0..n {
            if i == j || direct.contains(i, j) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for k in 0..n {
                if k == i || k == j || !direct.contains(i, k) || !direct.contains(k, j) {
                    continue;
                }
                let (Some(t_ik), Some(t_kj)) = (times.get(i, k), times.get(k, j)) else {
                    continue;
                };
                let total = t_ik + t_kj;
                if best.is_none_or(|(_, b)| total < b) {
                    best = Some((k, total));
                }
            }
            if let Some((k, total)) = best {
                table.set(i, j, StationId(k));
                extended.set(i, j, total);
            }
        }
    }
    (table, extended)
}

/// One stop of an observed ride, as found in the timetable file.
#[derive(Clone, Debug, PartialEq)]
pub struct TimetableStop {
    pub ride_id: String,
    pub line_id: String,
    pub station: StationId,
    pub arrival: Option<NaiveTime>,
    pub departure: Option<NaiveTime>,
    pub date: NaiveDate,
}

/// Derives one sample per ordered stop pair along each ride: arrival at the
/// later stop minus departure from the earlier one. Stops are taken in file
/// order within a ride; a missing departure falls back to the arrival time and
/// vice versa. Rides crossing midnight wrap forward by a day.
pub fn samples_from_rides(stops: &[TimetableStop]) -> Vec<TravelTimeSample> {
    let mut rides: BTreeMap<(&str, NaiveDate), Vec<&TimetableStop>> = BTreeMap::new();
    for stop in stops {
        rides
            .entry((stop.ride_id.as_str(), stop.date))
            .or_default()
            .push(stop);
    }

    let mut samples = Vec::new();
    for ride in rides.values() {
        for (a_idx, a) in ride.iter().enumerate() {
            let Some(leave) = a.departure.or(a.arrival) else {
                continue;
            };
            for b in &ride[a_idx + 1..] {
                let Some(reach) = b.arrival.or(b.departure) else {
                    continue;
                };
                if a.station == b.station {
                    continue;
                }
                let mut minutes = (reach - leave).num_seconds() as f64 / 60.0;
                if minutes < 0.0 {
                    minutes += 24.0 * 60.0;
                }
                samples.push(TravelTimeSample {
                    origin: a.station,
                    dest: b.station,
                    line_id: a.line_id.clone(),
                    minutes,
                });
            }
        }
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_direct_paths, Line};

    fn sid(v: &[usize]) -> Vec<StationId> {
        v.iter().copied().map(StationId).collect()
    }

    fn sample(o: usize, d: usize, line: &str, minutes: f64) -> TravelTimeSample {
        TravelTimeSample {
            origin: StationId(o),
            dest: StationId(d),
            line_id: line.into(),
            minutes,
        }
    }

    #[test]
    fn constant_samples() {
        let d = build_direct_paths(&[Line::new("l", sid(&[0, 1])).unwrap()], 2).unwrap();
        let s: Vec<_> = (0..4).map(|_| sample(0, 1, "l", 10.0)).collect();
        let (t, stats) = estimate_direct_times(&s, &d);
        assert_eq!(t.get(0, 1), Some(10.0));
        assert_eq!(t.get(1, 0), None);
        assert_eq!(stats.accepted, 4);
    }

    #[test]
    fn fastest_line_wins() {
        let lines = vec![
            Line::new("slow", sid(&[0, 1])).unwrap(),
            Line::new("fast", sid(&[0, 1])).unwrap(),
        ];
        let d = build_direct_paths(&lines, 2).unwrap();
        let s = vec![sample(0, 1, "slow", 12.0), sample(0, 1, "fast", 9.0)];
        let (t, _) = estimate_direct_times(&s, &d);
        assert_eq!(t.get(0, 1), Some(9.0));
    }

    #[test]
    fn trimmed_mean_by_hand() {
        // n = 6: q05 at h = 0.25 -> 8 + 0.25 * 1 = 8.25; q95 at h = 4.75 -> 12 + 0.75 * 188 = 153.
        // Survivors 9, 10, 11, 12 -> mean 10.5.
        let (m, trimmed) = trimmed_mean(&[8.0, 9.0, 10.0, 11.0, 12.0, 200.0]);
        assert_eq!(trimmed, 2);
        assert!((m.unwrap() - 10.5).abs() < 1e-12);
    }

    #[test]
    fn bad_samples_are_counted() {
        let d = build_direct_paths(&[Line::new("l", sid(&[0, 1])).unwrap()], 3).unwrap();
        let s = vec![
            sample(0, 1, "l", -3.0),
            sample(0, 1, "l", 0.0),
            sample(0, 2, "l", 5.0),
            sample(0, 1, "l", 7.0),
        ];
        let (t, stats) = estimate_direct_times(&s, &d);
        assert_eq!(stats.rejected_non_positive, 2);
        assert_eq!(stats.rejected_off_network, 1);
        assert_eq!(t.get(0, 1), Some(7.0));
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert!((quantile_sorted(&xs, 0.05) - 1.2).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn unique_transfer_candidate() {
        let lines = vec![
            Line::new("a", sid(&[0, 1])).unwrap(),
            Line::new("b", sid(&[1, 2])).unwrap(),
        ];
        let d = build_direct_paths(&lines, 3).unwrap();
        let mut t = TravelTimeMatrix::undefined(3);
        for (i, j, m) in [(0, 1, 10.0), (1, 0, 11.0), (1, 2, 20.0), (2, 1, 21.0)] {
            t.set(i, j, m);
        }
        let (kt, ext) = compute_transfers(&t, &d);
        assert_eq!(kt.get(0, 2), Some(StationId(1)));
        assert_eq!(ext.get(0, 2), Some(30.0));
        assert_eq!(ext.get(2, 0), Some(32.0));
        assert_eq!(kt.len(), 2);
    }

    #[test]
    fn cheaper_hub_is_chosen() {
        // A=0, B=1, C=2, D=3.
        let lines = vec![
            Line::new("ab", sid(&[0, 1])).unwrap(),
            Line::new("bc", sid(&[1, 2])).unwrap(),
            Line::new("ad", sid(&[0, 3])).unwrap(),
            Line::new("dc", sid(&[3, 2])).unwrap(),
        ];
        let d = build_direct_paths(&lines, 4).unwrap();
        let mut t = TravelTimeMatrix::undefined(4);
        for (i, j, m) in [(0, 1, 10.0), (1, 2, 20.0), (0, 3, 12.0), (3, 2, 15.0)] {
            t.set(i, j, m);
            t.set(j, i, m);
        }
        let (kt, ext) = compute_transfers(&t, &d);
        assert_eq!(kt.get(0, 2), Some(StationId(3)));
        assert_eq!(ext.get(0, 2), Some(27.0));
    }

    #[test]
    fn ties_prefer_lowest_id_and_multi_transfer_stays_undefined() {
        let lines = vec![
            Line::new("x", sid(&[0, 2])).unwrap(),
            Line::new("y", sid(&[2, 3])).unwrap(),
            Line::new("z", sid(&[0, 1, 3])).unwrap(),
            Line::new("w", sid(&[3, 4])).unwrap(),
            Line::new("v", sid(&[4, 5])).unwrap(),
        ];
        let d = build_direct_paths(&lines, 6).unwrap();
        let mut t = TravelTimeMatrix::undefined(6);
        for (i, j) in d.pairs().collect::<Vec<_>>() {
            t.set(i, j, 5.0);
        }
        let (kt, ext) = compute_transfers(&t, &d);
        // 0 -> 4 via 3 only; 2 -> 1 via 0 or 3 (tie, lowest wins).
        assert_eq!(kt.get(0, 4), Some(StationId(3)));
        assert_eq!(kt.get(2, 1), Some(StationId(0)));
        // 0 -> 5 needs two transfers.
        assert_eq!(kt.get(0, 5), None);
        assert!(!ext.is_defined(0, 5));
    }

    #[test]
    fn ride_samples_cover_all_later_stops() {
        let date = NaiveDate::from_ymd_opt(2022, 6, 6).unwrap();
        let hm = |h, m| NaiveTime::from_hms_opt(h, m, 0);
        let stop = |s, arr, dep| TimetableStop {
            ride_id: "r1".into(),
            line_id: "L".into(),
            station: StationId(s),
            arrival: arr,
            departure: dep,
            date,
        };
        let stops = vec![
            stop(0, None, hm(23, 50)),
            stop(1, hm(23, 58), hm(0, 0)),
            stop(2, hm(0, 10), None),
        ];
        let s = samples_from_rides(&stops);
        let mins: Vec<_> = s
            .iter()
            .map(|s| (s.origin.0, s.dest.0, s.minutes))
            .collect();
        assert_eq!(mins, vec![(0, 1, 8.0), (0, 2, 20.0), (1, 2, 10.0)]);
    }
}

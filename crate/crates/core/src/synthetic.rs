//! Deterministic synthetic scenarios with known ground truth.
//!
//! Truth is symmetric and lives on direct pairs only. Counters are the exact
//! boarded and alighted totals of the truth, spread over individual rides,
//! then degraded by marking whole rides missing. Tickets are sampled so the
//! converted seed is about [`SEED_SCALE`] times the truth.

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::PipelineConfig;
use crate::counters::{RideCountRecord, RideStatus};
use crate::error::{Error, Result};
use crate::io;
use crate::ipf::WeeklyOD;
use crate::matrix::SquareMatrix;
use crate::network::{build_direct_paths, Line, Station, StationId, StationRegistry, WeekCalendar};
use crate::ticketing::{TicketKind, TicketRecord, ROUND_TRIPS_PER_WEEK};
use crate::timetable::TimetableStop;

/// Expected converted seed per true trip.
pub const SEED_SCALE: f64 = ROUND_TRIPS_PER_WEEK;

/// Fractions of each pair's weekly truth sold as each ticket kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TicketMix {
    pub weekly_sub: f64,
    pub ordinary: f64,
    pub carnet: f64,
}

impl TicketMix {
    pub const WEEKLY_ONLY: TicketMix = TicketMix {
        weekly_sub: 1.0,
        ordinary: 0.0,
        carnet: 0.0,
    };
    pub const MIXED: TicketMix = TicketMix {
        weekly_sub: 0.6,
        ordinary: 0.3,
        carnet: 0.1,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScenario {
    pub stations: Vec<Station>,
    pub lines: Vec<(String, Vec<usize>)>,
    pub first_monday: NaiveDate,
    pub num_weeks: usize,
    /// Expected weekly trips per ordered pair; must be symmetric and zero off direct pairs.
    pub intensity: SquareMatrix<f64>,
    /// Multiplier on the intensity for each week.
    pub weekly_profile: Vec<f64>,
    /// Probability that a ride's counters are missing.
    pub dropout: f64,
    pub ticket_mix: TicketMix,
    /// Rides per line, direction and day.
    pub rides_per_day: usize,
    pub rng_seed: u64,
}

/// Random stream ids, one per generated artifact.
const STREAM_INTENSITY: u64 = 0;
const STREAM_TRUTH: u64 = 1;
const STREAM_RIDES: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_TIMETABLE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn default_monday() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 6, 6).expect("valid date")
}

impl SyntheticScenario {
    /// Ten stations on three lines over eight weeks, weekly subscriptions only.
    pub fn standard(rng_seed: u64) -> Self {
        let stations = (0..10)
            .map(|i| Station::plain(format!("S{i:02}")))
            .collect();
        let lines = vec![
            ("L1".to_string(), vec![0, 1, 2, 3, 4]),
            ("L2".to_string(), vec![4, 5, 6, 7]),
            ("L3".to_string(), vec![2, 8, 9, 6]),
        ];
        let num_weeks = 8;
        let weekly_profile = (0..num_weeks)
            .map(|w| {
                let wave = 1.0 + 0.15 * (std::f64::consts::TAU * w as f64 / num_weeks as f64).sin();
                if w == 5 {
                    0.7 * wave
                } else {
                    wave
                }
            })
            .collect();
        let mut s = Self {
            stations,
            lines,
            first_monday: default_monday(),
            num_weeks,
            intensity: SquareMatrix::zeros(10),
            weekly_profile,
            dropout: 0.0,
            ticket_mix: TicketMix::WEEKLY_ONLY,
            rides_per_day: 4,
            rng_seed,
        };
        s.intensity = s.random_intensity(60.0);
        s
    }

    /// Two stations, one line, one week.
    pub fn tiny(rng_seed: u64) -> Self {
        let mut intensity = SquareMatrix::zeros(2);
        intensity[(0, 1)] = 40.0;
        intensity[(1, 0)] = 40.0;
        Self {
            stations: vec![Station::plain("A"), Station::plain("B")],
            lines: vec![("L1".to_string(), vec![0, 1])],
            first_monday: default_monday(),
            num_weeks: 1,
            intensity,
            weekly_profile: vec![1.0],
            dropout: 0.0,
            ticket_mix: TicketMix::WEEKLY_ONLY,
            rides_per_day: 2,
            rng_seed,
        }
    }

    /// Symmetric intensities on direct pairs, uniform in `[0.5, 1.5] * base`.
    pub fn random_intensity(&self, base: f64) -> SquareMatrix<f64> {
        let n = self.stations.len();
        let direct = self.direct_paths().expect("valid topology");
        let mut rng = stream(self.rng_seed, STREAM_INTENSITY);
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                if direct.contains(i, j) {
                    let v = base * rng.random_range(0.5..1.5);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        m
    }

    pub fn registry(&self) -> Result<StationRegistry> {
        StationRegistry::new(self.stations.clone())
    }

    pub fn line_objects(&self) -> Result<Vec<Line>> {
        self.lines
            .iter()
            .map(|(id, st)| Line::new(id.clone(), st.iter().map(|&s| StationId(s)).collect()))
            .collect()
    }

    pub fn calendar(&self) -> Result<WeekCalendar> {
        WeekCalendar::new(self.first_monday, self.num_weeks)
    }

    fn direct_paths(&self) -> Result<crate::network::DirectPathSet> {
        build_direct_paths(&self.line_objects()?, self.stations.len())
    }

    fn validate(&self) -> Result<()> {
        let n = self.stations.len();
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.weekly_profile.len() != self.num_weeks {
            return Err(Error::DimensionMismatch {
                expected: self.num_weeks,
                got: self.weekly_profile.len(),
            });
        }
        if self.intensity.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.intensity.dim(),
            });
        }
        if self.rides_per_day == 0 {
            return Err(Error::Config("rides_per_day must be >= 1".into()));
        }
        let direct = self.direct_paths()?;
        for i in 0..n {
            if !self.lines.iter().any(|(_, st)| st.contains(&i)) {
                return Err(Error::Topology(format!("station {i} lies on no line")));
            }
            for j in 0..n {
                let v = self.intensity[(i, j)];
                if !(v >= 0.0 && v.is_finite()) || (v > 0.0 && !direct.contains(i, j)) {
                    return Err(Error::Config(format!(
                        "intensity ({i},{j}) = {v} must be >= 0 and only on direct pairs"
                    )));
                }
                if v != self.intensity[(j, i)] {
                    return Err(Error::Config(format!(
                        "intensity not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if self
            .weekly_profile
            .iter()
            .any(|&f| !(f >= 0.0 && f.is_finite()))
        {
            return Err(Error::Config("weekly profile values must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub registry: StationRegistry,
    pub lines: Vec<Line>,
    pub calendar: WeekCalendar,
    pub truth: Vec<WeeklyOD>,
    pub tickets: Vec<TicketRecord>,
    pub counters: Vec<RideCountRecord>,
    pub timetable: Vec<TimetableStop>,
}

impl SyntheticData {
    /// True boarded counts per week and station.
    pub fn true_boarded(&self) -> Vec<Vec<u64>> {
        self.truth.iter().map(|od| od.x.row_sums()).collect()
    }

    pub fn true_alighted(&self) -> Vec<Vec<u64>> {
        self.truth.iter().map(|od| od.x.col_sums()).collect()
    }
}

fn draw_truth(s: &SyntheticScenario) -> Vec<WeeklyOD> {
    let n = s.stations.len();
    let mut rng = stream(s.rng_seed, STREAM_TRUTH);
    (0..s.num_weeks)
        .map(|week| {
            let mut x = SquareMatrix::zeros(n);
            for i in 0..n {
                for j in i + 1..n {
                    let lambda = s.intensity[(i, j)] * s.weekly_profile[week];
                    if lambda <= 0.0 {
                        continue;
                    }
                    let draw = Poisson::new(lambda)
                        .expect("positive rate")
                        .sample(&mut rng) as u64;
                    let v = draw.max(1);
                    x[(i, j)] = v;
                    x[(j, i)] = v;
                }
            }
            WeeklyOD { week, x }
        })
        .collect()
}

fn sample_tickets(s: &SyntheticScenario, truth: &[WeeklyOD]) -> Vec<TicketRecord> {
    let n = s.stations.len();
    let mix = s.ticket_mix;
    let mut out = Vec::new();
    for od in truth {
        let monday = s.first_monday + Duration::days(7 * od.week as i64);
        let sunday_before = monday - Duration::days(1);
        for i in 0..n {
            for j in i + 1..n {
                let t = od.x[(i, j)] as f64;
                if t == 0.0 {
                    continue;
                }
                let sales = [
                    (TicketKind::WeeklySub, monday, (mix.weekly_sub * t).round()),
                    (
                        TicketKind::Ordinary,
                        sunday_before,
                        (2.0 * SEED_SCALE * mix.ordinary * t).round(),
                    ),
                    (TicketKind::Carnet, sunday_before, (mix.carnet * t).round()),
                ];
                for (kind, date, qty) in sales {
                    if qty > 0.0 {
                        out.push(
                            TicketRecord::new(StationId(i), StationId(j), kind, date, qty, false)
                                .expect("valid synthetic ticket"),
                        );
                    }
                }
            }
        }
    }
    out
}

/// One scheduled ride: line, direction and slot on a calendar day.
struct Ride<'a> {
    id: String,
    line_id: &'a str,
    stops: Vec<usize>,
    date: NaiveDate,
}

fn rides_of(s: &SyntheticScenario) -> Vec<Ride<'_>> {
    let mut out = Vec::new();
    for day in 0..7 * s.num_weeks {
        let date = s.first_monday + Duration::days(day as i64);
        for (line_id, stops) in &s.lines {
            for dir in 0..2 {
                let ordered: Vec<usize> = if dir == 0 {
                    stops.clone()
                } else {
                    stops.iter().rev().copied().collect()
                };
                for r in 0..s.rides_per_day {
                    out.push(Ride {
                        id: format!("{line_id}-{dir}-{r}"),
                        line_id,
                        stops: ordered.clone(),
                        date,
                    });
                }
            }
        }
    }
    out
}

/// Index of the first ride on `day` for line `l`, direction `dir`.
fn ride_index(s: &SyntheticScenario, day: usize, l: usize, dir: usize) -> usize {
    ((day * s.lines.len() + l) * 2 + dir) * s.rides_per_day
}

fn counters_for(s: &SyntheticScenario, truth: &[WeeklyOD], rides: &[Ride]) -> Vec<RideCountRecord> {
    let n = s.stations.len();
    let mut boarded = vec![vec![0u64; n]; rides.len()];
    let mut alighted = vec![vec![0u64; n]; rides.len()];
    let mut rng = stream(s.rng_seed, STREAM_RIDES);
    for od in truth {
        for (i, j, &trips) in od.x.iter_cells() {
            if trips == 0 {
                continue;
            }
            let (l, (_, stops)) = s
                .lines
                .iter()
                .enumerate()
                .find(|(_, (_, st))| st.contains(&i) && st.contains(&j))
                .expect("truth lives on direct pairs");
            let pi = stops.iter().position(|&x| x == i).expect("on line");
            let pj = stops.iter().position(|&x| x == j).expect("on line");
            let dir = usize::from(pi > pj);
            for _ in 0..trips {
                let day = 7 * od.week + rng.random_range(0..7);
                let ride = ride_index(s, day, l, dir) + rng.random_range(0..s.rides_per_day);
                boarded[ride][i] += 1;
                alighted[ride][j] += 1;
            }
        }
    }

    let mut drop_rng = stream(s.rng_seed, STREAM_DROPOUT);
    let mut out = Vec::new();
    for (k, ride) in rides.iter().enumerate() {
        let missing = s.dropout > 0.0 && drop_rng.random_bool(s.dropout);
        for &st in &ride.stops {
            let rec = if missing {
                RideCountRecord::without_counts(
                    ride.id.clone(),
                    ride.line_id,
                    StationId(st),
                    ride.date,
                    RideStatus::Missing,
                )
                .expect("missing status")
            } else {
                RideCountRecord::valid(
                    ride.id.clone(),
                    ride.line_id,
                    StationId(st),
                    ride.date,
                    boarded[k][st],
                    alighted[k][st],
                )
            };
            out.push(rec);
        }
    }
    out
}

fn timetable_for(s: &SyntheticScenario, rides: &[Ride]) -> Vec<TimetableStop> {
    let mut rng = stream(s.rng_seed, STREAM_TIMETABLE);
    // Scheduled minutes per segment, shared by both directions.
    let segment: Vec<Vec<i64>> = s
        .lines
        .iter()
        .map(|(_, st)| (1..st.len()).map(|_| rng.random_range(6..=20)).collect())
        .collect();
    let first = NaiveTime::from_hms_opt(6, 0, 0).expect("valid time");
    let spacing = (16 * 60 / s.rides_per_day.max(1)) as i64;
    let mut out = Vec::new();
    for ride in rides {
        let l = s
            .lines
            .iter()
            .position(|(id, _)| id == ride.line_id)
            .expect("known line");
        let reversed = ride.stops.first() != s.lines[l].1.first();
        let slot: i64 = ride
            .id
            .rsplit('-')
            .next()
            .and_then(|r| r.parse().ok())
            .unwrap_or(0);
        let mut clock = first + Duration::minutes(slot * spacing);
        let last = ride.stops.len() - 1;
        for (pos, &st) in ride.stops.iter().enumerate() {
            let arrival = (pos > 0).then_some(clock);
            let departure = (pos < last).then(|| clock + Duration::minutes(1));
            out.push(TimetableStop {
                ride_id: ride.id.clone(),
                line_id: ride.line_id.to_string(),
                station: StationId(st),
                arrival,
                departure,
                date: ride.date,
            });
            if pos < last {
                let seg = if reversed { last - pos - 1 } else { pos };
                let jitter: i64 = rng.random_range(-1..=1);
                clock += Duration::minutes(1 + segment[l][seg] + jitter);
            }
        }
    }
    out
}

pub fn generate_scenario(s: &SyntheticScenario) -> Result<SyntheticData> {
    s.validate()?;
    let truth = draw_truth(s);
    let rides = rides_of(s);
    Ok(SyntheticData {
        registry: s.registry()?,
        lines: s.line_objects()?,
        calendar: s.calendar()?,
        tickets: sample_tickets(s, &truth),
        counters: counters_for(s, &truth, &rides),
        timetable: timetable_for(s, &rides),
        truth,
    })
}

pub const STATIONS_FILE: &str = "stations.csv";
pub const LINES_FILE: &str = "lines.csv";
pub const TICKETS_FILE: &str = "tickets.csv";
pub const COUNTERS_FILE: &str = "counters.csv";
pub const TIMETABLE_FILE: &str = "timetable.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Writes all input files, the ground truth and a ready-to-run config into `dir`.
pub fn write_to_dir(data: &SyntheticData, rng_seed: u64, dir: &Path) -> Result<PipelineConfig> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let reg = &data.registry;
    io::write_stations(&dir.join(STATIONS_FILE), reg)?;
    io::write_lines(&dir.join(LINES_FILE), &data.lines, reg)?;
    io::write_tickets(&dir.join(TICKETS_FILE), &data.tickets, reg)?;
    io::write_counters(&dir.join(COUNTERS_FILE), &data.counters, reg)?;
    io::write_timetable(&dir.join(TIMETABLE_FILE), &data.timetable, reg)?;
    io::write_od(&dir.join(TRUTH_FILE), &data.truth, reg)?;

    let weeks = data.calendar.num_weeks();
    let text = format!(
        "stations = {STATIONS_FILE}\n\
         lines = {LINES_FILE}\n\
         tickets = {TICKETS_FILE}\n\
         counters = {COUNTERS_FILE}\n\
         timetable = {TIMETABLE_FILE}\n\
         first_monday = {}\n\
         num_weeks = {weeks}\n\
         rng_seed = {rng_seed}\n\
         basis_candidates = {}\n\
         output_dir = out\n",
        data.calendar.first_monday().format(io::DATE_FORMAT),
        (4..=12.min(weeks).max(4))
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    PipelineConfig::parse(&text, dir)
}

//! Delimited-text readers and writers for inputs and stage checkpoints.
//!
//! Stations are referred to by name in every file except the station list.
//! Floats are written in shortest round-trip form, so a checkpoint read back
//! reproduces the values that were written.

use std::fs::File;
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::analytics::EventAnnotation;
use crate::counters::{MarginVectors, RideCountRecord, RideStatus};
use crate::error::{Error, Result};
use crate::ipf::WeeklyOD;
use crate::matrix::SquareMatrix;
use crate::network::{Line, Station, StationId, StationRegistry};
use crate::ticketing::{TicketKind, TicketRecord, WeeklySeedOD};
use crate::timetable::{TimetableStop, TransferTable, TravelTimeMatrix};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Shortest round-trip text, with an exponent at extreme magnitudes.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

/// Deserializes every row, paired with its 1-based line number.
fn rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| csv_err(path, e))? {
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" | "" => Some(false),
        _ => None,
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

/// `HH:MM:SS` or `HH:MM`; empty means absent.
fn parse_time(s: &str) -> std::result::Result<Option<NaiveTime>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map(Some)
        .map_err(|_| format!("bad time `{s}`"))
}

struct Ctx<'a> {
    path: &'a Path,
    line: u64,
}

impl Ctx<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, msg)
    }

    fn flag(&self, s: &str, field: &str) -> Result<bool> {
        parse_flag(s).ok_or_else(|| self.err(format!("bad {field} flag `{s}`")))
    }

    fn date(&self, s: &str) -> Result<NaiveDate> {
        parse_date(s).ok_or_else(|| self.err(format!("bad date `{s}`, expected YYYY-MM-DD")))
    }

    fn station(&self, reg: &StationRegistry, name: &str) -> Result<StationId> {
        reg.lookup(name)
            .ok_or_else(|| self.err(format!("unknown station `{name}`")))
    }

    fn week(&self, w: usize, num_weeks: usize) -> Result<usize> {
        if w < num_weeks {
            Ok(w)
        } else {
            Err(self.err(format!("week {w} outside calendar of {num_weeks} weeks")))
        }
    }
}

#[derive(Deserialize)]
struct StationRow {
    station_id: usize,
    name: String,
    milan_internal: String,
    is_area: String,
    interregional: String,
}

/// Station ids must be exactly `0..n`, in any row order.
pub fn read_stations(path: &Path) -> Result<StationRegistry> {
    let rows: Vec<(u64, StationRow)> = rows(path)?;
    let n = rows.len();
    let mut slots: Vec<Option<Station>> = vec![None; n];
    for (line, r) in rows {
        let cx = Ctx { path, line };
        if r.station_id >= n || slots[r.station_id].is_some() {
            return Err(cx.err(format!(
                "station ids must be unique and dense in 0..{n}, got {}",
                r.station_id
            )));
        }
        slots[r.station_id] = Some(Station {
            name: r.name,
            milan_internal: cx.flag(&r.milan_internal, "milan_internal")?,
            is_area: cx.flag(&r.is_area, "is_area")?,
            interregional: cx.flag(&r.interregional, "interregional")?,
        });
    }
    StationRegistry::new(slots.into_iter().map(|s| s.expect("dense ids")).collect())
}

#[derive(Deserialize)]
struct LineRow {
    line_id: String,
    station_sequence: String,
}

pub fn read_lines(path: &Path, reg: &StationRegistry) -> Result<Vec<Line>> {
    let mut out = Vec::new();
    for (line, r) in rows::<LineRow>(path)? {
        let cx = Ctx { path, line };
        let ids = r
            .station_sequence
            .split('|')
            .map(|name| cx.station(reg, name.trim()))
            .collect::<Result<Vec<_>>>()?;
        out.push(Line::new(r.line_id, ids).map_err(|e| cx.err(e.to_string()))?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct StopRow {
    ride_id: String,
    line_id: String,
    station: String,
    arrival_time: String,
    departure_time: String,
    date: String,
}

pub fn read_timetable(path: &Path, reg: &StationRegistry) -> Result<Vec<TimetableStop>> {
    rows::<StopRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            let cx = Ctx { path, line };
            Ok(TimetableStop {
                station: cx.station(reg, &r.station)?,
                arrival: parse_time(&r.arrival_time).map_err(|m| cx.err(m))?,
                departure: parse_time(&r.departure_time).map_err(|m| cx.err(m))?,
                date: cx.date(&r.date)?,
                ride_id: r.ride_id,
                line_id: r.line_id,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct CounterRow {
    ride_id: String,
    line_id: String,
    station: String,
    date: String,
    boarded: Option<u64>,
    alighted: Option<u64>,
    status: String,
}

/// Counts on missing or cancelled rows are ignored.
pub fn read_counters(path: &Path, reg: &StationRegistry) -> Result<Vec<RideCountRecord>> {
    rows::<CounterRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            let cx = Ctx { path, line };
            let station = cx.station(reg, &r.station)?;
            let date = cx.date(&r.date)?;
            let status: RideStatus = r.status.parse().map_err(|e: Error| cx.err(e.to_string()))?;
            match (status, r.boarded, r.alighted) {
                (RideStatus::Valid, Some(b), Some(a)) => Ok(RideCountRecord::valid(
                    r.ride_id, r.line_id, station, date, b, a,
                )),
                (RideStatus::Valid, _, _) => Err(cx.err("valid ride without both counts")),
                (s, _, _) => {
                    RideCountRecord::without_counts(r.ride_id, r.line_id, station, date, s)
                        .map_err(|e| cx.err(e.to_string()))
                }
            }
        })
        .collect()
}

#[derive(Deserialize)]
struct TicketRow {
    station_a: String,
    station_b: String,
    kind: String,
    purchase_date: String,
    quantity: f64,
    shared_fare: String,
}

pub fn read_tickets(path: &Path, reg: &StationRegistry) -> Result<Vec<TicketRecord>> {
    rows::<TicketRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            let cx = Ctx { path, line };
            let kind: TicketKind = r.kind.parse().expect("unknown kinds map to Other");
            TicketRecord::new(
                cx.station(reg, &r.station_a)?,
                cx.station(reg, &r.station_b)?,
                kind,
                cx.date(&r.purchase_date)?,
                r.quantity,
                cx.flag(&r.shared_fare, "shared_fare")?,
            )
            .map_err(|e| cx.err(e.to_string()))
        })
        .collect()
}

#[derive(Deserialize)]
struct EventRow {
    date: String,
    kind: String,
    label: String,
}

pub fn read_events(path: &Path) -> Result<Vec<EventAnnotation>> {
    rows::<EventRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            Ok(EventAnnotation {
                date: Ctx { path, line }.date(&r.date)?,
                kind: r.kind,
                label: r.label,
            })
        })
        .collect()
}

/// CSV output with I/O errors tagged by path.
pub struct CsvOut {
    path: std::path::PathBuf,
    inner: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = Self {
            path: path.to_path_buf(),
            inner: csv::Writer::from_writer(file),
        };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let path = &self.path;
        self.inner
            .write_record(fields)
            .map_err(|e| csv_err(path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_stations(path: &Path, reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(
        path,
        &[
            "station_id",
            "name",
            "milan_internal",
            "is_area",
            "interregional",
        ],
    )?;
    for (i, s) in reg.stations().iter().enumerate() {
        w.row([
            i.to_string(),
            s.name.clone(),
            s.milan_internal.to_string(),
            s.is_area.to_string(),
            s.interregional.to_string(),
        ])?;
    }
    w.finish()
}

pub fn write_lines(path: &Path, lines: &[Line], reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(path, &["line_id", "station_sequence"])?;
    for l in lines {
        let seq: Vec<&str> = l.stations.iter().map(|&s| reg.name(s)).collect();
        w.row([l.id.as_str(), &seq.join("|")])?;
    }
    w.finish()
}

fn fmt_time(t: Option<NaiveTime>) -> String {
    t.map(|t| t.format("%H:%M:%S").to_string())
        .unwrap_or_default()
}

pub fn write_timetable(path: &Path, stops: &[TimetableStop], reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(
        path,
        &[
            "ride_id",
            "line_id",
            "station",
            "arrival_time",
            "departure_time",
            "date",
        ],
    )?;
    for s in stops {
        w.row([
            s.ride_id.clone(),
            s.line_id.clone(),
            reg.name(s.station).to_string(),
            fmt_time(s.arrival),
            fmt_time(s.departure),
            s.date.format(DATE_FORMAT).to_string(),
        ])?;
    }
    w.finish()
}

pub fn write_counters(
    path: &Path,
    records: &[RideCountRecord],
    reg: &StationRegistry,
) -> Result<()> {
    let mut w = CsvOut::create(
        path,
        &[
            "ride_id", "line_id", "station", "date", "boarded", "alighted", "status",
        ],
    )?;
    for r in records {
        let (b, a) = r.counts().map_or((String::new(), String::new()), |(b, a)| {
            (b.to_string(), a.to_string())
        });
        w.row([
            r.ride_id.clone(),
            r.line_id.clone(),
            reg.name(r.station).to_string(),
            r.date.format(DATE_FORMAT).to_string(),
            b,
            a,
            r.status().as_str().to_string(),
        ])?;
    }
    w.finish()
}

pub fn write_tickets(path: &Path, records: &[TicketRecord], reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(
        path,
        &[
            "station_a",
            "station_b",
            "kind",
            "purchase_date",
            "quantity",
            "shared_fare",
        ],
    )?;
    for r in records {
        w.row([
            reg.name(r.station_a).to_string(),
            reg.name(r.station_b).to_string(),
            r.kind.as_str().to_string(),
            r.purchase_date.format(DATE_FORMAT).to_string(),
            fmt_float(r.quantity),
            r.shared_fare.to_string(),
        ])?;
    }
    w.finish()
}

/// `origin,dest,minutes` for every defined pair.
pub fn write_travel_times(
    path: &Path,
    times: &TravelTimeMatrix,
    reg: &StationRegistry,
) -> Result<()> {
    let mut w = CsvOut::create(path, &["origin", "dest", "minutes"])?;
    for (i, j, t) in times.defined_cells() {
        w.row([
            reg.name(StationId(i)),
            reg.name(StationId(j)),
            &fmt_float(t),
        ])?;
    }
    w.finish()
}

#[derive(Deserialize)]
struct TimeRow {
    origin: String,
    dest: String,
    minutes: f64,
}

pub fn read_travel_times(path: &Path, reg: &StationRegistry) -> Result<TravelTimeMatrix> {
    let mut times = TravelTimeMatrix::undefined(reg.len());
    for (line, r) in rows::<TimeRow>(path)? {
        let cx = Ctx { path, line };
        let (i, j) = (cx.station(reg, &r.origin)?, cx.station(reg, &r.dest)?);
        if !(r.minutes > 0.0 && r.minutes.is_finite()) {
            return Err(cx.err(format!("travel time must be positive, got {}", r.minutes)));
        }
        times.set(i.index(), j.index(), r.minutes);
    }
    Ok(times)
}

/// `origin,dest,via,minutes`, where minutes is the two-leg total.
pub fn write_transfers(
    path: &Path,
    table: &TransferTable,
    extended: &TravelTimeMatrix,
    reg: &StationRegistry,
) -> Result<()> {
    let mut w = CsvOut::create(path, &["origin", "dest", "via", "minutes"])?;
    for (i, j, k) in table.entries() {
        let t = extended.get(i, j).expect("transfer pairs have a time");
        w.row([
            reg.name(StationId(i)),
            reg.name(StationId(j)),
            reg.name(k),
            &fmt_float(t),
        ])?;
    }
    w.finish()
}

#[derive(Deserialize)]
struct TransferRow {
    origin: String,
    dest: String,
    via: String,
    minutes: f64,
}

/// Transfer table plus the two-leg times, laid over `direct_times`.
pub fn read_transfers(
    path: &Path,
    reg: &StationRegistry,
    direct_times: &TravelTimeMatrix,
) -> Result<(TransferTable, TravelTimeMatrix)> {
    let mut table = TransferTable::empty(reg.len());
    let mut extended = direct_times.clone();
    for (line, r) in rows::<TransferRow>(path)? {
        let cx = Ctx { path, line };
        let (i, j) = (cx.station(reg, &r.origin)?, cx.station(reg, &r.dest)?);
        let k = cx.station(reg, &r.via)?;
        if !(r.minutes > 0.0 && r.minutes.is_finite()) {
            return Err(cx.err(format!("transfer time must be positive, got {}", r.minutes)));
        }
        table.set(i.index(), j.index(), k);
        extended.set(i.index(), j.index(), r.minutes);
    }
    Ok((table, extended))
}

/// `week,station,boarded,alighted,coverage`.
pub fn write_margins(path: &Path, margins: &[MarginVectors], reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(
        path,
        &["week", "station", "boarded", "alighted", "coverage"],
    )?;
    for m in margins {
        for i in 0..m.p.len() {
            w.row([
                m.week.to_string(),
                reg.name(StationId(i)).to_string(),
                m.p[i].to_string(),
                m.a[i].to_string(),
                fmt_float(m.coverage[i]),
            ])?;
        }
    }
    w.finish()
}

#[derive(Deserialize)]
struct MarginRow {
    week: usize,
    station: String,
    boarded: u64,
    alighted: u64,
    coverage: f64,
}

pub fn read_margins(
    path: &Path,
    reg: &StationRegistry,
    num_weeks: usize,
) -> Result<Vec<MarginVectors>> {
    let n = reg.len();
    let mut out: Vec<MarginVectors> = (0..num_weeks)
        .map(|week| MarginVectors {
            week,
            p: vec![0; n],
            a: vec![0; n],
            coverage: vec![0.0; n],
        })
        .collect();
    for (line, r) in rows::<MarginRow>(path)? {
        let cx = Ctx { path, line };
        let w = cx.week(r.week, num_weeks)?;
        let i = cx.station(reg, &r.station)?.index();
        out[w].p[i] = r.boarded;
        out[w].a[i] = r.alighted;
        out[w].coverage[i] = r.coverage;
    }
    Ok(out)
}

/// Nonzero seed cells as `week,origin,dest,value`.
pub fn write_seeds(path: &Path, seeds: &[WeeklySeedOD], reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(path, &["week", "origin", "dest", "value"])?;
    for s in seeds {
        for (i, j, &v) in s.x_star.iter_cells() {
            if v != 0.0 {
                w.row([
                    s.week.to_string(),
                    reg.name(StationId(i)).to_string(),
                    reg.name(StationId(j)).to_string(),
                    fmt_float(v),
                ])?;
            }
        }
    }
    w.finish()
}

#[derive(Deserialize)]
struct SeedRow {
    week: usize,
    origin: String,
    dest: String,
    value: f64,
}

pub fn read_seeds(
    path: &Path,
    reg: &StationRegistry,
    num_weeks: usize,
) -> Result<Vec<WeeklySeedOD>> {
    let mut out: Vec<WeeklySeedOD> = (0..num_weeks)
        .map(|w| WeeklySeedOD::zeros(w, reg.len()))
        .collect();
    for (line, r) in rows::<SeedRow>(path)? {
        let cx = Ctx { path, line };
        let w = cx.week(r.week, num_weeks)?;
        let (i, j) = (cx.station(reg, &r.origin)?, cx.station(reg, &r.dest)?);
        if !(r.value >= 0.0 && r.value.is_finite()) {
            return Err(cx.err(format!(
                "seed value must be finite and >= 0, got {}",
                r.value
            )));
        }
        out[w].x_star[(i.index(), j.index())] = r.value;
    }
    Ok(out)
}

/// Nonzero trips as `week,origin,dest,trips`.
pub fn write_od(path: &Path, ods: &[WeeklyOD], reg: &StationRegistry) -> Result<()> {
    let mut w = CsvOut::create(path, &["week", "origin", "dest", "trips"])?;
    for od in ods {
        for (i, j, &v) in od.x.iter_cells() {
            if v != 0 {
                w.row([
                    od.week.to_string(),
                    reg.name(StationId(i)).to_string(),
                    reg.name(StationId(j)).to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.finish()
}

#[derive(Deserialize)]
struct OdRow {
    week: usize,
    origin: String,
    dest: String,
    trips: u64,
}

pub fn read_od(path: &Path, reg: &StationRegistry, num_weeks: usize) -> Result<Vec<WeeklyOD>> {
    let mut out: Vec<WeeklyOD> = (0..num_weeks)
        .map(|week| WeeklyOD {
            week,
            x: SquareMatrix::zeros(reg.len()),
        })
        .collect();
    for (line, r) in rows::<OdRow>(path)? {
        let cx = Ctx { path, line };
        let w = cx.week(r.week, num_weeks)?;
        let (i, j) = (cx.station(reg, &r.origin)?, cx.station(reg, &r.dest)?);
        out[w].x[(i.index(), j.index())] = r.trips;
    }
    Ok(out)
}

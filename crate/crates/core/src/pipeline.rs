//! Staged execution with on-disk checkpoints.
//!
//! Each stage reads the configured inputs plus the checkpoint files of earlier
//! stages from the output directory, writes its own files, and merges a
//! summary into `run_report.json`. Running the stages in order is the same as
//! a full run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde_json::{json, Map, Value};

use crate::analytics::{
    functional_boxplot, label_weeks, mean_strength_series, mse_series, smooth_curves,
    strength_curves,
};
use crate::config::PipelineConfig;
use crate::counters::CounterTally;
use crate::error::{Error, Result};
use crate::gravity::{
    build_observations, fill_masked, fit_ols, FillStats, GravityFit, COLUMN_NAMES,
};
use crate::io::{self, fmt_float, CsvOut};
use crate::ipf::{finalize, ipf_run, normalize, scale_to_trips, zero_fill, WeeklyOD};
use crate::matrix::CellMask;
use crate::network::{
    build_direct_paths, DirectPathSet, Line, StationId, StationRegistry, WeekCalendar,
};
use crate::ticketing::{
    build_missing_mask, classify_transfers, convert_tickets, separate_transfers, summarize_tickets,
    TicketKind,
};
use crate::timetable::{compute_transfers, estimate_direct_times, samples_from_rides};

pub const TRAVEL_TIMES_FILE: &str = "travel_times.csv";
pub const TRANSFERS_FILE: &str = "transfers.csv";
pub const MARGINS_FILE: &str = "margins.csv";
pub const SEEDS_RAW_FILE: &str = "seeds_raw.csv";
pub const SEEDS_SEPARATED_FILE: &str = "seeds_separated.csv";
pub const TICKET_SUMMARY_FILE: &str = "ticket_summary.csv";
pub const GRAVITY_FIT_FILE: &str = "gravity_fit.txt";
pub const SEEDS_FILLED_FILE: &str = "seeds_filled.csv";
pub const OD_FILE: &str = "od.csv";
pub const MARGIN_ERRORS_FILE: &str = "margin_errors.csv";
pub const INDICATORS_FILE: &str = "indicators.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const OUTLIERS_FILE: &str = "outliers.csv";
pub const REPORT_FILE: &str = "run_report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Timetable,
    Counters,
    Tickets,
    Gravity,
    Ipf,
    Analytics,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Timetable,
        Stage::Counters,
        Stage::Tickets,
        Stage::Gravity,
        Stage::Ipf,
        Stage::Analytics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Timetable => "timetable",
            Stage::Counters => "counters",
            Stage::Tickets => "tickets",
            Stage::Gravity => "gravity",
            Stage::Ipf => "ipf",
            Stage::Analytics => "analytics",
        }
    }

    /// Configured input files the stage reads besides stations and lines.
    fn inputs(self, cfg: &PipelineConfig) -> Vec<(&'static str, &Path)> {
        match self {
            Stage::Timetable => vec![("timetable", cfg.timetable.as_path())],
            Stage::Counters => vec![("counters", cfg.counters.as_path())],
            Stage::Tickets => vec![("tickets", cfg.tickets.as_path())],
            Stage::Analytics => cfg.events.iter().map(|e| ("events", e.as_path())).collect(),
            Stage::Gravity | Stage::Ipf => Vec::new(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown stage `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Registry, topology and calendar shared by every stage.
struct Network {
    reg: StationRegistry,
    direct: DirectPathSet,
    cal: WeekCalendar,
    mask: CellMask,
}

impl Network {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let reg = io::read_stations(&cfg.stations)?;
        let lines: Vec<Line> = io::read_lines(&cfg.lines, &reg)?;
        let direct = build_direct_paths(&lines, reg.len())?;
        let cal = WeekCalendar::new(cfg.first_monday, cfg.num_weeks)?;
        let mask = build_missing_mask(&reg);
        Ok(Self {
            reg,
            direct,
            cal,
            mask,
        })
    }

    fn n(&self) -> usize {
        self.reg.len()
    }

    fn weeks(&self) -> usize {
        self.cal.num_weeks()
    }
}

fn out_path(cfg: &PipelineConfig, file: &str) -> PathBuf {
    cfg.output_dir.join(file)
}

fn checkpoint(cfg: &PipelineConfig, file: &str, producer: Stage) -> Result<PathBuf> {
    let path = out_path(cfg, file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Config(format!(
            "checkpoint {} not found; run stage `{producer}` first",
            path.display()
        )))
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Runs every stage in order and returns the full report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Value> {
    cfg.check_parameters()?;
    // Fail before any stage writes output, tagged with the first stage reading the file.
    for stage in Stage::ALL {
        check_stage_inputs(cfg, stage).map_err(|e| e.in_stage(stage.name()))?;
    }
    let report_path = out_path(cfg, REPORT_FILE);
    if report_path.exists() {
        std::fs::remove_file(&report_path).map_err(|e| Error::io(&report_path, e))?;
    }
    for stage in Stage::ALL {
        run_stage(cfg, stage)?;
    }
    read_report(&cfg.output_dir)
}

fn check_stage_inputs(cfg: &PipelineConfig, stage: Stage) -> Result<()> {
    for (key, path) in [
        ("stations", cfg.stations.as_path()),
        ("lines", cfg.lines.as_path()),
    ]
    .into_iter()
    .chain(stage.inputs(cfg))
    {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "{key} file not found: {}",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Runs one stage from checkpoints and merges its summary into the report.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Value> {
    let result = (|| -> Result<Value> {
        cfg.check_parameters()?;
        check_stage_inputs(cfg, stage)?;
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        let net = Network::load(cfg)?;
        info!("stage {stage}: {} stations, {} weeks", net.n(), net.weeks());
        let summary = match stage {
            Stage::Timetable => stage_timetable(cfg, &net),
            Stage::Counters => stage_counters(cfg, &net),
            Stage::Tickets => stage_tickets(cfg, &net),
            Stage::Gravity => stage_gravity(cfg, &net),
            Stage::Ipf => stage_ipf(cfg, &net),
            Stage::Analytics => stage_analytics(cfg, &net),
        }?;
        merge_report(cfg, stage, summary.clone())?;
        Ok(summary)
    })();
    result.map_err(|e| e.in_stage(stage.name()))
}

pub fn read_report(output_dir: &Path) -> Result<Value> {
    let path = output_dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line() as u64, e.to_string()))
}

fn merge_report(cfg: &PipelineConfig, stage: Stage, summary: Value) -> Result<()> {
    let path = out_path(cfg, REPORT_FILE);
    let mut root = match path.is_file() {
        true => read_report(&cfg.output_dir)?,
        false => json!({}),
    };
    let obj = root
        .as_object_mut()
        .ok_or_else(|| Error::parse(&path, 1, "report root is not an object"))?;
    obj.insert(
        "config".into(),
        json!({
            "first_monday": cfg.first_monday.format(io::DATE_FORMAT).to_string(),
            "num_weeks": cfg.num_weeks,
            "rng_seed": cfg.rng_seed,
            "ipf_tol": cfg.ipf_tol,
            "ipf_max_iter": cfg.ipf_max_iter,
        }),
    );
    let stages = obj
        .entry("stages")
        .or_insert_with(|| Value::Object(Map::new()));
    if let Some(stages) = stages.as_object_mut() {
        stages.insert(stage.name().into(), summary);
    }
    let mut text = serde_json::to_string_pretty(&root).expect("json values serialize");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn stage_timetable(cfg: &PipelineConfig, net: &Network) -> Result<Value> {
    let stops = io::read_timetable(&cfg.timetable, &net.reg)?;
    let samples = samples_from_rides(&stops);
    let (times, stats) = estimate_direct_times(&samples, &net.direct);
    let (table, extended) = compute_transfers(&times, &net.direct);
    io::write_travel_times(&out_path(cfg, TRAVEL_TIMES_FILE), &times, &net.reg)?;
    io::write_transfers(&out_path(cfg, TRANSFERS_FILE), &table, &extended, &net.reg)?;
    let untimed = net
        .direct
        .pairs()
        .filter(|&(i, j)| !times.is_defined(i, j))
        .count();
    if untimed > 0 {
        warn!("{untimed} direct pairs have no travel time samples");
    }
    Ok(json!({
        "stops": stops.len(),
        "samples": samples.len(),
        "samples_accepted": stats.accepted,
        "samples_trimmed": stats.trimmed,
        "samples_rejected_non_positive": stats.rejected_non_positive,
        "samples_rejected_off_network": stats.rejected_off_network,
        "direct_pairs": net.direct.len(),
        "timed_direct_pairs": times.defined_count(),
        "transfer_pairs": table.len(),
    }))
}

fn stage_counters(cfg: &PipelineConfig, net: &Network) -> Result<Value> {
    let records = io::read_counters(&cfg.counters, &net.reg)?;
    let tally = CounterTally::from_records(&records, &net.cal, net.n());
    let margins = tally.all_margins().map_err(|e| match e {
        Error::UnrecoverableMissingData { station, week } => Error::UnrecoverableMissingData {
            station: station
                .trim_start_matches('#')
                .parse()
                .ok()
                .filter(|&i: &usize| i < net.n())
                .map_or(station, |i| net.reg.name(StationId(i)).to_string()),
            week,
        },
        other => other,
    })?;
    io::write_margins(&out_path(cfg, MARGINS_FILE), &margins, &net.reg)?;
    let weeks: Vec<Value> = margins
        .iter()
        .map(|m| {
            let observed: Vec<f64> = m
                .coverage
                .iter()
                .zip(&m.p)
                .filter(|(_, &p)| p > 0)
                .map(|(&c, _)| c)
                .collect();
            json!({
                "week": m.week,
                "boarded": m.total_boarded(),
                "alighted": m.total_alighted(),
                "min_coverage": num(observed.iter().copied().fold(f64::INFINITY, f64::min)),
            })
        })
        .collect();
    Ok(json!({
        "records": records.len(),
        "records_outside_calendar": tally.ignored_records,
        "weeks": weeks,
    }))
}

fn stage_tickets(cfg: &PipelineConfig, net: &Network) -> Result<Value> {
    let records = io::read_tickets(&cfg.tickets, &net.reg)?;
    let times = io::read_travel_times(
        &checkpoint(cfg, TRAVEL_TIMES_FILE, Stage::Timetable)?,
        &net.reg,
    )?;
    let (table, _) = io::read_transfers(
        &checkpoint(cfg, TRANSFERS_FILE, Stage::Timetable)?,
        &net.reg,
        &times,
    )?;
    let conv = convert_tickets(&records, &net.cal, net.n(), cfg.rng_seed)?;
    io::write_seeds(&out_path(cfg, SEEDS_RAW_FILE), &conv.seeds, &net.reg)?;

    let mut summary = summarize_tickets(&records);
    let classes = classify_transfers(&conv.seeds, &net.direct, &table);
    let mut dropped_multi = 0.0;
    let separated: Vec<_> = conv
        .seeds
        .iter()
        .map(|s| {
            let (out, dropped) = separate_transfers(s, &table, &net.direct);
            dropped_multi += dropped;
            out
        })
        .collect();
    io::write_seeds(&out_path(cfg, SEEDS_SEPARATED_FILE), &separated, &net.reg)?;

    let mut w = CsvOut::create(
        &out_path(cfg, TICKET_SUMMARY_FILE),
        &["kind", "records", "share_percent"],
    )?;
    for kind in TicketKind::ALL {
        w.row([
            kind.as_str().to_string(),
            summary.count(kind).to_string(),
            summary.share(kind).map(fmt_float).unwrap_or_default(),
        ])?;
    }
    w.finish()?;

    let shares = classes.shares();
    summary.transfers = Some(classes.clone());
    let separated_mass: f64 = separated.iter().map(|s| s.x_star.sum()).sum();
    Ok(json!({
        "records": summary.total_records,
        "converted_records": conv.converted_records,
        "excluded_records": conv.excluded_records,
        "converted_mass": conv.total_mass(),
        "dropped_out_of_calendar": conv.dropped_out_of_calendar,
        "dropped_multi_transfer": dropped_multi,
        "separated_mass": separated_mass,
        "mass_direct": classes.direct,
        "mass_one_transfer": classes.one_transfer,
        "mass_multi_transfer": classes.multi_transfer,
        "share_percent_direct": shares.map(|s| num(s[0])),
        "share_percent_one_transfer": shares.map(|s| num(s[1])),
        "share_percent_multi_transfer": shares.map(|s| num(s[2])),
    }))
}

fn write_fit_report(path: &Path, lines: &[(String, String)]) -> Result<()> {
    let text: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stage_gravity(cfg: &PipelineConfig, net: &Network) -> Result<Value> {
    let mut seeds = io::read_seeds(
        &checkpoint(cfg, SEEDS_SEPARATED_FILE, Stage::Tickets)?,
        &net.reg,
        net.weeks(),
    )?;
    let margins = io::read_margins(
        &checkpoint(cfg, MARGINS_FILE, Stage::Counters)?,
        &net.reg,
        net.weeks(),
    )?;
    let times = io::read_travel_times(
        &checkpoint(cfg, TRAVEL_TIMES_FILE, Stage::Timetable)?,
        &net.reg,
    )?;
    let (_, extended) = io::read_transfers(
        &checkpoint(cfg, TRANSFERS_FILE, Stage::Timetable)?,
        &net.reg,
        &times,
    )?;
    let fit_path = out_path(cfg, GRAVITY_FIT_FILE);
    let masked = net.mask.count();

    let summary = if masked == 0 {
        write_fit_report(
            &fit_path,
            &[
                ("status".into(), "skipped".into()),
                ("reason".into(), "no masked cells".into()),
            ],
        )?;
        json!({ "status": "skipped", "masked_cells": 0 })
    } else {
        let obs = build_observations(&seeds, &margins, &extended, &net.direct, &net.mask);
        let fit: GravityFit = fit_ols(&obs)?;
        let mut total = FillStats::default();
        for (seed, m) in seeds.iter_mut().zip(&margins) {
            let s = fill_masked(seed, m, &extended, &net.mask, &fit)?;
            total.filled_cells += s.filled_cells;
            total.zeroed_cells += s.zeroed_cells;
            total.discarded_mass += s.discarded_mass;
            total.predicted_mass += s.predicted_mass;
        }
        let mut lines: Vec<(String, String)> = vec![("status".into(), "fitted".into())];
        for (name, c) in COLUMN_NAMES.iter().zip(fit.coefficients()) {
            lines.push(((*name).into(), fmt_float(c)));
        }
        if let Some(se) = fit.std_errors {
            for (name, s) in COLUMN_NAMES.iter().zip(se) {
                lines.push((format!("se_{name}"), fmt_float(s)));
            }
        }
        lines.push(("r_squared".into(), fmt_float(fit.r_squared)));
        lines.push(("n_obs".into(), fit.n_obs.to_string()));
        write_fit_report(&fit_path, &lines)?;
        json!({
            "status": "fitted",
            "masked_cells": masked,
            "log_k": num(fit.log_k),
            "alpha": num(fit.alpha),
            "beta": num(fit.beta),
            "gamma": num(fit.gamma),
            "r_squared": num(fit.r_squared),
            "n_obs": fit.n_obs,
            "filled_cells": total.filled_cells,
            "zeroed_cells": total.zeroed_cells,
            "discarded_mass": total.discarded_mass,
            "predicted_mass": total.predicted_mass,
        })
    };
    io::write_seeds(&out_path(cfg, SEEDS_FILLED_FILE), &seeds, &net.reg)?;
    Ok(summary)
}

fn stage_ipf(cfg: &PipelineConfig, net: &Network) -> Result<Value> {
    let seeds = io::read_seeds(
        &checkpoint(cfg, SEEDS_FILLED_FILE, Stage::Gravity)?,
        &net.reg,
        net.weeks(),
    )?;
    let margins = io::read_margins(
        &checkpoint(cfg, MARGINS_FILE, Stage::Counters)?,
        &net.reg,
        net.weeks(),
    )?;

    let mut ods: Vec<WeeklyOD> = Vec::with_capacity(net.weeks());
    let mut errors = CsvOut::create(
        &out_path(cfg, MARGIN_ERRORS_FILE),
        &["week", "eps_row", "eps_col", "iterations", "converged"],
    )?;
    let mut weeks = Vec::with_capacity(net.weeks());
    let mut not_converged = 0;
    for (seed, m) in seeds.iter().zip(&margins) {
        let week = seed.week;
        let filled = zero_fill(&seed.x_star, &net.direct, &net.mask);
        let p: Vec<f64> = m.p.iter().map(|&v| v as f64).collect();
        let a: Vec<f64> = m.a.iter().map(|&v| v as f64).collect();
        let ps = normalize(&filled, &p, &a, week)?;
        let res = ipf_run(&ps, cfg.ipf_tol, cfg.ipf_max_iter)?;
        if !res.converged {
            not_converged += 1;
            warn!(
                "week {week}: IPF stopped after {} iterations without converging",
                res.iterations
            );
        }
        let total_boarded = m.total_boarded();
        let scaled = scale_to_trips(&res, total_boarded);
        let od = finalize(&res, total_boarded, week);
        let post_row =
            od.x.row_sums()
                .iter()
                .zip(&m.p)
                .map(|(&x, &p)| x.abs_diff(p))
                .max()
                .unwrap_or(0);
        errors.row([
            week.to_string(),
            fmt_float(res.eps_row),
            fmt_float(res.eps_col),
            res.iterations.to_string(),
            res.converged.to_string(),
        ])?;
        weeks.push(json!({
            "week": week,
            "iterations": res.iterations,
            "converged": res.converged,
            "eps_row": num(res.eps_row),
            "eps_col": num(res.eps_col),
            "eps_row_trips": num(res.eps_row * total_boarded as f64),
            "eps_row_trips_rounded": post_row,
            "total_boarded": total_boarded,
            "total_alighted": m.total_alighted(),
            "total_scaled": num(scaled.sum()),
            "total_rounded": od.x.sum(),
        }));
        ods.push(od);
    }
    errors.finish()?;
    io::write_od(&out_path(cfg, OD_FILE), &ods, &net.reg)?;
    Ok(json!({
        "weeks": weeks,
        "weeks_not_converged": not_converged,
    }))
}

fn stage_analytics(cfg: &PipelineConfig, net: &Network) -> Result<Value> {
    let ods = io::read_od(
        &checkpoint(cfg, OD_FILE, Stage::Ipf)?,
        &net.reg,
        net.weeks(),
    )?;
    let labels = match &cfg.events {
        Some(path) => Some(label_weeks(&io::read_events(path)?, &net.cal)),
        None => None,
    };
    let mut skipped: Vec<String> = Vec::new();

    let mse = if ods.len() >= 2 {
        Some(mse_series(&ods)?)
    } else {
        skipped.push("mse: fewer than 2 weeks".into());
        None
    };
    let strength = mean_strength_series(&ods)?;
    let mut header = vec!["week", "mse", "mean_strength"];
    if labels.is_some() {
        header.push("event_labels");
    }
    let mut w = CsvOut::create(&out_path(cfg, INDICATORS_FILE), &header)?;
    for week in 0..ods.len() {
        let mse_cell = mse
            .as_ref()
            .and_then(|s| week.checked_sub(s.first_week).and_then(|k| s.values.get(k)))
            .map(|&v| fmt_float(v))
            .unwrap_or_default();
        let mut row = vec![week.to_string(), mse_cell, fmt_float(strength.values[week])];
        if let Some(l) = &labels {
            row.push(l[week].join(";"));
        }
        w.row(row)?;
    }
    w.finish()?;

    let curves = strength_curves(&ods)?;
    let candidates: Vec<usize> = cfg
        .basis_candidates
        .iter()
        .copied()
        .filter(|&k| k <= net.weeks())
        .collect();
    if candidates.len() < cfg.basis_candidates.len() {
        skipped.push(format!(
            "basis candidates above {} weeks dropped",
            net.weeks()
        ));
    }
    let smoothed = if candidates.is_empty() {
        skipped.push("smoothing: no basis candidate fits the number of weeks".into());
        None
    } else {
        Some(smooth_curves(
            &curves.sigma_norm,
            &candidates,
            &cfg.penalty_grid,
        )?)
    };

    let mut w = CsvOut::create(
        &out_path(cfg, CURVES_FILE),
        &["station", "week", "sigma", "sigma_norm", "fitted"],
    )?;
    for i in 0..net.n() {
        for week in 0..ods.len() {
            w.row([
                net.reg.name(StationId(i)).to_string(),
                week.to_string(),
                fmt_float(curves.sigma[i][week]),
                fmt_float(curves.sigma_norm[i][week]),
                smoothed
                    .as_ref()
                    .map(|s| fmt_float(s.fitted[i][week]))
                    .unwrap_or_default(),
            ])?;
        }
    }
    w.finish()?;

    let boxplot = match &smoothed {
        Some(s) if net.n() >= 3 => Some(functional_boxplot(&s.fitted)?),
        Some(_) => {
            skipped.push("functional boxplot: fewer than 3 stations".into());
            None
        }
        None => None,
    };
    let mut w = CsvOut::create(&out_path(cfg, OUTLIERS_FILE), &["station", "depth", "flag"])?;
    if let Some(b) = &boxplot {
        for i in 0..net.n() {
            w.row([
                net.reg.name(StationId(i)).to_string(),
                fmt_float(b.depth[i]),
                b.outlier[i].to_string(),
            ])?;
        }
    }
    w.finish()?;

    let zero_stations: Vec<&str> = curves
        .zero_total
        .iter()
        .enumerate()
        .filter(|(_, &z)| z)
        .map(|(i, _)| net.reg.name(StationId(i)))
        .collect();
    let outliers: Vec<&str> = boxplot
        .as_ref()
        .map(|b| {
            (0..net.n())
                .filter(|&i| b.outlier[i])
                .map(|i| net.reg.name(StationId(i)))
                .collect()
        })
        .unwrap_or_default();
    Ok(json!({
        "weeks": ods.len(),
        "zero_strength_stations": zero_stations,
        "basis_count": smoothed.as_ref().map(|s| s.basis_count),
        "penalty": smoothed.as_ref().map(|s| num(s.penalty)),
        "mean_gcv": smoothed.as_ref().map(|s| num(s.mean_gcv)),
        "effective_df": smoothed.as_ref().map(|s| num(s.effective_df)),
        "outlier_stations": outliers,
        "skipped": skipped,
    }))
}

/// Human-readable digest of a run report.
pub fn summarize_report(report: &Value) -> String {
    let mut out = String::new();
    let stages = report.get("stages").and_then(Value::as_object);
    for stage in Stage::ALL {
        let Some(s) = stages.and_then(|m| m.get(stage.name())) else {
            out.push_str(&format!("{stage}: not run\n"));
            continue;
        };
        let line = match stage {
            Stage::Timetable => format!(
                "{} samples, {} timed direct pairs, {} transfer pairs",
                s["samples"], s["timed_direct_pairs"], s["transfer_pairs"]
            ),
            Stage::Counters => format!(
                "{} records, {} outside calendar",
                s["records"], s["records_outside_calendar"]
            ),
            Stage::Tickets => format!(
                "{} records, converted mass {}, dropped out-of-calendar {}, dropped multi-transfer {}",
                s["records"], s["converted_mass"], s["dropped_out_of_calendar"], s["dropped_multi_transfer"]
            ),
            Stage::Gravity => match s["status"].as_str() {
                Some("fitted") => format!(
                    "fitted on {} observations, R^2 {}, {} cells filled",
                    s["n_obs"], s["r_squared"], s["filled_cells"]
                ),
                _ => "skipped (no masked cells)".to_string(),
            },
            Stage::Ipf => {
                let weeks = s["weeks"].as_array().map_or(0, Vec::len);
                let worst = s["weeks"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|w| w["eps_row"].as_f64())
                    .fold(0.0, f64::max);
                format!(
                    "{weeks} weeks, {} not converged, max eps_row {}",
                    s["weeks_not_converged"],
                    fmt_float(worst)
                )
            }
            Stage::Analytics => format!(
                "basis {}, penalty {}, outliers {}",
                s["basis_count"], s["penalty"], s["outlier_stations"]
            ),
        };
        out.push_str(&format!("{stage}: {line}\n"));
    }
    out
}

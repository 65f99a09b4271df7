//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Relative paths resolve against
//! the directory of the config file. Lists are comma-separated.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::analytics::{DEFAULT_BASIS_CANDIDATES, DEFAULT_PENALTY_GRID};
use crate::error::{Error, Result};
use crate::io::{parse_date, DATE_FORMAT};
use crate::ipf::{DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub stations: PathBuf,
    pub lines: PathBuf,
    pub tickets: PathBuf,
    pub counters: PathBuf,
    pub timetable: PathBuf,
    pub events: Option<PathBuf>,
    pub first_monday: NaiveDate,
    pub num_weeks: usize,
    pub rng_seed: u64,
    pub ipf_tol: f64,
    pub ipf_max_iter: usize,
    pub basis_candidates: Vec<usize>,
    pub penalty_grid: Vec<f64>,
    pub output_dir: PathBuf,
}

pub const KEYS: [&str; 14] = [
    "stations",
    "lines",
    "tickets",
    "counters",
    "timetable",
    "events",
    "first_monday",
    "num_weeks",
    "rng_seed",
    "ipf_tol",
    "ipf_max_iter",
    "basis_candidates",
    "penalty_grid",
    "output_dir",
];

const REQUIRED: [&str; 8] = [
    "stations",
    "lines",
    "tickets",
    "counters",
    "timetable",
    "first_monday",
    "num_weeks",
    "output_dir",
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("`{key}`: cannot parse `{value}` as {expected}"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(key, s, expected)))
        .collect()
}

impl PipelineConfig {
    /// A configuration with defaults for every optional key and placeholders elsewhere.
    fn skeleton() -> Self {
        Self {
            stations: PathBuf::new(),
            lines: PathBuf::new(),
            tickets: PathBuf::new(),
            counters: PathBuf::new(),
            timetable: PathBuf::new(),
            events: None,
            first_monday: NaiveDate::MIN,
            num_weeks: 0,
            rng_seed: 0,
            ipf_tol: DEFAULT_TOL,
            ipf_max_iter: DEFAULT_MAX_ITER,
            basis_candidates: DEFAULT_BASIS_CANDIDATES.to_vec(),
            penalty_grid: DEFAULT_PENALTY_GRID.to_vec(),
            output_dir: PathBuf::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::skeleton();
        let mut seen: Vec<&str> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let key = key.trim();
            cfg.set(key, value.trim(), base)?;
            if let Some(k) = KEYS.iter().find(|k| **k == key) {
                seen.push(k);
            }
        }
        if let Some(missing) = REQUIRED.iter().find(|k| !seen.contains(k)) {
            return Err(Error::Config(format!("missing required key `{missing}`")));
        }
        cfg.check_parameters()?;
        Ok(cfg)
    }

    /// Sets one key; relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        match key {
            "stations" => self.stations = path(),
            "lines" => self.lines = path(),
            "tickets" => self.tickets = path(),
            "counters" => self.counters = path(),
            "timetable" => self.timetable = path(),
            "events" => self.events = (!value.is_empty()).then(path),
            "output_dir" => self.output_dir = path(),
            "first_monday" => {
                self.first_monday =
                    parse_date(value).ok_or_else(|| bad(key, value, "YYYY-MM-DD"))?
            }
            "num_weeks" => {
                self.num_weeks = value.parse().map_err(|_| bad(key, value, "a count"))?
            }
            "rng_seed" => {
                self.rng_seed = value
                    .parse()
                    .map_err(|_| bad(key, value, "an unsigned integer"))?
            }
            "ipf_tol" => self.ipf_tol = value.parse().map_err(|_| bad(key, value, "a number"))?,
            "ipf_max_iter" => {
                self.ipf_max_iter = value.parse().map_err(|_| bad(key, value, "a count"))?
            }
            "basis_candidates" => self.basis_candidates = list(key, value, "a list of counts")?,
            "penalty_grid" => self.penalty_grid = list(key, value, "a list of numbers")?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str, base: &Path) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k.trim(), v.trim(), base)?;
        self.check_parameters()
    }

    pub fn check_parameters(&self) -> Result<()> {
        if !(self.ipf_tol > 0.0 && self.ipf_tol.is_finite()) {
            return Err(Error::Config(format!(
                "ipf_tol must be > 0, got {}",
                self.ipf_tol
            )));
        }
        if self.ipf_max_iter == 0 {
            return Err(Error::Config("ipf_max_iter must be >= 1".into()));
        }
        if self.num_weeks == 0 {
            return Err(Error::Config("num_weeks must be >= 1".into()));
        }
        if self.basis_candidates.iter().any(|&k| k < 4) {
            return Err(Error::Config("basis_candidates must all be >= 4".into()));
        }
        if self
            .penalty_grid
            .iter()
            .any(|&l| !(l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Config(
                "penalty_grid values must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn input_files(&self) -> Vec<(&'static str, &Path)> {
        let mut v = vec![
            ("stations", self.stations.as_path()),
            ("lines", self.lines.as_path()),
            ("tickets", self.tickets.as_path()),
            ("counters", self.counters.as_path()),
            ("timetable", self.timetable.as_path()),
        ];
        if let Some(e) = &self.events {
            v.push(("events", e.as_path()));
        }
        v
    }

    /// Every referenced input file must exist.
    pub fn check_inputs(&self) -> Result<()> {
        for (key, path) in self.input_files() {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "{key} file not found: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Serializes to the text format, with paths as given.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("stations", self.stations.display().to_string());
        put("lines", self.lines.display().to_string());
        put("tickets", self.tickets.display().to_string());
        put("counters", self.counters.display().to_string());
        put("timetable", self.timetable.display().to_string());
        if let Some(e) = &self.events {
            put("events", e.display().to_string());
        }
        put(
            "first_monday",
            self.first_monday.format(DATE_FORMAT).to_string(),
        );
        put("num_weeks", self.num_weeks.to_string());
        put("rng_seed", self.rng_seed.to_string());
        put("ipf_tol", self.ipf_tol.to_string());
        put("ipf_max_iter", self.ipf_max_iter.to_string());
        put(
            "basis_candidates",
            join(
                self.basis_candidates
                    .iter()
                    .map(|k| k.to_string())
                    .collect(),
            ),
        );
        put(
            "penalty_grid",
            join(self.penalty_grid.iter().map(|l| l.to_string()).collect()),
        );
        put("output_dir", self.output_dir.display().to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# comment
stations = in/stations.csv
lines = in/lines.csv
tickets = in/tickets.csv
counters = in/counters.csv   # trailing comment
timetable = in/timetable.csv
first_monday = 2022-06-06
num_weeks = 29
output_dir = out
";

    #[test]
    fn parses_with_defaults() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(cfg.counters, PathBuf::from("/data/in/counters.csv"));
        assert_eq!(cfg.num_weeks, 29);
        assert_eq!(cfg.ipf_tol, 1e-10);
        assert_eq!(cfg.ipf_max_iter, 1000);
        assert_eq!(cfg.basis_candidates, (4..=12).collect::<Vec<_>>());
        assert_eq!(cfg.events, None);
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = PipelineConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        cfg.penalty_grid = vec![0.0, 0.5];
        cfg.events = Some("/data/ev.csv".into());
        let again = PipelineConfig::parse(&cfg.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(PipelineConfig::parse(&format!("{MINIMAL}ipf_tol = 0\n"), base).is_err());
        assert!(PipelineConfig::parse(&format!("{MINIMAL}ipf_max_iter = 0\n"), base).is_err());
        assert!(PipelineConfig::parse(&format!("{MINIMAL}colour = red\n"), base).is_err());
        assert!(
            PipelineConfig::parse(&format!("{MINIMAL}basis_candidates = 3,4\n"), base).is_err()
        );
        assert!(PipelineConfig::parse(&MINIMAL.replace("num_weeks = 29\n", ""), base).is_err());
    }

    #[test]
    fn override_applies() {
        let mut cfg = PipelineConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        cfg.apply_override("rng_seed=42", Path::new("/cwd"))
            .unwrap();
        cfg.apply_override("output_dir = run2", Path::new("/cwd"))
            .unwrap();
        assert_eq!(cfg.rng_seed, 42);
        assert_eq!(cfg.output_dir, PathBuf::from("/cwd/run2"));
        assert!(cfg.apply_override("ipf_tol=-1", Path::new(".")).is_err());
    }

    #[test]
    fn missing_input_named() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("/nowhere")).unwrap();
        let msg = cfg.check_inputs().unwrap_err().to_string();
        assert!(msg.contains("/nowhere/in/stations.csv"), "{msg}");
    }
}

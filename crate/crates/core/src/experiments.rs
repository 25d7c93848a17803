//! Sweep harness: expands an experiment description into solver runs and writes CSV output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{alternating_optimize, evaluate_design, AoOutcome, AoTrace, EvalMode};
use crate::error::{Error, Result};
use crate::scenario::{validate_config, ConfigFile, Position3, SystemConfig, Trajectory};
use crate::seeds::{self, label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// IRS next to the ground node.
    ProposedIrsG,
    /// IRS next to the estimated jammer position.
    ProposedIrsM,
    NoIrs,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ProposedIrsG => "proposed_irs_g",
            Scheme::ProposedIrsM => "proposed_irs_m",
            Scheme::NoIrs => "no_irs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Scheme::ProposedIrsG, Scheme::ProposedIrsM, Scheme::NoIrs]
            .into_iter()
            .find(|x| x.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PJamDbm,
    #[serde(rename = "L")]
    Elements,
    #[serde(rename = "D_m")]
    Radius,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PJamDbm => "p_jam_dbm",
            SweepVariable::Elements => "L",
            SweepVariable::Radius => "D_m",
        }
    }
}

/// Offset of the IRS from the node it is deployed next to.
pub const IRS_OFFSET: Position3<f64> = Position3 { x: 1.0, y: 0.0, z: 5.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Path of a configuration file, relative to the spec file.
    #[serde(default)]
    pub base_config: Option<PathBuf>,
    /// Inline configuration; used when no path is given.
    #[serde(default)]
    pub base: Option<ConfigFile>,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    /// Uncertainty radii crossed with the sweep; defaults to the base radius.
    #[serde(default)]
    pub d_m_values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    /// Reads a spec file, resolving `base_config` relative to it.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        if let Some(p) = spec.base_config.take() {
            let p = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p };
            spec.base = Some(ConfigFile::from_json(&fs::read_to_string(&p)?)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep values must not be empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("at least one scheme is required".into()));
        }
        if self.values.iter().chain(&self.d_m_values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep values must be finite".into()));
        }
        if self.sweep == SweepVariable::Elements && self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(Error::InvalidConfig("element counts must be positive integers".into()));
        }
        Ok(())
    }

    pub fn base_file(&self) -> ConfigFile {
        self.base.clone().unwrap_or_default()
    }

    fn radii(&self) -> Vec<f64> {
        if self.d_m_values.is_empty() {
            vec![self.base_file().jammer_radius]
        } else {
            self.d_m_values.clone()
        }
    }
}

/// Desk-scale versions of the reference sweeps: `fig2` (trajectories at two uncertainty
/// radii), `fig3` (rate versus jammer power) and `fig4` (rate versus IRS size).
pub fn preset(name: &str) -> Option<ExperimentSpec> {
    let mut base = ConfigFile {
        slots: 20,
        lx: 8,
        lz: 8,
        ..ConfigFile::default()
    };
    let all = vec![Scheme::ProposedIrsG, Scheme::ProposedIrsM, Scheme::NoIrs];
    let spec = |base: ConfigFile, sweep, values: Vec<f64>, d_m_values: Vec<f64>| ExperimentSpec {
        base_config: None,
        base: Some(base),
        sweep,
        values,
        d_m_values,
        schemes: all.clone(),
        output_dir: PathBuf::from(format!("results/{name}")),
    };
    match name {
        "fig2" => Some(spec(base, SweepVariable::Radius, vec![0.0, 20.0], vec![])),
        "fig3" => Some(spec(base, SweepVariable::PJamDbm, vec![15.0, 20.0, 25.0, 30.0, 35.0], vec![0.0, 20.0])),
        "fig4" => {
            base.p_jam_dbm = Some(15.0);
            Some(spec(base, SweepVariable::Elements, vec![16.0, 32.0, 48.0, 64.0], vec![0.0, 20.0]))
        }
        _ => None,
    }
}

/// Near-square factorization `L = lx · lz` with `lz ≤ lx`.
pub fn array_shape(l: usize) -> (usize, usize) {
    let mut lz = (l as f64).sqrt().floor() as usize;
    while lz > 1 && !l.is_multiple_of(lz) {
        lz -= 1;
    }
    let lz = lz.max(1);
    (l / lz, lz)
}

/// One run of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub scheme: Scheme,
    pub value: f64,
    pub d_m: f64,
    /// Index of the sweep value; cells at the same point share their seed.
    pub point: usize,
}

pub fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for &scheme in &spec.schemes {
        for (di, &d_m) in spec.radii().iter().enumerate() {
            for (vi, &value) in spec.values.iter().enumerate() {
                out.push(Cell {
                    scheme,
                    value,
                    d_m,
                    point: vi * spec.radii().len() + di,
                });
            }
        }
    }
    out
}

/// Resolved configuration of one cell.
pub fn cell_config(spec: &ExperimentSpec, cell: &Cell) -> SystemConfig {
    let mut f = spec.base_file();
    f.jammer_radius = cell.d_m;
    match spec.sweep {
        SweepVariable::PJamDbm => f.p_jam_dbm = Some(cell.value),
        SweepVariable::Elements => {
            let (lx, lz) = array_shape(cell.value as usize);
            f.lx = lx;
            f.lz = lz;
        }
        SweepVariable::Radius => f.jammer_radius = cell.value,
    }
    match cell.scheme {
        Scheme::ProposedIrsG => {
            f.irs_enabled = true;
            f.irs_pos = f.gn_pos + IRS_OFFSET;
        }
        Scheme::ProposedIrsM => {
            f.irs_enabled = true;
            f.irs_pos = f.jammer_center + IRS_OFFSET;
        }
        Scheme::NoIrs => f.irs_enabled = false,
    }
    f.seed = seeds::derive_seed(f.seed, &[label::EXPERIMENT_CELL, cell.point as u64]);
    f.into_config()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub variable: String,
    pub value: f64,
    pub d_m: f64,
    pub nominal_rate: f64,
    pub worst_case_rate: f64,
    /// Optimizer objective (closest-point jammer).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheme: String,
    pub value: f64,
    pub d_m: f64,
    pub wall_time_s: f64,
    pub power_s: f64,
    pub phases_s: f64,
    pub trajectory_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub variable: String,
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Serialize, Deserialize)]
struct WaypointRow {
    slot: usize,
    x: f64,
    y: f64,
    z: f64,
}

pub fn trajectory_csv(q: &Trajectory) -> Result<Vec<u8>> {
    let rows: Vec<_> = q
        .points
        .iter()
        .enumerate()
        .map(|(slot, p)| WaypointRow { slot, x: p.x, y: p.y, z: p.z })
        .collect();
    csv_bytes(&rows)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    for (i, row) in r.deserialize::<WaypointRow>().enumerate() {
        let row = row?;
        if row.slot != i {
            return Err(Error::InvalidConfig(format!("{}: waypoint {i} out of order", path.display())));
        }
        points.push(Position3::new(row.x, row.y, row.z));
    }
    Ok(Trajectory { points })
}

#[derive(Serialize)]
struct TraceRow<'a> {
    iteration: usize,
    objective: f64,
    after_power: f64,
    after_phases: f64,
    after_trajectory: f64,
    max_inner_iterations: usize,
    sca_iterations: usize,
    phase_slots_accepted: usize,
    trajectory_accepted: bool,
    notes: &'a str,
}

pub fn trace_csv(trace: &AoTrace) -> Result<Vec<u8>> {
    let notes: Vec<String> = trace.records.iter().map(|r| r.notes.join("; ")).collect();
    let rows: Vec<_> = trace
        .records
        .iter()
        .zip(&notes)
        .map(|(r, n)| TraceRow {
            iteration: r.iteration,
            objective: r.objective,
            after_power: r.after_power,
            after_phases: r.after_phases,
            after_trajectory: r.after_trajectory,
            max_inner_iterations: r.inner_iterations.iter().copied().max().unwrap_or(0),
            sca_iterations: r.sca_iterations,
            phase_slots_accepted: r.phase_slots_accepted,
            trajectory_accepted: r.trajectory_accepted,
            notes: n,
        })
        .collect();
    csv_bytes(&rows)
}

/// Summary of one optimized and evaluated design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub objective: f64,
    pub nominal_rate: f64,
    pub worst_case_rate: f64,
    pub mc_draws: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
    pub path_length: f64,
}

/// Optimizes and evaluates one configuration.
pub fn solve(cfg: &SystemConfig) -> Result<(AoOutcome, SolveSummary)> {
    let viol = validate_config(cfg);
    if !viol.is_empty() {
        let msg: Vec<String> = viol.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidConfig(msg.join("; ")));
    }
    let out = alternating_optimize(cfg)?;
    let nominal = evaluate_design(cfg, &out.trajectory, &out.power, &out.phases, EvalMode::Nominal)?;
    let worst = evaluate_design(cfg, &out.trajectory, &out.power, &out.phases, EvalMode::WorstCaseMc { draws: cfg.mc_draws })?;
    let summary = SolveSummary {
        objective: out.objective,
        nominal_rate: nominal.rate,
        worst_case_rate: worst.rate,
        mc_draws: cfg.mc_draws,
        outer_iterations: out.trace.outer_iterations(),
        converged: out.trace.converged,
        failure: out.trace.failure.clone(),
        path_length: out.trajectory.path_length(),
    };
    Ok((out, summary))
}

#[derive(Serialize)]
struct DesignFile<'a> {
    trajectory: &'a Trajectory,
    power: &'a crate::scenario::PowerSchedule,
    phases: &'a crate::scenario::PhaseSchedule,
}

/// Writes `summary.json`, `design.json`, `trajectory.csv`, `trace.csv` and `timings.csv`
/// into `dir`. Only the timings file depends on the machine.
pub fn write_solution(dir: &Path, out: &AoOutcome, summary: &SolveSummary, wall_time: f64) -> Result<()> {
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(summary)?.as_bytes())?;
    let design = DesignFile {
        trajectory: &out.trajectory,
        power: &out.power,
        phases: &out.phases,
    };
    write_atomic(&dir.join("design.json"), serde_json::to_string_pretty(&design)?.as_bytes())?;
    write_atomic(&dir.join("trajectory.csv"), &trajectory_csv(&out.trajectory)?)?;
    write_atomic(&dir.join("trace.csv"), &trace_csv(&out.trace)?)?;
    let t = timing_row("solve", f64::NAN, f64::NAN, wall_time, &out.trace);
    write_atomic(&dir.join("timings.csv"), &csv_bytes(&[t])?)
}

fn timing_row(scheme: &str, value: f64, d_m: f64, wall: f64, trace: &AoTrace) -> TimingRow {
    let sum = |f: fn(&crate::ao::BlockTimings) -> f64| trace.records.iter().map(|r| f(&r.timings)).sum();
    TimingRow {
        scheme: scheme.into(),
        value,
        d_m,
        wall_time_s: wall,
        power_s: sum(|t| t.power),
        phases_s: sum(|t| t.phases),
        trajectory_s: sum(|t| t.trajectory),
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v}").replace('-', "m")
}

pub fn cell_stem(spec: &ExperimentSpec, cell: &Cell) -> String {
    format!("{}_{}-{}_dm-{}", cell.scheme.name(), spec.sweep.name(), fmt_value(cell.value), fmt_value(cell.d_m))
}

fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> (ResultRow, TimingRow) {
    let start = Instant::now();
    let cfg = cell_config(spec, cell);
    let mut row = ResultRow {
        scheme: cell.scheme.name().into(),
        variable: spec.sweep.name().into(),
        value: cell.value,
        d_m: cell.d_m,
        nominal_rate: f64::NAN,
        worst_case_rate: f64::NAN,
        objective: f64::NAN,
        iterations: 0,
        converged: false,
        status: "ok".into(),
    };
    let mut trace = AoTrace::default();
    let result = solve(&cfg).and_then(|(out, s)| {
        let dir = spec.output_dir.join("cells");
        let stem = cell_stem(spec, cell);
        write_atomic(&dir.join(format!("{stem}_trajectory.csv")), &trajectory_csv(&out.trajectory)?)?;
        write_atomic(&dir.join(format!("{stem}_trace.csv")), &trace_csv(&out.trace)?)?;
        trace = out.trace;
        Ok(s)
    });
    match result {
        Ok(s) => {
            row.nominal_rate = s.nominal_rate;
            row.worst_case_rate = s.worst_case_rate;
            row.objective = s.objective;
            row.iterations = s.outer_iterations;
            row.converged = s.converged;
            if let Some(f) = s.failure {
                row.status = format!("partial: {f}");
            }
        }
        Err(e) => {
            log::error!("cell {} failed: {e}", cell_stem(spec, cell));
            row.status = format!("error: {e}");
        }
    }
    let t = timing_row(cell.scheme.name(), cell.value, cell.d_m, start.elapsed().as_secs_f64(), &trace);
    (row, t)
}

/// Runs every cell with at most `jobs` in flight and writes `results.csv` and `timings.csv`.
pub fn run_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<ResultTable> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir)?;
    let cells = cells(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let (rows, timings): (Vec<_>, Vec<_>) = pool.install(|| cells.par_iter().map(|c| run_cell(spec, c)).collect::<Vec<_>>().into_iter().unzip());
    write_atomic(&spec.output_dir.join("results.csv"), &csv_bytes(&rows)?)?;
    write_atomic(&spec.output_dir.join("timings.csv"), &csv_bytes(&timings)?)?;
    Ok(ResultTable {
        variable: spec.sweep.name().into(),
        rows,
        timings,
    })
}

/// Loads `results.csv` from a sweep output directory.
pub fn load_results(dir: &Path) -> Result<ResultTable> {
    let mut r = csv::Reader::from_path(dir.join("results.csv"))?;
    let rows: Vec<ResultRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let variable = rows.first().map(|r| r.variable.clone()).unwrap_or_default();
    Ok(ResultTable {
        variable,
        rows,
        timings: Vec::new(),
    })
}

fn first_seen<T: PartialEq + Copy>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Writes one series file per metric and uncertainty radius: the first column is the sweep
/// value, then one column per scheme in table order. Returns the written paths.
pub fn export_plotdata(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::InvalidConfig("result table is empty".into()));
    }
    let schemes = first_seen(table.rows.iter().map(|r| r.scheme.as_str()));
    let radii = first_seen(table.rows.iter().map(|r| r.d_m));
    let values = first_seen(table.rows.iter().map(|r| r.value));
    let mut written = Vec::new();
    for (metric, get) in [
        ("worst_case", (|r: &ResultRow| r.worst_case_rate) as fn(&ResultRow) -> f64),
        ("nominal", |r: &ResultRow| r.nominal_rate),
    ] {
        for &d_m in &radii {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec![table.variable.clone()];
            header.extend(schemes.iter().map(|s| s.to_string()));
            w.write_record(&header)?;
            for &v in &values {
                let mut rec = vec![format!("{v}")];
                for s in &schemes {
                    let cell = table.rows.iter().find(|r| r.scheme == *s && r.value == v && r.d_m == d_m);
                    rec.push(cell.map_or(String::new(), |r| format!("{}", get(r))));
                }
                w.write_record(&rec)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            let path = dir.join(format!("plot_{metric}_dm-{}.csv", fmt_value(d_m)));
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(array_shape(64), (8, 8));
        assert_eq!(array_shape(100), (10, 10));
        assert_eq!(array_shape(48), (8, 6));
        assert_eq!(array_shape(7), (7, 1));
        assert_eq!(array_shape(1), (1, 1));
    }

    #[test]
    fn irs_placement_follows_scheme() {
        let spec = preset("fig2").unwrap();
        let cell = |scheme| Cell { scheme, value: 0.0, d_m: 0.0, point: 0 };
        let g = cell_config(&spec, &cell(Scheme::ProposedIrsG));
        let m = cell_config(&spec, &cell(Scheme::ProposedIrsM));
        let n = cell_config(&spec, &cell(Scheme::NoIrs));
        assert_eq!(g.irs_pos, Position3::new(201.0, 100.0, 5.0));
        assert_eq!(m.irs_pos, Position3::new(251.0, 50.0, 5.0));
        assert_eq!(n.elements(), 0);
        assert_eq!(g.seed, m.seed);
    }

    #[test]
    fn spec_round_trip_and_validation() {
        let spec = preset("fig3").unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!(text.contains("\"p_jam_dbm\""));
        let mut bad = spec.clone();
        bad.values.clear();
        assert!(bad.validate().is_err());
        let mut bad = spec;
        bad.schemes.clear();
        assert!(bad.validate().is_err());
        assert!(preset("fig9").is_none());
    }

    fn row(scheme: &str, value: f64, rate: f64) -> ResultRow {
        ResultRow {
            scheme: scheme.into(),
            variable: "L".into(),
            value,
            d_m: 0.0,
            nominal_rate: rate,
            worst_case_rate: rate,
            objective: rate,
            iterations: 1,
            converged: true,
            status: "ok".into(),
        }
    }

    #[test]
    fn plot_series_shape() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for s in ["no_irs", "proposed_irs_g"] {
            for v in [16.0, 32.0, 64.0] {
                rows.push(row(s, v, v / 10.0));
            }
        }
        let table = ResultTable { variable: "L".into(), rows, timings: vec![] };
        let paths = export_plotdata(&table, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "L,no_irs,proposed_irs_g");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "16,1.6,1.6");

        let single = ResultTable { variable: "L".into(), rows: vec![row("no_irs", 4.0, 0.5)], timings: vec![] };
        let p = export_plotdata(&single, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&p[0]).unwrap(), "L,no_irs\n4,0.5\n");
        let empty = ResultTable { variable: "L".into(), rows: vec![], timings: vec![] };
        assert!(export_plotdata(&empty, dir.path()).is_err());
    }

    #[test]
    fn trajectory_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let q = Trajectory {
            points: vec![Position3::new(0.0, 0.0, 100.0), Position3::new(1.5, -2.25, 100.0)],
        };
        let path = dir.path().join("t.csv");
        write_atomic(&path, &trajectory_csv(&q).unwrap()).unwrap();
        assert_eq!(read_trajectory_csv(&path).unwrap(), q);
    }
}

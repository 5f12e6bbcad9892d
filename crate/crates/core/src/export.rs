//! Run-directory artifacts: CSV slices, ledgers, histories and manifests.
//!
//! Every CSV is comma-separated with `.` decimals and 17 significant
//! digits; comment lines start with `#`. A slice file holds one field on
//! one time level and one state, one line per grid row (last axis along
//! the line), preceded by a header such as
//! `# x0=-1;-1 dx=0.04;0.04 shape=51;51 t=0.24 p=0`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, StateField};
use crate::hjb::{ValueSolution, CONTINUE};
use crate::statespace::{DiscreteState, StateSpace};
use crate::trajectory::Trajectory;
use crate::transport::{ArrivalTimeField, DensityEnsemble};

/// Manifest file written by `command` into its run directory.
pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.json")
}

#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub spacing: Vec<f64>,
    pub nodes_per_axis: Vec<usize>,
    pub dt: f64,
    pub n_steps: usize,
    pub horizon: f64,
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        Self {
            lower: grid.lower().to_vec(),
            upper: grid.upper().to_vec(),
            spacing: grid.spacing().to_vec(),
            nodes_per_axis: grid.nodes_per_axis().to_vec(),
            dt: grid.dt(),
            n_steps: grid.n_steps(),
            horizon: grid.horizon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub n_targets: usize,
    pub grid: GridMeta,
    pub files: Vec<String>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn read(dir: &Path, command: &str) -> Result<Manifest> {
        let path = dir.join(manifest_name(command));
        let text = fs::read_to_string(&path).map_err(|_| Error::MissingArtifact {
            path: path.clone(),
            needed: command.into(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
            path,
            message: e.to_string(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(manifest_name(&self.command));
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

/// Collects the files written into one run directory.
pub struct RunWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn value_solution(&mut self, sol: &ValueSolution, prefix: &str) -> Result<()> {
        let grid = sol.grid();
        let d = grid.dim();
        for k in 0..grid.n_levels() {
            for p in sol.space().states() {
                let bits = p.to_bitstring();
                self.write(
                    &format!("{prefix}V_p{bits}_k{k}.csv"),
                    &slice_csv(grid, sol.value_slice(k, p), k, p),
                )?;
                let ctrl = sol.controls().slice(k, p.index());
                for c in 0..d {
                    let comp: Vec<f64> = ctrl.iter().skip(c).step_by(d).copied().collect();
                    self.write(&format!("{prefix}A{c}_p{bits}_k{k}.csv"), &slice_csv(grid, &comp, k, p))?;
                }
                let sw: Vec<f64> = sol.switches().slice(k, p.index()).iter().map(|&s| s as f64).collect();
                self.write(&format!("{prefix}S_p{bits}_k{k}.csv"), &switch_csv(grid, &sw, k, p))?;
            }
        }
        Ok(())
    }

    pub fn densities(&mut self, ens: &DensityEnsemble, prefix: &str) -> Result<()> {
        let grid = ens.grid();
        for k in 0..grid.n_levels() {
            for p in ens.space().states() {
                self.write(
                    &format!("{prefix}mu_p{}_k{k}.csv", p.to_bitstring()),
                    &slice_csv(grid, ens.slice(k, p), k, p),
                )?;
            }
        }
        self.write(&format!("{prefix}ledger.csv"), &ledger_csv(ens))?;
        self.write(&format!("{prefix}mass.csv"), &mass_csv(ens))
    }

    pub fn finish(
        self,
        command: &str,
        scenario_name: &str,
        scenario_hash: &str,
        n_targets: usize,
        grid: &Grid,
        extra: serde_json::Map<String, serde_json::Value>,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.into(),
            scenario: scenario_name.into(),
            scenario_hash: scenario_hash.into(),
            n_targets,
            grid: GridMeta::of(grid),
            files: self.files,
            extra,
        };
        manifest.write(&self.dir)?;
        Ok(manifest)
    }
}

fn header(grid: &Grid, t: f64, p: Option<DiscreteState>) -> String {
    let shape: Vec<String> = grid.nodes_per_axis().iter().map(|n| n.to_string()).collect();
    let mut h = format!(
        "# x0={} dx={} shape={} t={}",
        join(grid.lower()),
        join(grid.spacing()),
        shape.join(";"),
        fmt_f64(t)
    );
    if let Some(p) = p {
        let _ = write!(h, " p={p}");
    }
    h.push('\n');
    h
}

fn rows(grid: &Grid, values: &[f64], cell: impl Fn(f64) -> String) -> String {
    let width = *grid.nodes_per_axis().last().expect("grid has an axis");
    let mut out = String::with_capacity(values.len() * 25);
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| cell(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn slice_csv(grid: &Grid, values: &[f64], level: usize, p: DiscreteState) -> String {
    header(grid, grid.time(level), Some(p)) + &rows(grid, values, fmt_f64)
}

/// Switch map slice: destination bitmask as an integer, `-1` to continue.
fn switch_csv(grid: &Grid, values: &[f64], level: usize, p: DiscreteState) -> String {
    header(grid, grid.time(level), Some(p)) + &rows(grid, values, |v| format!("{}", v as i64))
}

pub fn arrival_csv(field: &ArrivalTimeField, level: usize) -> String {
    let grid = field.grid();
    header(grid, grid.time(level), None) + &rows(grid, field.slice(level), fmt_f64)
}

/// Rows `(k, from, to, mass)` for transfers during step `k → k+1`.
/// Absorbed mass is reported in `mass.csv`.
pub fn ledger_csv(ens: &DensityEnsemble) -> String {
    let mut out = String::from("k,from,to,mass\n");
    for t in ens.ledger().transfers() {
        let _ = writeln!(out, "{},{},{},{}", t.step, t.from, t.to, fmt_f64(t.mass));
    }
    out
}

/// Live mass per state and cumulative absorbed mass at every level.
pub fn mass_csv(ens: &DensityEnsemble) -> String {
    let ledger = ens.ledger();
    let mut out = String::from("k,t");
    for p in ens.space().states() {
        let _ = write!(out, ",p{p}");
    }
    out.push_str(",absorbed\n");
    for k in 0..ledger.n_levels() {
        let _ = write!(out, "{k},{}", fmt_f64(ens.grid().time(k)));
        for m in ledger.live(k) {
            let _ = write!(out, ",{}", fmt_f64(*m));
        }
        let _ = writeln!(out, ",{}", fmt_f64(ledger.absorbed(k)));
    }
    out
}

pub fn error_history_csv(history: &[(usize, f64)]) -> String {
    let mut out = String::from("z,E\n");
    for (z, e) in history {
        let _ = writeln!(out, "{z},{}", fmt_f64(*e));
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for c in 0..traj.dim {
        let _ = write!(out, ",x{}", c + 1);
    }
    out.push_str(",p\n");
    for s in &traj.samples {
        let _ = write!(out, "{}", fmt_f64(s.t));
        for c in 0..traj.dim {
            let _ = write!(out, ",{}", fmt_f64(s.position[c]));
        }
        let _ = writeln!(out, ",{}", s.state);
    }
    out
}

pub fn events_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for c in 0..traj.dim {
        let _ = write!(out, ",x{}", c + 1);
    }
    out.push_str(",from,to\n");
    for e in &traj.events {
        let _ = write!(out, "{}", fmt_f64(e.t));
        for c in 0..traj.dim {
            let _ = write!(out, ",{}", fmt_f64(e.position[c]));
        }
        let _ = writeln!(out, ",{},{}", e.from, e.to);
    }
    out
}

/// Parses the numeric body of a slice file, checking its size.
fn read_slice(path: &Path, expected: usize, needed: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingArtifact {
        path: path.to_path_buf(),
        needed: needed.into(),
    })?;
    let bad = |message: String| Error::MalformedArtifact {
        path: path.to_path_buf(),
        message,
    };
    let mut out = Vec::with_capacity(expected);
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        for cell in line.split(',') {
            out.push(cell.trim().parse::<f64>().map_err(|e| bad(format!("{e}: {cell:?}")))?);
        }
    }
    if out.len() != expected {
        return Err(bad(format!("expected {expected} values, found {}", out.len())));
    }
    Ok(out)
}

/// Rebuilds the value solution written into `dir` by `command`
/// (`solve-hjb` or `mfg`).
pub fn load_value_solution(dir: &Path, command: &str, grid: &Grid, space: &StateSpace) -> Result<ValueSolution> {
    let manifest = Manifest::read(dir, command)?;
    let meta = GridMeta::of(grid);
    if manifest.grid != meta || manifest.n_targets != space.n_targets() {
        return Err(Error::GridMismatch(format!(
            "artifacts in {} were produced on a different grid",
            dir.display()
        )));
    }
    let n = grid.n_nodes();
    let d = grid.dim();
    let levels = grid.n_levels();
    let mut values = StateField::filled(levels, space.len(), n, 1, 0.0);
    let mut controls = StateField::filled(levels, space.len(), n, d, 0.0);
    let mut switches = StateField::filled(levels, space.len(), n, 1, CONTINUE);
    for k in 0..levels {
        for p in space.states() {
            let bits = p.to_bitstring();
            let v = read_slice(&dir.join(format!("V_p{bits}_k{k}.csv")), n, command)?;
            values.slice_mut(k, p.index()).copy_from_slice(&v);
            let ctrl = controls.slice_mut(k, p.index());
            for c in 0..d {
                let comp = read_slice(&dir.join(format!("A{c}_p{bits}_k{k}.csv")), n, command)?;
                for (i, a) in comp.into_iter().enumerate() {
                    ctrl[i * d + c] = a;
                }
            }
            let path = dir.join(format!("S_p{bits}_k{k}.csv"));
            let sw = read_slice(&path, n, command)?;
            let out = switches.slice_mut(k, p.index());
            for (o, s) in out.iter_mut().zip(sw) {
                let raw = s as i64;
                let valid = raw == CONTINUE as i64
                    || (raw >= 0 && (raw as usize) < space.len() && p.can_switch_to(space.state(raw as usize)));
                if !valid || raw as f64 != s {
                    return Err(Error::MalformedArtifact {
                        path: path.clone(),
                        message: format!("invalid switch destination {s} for state {p}"),
                    });
                }
                *o = raw as i32;
            }
        }
    }
    ValueSolution::from_parts(grid.clone(), space.clone(), values, controls, switches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn slice_layout_is_one_line_per_row() {
        let grid = Grid::new(&[0.0, 0.0], &[1.0, 2.0], 0.5, 0.5, 1.0).unwrap();
        let p = DiscreteState::parse("01").unwrap();
        let values: Vec<f64> = (0..grid.n_nodes()).map(|i| i as f64).collect();
        let text = slice_csv(&grid, &values, 1, p);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# x0=0.0000000000000000e0;0.0000000000000000e0"));
        assert!(lines[0].ends_with("p=01"));
        assert!(lines[0].contains("shape=3;5"));
        assert_eq!(lines.len(), 1 + 3);
        assert_eq!(lines[1].split(',').count(), 5);
    }
}

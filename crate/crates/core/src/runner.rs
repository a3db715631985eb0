//! Scenario execution: named presets, config-file parsing, trajectory runs
//! with thermodynamic post-processing, CSV serialization, and the sidecar
//! plot script.
//!
//! Config files are flat sectioned text:
//!
//! ```text
//! [system]
//! omegas = 50.0, 55.0
//! initial_state = ghz            # or basis:01, or custom:1,0;0,0;...
//! p_weight = 0.5
//! eps_log = 1e-12
//!
//! [bath.1]
//! kind = markovian
//! temperature = 127.33
//! kappa = 1e-3
//!
//! [bath.2]
//! kind = spin_star
//! temperature = 68.6
//! nu = 1.0
//! alpha = 5e-3
//! n_spins = 1
//!
//! [integrator]
//! dt = 2e-4
//! t_max = 50.0
//! record_stride = 50             # may also live under [output]
//! ```
//!
//! Keys mirror the config type fields; unknown keys are errors with line
//! diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{assemble_generator, evolve, EvolveStats};
use crate::exec;
use crate::model::{
    BathSpec, InitialState, IntegratorSpec, SimulationConfig, SystemSpec,
};
use crate::qmath::{c, QOperator};
use crate::thermo::{ThermoEngine, ThermoRecord};
use crate::{tol, Error, Result};

pub const PRESET_NAMES: [&str; 4] = ["fig2a", "fig2b", "fig2c", "all_markov"];

/// Snapshots per parallel post-processing batch.
const RECORD_CHUNK: usize = 64;

fn preset_bath(index: usize, markovian: bool) -> BathSpec {
    // Four-qubit benchmark family: omega_j = 50 + 5 j, temperatures from the
    // fixed ladder, kappa = 1e-3 on every bosonic bath, nu = 1 and
    // alpha = 5e-3 on every spin-star bath.
    let temps = [127.33, 105.57, 95.8, 68.6];
    if markovian {
        BathSpec::Markovian {
            temperature: temps[index],
            kappa: 1e-3,
        }
    } else {
        BathSpec::SpinStar {
            temperature: temps[index],
            nu: 1.0,
            alpha: 5e-3,
            n_spins: 1,
        }
    }
}

/// Resolves one of the named four-qubit scenarios; `None` if unknown.
/// The spin-star pattern is: fig2a (M,M,M,NM), fig2b (M,M,NM,NM),
/// fig2c (M,NM,NM,NM), all_markov (M,M,M,M).
pub fn preset(name: &str) -> Option<SimulationConfig> {
    let markov_pattern: [bool; 4] = match name {
        "fig2a" => [true, true, true, false],
        "fig2b" => [true, true, false, false],
        "fig2c" => [true, false, false, false],
        "all_markov" => [true, true, true, true],
        _ => return None,
    };
    let baths = (0..4)
        .map(|j| preset_bath(j, markov_pattern[j]))
        .collect();
    Some(SimulationConfig {
        system: SystemSpec {
            omegas: vec![50.0, 55.0, 60.0, 65.0],
        },
        baths,
        initial_state: InitialState::Ghz,
        integrator: IntegratorSpec {
            dt: 2e-4,
            t_max: 50.0,
            record_stride: 50,
        },
        p_weight: 0.5,
        eps_log: tol::EPS_LOG_DEFAULT,
    })
}

/// Command-line parameter overrides applied on top of a preset or file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// Spins per spin-star bath (applied to every spin-star bath).
    pub n_spins: Option<usize>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub stride: Option<usize>,
    pub p_weight: Option<f64>,
    pub eps_log: Option<f64>,
}

pub fn apply_overrides(cfg: &mut SimulationConfig, o: &Overrides) -> Result<()> {
    if let Some(n) = o.n_spins {
        for b in &mut cfg.baths {
            if let BathSpec::SpinStar { n_spins, .. } = b {
                *n_spins = n;
            }
        }
    }
    if let Some(dt) = o.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t) = o.t_max {
        cfg.integrator.t_max = t;
    }
    if let Some(s) = o.stride {
        cfg.integrator.record_stride = s;
    }
    if let Some(p) = o.p_weight {
        cfg.p_weight = p;
    }
    if let Some(e) = o.eps_log {
        cfg.eps_log = e;
    }
    cfg.validate()
}

/// Loads a configuration from a preset name or a config-file path.
pub fn parse_config(source: &str) -> Result<SimulationConfig> {
    if let Some(cfg) = preset(source) {
        return Ok(cfg);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Error::Config(format!(
            "'{source}' is neither a preset ({}) nor a readable config file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, source)
}

struct RawSection {
    line: usize,
    entries: Vec<(usize, String, String)>,
}

fn split_sections(text: &str, origin: &str) -> Result<BTreeMap<String, RawSection>> {
    let mut sections: BTreeMap<String, RawSection> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find(['#', ';']) {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if sections.contains_key(&name) {
                return Err(Error::Config(format!(
                    "{origin}:{lineno}: section [{name}] appears twice"
                )));
            }
            sections.insert(
                name.clone(),
                RawSection {
                    line: lineno,
                    entries: Vec::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{origin}:{lineno}: expected 'key = value' or '[section]', got '{line}'"
            )));
        };
        let Some(section) = &current else {
            return Err(Error::Config(format!(
                "{origin}:{lineno}: key before any section header"
            )));
        };
        sections
            .get_mut(section)
            .expect("current section exists")
            .entries
            .push((lineno, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(sections)
}

struct SectionReader<'a> {
    origin: &'a str,
    name: &'a str,
    map: BTreeMap<&'a str, (usize, &'a str)>,
    taken: Vec<&'a str>,
}

impl<'a> SectionReader<'a> {
    fn new(origin: &'a str, name: &'a str, raw: &'a RawSection) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (line, key, value) in &raw.entries {
            if map.insert(key.as_str(), (*line, value.as_str())).is_some() {
                return Err(Error::Config(format!(
                    "{origin}:{line}: duplicate key '{key}' in [{name}]"
                )));
            }
        }
        Ok(Self {
            origin,
            name,
            map,
            taken: Vec::new(),
        })
    }

    fn take(&mut self, key: &'a str) -> Option<(usize, &'a str)> {
        self.taken.push(key);
        self.map.remove(key)
    }

    fn require(&mut self, key: &'a str, section_line: usize) -> Result<(usize, &'a str)> {
        self.take(key).ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: [{}] is missing required key '{}'",
                self.origin, section_line, self.name, key
            ))
        })
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.map.iter().next() {
            return Err(Error::Config(format!(
                "{}:{}: unknown key '{}' in [{}] (expected one of: {})",
                self.origin,
                line,
                key,
                self.name,
                self.taken.join(", ")
            )));
        }
        Ok(())
    }
}

fn parse_f64(origin: &str, line: usize, key: &str, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| {
        Error::Config(format!(
            "{origin}:{line}: '{key}' must be a number, got '{value}'"
        ))
    })
}

fn parse_usize(origin: &str, line: usize, key: &str, value: &str) -> Result<usize> {
    value.parse::<usize>().map_err(|_| {
        Error::Config(format!(
            "{origin}:{line}: '{key}' must be a nonnegative integer, got '{value}'"
        ))
    })
}

fn parse_initial_state(origin: &str, line: usize, value: &str) -> Result<InitialState> {
    if value.eq_ignore_ascii_case("ghz") {
        return Ok(InitialState::Ghz);
    }
    if let Some(bits) = value.strip_prefix("basis:") {
        return Ok(InitialState::Basis(bits.trim().to_string()));
    }
    if let Some(list) = value.strip_prefix("custom:") {
        let mut amps = Vec::new();
        for (k, item) in list.split(';').enumerate() {
            let item = item.trim();
            let (re, im) = match item.split_once(',') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (item, "0"),
            };
            let re = parse_f64(origin, line, &format!("custom amplitude {k}"), re)?;
            let im = parse_f64(origin, line, &format!("custom amplitude {k}"), im)?;
            amps.push(c(re, im));
        }
        return Ok(InitialState::Custom(amps));
    }
    Err(Error::Config(format!(
        "{origin}:{line}: initial_state must be 'ghz', 'basis:<bits>' or \
         'custom:<re>,<im>;...', got '{value}'"
    )))
}

/// Parses config text; `origin` labels diagnostics (usually the path).
pub fn parse_config_str(text: &str, origin: &str) -> Result<SimulationConfig> {
    let sections = split_sections(text, origin)?;
    for name in sections.keys() {
        let ok = name == "system"
            || name == "integrator"
            || name == "output"
            || name
                .strip_prefix("bath.")
                .is_some_and(|ix| ix.parse::<usize>().map_or(false, |v| v >= 1));
        if !ok {
            let line = sections[name].line;
            return Err(Error::Config(format!(
                "{origin}:{line}: unknown section [{name}] (expected [system], \
                 [bath.<j>], [integrator], [output])"
            )));
        }
    }

    let sys_raw = sections
        .get("system")
        .ok_or_else(|| Error::Config(format!("{origin}: missing [system] section")))?;
    let mut sys = SectionReader::new(origin, "system", sys_raw)?;
    let (oline, ovalue) = sys.require("omegas", sys_raw.line)?;
    let mut omegas = Vec::new();
    for item in ovalue.split(',') {
        omegas.push(parse_f64(origin, oline, "omegas", item.trim())?);
    }
    let initial_state = match sys.take("initial_state") {
        Some((line, v)) => parse_initial_state(origin, line, v)?,
        None => InitialState::Ghz,
    };
    let p_weight = match sys.take("p_weight") {
        Some((line, v)) => parse_f64(origin, line, "p_weight", v)?,
        None => 0.5,
    };
    let eps_log = match sys.take("eps_log") {
        Some((line, v)) => parse_f64(origin, line, "eps_log", v)?,
        None => tol::EPS_LOG_DEFAULT,
    };
    sys.finish()?;

    // Baths: exactly one section per qubit, 1-based contiguous.
    let mut baths = Vec::new();
    for j in 1..=omegas.len() {
        let key = format!("bath.{j}");
        let raw = sections.get(&key).ok_or_else(|| {
            Error::Config(format!(
                "{origin}: expected one bath per qubit but [{key}] is missing \
                 ({} qubits declared in [system])",
                omegas.len()
            ))
        })?;
        let mut rd = SectionReader::new(origin, &key, raw)?;
        let (kline, kind) = rd.require("kind", raw.line)?;
        let (tline, tvalue) = rd.require("temperature", raw.line)?;
        let temperature = parse_f64(origin, tline, "temperature", tvalue)?;
        let bath = match kind {
            "markovian" => {
                let (l, v) = rd.require("kappa", raw.line)?;
                BathSpec::Markovian {
                    temperature,
                    kappa: parse_f64(origin, l, "kappa", v)?,
                }
            }
            "spin_star" => {
                let (l, v) = rd.require("nu", raw.line)?;
                let nu = parse_f64(origin, l, "nu", v)?;
                let (l, v) = rd.require("alpha", raw.line)?;
                let alpha = parse_f64(origin, l, "alpha", v)?;
                let n_spins = match rd.take("n_spins") {
                    Some((l, v)) => parse_usize(origin, l, "n_spins", v)?,
                    None => 1,
                };
                BathSpec::SpinStar {
                    temperature,
                    nu,
                    alpha,
                    n_spins,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "{origin}:{kline}: kind must be 'markovian' or 'spin_star', got '{other}'"
                )))
            }
        };
        rd.finish()?;
        baths.push(bath);
    }
    for name in sections.keys() {
        if let Some(ix) = name.strip_prefix("bath.") {
            let ix: usize = ix.parse().expect("validated above");
            if ix > omegas.len() {
                return Err(Error::Config(format!(
                    "{origin}:{}: [{}] has no matching qubit ({} qubits declared)",
                    sections[name].line, name, omegas.len()
                )));
            }
        }
    }

    let int_raw = sections
        .get("integrator")
        .ok_or_else(|| Error::Config(format!("{origin}: missing [integrator] section")))?;
    let mut ir = SectionReader::new(origin, "integrator", int_raw)?;
    let (l, v) = ir.require("dt", int_raw.line)?;
    let dt = parse_f64(origin, l, "dt", v)?;
    let (l, v) = ir.require("t_max", int_raw.line)?;
    let t_max = parse_f64(origin, l, "t_max", v)?;
    let mut stride = match ir.take("record_stride") {
        Some((l, v)) => Some((l, parse_usize(origin, l, "record_stride", v)?)),
        None => None,
    };
    ir.finish()?;
    if let Some(out_raw) = sections.get("output") {
        let mut or = SectionReader::new(origin, "output", out_raw)?;
        if let Some((l, v)) = or.take("record_stride") {
            if let Some((prev, _)) = stride {
                return Err(Error::Config(format!(
                    "{origin}:{l}: record_stride set both here and at line {prev}"
                )));
            }
            stride = Some((l, parse_usize(origin, l, "record_stride", v)?));
        }
        or.finish()?;
    }

    let cfg = SimulationConfig {
        system: SystemSpec { omegas },
        baths,
        initial_state,
        integrator: IntegratorSpec {
            dt,
            t_max,
            record_stride: stride.map_or(1, |(_, s)| s),
        },
        p_weight,
        eps_log,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// A finished run: every record plus integrator stats and flagged
/// invariant violations (empty when the run is clean).
pub struct RunOutcome {
    pub records: Vec<ThermoRecord>,
    pub stats: EvolveStats,
    pub violations: Vec<String>,
}

/// Integrates the configured trajectory and evaluates every thermodynamic
/// functional at each recorded sample. Snapshot post-processing runs in
/// batches through the data-parallel map (order-preserving, so output is
/// identical either way).
pub fn run_simulation(cfg: &SimulationConfig) -> Result<RunOutcome> {
    let bundle = assemble_generator(cfg)?;
    let engine = ThermoEngine::new(&bundle)?;
    let rho0 = crate::model::initial_joint_state(cfg, &bundle.layout)?;

    let mut pending: Vec<(f64, QOperator, f64)> = Vec::with_capacity(RECORD_CHUNK);
    let mut records: Vec<ThermoRecord> = Vec::new();

    let flush = |pending: &mut Vec<(f64, QOperator, f64)>,
                 records: &mut Vec<ThermoRecord>|
     -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let batch = exec::map_slice(pending, |(t, state, drift)| {
            engine.record_at(*t, state, *drift)
        });
        pending.clear();
        for r in batch {
            records.push(r?);
        }
        Ok(())
    };

    let stats = evolve(&bundle, &rho0, |s| {
        pending.push((s.t, s.state.clone(), s.step_drift));
        if pending.len() >= RECORD_CHUNK {
            flush(&mut pending, &mut records)?;
        }
        Ok(())
    })?;
    flush(&mut pending, &mut records)?;

    let violations = scan_violations(&records);
    Ok(RunOutcome {
        records,
        stats,
        violations,
    })
}

/// Flags every sample outside the recorded invariants: Spohn margin below
/// the scaled tolerance (floor-dominated samples exempt), sample trace
/// deviation, per-step drift, negative eigenvalues.
pub fn scan_violations(records: &[ThermoRecord]) -> Vec<String> {
    let max_abs_sigma = records.iter().map(|r| r.sigma.abs()).fold(0.0, f64::max);
    let tol_spohn = tol::SPOHN_REL * max_abs_sigma.max(1.0);
    let mut out = Vec::new();
    for r in records {
        if !r.log_floored && r.spohn_margin < -tol_spohn {
            out.push(format!(
                "t={:.6}: spohn_margin {:.3e} < -{:.3e}",
                r.t, r.spohn_margin, tol_spohn
            ));
        }
        if r.sample_trace_dev > tol::TRACE_SAMPLE {
            out.push(format!(
                "t={:.6}: sample trace deviation {:.3e} > {:.3e}",
                r.t, r.sample_trace_dev, tol::TRACE_SAMPLE
            ));
        }
        if r.trace_err > tol::TRACE_DRIFT_STEP {
            out.push(format!(
                "t={:.6}: per-step trace drift {:.3e} > {:.3e}",
                r.t, r.trace_err, tol::TRACE_DRIFT_STEP
            ));
        }
        if r.min_eig < tol::MIN_EIG {
            out.push(format!(
                "t={:.6}: min eigenvalue {:.3e} < {:.3e}",
                r.t, r.min_eig, tol::MIN_EIG
            ));
        }
    }
    out
}

pub fn csv_header(n_baths: usize) -> String {
    let mut s = String::from("t,E,S,dSdt");
    for j in 1..=n_baths {
        let _ = write!(s, ",J_{j}");
    }
    s.push_str(",sigma,M_NM,Mbar_NM,spohn_margin,trace_err,min_eig,log_floored");
    s
}

fn push_float(out: &mut String, v: f64) {
    let _ = write!(out, ",{v:.16e}");
}

/// Serializes records with 17 significant digits; fully deterministic.
pub fn csv_string(records: &[ThermoRecord]) -> String {
    let n_baths = records.first().map_or(0, |r| r.currents.len());
    let mut out = csv_header(n_baths);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{:.16e}", r.t);
        push_float(&mut out, r.energy);
        push_float(&mut out, r.entropy);
        push_float(&mut out, r.entropy_rate);
        for j in &r.currents {
            push_float(&mut out, *j);
        }
        push_float(&mut out, r.sigma);
        push_float(&mut out, r.witness);
        push_float(&mut out, r.quantifier);
        push_float(&mut out, r.spohn_margin);
        push_float(&mut out, r.trace_err);
        push_float(&mut out, r.min_eig);
        let _ = write!(out, ",{}", if r.log_floored { 1 } else { 0 });
        out.push('\n');
    }
    out
}

/// Python sidecar plotting the quantifier and the Spohn margin from the CSV.
pub fn plot_script(csv_file_name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Renders {csv} as two panels: quantifier Mbar_NM and Spohn margin vs time."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("{csv}")
with path.open(newline="") as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
mbar = [float(r["Mbar_NM"]) for r in rows]
margin = [float(r["spohn_margin"]) for r in rows]

fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 6.0))
ax1.plot(t, mbar, lw=0.7)
ax1.set_ylabel(r"$\bar{{M}}_{{NM}}$")
ax2.plot(t, margin, lw=0.7)
ax2.set_ylabel(r"$\sigma + M_{{NM}}$")
ax2.set_xlabel(r"$\tilde{{t}}$")
for ax in (ax1, ax2):
    ax.grid(alpha=0.3)
fig.tight_layout()
out = path.with_suffix(".png")
fig.savefig(out, dpi=160)
print(f"wrote {{out}}")
"#,
        csv = csv_file_name
    )
}

/// Runs the scenario and writes `<out>` (CSV) plus `<stem>_plot.py` next to
/// it. The outcome is returned so callers can inspect violations.
pub fn run_to_files(cfg: &SimulationConfig, out: &Path) -> Result<RunOutcome> {
    let outcome = run_simulation(cfg)?;
    std::fs::write(out, csv_string(&outcome.records))?;
    let csv_name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output.csv".into());
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    let script_path = out.with_file_name(format!("{stem}_plot.py"));
    std::fs::write(&script_path, plot_script(&csv_name))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn presets_match_documented_parameters() {
        let a = preset("fig2a").unwrap();
        assert_eq!(a.system.omegas, vec![50.0, 55.0, 60.0, 65.0]);
        assert_eq!(a.integrator.dt, 2e-4);
        assert_eq!(a.integrator.t_max, 50.0);
        assert_eq!(a.integrator.record_stride, 50);
        assert!(matches!(
            a.baths[3],
            BathSpec::SpinStar {
                temperature,
                nu,
                alpha,
                n_spins: 1,
            } if temperature == 68.6 && nu == 1.0 && alpha == 5e-3
        ));
        for j in 0..3 {
            assert!(a.baths[j].is_markovian());
        }

        let patterns = [
            ("fig2a", [true, true, true, false]),
            ("fig2b", [true, true, false, false]),
            ("fig2c", [true, false, false, false]),
            ("all_markov", [true, true, true, true]),
        ];
        for (name, want) in patterns {
            let cfg = preset(name).unwrap();
            let got: Vec<bool> = cfg.baths.iter().map(|b| b.is_markovian()).collect();
            assert_eq!(got, want.to_vec(), "bath pattern of {name}");
            assert!(cfg.validate().is_ok());
        }
        assert!(preset("fig2z").is_none());
    }

    #[test]
    fn markovian_preset_temperatures() {
        let m = preset("all_markov").unwrap();
        let temps: Vec<f64> = m.baths.iter().map(|b| b.temperature()).collect();
        assert_eq!(temps, vec![127.33, 105.57, 95.8, 68.6]);
    }

    const SAMPLE: &str = "\
# two-qubit mixed scenario
[system]
omegas = 50.0, 65.0
initial_state = ghz
p_weight = 0.25

[bath.1]
kind = markovian
temperature = 127.33
kappa = 1e-3

[bath.2]
kind = spin_star
temperature = 68.6
nu = 1.0
alpha = 5e-3
n_spins = 2

[integrator]
dt = 2e-4
t_max = 1.0

[output]
record_stride = 10
";

    #[test]
    fn parses_full_config() {
        let cfg = parse_config_str(SAMPLE, "sample").unwrap();
        assert_eq!(cfg.system.omegas, vec![50.0, 65.0]);
        assert_eq!(cfg.p_weight, 0.25);
        assert_eq!(cfg.eps_log, tol::EPS_LOG_DEFAULT);
        assert_eq!(cfg.integrator.record_stride, 10);
        assert!(matches!(
            cfg.baths[1],
            BathSpec::SpinStar { n_spins: 2, .. }
        ));
    }

    #[test]
    fn parses_initial_state_forms() {
        let basis = parse_initial_state("x", 1, "basis:01").unwrap();
        assert_eq!(basis, InitialState::Basis("01".into()));
        let custom = parse_initial_state("x", 1, "custom:1,0; 0,0.5").unwrap();
        match custom {
            InitialState::Custom(v) => {
                assert_eq!(v.len(), 2);
                assert_abs_diff_eq!(v[1].im, 0.5, epsilon = 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_initial_state("x", 1, "bell").is_err());
    }

    #[test]
    fn unknown_key_is_reported_with_line() {
        let text = SAMPLE.replace("kappa = 1e-3", "kappa = 1e-3\ncutoff = 3.0");
        let err = parse_config_str(&text, "sample").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key 'cutoff'"), "got: {msg}");
        assert!(msg.contains("sample:11"), "got: {msg}");
    }

    #[test]
    fn bath_count_mismatch_is_reported() {
        let text = SAMPLE.replace("omegas = 50.0, 65.0", "omegas = 50.0, 65.0, 60.0");
        let err = parse_config_str(&text, "sample").unwrap_err().to_string();
        assert!(err.contains("[bath.3] is missing"), "got: {err}");

        let extra = SAMPLE.replace(
            "[integrator]",
            "[bath.3]\nkind = markovian\ntemperature = 9.0\nkappa = 0\n\n[integrator]",
        );
        let err = parse_config_str(&extra, "sample").unwrap_err().to_string();
        assert!(err.contains("no matching qubit"), "got: {err}");
    }

    #[test]
    fn bad_values_are_reported_with_line() {
        let text = SAMPLE.replace("dt = 2e-4", "dt = fast");
        let err = parse_config_str(&text, "sample").unwrap_err().to_string();
        assert!(err.contains("'dt' must be a number"), "got: {err}");

        let text = SAMPLE.replace("dt = 2e-4", "dt = -1e-4");
        let err = parse_config_str(&text, "sample").unwrap_err().to_string();
        assert!(err.contains("dt must be positive"), "got: {err}");

        let text = SAMPLE.replace("kind = markovian", "kind = bosonic");
        let err = parse_config_str(&text, "sample").unwrap_err().to_string();
        assert!(err.contains("kind must be"), "got: {err}");
    }

    #[test]
    fn duplicate_stride_rejected() {
        let text = SAMPLE.replace("t_max = 1.0", "t_max = 1.0\nrecord_stride = 5");
        let err = parse_config_str(&text, "sample").unwrap_err().to_string();
        assert!(err.contains("record_stride set both"), "got: {err}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let mut cfg = preset("fig2a").unwrap();
        let o = Overrides {
            n_spins: Some(2),
            dt: Some(1e-3),
            t_max: Some(2.0),
            stride: Some(10),
            p_weight: Some(1.0),
            eps_log: Some(1e-10),
        };
        apply_overrides(&mut cfg, &o).unwrap();
        assert!(matches!(cfg.baths[3], BathSpec::SpinStar { n_spins: 2, .. }));
        assert_eq!(cfg.integrator.dt, 1e-3);

        let bad = Overrides {
            p_weight: Some(2.0),
            ..Default::default()
        };
        assert!(apply_overrides(&mut cfg, &bad).is_err());
    }

    fn tiny_mixed() -> SimulationConfig {
        parse_config_str(SAMPLE, "sample").unwrap()
    }

    #[test]
    fn row_count_matches_grid_arithmetic() {
        let mut cfg = tiny_mixed();
        cfg.integrator = IntegratorSpec {
            dt: 1e-3,
            t_max: 1e-2,
            record_stride: 2,
        };
        let outcome = run_simulation(&cfg).unwrap();
        // 10 steps, stride 2: samples at steps 0, 2, ..., 10.
        assert_eq!(outcome.records.len(), 6);
        assert!(outcome.violations.is_empty(), "{:?}", outcome.violations);
        let csv = csv_string(&outcome.records);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("t,E,S,dSdt,J_1,J_2,sigma,M_NM,Mbar_NM,spohn_margin,trace_err,min_eig,log_floored\n"));
        // Monotone time column.
        let times: Vec<f64> = outcome.records.iter().map(|r| r.t).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_t_max_gives_single_row() {
        let mut cfg = tiny_mixed();
        cfg.integrator.t_max = 0.0;
        let outcome = run_simulation(&cfg).unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.records[0].t, 0.0);
    }

    #[test]
    fn csv_runs_are_byte_identical() {
        let mut cfg = tiny_mixed();
        cfg.integrator.t_max = 0.05;
        cfg.integrator.record_stride = 50;
        let a = csv_string(&run_simulation(&cfg).unwrap().records);
        let b = csv_string(&run_simulation(&cfg).unwrap().records);
        assert_eq!(a, b);
        assert!(a.contains('e'), "floats serialized in scientific notation");
    }

    #[test]
    fn run_to_files_writes_csv_and_plot_script() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("mixed.csv");
        let mut cfg = tiny_mixed();
        cfg.integrator.t_max = 0.01;
        cfg.integrator.record_stride = 5;
        let outcome = run_to_files(&cfg, &out).unwrap();
        assert!(outcome.violations.is_empty());
        let csv = std::fs::read_to_string(&out).unwrap();
        assert_eq!(csv.lines().count(), 1 + outcome.records.len());
        let script = std::fs::read_to_string(dir.path().join("mixed_plot.py")).unwrap();
        assert!(script.contains("mixed.csv"));
        assert!(script.contains("Mbar_NM") && script.contains("spohn_margin"));
    }

    #[test]
    fn all_markov_rows_have_zero_quantifier() {
        let mut cfg = preset("all_markov").unwrap();
        cfg.integrator.t_max = 0.05;
        cfg.integrator.record_stride = 50;
        let outcome = run_simulation(&cfg).unwrap();
        assert!(outcome.violations.is_empty(), "{:?}", outcome.violations);
        for r in &outcome.records {
            assert_eq!(r.quantifier, 0.0);
            assert_eq!(r.witness, 0.0);
            assert_eq!(r.spohn_margin, r.sigma);
        }
    }

    #[test]
    fn unreadable_source_is_a_config_error() {
        let err = parse_config("no_such_file.toml").unwrap_err().to_string();
        assert!(err.contains("neither a preset"), "got: {err}");
    }
}

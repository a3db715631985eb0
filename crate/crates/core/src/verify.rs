//! Built-in verification suite: runs a short trajectory of a configuration
//! and checks every structural invariant, reporting machine-readable
//! pass/fail lines.
//!
//! The trajectory is clamped to t <= 2 with at most ~40 recorded samples so
//! `verify` stays fast on any configuration.

use crate::dynamics::{assemble_generator, evolve, GeneratorBundle};
use crate::exec;
use crate::markov::{eigenoperators, ohmic_rates};
use crate::model::{embed_on_system, gibbs_state, initial_joint_state, sigma_x, BathSpec, SimulationConfig};
use crate::qmath::{commutator, QOperator};
use crate::thermo::{ThermoEngine, ThermoRecord};
use crate::{tol, Result};

/// Deliberate corruption hooks so tests can prove the checks detect faults.
#[derive(Clone, Copy, Debug, Default)]
pub struct Faults {
    /// Negates every absorption rate before the detailed-balance check.
    pub flip_rate_sign: bool,
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

/// One line per check: `check <name> PASS|FAIL <detail>`.
pub fn report(outcomes: &[CheckOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        s.push_str(&format!(
            "check {} {} {}\n",
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        ));
    }
    s
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

struct VerifyData<'a> {
    bundle: &'a GeneratorBundle,
    engine: &'a ThermoEngine<'a>,
    samples: &'a [(f64, QOperator, f64)],
    records: &'a [ThermoRecord],
}

/// Runs every invariant check on a short trajectory of `cfg`.
pub fn run_verification(cfg: &SimulationConfig, faults: &Faults) -> Result<Vec<CheckOutcome>> {
    let mut vcfg = cfg.clone();
    vcfg.integrator.t_max = cfg.integrator.t_max.min(2.0);
    let steps = (vcfg.integrator.t_max / vcfg.integrator.dt).round() as usize;
    vcfg.integrator.record_stride = (steps / 40).max(1);

    let bundle = assemble_generator(&vcfg)?;
    let engine = ThermoEngine::new(&bundle)?;
    let rho0 = initial_joint_state(&vcfg, &bundle.layout)?;
    let mut samples: Vec<(f64, QOperator, f64)> = Vec::new();
    evolve(&bundle, &rho0, |s| {
        samples.push((s.t, s.state.clone(), s.step_drift));
        Ok(())
    })?;
    let records: Vec<ThermoRecord> = exec::map_slice(&samples, |(t, st, dr)| {
        engine.record_at(*t, st, *dr)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let data = VerifyData {
        bundle: &bundle,
        engine: &engine,
        samples: &samples,
        records: &records,
    };
    Ok(vec![
        check_detailed_balance(&data, faults),
        check_eigenoperator_ladder(&data),
        check_markov_stationarity(&data),
        check_closure(&data)?,
        check_current_additivity(&data)?,
        check_epr_two_form(&data),
        check_p_invariance(&data, &vcfg)?,
        check_witness_replacement(&data)?,
        check_density_sanity(&data),
        check_spohn_margin(&data),
    ])
}

fn check_detailed_balance(data: &VerifyData<'_>, faults: &Faults) -> CheckOutcome {
    let name = "detailed_balance";
    let b = data.bundle;
    let mut worst = 0.0f64;
    let mut n_pairs = 0usize;
    for (j, bath) in b.cfg.baths.iter().enumerate() {
        let (kappa, t) = match bath {
            BathSpec::Markovian { temperature, kappa } => (*kappa, *temperature),
            _ => continue,
        };
        if kappa == 0.0 {
            continue;
        }
        let coupling = match embed_on_system(&sigma_x(), j, b.cfg.n_qubits()) {
            Ok(c) => c,
            Err(e) => return CheckOutcome::new(name, false, format!("setup failed: {e}")),
        };
        let comps = match eigenoperators(&coupling, &b.h_s) {
            Ok(c) => c,
            Err(e) => return CheckOutcome::new(name, false, format!("setup failed: {e}")),
        };
        for comp in comps.iter().filter(|c| c.frequency > 0.0) {
            let mut pair = match ohmic_rates(comp.frequency, kappa, t) {
                Ok(p) => p,
                Err(e) => return CheckOutcome::new(name, false, format!("rates failed: {e}")),
            };
            if faults.flip_rate_sign {
                pair.up = -pair.up;
            }
            worst = worst.max(pair.detailed_balance_defect(comp.frequency, t));
            n_pairs += 1;
        }
    }
    CheckOutcome::new(
        name,
        worst < tol::DETAILED_BALANCE_REL,
        format!(
            "worst relative defect {worst:.3e} over {n_pairs} transitions (tol {:.1e})",
            tol::DETAILED_BALANCE_REL
        ),
    )
}

fn check_eigenoperator_ladder(data: &VerifyData<'_>) -> CheckOutcome {
    let name = "eigenoperator_ladder";
    let b = data.bundle;
    let mut worst = 0.0f64;
    let mut n = 0usize;
    for (j, bath) in b.cfg.baths.iter().enumerate() {
        if !bath.is_markovian() {
            continue;
        }
        let coupling = match embed_on_system(&sigma_x(), j, b.cfg.n_qubits()) {
            Ok(c) => c,
            Err(e) => return CheckOutcome::new(name, false, format!("setup failed: {e}")),
        };
        let comps = match eigenoperators(&coupling, &b.h_s) {
            Ok(c) => c,
            Err(e) => return CheckOutcome::new(name, false, format!("setup failed: {e}")),
        };
        for comp in &comps {
            let lhs = commutator(&b.h_s, &comp.op);
            let rhs = comp.op.scaled(crate::qmath::c(-comp.frequency, 0.0));
            let defect = (&lhs - &rhs).max_norm() / (1.0 + comp.frequency.abs());
            worst = worst.max(defect);
            n += 1;
        }
    }
    CheckOutcome::new(
        name,
        worst < 1e-9,
        format!("worst scaled ladder defect {worst:.3e} over {n} components (tol 1e-9)"),
    )
}

fn check_markov_stationarity(data: &VerifyData<'_>) -> CheckOutcome {
    let name = "markov_stationarity";
    let b = data.bundle;
    let mut worst = 0.0f64;
    for d in &b.markov {
        match gibbs_state(&b.h_s, d.temperature) {
            Ok(g) => worst = worst.max(d.apply(&g).max_norm()),
            Err(e) => return CheckOutcome::new(name, false, format!("setup failed: {e}")),
        }
    }
    CheckOutcome::new(
        name,
        worst < 1e-12,
        format!(
            "worst |D_j(gibbs_j)| {worst:.3e} over {} dissipators (tol 1e-12)",
            b.markov.len()
        ),
    )
}

fn check_closure(data: &VerifyData<'_>) -> Result<CheckOutcome> {
    let name = "closure_property";
    let b = data.bundle;
    let defects = exec::map_slice(data.samples, |(_, state, _)| -> Result<f64> {
        let rho_s = if b.layout.has_baths() {
            state.partial_trace(&b.layout.system_factors())?
        } else {
            state.clone()
        };
        let lhs = b.reduced_rhs(state)?;
        let mut rhs = commutator(&b.h_s, &rho_s).scaled(crate::qmath::c(0.0, -1.0));
        for d in &b.markov {
            rhs = &rhs + &d.apply(&rho_s);
        }
        for k in 0..b.nm.len() {
            rhs = &rhs + &b.nm_dissipator(k, state)?;
        }
        Ok((&lhs - &rhs).max_norm())
    });
    let mut worst = 0.0f64;
    for d in defects {
        worst = worst.max(d?);
    }
    Ok(CheckOutcome::new(
        name,
        worst < tol::CLOSURE,
        format!(
            "worst entrywise defect {worst:.3e} over {} samples (tol {:.1e})",
            data.samples.len(),
            tol::CLOSURE
        ),
    ))
}

fn check_current_additivity(data: &VerifyData<'_>) -> Result<CheckOutcome> {
    let name = "current_additivity";
    let b = data.bundle;
    let mut worst = 0.0f64;
    for ((_, state, _), rec) in data.samples.iter().zip(data.records) {
        let rhs = b.reduced_rhs(state)?;
        let total = b.h_s.matmul(&rhs).trace().re;
        let summed: f64 = rec.currents.iter().sum();
        worst = worst.max((summed - total).abs());
    }
    Ok(CheckOutcome::new(
        name,
        worst < 1e-9,
        format!("worst additivity defect {worst:.3e} (tol 1e-9)"),
    ))
}

fn check_epr_two_form(data: &VerifyData<'_>) -> CheckOutcome {
    let name = "epr_two_form";
    let worst = data
        .records
        .iter()
        .map(|r| (r.sigma - r.sigma_rel_entropy).abs())
        .fold(0.0, f64::max);
    CheckOutcome::new(
        name,
        worst < tol::EPR_FORMS,
        format!(
            "worst |balance - relative-entropy| {worst:.3e} (tol {:.1e})",
            tol::EPR_FORMS
        ),
    )
}

fn check_p_invariance(
    data: &VerifyData<'_>,
    vcfg: &SimulationConfig,
) -> Result<CheckOutcome> {
    let name = "p_invariance";
    let (_, state, _) = data.samples.last().expect("at least the initial sample");
    let mut sigmas = Vec::new();
    for p in [0.0, 0.5, 1.0] {
        let mut c2 = vcfg.clone();
        c2.p_weight = p;
        let bundle = assemble_generator(&c2)?;
        let engine = ThermoEngine::new(&bundle)?;
        let rec = engine.record_at(0.0, state, 0.0)?;
        sigmas.push(rec.sigma_rel_entropy);
    }
    let spread = sigmas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CheckOutcome::new(
        name,
        spread < tol::P_INVARIANCE,
        format!(
            "sigma spread {spread:.3e} across p in {{0, 0.5, 1}} (tol {:.1e})",
            tol::P_INVARIANCE
        ),
    ))
}

fn check_witness_replacement(data: &VerifyData<'_>) -> Result<CheckOutcome> {
    let name = "witness_replacement";
    let mut worst = 0.0f64;
    for ((_, state, _), rec) in data.samples.iter().zip(data.records) {
        let via_l = data.engine.witness_with_superoperators(state)?;
        worst = worst.max((rec.witness - via_l).abs());
    }
    Ok(CheckOutcome::new(
        name,
        worst < 1e-10,
        format!("worst |M via D - M via L| {worst:.3e} (tol 1e-10)"),
    ))
}

fn check_density_sanity(data: &VerifyData<'_>) -> CheckOutcome {
    let name = "density_sanity";
    let mut worst_trace = 0.0f64;
    let mut worst_drift = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for r in data.records {
        worst_trace = worst_trace.max(r.sample_trace_dev);
        worst_drift = worst_drift.max(r.trace_err);
        min_eig = min_eig.min(r.min_eig);
    }
    let passed = worst_trace <= tol::TRACE_SAMPLE
        && worst_drift <= tol::TRACE_DRIFT_STEP
        && min_eig >= tol::MIN_EIG;
    CheckOutcome::new(
        name,
        passed,
        format!(
            "trace dev {worst_trace:.3e} (tol {:.1e}), step drift {worst_drift:.3e} \
             (tol {:.1e}), min eig {min_eig:.3e} (floor {:.1e})",
            tol::TRACE_SAMPLE,
            tol::TRACE_DRIFT_STEP,
            tol::MIN_EIG
        ),
    )
}

fn check_spohn_margin(data: &VerifyData<'_>) -> CheckOutcome {
    let name = "spohn_margin";
    let max_abs_sigma = data
        .records
        .iter()
        .map(|r| r.sigma.abs())
        .fold(0.0, f64::max);
    let tol_spohn = tol::SPOHN_REL * max_abs_sigma.max(1.0);
    let mut worst = f64::INFINITY;
    let mut used = 0usize;
    for r in data.records.iter().filter(|r| !r.log_floored) {
        worst = worst.min(r.spohn_margin);
        used += 1;
    }
    if used == 0 {
        return CheckOutcome::new(
            name,
            false,
            "no samples outside the floor-dominated regime".into(),
        );
    }
    CheckOutcome::new(
        name,
        worst >= -tol_spohn,
        format!("min margin {worst:.3e} over {used} unflagged samples (tol -{tol_spohn:.1e})"),
    )
}

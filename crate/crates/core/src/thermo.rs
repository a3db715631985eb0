//! Thermodynamic functionals along a trajectory: internal energy, local heat
//! currents, entropy rate, entropy production rate (EPR), the
//! non-Markovianity witness / quantifier, and the modified Spohn margin.
//!
//! Units: k_B = hbar = 1 with all frequencies and times dimensionless.
//!
//! Two independent EPR expressions are computed per sample:
//! the balance form sigma = dS/dt - sum_j J_j / T_j, and a relative-entropy
//! form - sum_j tr(L_j (ln rho_s - ln rho_th_j)) built from partial
//! superoperators
//!
//! ```text
//! L_Mj  = -i (p / m)       [H_s, rho_s] + D_Mj(rho_s)
//! L_NMj = -i ((1 - p) / n) [H_s, rho_s] + D_NMj(rho_joint)
//! ```
//!
//! whose agreement is a recorded cross-check. The commutator split weight p
//! has no observable effect (its contributions trace to zero against both
//! logs); if a config has no baths of one kind, the full commutator weight
//! goes to the other kind.
//!
//! The witness is M = sum_{j in NM} tr(D_NMj (ln rho_s - ln rho_th_j)) and
//! the quantifier takes the summands in absolute value; the modified Spohn
//! inequality asserts sigma + M >= 0.

use crate::dynamics::{GeneratorBundle, Sample};
use crate::markov::MarkovDissipator;
use crate::qmath::{commutator, entropy_of_eigenvalues, floored_log_density, min_eigenvalue_blocked, QOperator};
use crate::{tol, Error, Result};

/// Per-bath local canonical references ln(rho_th_j) with
/// rho_th_j = e^{-H_s / T_j} / Z_j on the composite system space, built
/// exactly in the (diagonal) register eigenbasis so each commutes with H_s to
/// machine precision.
pub struct ReferenceStates {
    /// ln rho_th_j, bath order.
    pub ln_refs: Vec<QOperator>,
    pub temps: Vec<f64>,
}

pub fn reference_states(bundle: &GeneratorBundle) -> Result<ReferenceStates> {
    let ds = bundle.layout.system_dim();
    let mut energies = Vec::with_capacity(ds);
    for i in 0..ds {
        energies.push(bundle.h_s.data()[(i, i)].re);
    }
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut ln_refs = Vec::new();
    let mut temps = Vec::new();
    for bath in &bundle.cfg.baths {
        let t = bath.temperature();
        // ln Z = -E0/T + ln sum_i e^{-(E_i - E0)/T}, overflow-safe.
        let z_shifted: f64 = energies.iter().map(|&e| (-(e - e0) / t).exp()).sum();
        let ln_z = -e0 / t + z_shifted.ln();
        let diag: Vec<f64> = energies.iter().map(|&e| -e / t - ln_z).collect();
        ln_refs.push(QOperator::from_diagonal_real(
            &diag,
            &vec![2usize; bundle.layout.n_qubits],
        )?);
        temps.push(t);
    }
    Ok(ReferenceStates { ln_refs, temps })
}

/// All functionals at one recorded sample. `currents` is indexed by bath.
#[derive(Clone, Debug)]
pub struct ThermoRecord {
    pub t: f64,
    pub energy: f64,
    pub entropy: f64,
    pub entropy_rate: f64,
    pub currents: Vec<f64>,
    /// Balance-form EPR: dS/dt - sum_j J_j / T_j.
    pub sigma: f64,
    /// Witness M: sum over explicitly simulated baths of
    /// tr(D_NMj (ln rho_s - ln rho_th_j)).
    pub witness: f64,
    /// Quantifier: same sum with each term in absolute value.
    pub quantifier: f64,
    /// sigma + witness; nonnegative by the modified Spohn inequality.
    pub spohn_margin: f64,
    /// Largest pre-renormalization per-step trace drift since the previous
    /// sample.
    pub trace_err: f64,
    /// Minimum eigenvalue of the joint density matrix.
    pub min_eig: f64,
    /// True when the reduced state's smallest eigenvalue is within a decade
    /// of the log floor, i.e. ln rho_s is floor-dominated.
    pub log_floored: bool,
    /// Independent relative-entropy-form EPR (cross-check, not serialized).
    pub sigma_rel_entropy: f64,
    /// |tr(rho_joint) - 1| at the sample (post-renormalization).
    pub sample_trace_dev: f64,
}

/// tr(H_s D_Mj(rho_s)); the imaginary residue must be negligible.
pub fn heat_current_markov(
    h_s: &QOperator,
    diss: &MarkovDissipator,
    rho_s: &QOperator,
) -> Result<f64> {
    real_trace_product(h_s, &diss.apply(rho_s), "Markovian heat current")
}

/// tr(H_s D_NMj); takes the already-reduced dissipator.
pub fn heat_current_nm(h_s: &QOperator, nm_diss: &QOperator) -> Result<f64> {
    real_trace_product(h_s, nm_diss, "non-Markovian heat current")
}

/// -tr(rhs ln rho_s) with the floored log.
pub fn entropy_rate(reduced_rhs: &QOperator, log_rho_s: &QOperator) -> Result<f64> {
    let v = -reduced_rhs.matmul(log_rho_s).trace();
    check_real(v, "entropy rate")
}

/// sigma + M.
pub fn spohn_check(sigma: f64, witness: f64) -> f64 {
    sigma + witness
}

fn real_trace_product(a: &QOperator, b: &QOperator, what: &str) -> Result<f64> {
    check_real(a.matmul(b).trace(), what)
}

fn check_real(v: crate::qmath::C64, what: &str) -> Result<f64> {
    if v.im.abs() > 1e-8 {
        return Err(Error::Consistency(format!(
            "{what} has imaginary residue {:.3e}",
            v.im
        )));
    }
    Ok(v.re)
}

/// Evaluates every functional along a fixed configuration's trajectory.
pub struct ThermoEngine<'a> {
    pub bundle: &'a GeneratorBundle,
    pub refs: ReferenceStates,
}

impl<'a> ThermoEngine<'a> {
    pub fn new(bundle: &'a GeneratorBundle) -> Result<Self> {
        let refs = reference_states(bundle)?;
        Ok(Self { bundle, refs })
    }

    pub fn record(&self, sample: &Sample<'_>) -> Result<ThermoRecord> {
        self.record_at(sample.t, sample.state, sample.step_drift)
    }

    /// Core computation; `step_drift` is passed through as `trace_err`.
    pub fn record_at(&self, t: f64, state: &QOperator, step_drift: f64) -> Result<ThermoRecord> {
        let b = self.bundle;
        let layout = &b.layout;
        let rho_s = if layout.has_baths() {
            state.partial_trace(&layout.system_factors())?
        } else {
            state.clone()
        };

        let fl = floored_log_density(&rho_s, b.cfg.eps_log)?;
        let entropy = entropy_of_eigenvalues(&fl.eigenvalues);
        let log_floored = fl.min_eigenvalue < tol::FLOOR_FLAG_FACTOR * b.cfg.eps_log;

        let energy = real_trace_product(&b.h_s, &rho_s, "internal energy")?;

        // Dissipators, reduced to the system space, indexed by bath.
        let k = b.cfg.baths.len();
        let mut dissipators: Vec<Option<QOperator>> = vec![None; k];
        for d in &b.markov {
            dissipators[d.qubit] = Some(d.apply(&rho_s));
        }
        for (idx, ni) in b.nm.iter().enumerate() {
            dissipators[ni.qubit] = Some(b.nm_dissipator(idx, state)?);
        }

        let mut currents = Vec::with_capacity(k);
        for (j, d) in dissipators.iter().enumerate() {
            let d = d.as_ref().ok_or_else(|| {
                Error::Consistency(format!("bath {} produced no dissipator", j + 1))
            })?;
            currents.push(real_trace_product(&b.h_s, d, "heat current")?);
        }

        let reduced_rhs = b.reduced_rhs(state)?;
        let entropy_rate = entropy_rate(&reduced_rhs, &fl.log)?;

        let mut sigma = entropy_rate;
        for (j, cur) in currents.iter().enumerate() {
            sigma -= cur / self.refs.temps[j];
        }

        // Witness and quantifier from the explicitly simulated baths.
        let mut witness = 0.0;
        let mut quantifier = 0.0;
        for ni in &b.nm {
            let d = dissipators[ni.qubit].as_ref().expect("filled above");
            let diff = &fl.log - &self.refs.ln_refs[ni.qubit];
            let term = real_trace_product(d, &diff, "witness")?;
            witness += term;
            quantifier += term.abs();
        }

        let sigma_rel_entropy =
            self.relative_entropy_epr(&rho_s, &fl.log, &dissipators)?;

        let min_eig = min_eigenvalue_blocked(state, tol::BLOCK_DROP_REL)?;
        let sample_trace_dev = (state.trace().re - 1.0).abs();

        Ok(ThermoRecord {
            t,
            energy,
            entropy,
            entropy_rate,
            currents,
            sigma,
            witness,
            quantifier,
            spohn_margin: spohn_check(sigma, witness),
            trace_err: step_drift,
            min_eig,
            log_floored,
            sigma_rel_entropy,
            sample_trace_dev,
        })
    }

    /// Witness evaluated with the full partial superoperators L_NMj in place
    /// of the bare dissipators; equal to the recorded witness up to rounding
    /// because the commutator traces to zero against both logs.
    pub fn witness_with_superoperators(&self, state: &QOperator) -> Result<f64> {
        let b = self.bundle;
        let rho_s = if b.layout.has_baths() {
            state.partial_trace(&b.layout.system_factors())?
        } else {
            state.clone()
        };
        let fl = floored_log_density(&rho_s, b.cfg.eps_log)?;
        let comm = commutator(&b.h_s, &rho_s).scaled(crate::qmath::c(0.0, -1.0));
        let (_, w_nm) = self.split_weights();
        let mut witness = 0.0;
        for (idx, ni) in b.nm.iter().enumerate() {
            let mut l_nm = b.nm_dissipator(idx, state)?;
            l_nm = &l_nm + &comm.scaled(crate::qmath::c(w_nm, 0.0));
            let diff = &fl.log - &self.refs.ln_refs[ni.qubit];
            witness += real_trace_product(&l_nm, &diff, "witness (superoperator form)")?;
        }
        Ok(witness)
    }

    /// Commutator weight per partial superoperator: p split evenly over the m
    /// GKSL baths, 1 - p over the n explicit ones; a missing kind forfeits
    /// its share to the other.
    fn split_weights(&self) -> (f64, f64) {
        let m = self.bundle.markov.len();
        let n = self.bundle.nm.len();
        let p = self.bundle.cfg.p_weight;
        match (m, n) {
            (0, 0) => (0.0, 0.0),
            (_, 0) => (1.0 / m as f64, 0.0),
            (0, _) => (0.0, 1.0 / n as f64),
            (_, _) => (p / m as f64, (1.0 - p) / n as f64),
        }
    }

    /// - sum_j tr(L_j (ln rho_s - ln rho_th_j)) over all baths.
    fn relative_entropy_epr(
        &self,
        rho_s: &QOperator,
        log_rho_s: &QOperator,
        dissipators: &[Option<QOperator>],
    ) -> Result<f64> {
        let b = self.bundle;
        let comm = commutator(&b.h_s, rho_s).scaled(crate::qmath::c(0.0, -1.0));
        let (w_m, w_nm) = self.split_weights();
        let mut total = 0.0;
        for (j, d) in dissipators.iter().enumerate() {
            let d = d.as_ref().expect("validated by record_at");
            let w = if b.cfg.baths[j].is_markovian() { w_m } else { w_nm };
            let l_j = d + &comm.scaled(crate::qmath::c(w, 0.0));
            let diff = log_rho_s - &self.refs.ln_refs[j];
            total -= real_trace_product(&l_j, &diff, "relative-entropy EPR")?;
        }
        Ok(total)
    }
}

//! Weak-coupling (GKSL) treatment of the bosonic baths: eigenoperator
//! decomposition of the coupling operators, Ohmic transition rates obeying
//! detailed balance, and the resulting dissipators.

use nalgebra::DMatrix;

use crate::model::{embed_on_system, sigma_x, BathSpec, SimulationConfig};
use crate::qmath::{c, herm_eig, C64, QOperator};
use crate::{tol, Error, Result};

/// One Bohr-frequency component of a coupling operator: `[H, op] = -frequency * op`
/// whenever the grouping is exact.
#[derive(Clone, Debug)]
pub struct Eigenoperator {
    pub frequency: f64,
    pub op: QOperator,
}

/// Decomposes `a` into eigenoperators of the Hermitian `h`. Entries of `a` in
/// the eigenbasis are grouped by the gap `lambda_col - lambda_row`; gaps closer
/// than a relative tolerance share one component, whose frequency is the group
/// mean. The components always sum back to `a` exactly.
pub fn eigenoperators(a: &QOperator, h: &QOperator) -> Result<Vec<Eigenoperator>> {
    if a.dim() != h.dim() {
        return Err(Error::Dimension(format!(
            "coupling operator dim {} does not match Hamiltonian dim {}",
            a.dim(),
            h.dim()
        )));
    }
    let (vals, v) = herm_eig(h)?;
    let n = a.dim();
    let at = v.data().adjoint() * a.data() * v.data();

    let mut gaps: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    let mut max_abs = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let w = vals[j] - vals[i];
            max_abs = max_abs.max(w.abs());
            gaps.push((w, i, j));
        }
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tol = tol::OMEGA_GROUP_REL * max_abs;

    let mut out = Vec::new();
    let mut k = 0usize;
    while k < gaps.len() {
        let start = gaps[k].0;
        let mut end = k;
        while end + 1 < gaps.len() && gaps[end + 1].0 - start <= tol {
            end += 1;
        }
        let mut m = DMatrix::<C64>::zeros(n, n);
        let mut freq_sum = 0.0;
        let mut norm_sq = 0.0;
        for &(w, i, j) in &gaps[k..=end] {
            m[(i, j)] = at[(i, j)];
            freq_sum += w;
            norm_sq += at[(i, j)].norm_sqr();
        }
        if norm_sq > 0.0 {
            let op_mat = v.data() * m * v.data().adjoint();
            out.push(Eigenoperator {
                frequency: freq_sum / (end - k + 1) as f64,
                op: QOperator::new(op_mat, a.dims().to_vec())?,
            });
        }
        k = end + 1;
    }
    Ok(out)
}

/// Bose-Einstein occupation at splitting `omega` and temperature `t`.
pub fn bose_occupation(omega: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let x = omega / t;
    let denom = x.exp_m1();
    if denom.is_infinite() {
        0.0
    } else {
        1.0 / denom
    }
}

/// Downward (emission) and upward (absorption) rates of one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePair {
    pub down: f64,
    pub up: f64,
}

impl RatePair {
    /// Relative deviation from `up = down * exp(-omega / t)`; equals zero up
    /// to rounding for rates produced by `ohmic_rates`.
    pub fn detailed_balance_defect(&self, omega: f64, t: f64) -> f64 {
        let expected_up = self.down * (-omega / t).exp();
        (self.up - expected_up).abs() / self.down.max(f64::MIN_POSITIVE)
    }
}

/// Ohmic rates: down = kappa * omega * (nbar + 1), up = kappa * omega * nbar.
pub fn ohmic_rates(omega: f64, kappa: f64, t: f64) -> Result<RatePair> {
    if !omega.is_finite() || omega <= 0.0 {
        return Err(Error::Domain(format!(
            "Ohmic rates need a positive transition frequency, got {omega}"
        )));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::Domain(format!(
            "Ohmic rates need nonnegative kappa, got {kappa}"
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "Ohmic rates need nonnegative temperature, got {t}"
        )));
    }
    let nbar = bose_occupation(omega, t);
    Ok(RatePair {
        down: kappa * omega * (nbar + 1.0),
        up: kappa * omega * nbar,
    })
}

/// One jump channel of a dissipator, with its decay operator cached.
#[derive(Clone, Debug)]
pub struct Channel {
    pub rate: f64,
    pub op: QOperator,
    /// op^dagger op
    pub ldl: QOperator,
}

impl Channel {
    pub fn new(rate: f64, op: QOperator) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::Domain(format!(
                "jump rates must be nonnegative, got {rate}"
            )));
        }
        let ldl = op.adjoint().matmul(&op);
        Ok(Self { rate, op, ldl })
    }
}

/// GKSL dissipator acting on the register, attached to one qubit's bosonic
/// bath.
#[derive(Clone, Debug)]
pub struct MarkovDissipator {
    pub qubit: usize,
    pub temperature: f64,
    pub channels: Vec<Channel>,
}

impl MarkovDissipator {
    /// sum_c rate (L rho L^dag - {L^dag L, rho} / 2)
    pub fn apply(&self, rho: &QOperator) -> QOperator {
        let mut out = QOperator::zeros(rho.dims());
        for ch in &self.channels {
            if ch.rate == 0.0 {
                continue;
            }
            let jump = ch.op.matmul(rho).matmul(&ch.op.adjoint());
            let mut term = &jump - &crate::qmath::anticommutator(&ch.ldl, rho).scaled(c(0.5, 0.0));
            term = term.scaled(c(ch.rate, 0.0));
            out = &out + &term;
        }
        out
    }

    /// Total decay operator K = sum_c rate * L^dag L.
    pub fn total_decay(&self) -> QOperator {
        let dims = self.channels[0].op.dims().to_vec();
        let mut k = QOperator::zeros(&dims);
        for ch in &self.channels {
            k = &k + &ch.ldl.scaled(c(ch.rate, 0.0));
        }
        k
    }
}

/// Builds one dissipator from a coupling operator: each positive-frequency
/// eigenoperator contributes an emission channel and its adjoint an absorption
/// channel, with Ohmic rates at the bath temperature. A zero-frequency
/// component in the coupling is not representable in this treatment and is
/// rejected.
pub fn dissipator_from_coupling(
    h_s: &QOperator,
    coupling: &QOperator,
    kappa: f64,
    temperature: f64,
    qubit: usize,
) -> Result<MarkovDissipator> {
    let components = eigenoperators(coupling, h_s)?;
    let scale: f64 = components
        .iter()
        .map(|e| e.frequency.abs())
        .fold(0.0, f64::max);
    let zero_tol = tol::OMEGA_GROUP_REL * scale.max(1.0);

    let mut channels = Vec::new();
    for comp in &components {
        if comp.frequency.abs() <= zero_tol {
            if comp.op.frobenius_norm() > 1e-14 {
                return Err(Error::Config(format!(
                    "bath {}: coupling operator has a zero-frequency component \
                     (norm {:.3e}); only strictly off-resonant couplings are supported",
                    qubit + 1,
                    comp.op.frobenius_norm()
                )));
            }
            continue;
        }
        if comp.frequency < 0.0 {
            // Covered as the adjoint of the matching positive-frequency
            // component.
            continue;
        }
        let rates = ohmic_rates(comp.frequency, kappa, temperature)?;
        if rates.down > 0.0 {
            channels.push(Channel::new(rates.down, comp.op.clone())?);
        }
        if rates.up > 0.0 {
            channels.push(Channel::new(rates.up, comp.op.adjoint())?);
        }
    }
    Ok(MarkovDissipator {
        qubit,
        temperature,
        channels,
    })
}

/// One dissipator per Markovian bath, each coupling through sigma_x on its
/// qubit. Operators act on the register space.
pub fn build_markov_dissipators(
    cfg: &SimulationConfig,
    h_s: &QOperator,
) -> Result<Vec<MarkovDissipator>> {
    let nq = cfg.n_qubits();
    let mut out = Vec::new();
    for (j, bath) in cfg.baths.iter().enumerate() {
        if let BathSpec::Markovian { temperature, kappa } = *bath {
            let coupling = embed_on_system(&sigma_x(), j, nq)?;
            out.push(dissipator_from_coupling(
                h_s, &coupling, kappa, temperature, j,
            )?);
        }
    }
    Ok(out)
}

//! Model definition: qubit register with one local bath per qubit, spin-star
//! bath operators, exchange interactions, Gibbs states and initial conditions.
//!
//! Conventions used throughout: basis |0> is the excited qubit state, so a
//! qubit Hamiltonian is (omega/2) sigma_z with sigma_z = diag(1, -1) and
//! sigma_minus = |1><0| lowers the energy. In the joint space the system
//! qubits come first, then one factor per spin-star bath in ascending order of
//! the qubit that owns it.

use nalgebra::{DMatrix, DVector};

use crate::qmath::{c, herm_eig, rebuild_from_eig, C64, QOperator};
use crate::{Error, Result};

/// Qubit register: one transition frequency per qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub omegas: Vec<f64>,
}

impl SystemSpec {
    pub fn n_qubits(&self) -> usize {
        self.omegas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.omegas.is_empty() {
            return Err(Error::Config("system needs at least one qubit".into()));
        }
        for (j, &w) in self.omegas.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Config(format!(
                    "qubit {} frequency must be positive and finite, got {w}",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

/// Local bath attached to one qubit.
#[derive(Clone, Debug, PartialEq)]
pub enum BathSpec {
    /// Bosonic bath treated in the weak-coupling (GKSL) limit with an Ohmic
    /// spectral density; `kappa` is the Ohmic prefactor.
    Markovian { temperature: f64, kappa: f64 },
    /// Spin-star bath of `n_spins` central spins with splitting `nu`, coupled
    /// through an exchange interaction of strength `alpha` and simulated
    /// explicitly.
    SpinStar {
        temperature: f64,
        nu: f64,
        alpha: f64,
        n_spins: usize,
    },
}

impl BathSpec {
    pub fn temperature(&self) -> f64 {
        match *self {
            BathSpec::Markovian { temperature, .. } => temperature,
            BathSpec::SpinStar { temperature, .. } => temperature,
        }
    }

    pub fn is_markovian(&self) -> bool {
        matches!(self, BathSpec::Markovian { .. })
    }

    pub fn validate(&self, qubit: usize) -> Result<()> {
        let label = qubit + 1;
        let t = self.temperature();
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Config(format!(
                "bath {label}: temperature must be positive, got {t}"
            )));
        }
        match *self {
            BathSpec::Markovian { kappa, .. } => {
                if !kappa.is_finite() || kappa < 0.0 {
                    return Err(Error::Config(format!(
                        "bath {label}: kappa must be nonnegative, got {kappa}"
                    )));
                }
            }
            BathSpec::SpinStar {
                nu,
                alpha,
                n_spins,
                ..
            } => {
                if !nu.is_finite() || nu <= 0.0 {
                    return Err(Error::Config(format!(
                        "bath {label}: nu must be positive, got {nu}"
                    )));
                }
                if !alpha.is_finite() {
                    return Err(Error::Config(format!("bath {label}: alpha must be finite")));
                }
                if n_spins == 0 {
                    return Err(Error::Config(format!(
                        "bath {label}: n_spins must be at least 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// (|0...0> + |1...1>)/sqrt(2) over the system qubits.
    Ghz,
    /// Computational basis state given as a bit string, one char per qubit.
    Basis(String),
    /// Arbitrary system state vector (normalized on input).
    Custom(Vec<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
}

impl IntegratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.t_max.is_finite() || self.t_max < 0.0 {
            return Err(Error::Config(format!(
                "t_max must be nonnegative, got {}",
                self.t_max
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Full simulation setup: register, one bath per qubit, initial state,
/// integration grid, the commutator split weight p and the log floor.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub system: SystemSpec,
    pub baths: Vec<BathSpec>,
    pub initial_state: InitialState,
    pub integrator: IntegratorSpec,
    pub p_weight: f64,
    pub eps_log: f64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.baths.len() != self.system.n_qubits() {
            return Err(Error::Config(format!(
                "need exactly one bath per qubit: {} qubits, {} baths",
                self.system.n_qubits(),
                self.baths.len()
            )));
        }
        for (j, b) in self.baths.iter().enumerate() {
            b.validate(j)?;
        }
        self.integrator.validate()?;
        if !(0.0..=1.0).contains(&self.p_weight) {
            return Err(Error::Config(format!(
                "p_weight must lie in [0, 1], got {}",
                self.p_weight
            )));
        }
        if !self.eps_log.is_finite() || self.eps_log <= 0.0 {
            return Err(Error::Config(format!(
                "eps_log must be positive, got {}",
                self.eps_log
            )));
        }
        match &self.initial_state {
            InitialState::Basis(bits) => {
                if bits.len() != self.system.n_qubits()
                    || bits.chars().any(|ch| ch != '0' && ch != '1')
                {
                    return Err(Error::Config(format!(
                        "basis state must be a {}-char bit string, got {bits:?}",
                        self.system.n_qubits()
                    )));
                }
            }
            InitialState::Custom(v) => {
                let want = 1usize << self.system.n_qubits();
                if v.len() != want {
                    return Err(Error::Config(format!(
                        "custom state needs {want} amplitudes, got {}",
                        v.len()
                    )));
                }
                if v.iter().map(|z| z.norm_sqr()).sum::<f64>() <= 0.0 {
                    return Err(Error::Config("custom state has zero norm".into()));
                }
            }
            InitialState::Ghz => {}
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.system.n_qubits()
    }

    pub fn markovian_qubits(&self) -> Vec<usize> {
        (0..self.baths.len())
            .filter(|&j| self.baths[j].is_markovian())
            .collect()
    }

    pub fn spin_star_qubits(&self) -> Vec<usize> {
        (0..self.baths.len())
            .filter(|&j| !self.baths[j].is_markovian())
            .collect()
    }
}

/// Factor layout of the joint space: system qubits first, then one factor per
/// spin-star bath, ascending in the owning qubit index.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorLayout {
    pub dims: Vec<usize>,
    pub n_qubits: usize,
    /// Owning qubit of each bath factor, in factor order.
    pub bath_owners: Vec<usize>,
}

impl FactorLayout {
    pub fn build(cfg: &SimulationConfig) -> Self {
        let n_qubits = cfg.n_qubits();
        let mut dims = vec![2usize; n_qubits];
        let mut bath_owners = Vec::new();
        for (j, b) in cfg.baths.iter().enumerate() {
            if let BathSpec::SpinStar { n_spins, .. } = *b {
                dims.push(1usize << n_spins);
                bath_owners.push(j);
            }
        }
        Self {
            dims,
            n_qubits,
            bath_owners,
        }
    }

    pub fn joint_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn system_dim(&self) -> usize {
        1usize << self.n_qubits
    }

    pub fn bath_dim(&self) -> usize {
        self.joint_dim() / self.system_dim()
    }

    pub fn system_factors(&self) -> Vec<usize> {
        (0..self.n_qubits).collect()
    }

    /// Factor index of the spin-star bath owned by `qubit`, if any.
    pub fn bath_factor(&self, qubit: usize) -> Option<usize> {
        self.bath_owners
            .iter()
            .position(|&q| q == qubit)
            .map(|k| self.n_qubits + k)
    }

    pub fn has_baths(&self) -> bool {
        !self.bath_owners.is_empty()
    }
}

pub fn sigma_x() -> QOperator {
    QOperator::from_matrix(DMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
    ))
    .unwrap()
}

pub fn sigma_z() -> QOperator {
    QOperator::from_diagonal_real(&[1.0, -1.0], &[2]).unwrap()
}

/// |0><1|: raises |1> (ground) to |0> (excited).
pub fn sigma_plus() -> QOperator {
    QOperator::from_matrix(DMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
    ))
    .unwrap()
}

/// |1><0|: lowers |0> (excited) to |1> (ground).
pub fn sigma_minus() -> QOperator {
    QOperator::from_matrix(DMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
    ))
    .unwrap()
}

/// Places single-factor operators on the given factors of a product space and
/// fills the rest with identities. Factors must be distinct.
pub fn embed_product(parts: &[(usize, &QOperator)], dims: &[usize]) -> Result<QOperator> {
    for &(f, op) in parts {
        if f >= dims.len() {
            return Err(Error::Dimension(format!(
                "factor {f} out of range for {} factors",
                dims.len()
            )));
        }
        if op.dim() != dims[f] {
            return Err(Error::Dimension(format!(
                "operator dim {} does not match factor {f} dim {}",
                op.dim(),
                dims[f]
            )));
        }
    }
    let mut seen = vec![false; dims.len()];
    for &(f, _) in parts {
        if seen[f] {
            return Err(Error::Dimension(format!("factor {f} listed twice")));
        }
        seen[f] = true;
    }
    let mut acc: Option<QOperator> = None;
    for (f, &d) in dims.iter().enumerate() {
        let next = match parts.iter().find(|&&(pf, _)| pf == f) {
            Some(&(_, op)) => op.clone(),
            None => QOperator::identity(&[d]),
        };
        acc = Some(match acc {
            Some(a) => a.kron(&next),
            None => next,
        });
    }
    Ok(acc.unwrap())
}

/// One 2x2 operator on one qubit of the register.
pub fn embed_on_system(op: &QOperator, qubit: usize, n_qubits: usize) -> Result<QOperator> {
    embed_product(&[(qubit, op)], &vec![2usize; n_qubits])
}

/// Free register Hamiltonian sum_j (omega_j / 2) sigma_z^(j); diagonal in the
/// computational basis.
pub fn build_system_hamiltonian(spec: &SystemSpec) -> Result<QOperator> {
    spec.validate()?;
    let nq = spec.n_qubits();
    let dim = 1usize << nq;
    let mut diag = vec![0.0f64; dim];
    for (idx, e) in diag.iter_mut().enumerate() {
        let mut energy = 0.0;
        for (j, &w) in spec.omegas.iter().enumerate() {
            let bit = (idx >> (nq - 1 - j)) & 1;
            energy += if bit == 0 { 0.5 * w } else { -0.5 * w };
        }
        *e = energy;
    }
    QOperator::from_diagonal_real(&diag, &vec![2usize; nq])
}

/// Collective operators of one spin-star bath.
pub struct SpinStarOps {
    pub h_b: QOperator,
    pub j_plus: QOperator,
    pub j_minus: QOperator,
}

/// H_B = nu J+ J- with collective ladder operators J+- = sum_l sigma+-^(l).
pub fn build_spin_star_bath(nu: f64, n_spins: usize) -> Result<SpinStarOps> {
    if n_spins == 0 {
        return Err(Error::Config("spin-star bath needs at least one spin".into()));
    }
    let dims = vec![2usize; n_spins];
    let mut j_plus = QOperator::zeros(&dims);
    for l in 0..n_spins {
        let term = embed_product(&[(l, &sigma_plus())], &dims)?;
        j_plus = &j_plus + &term;
    }
    let j_minus = j_plus.adjoint();
    let h_b = j_plus.matmul(&j_minus).scaled(c(nu, 0.0));
    // Collapse the bath to a single factor of dim 2^n for the joint layout.
    let flat = [1usize << n_spins];
    Ok(SpinStarOps {
        h_b: h_b.with_dims(&flat)?,
        j_plus: j_plus.with_dims(&flat)?,
        j_minus: j_minus.with_dims(&flat)?,
    })
}

/// Exchange coupling alpha (sigma+ J- + sigma- J+) between a qubit and its
/// spin-star bath, embedded on the joint space.
pub fn build_xy_interaction(
    qubit: usize,
    alpha: f64,
    star: &SpinStarOps,
    layout: &FactorLayout,
) -> Result<QOperator> {
    let bath_factor = layout.bath_factor(qubit).ok_or_else(|| {
        Error::Config(format!(
            "qubit {} has no spin-star bath factor; exchange coupling undefined",
            qubit + 1
        ))
    })?;
    let up_down = embed_product(
        &[(qubit, &sigma_plus()), (bath_factor, &star.j_minus)],
        &layout.dims,
    )?;
    let term = up_down.scaled(c(alpha, 0.0));
    Ok(&term + &term.adjoint())
}

/// Thermal state exp(-h/T)/Z. The spectrum is shifted by its minimum before
/// exponentiating so large gaps cannot overflow.
pub fn gibbs_state(h: &QOperator, temperature: f64) -> Result<QOperator> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::Domain(format!(
            "Gibbs state needs positive temperature, got {temperature}"
        )));
    }
    let (vals, v) = herm_eig(h)?;
    let e0 = vals[0];
    let weights: Vec<f64> = vals.iter().map(|&e| (-(e - e0) / temperature).exp()).collect();
    let z: f64 = weights.iter().sum();
    let populations: Vec<f64> = weights.iter().map(|w| w / z).collect();
    Ok(rebuild_from_eig(&populations, &v))
}

/// Initial state of the register as configured.
pub fn initial_system_state(cfg: &SimulationConfig) -> Result<QOperator> {
    cfg.validate()?;
    let nq = cfg.n_qubits();
    let dim = 1usize << nq;
    let dims = vec![2usize; nq];
    let psi: DVector<C64> = match &cfg.initial_state {
        InitialState::Ghz => {
            let mut v = DVector::zeros(dim);
            v[0] = c(1.0, 0.0);
            v[dim - 1] = c(1.0, 0.0);
            v
        }
        InitialState::Basis(bits) => {
            let mut idx = 0usize;
            for ch in bits.chars() {
                idx = (idx << 1) | if ch == '1' { 1 } else { 0 };
            }
            let mut v = DVector::zeros(dim);
            v[idx] = c(1.0, 0.0);
            v
        }
        InitialState::Custom(amps) => DVector::from_column_slice(amps),
    };
    QOperator::projector(&psi, &dims)
}

/// Register state tensored with each spin-star bath's Gibbs state.
pub fn initial_joint_state(cfg: &SimulationConfig, layout: &FactorLayout) -> Result<QOperator> {
    let mut rho = initial_system_state(cfg)?;
    for &owner in &layout.bath_owners {
        let (temperature, nu, n_spins) = match cfg.baths[owner] {
            BathSpec::SpinStar {
                temperature,
                nu,
                n_spins,
                ..
            } => (temperature, nu, n_spins),
            _ => unreachable!("bath_owners only lists spin-star baths"),
        };
        let star = build_spin_star_bath(nu, n_spins)?;
        let thermal = gibbs_state(&star.h_b, temperature)?;
        rho = rho.kron(&thermal);
    }
    Ok(rho)
}

//! Joint-space generator assembly and fixed-step RK4 propagation.
//!
//! The reduced equation of motion mixes dissipators of two kinds: GKSL ones
//! for the bosonic baths and explicit partial-trace terms for the spin-star
//! baths. It is closed by evolving the system together with every spin-star
//! bath: the joint density matrix follows
//!
//! ```text
//! d rho / dt = -i [h_total, rho] + sum_j (D_Mj (x) id_baths)(rho)
//! ```
//!
//! and tracing out the bath factors of the right-hand side reproduces the
//! reduced mixed-dissipator equation exactly, because each lifted GKSL term
//! commutes with the trace over bath factors and the interaction commutators
//! define the non-Markovian dissipators.
//!
//! The right-hand side is compiled once into structured-sparse kernels: the
//! diagonal Hamiltonian/decay part is fused into one pass, the off-diagonal
//! Hamiltonian acts as a sparse commutator, and each jump sandwich uses the
//! block structure of system-side operators lifted by identity on the baths.

use crate::markov::{build_markov_dissipators, MarkovDissipator};
use crate::model::{
    build_spin_star_bath, build_system_hamiltonian, build_xy_interaction, embed_product,
    BathSpec, FactorLayout, SimulationConfig,
};
use crate::qmath::{c, C64, QOperator};
use crate::sparse::{copy_add_scaled, hermitize_and_trace, scale_real, SandwichOp, SparseOp};
use crate::{tol, Error, Result};

use nalgebra::DMatrix;

/// One explicitly simulated bath: the exchange interaction on the joint
/// space, kept both dense (for oracles) and sparse (for the inner loops).
pub struct NmInteraction {
    pub qubit: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub h_i: QOperator,
    pub sparse: SparseOp,
}

/// Joint right-hand side compiled to structured-sparse form.
struct CompiledRhs {
    dim: usize,
    /// Real diagonal of h_total.
    h_diag: Vec<f64>,
    /// Diagonal of the total decay operator sum_c rate L^dag L, lifted.
    k_diag: Vec<f64>,
    /// Off-diagonal part of h_total.
    h_off: SparseOp,
    /// One lifted sandwich rho -> rate L rho L^dag per jump channel.
    channels: Vec<(SandwichOp, f64)>,
    /// Off-diagonal decay remainder (empty for register-local couplings),
    /// applied as -(1/2){K, rho}.
    k_off: Option<SparseOp>,
}

impl CompiledRhs {
    fn apply(&self, rho: &[C64], out: &mut [C64]) {
        crate::sparse::diag_generator_assign(out, rho, &self.h_diag, &self.k_diag);
        self.h_off.commutator_acc(-C64::i(), rho, out);
        for (ch, rate) in &self.channels {
            ch.apply_acc(*rate, rho, out);
        }
        if let Some(k) = &self.k_off {
            k.apply_left_acc(c(-0.5, 0.0), rho, out);
            k.apply_right_acc(c(-0.5, 0.0), rho, out);
        }
    }
}

/// Everything needed to propagate and analyze one configuration.
pub struct GeneratorBundle {
    pub cfg: SimulationConfig,
    pub layout: FactorLayout,
    /// Register Hamiltonian on the system space.
    pub h_s: QOperator,
    /// Full Hamiltonian on the joint space.
    pub h_total: QOperator,
    /// GKSL dissipators, operators on the system space.
    pub markov: Vec<MarkovDissipator>,
    /// Spin-star interactions in bath order.
    pub nm: Vec<NmInteraction>,
    rhs: CompiledRhs,
}

/// Builds the joint generator for a validated configuration.
pub fn assemble_generator(cfg: &SimulationConfig) -> Result<GeneratorBundle> {
    cfg.validate()?;
    let layout = FactorLayout::build(cfg);
    let h_s = build_system_hamiltonian(&cfg.system)?;
    let d = layout.joint_dim();
    let db = layout.bath_dim();

    // h_total = H_s (x) id_baths + sum_b id (x) H_Bb + sum_j H_Ij.
    let mut h_total = if layout.has_baths() {
        let mut bath_dims = Vec::new();
        for &owner in &layout.bath_owners {
            if let BathSpec::SpinStar { n_spins, .. } = cfg.baths[owner] {
                bath_dims.push(1usize << n_spins);
            }
        }
        h_s.kron(&QOperator::identity(&bath_dims))
    } else {
        h_s.clone()
    };

    let mut nm = Vec::new();
    for &owner in &layout.bath_owners {
        let (temperature, nu, alpha, n_spins) = match cfg.baths[owner] {
            BathSpec::SpinStar {
                temperature,
                nu,
                alpha,
                n_spins,
            } => (temperature, nu, alpha, n_spins),
            _ => unreachable!("bath_owners only lists spin-star baths"),
        };
        let star = build_spin_star_bath(nu, n_spins)?;
        let factor = layout.bath_factor(owner).expect("owner has a factor");
        let h_b = embed_product(&[(factor, &star.h_b)], &layout.dims)?;
        let h_i = build_xy_interaction(owner, alpha, &star, &layout)?;
        h_total = &h_total + &h_b;
        h_total = &h_total + &h_i;
        let sparse = SparseOp::from_qoperator(&h_i, 0.0);
        nm.push(NmInteraction {
            qubit: owner,
            temperature,
            alpha,
            h_i,
            sparse,
        });
    }

    let markov = build_markov_dissipators(cfg, &h_s)?;

    // Compile: split h_total into a real diagonal plus a sparse remainder.
    let mut h_diag = vec![0.0f64; d];
    let mut h_off_dense = h_total.clone();
    for i in 0..d {
        h_diag[i] = h_total.data()[(i, i)].re;
        h_off_dense.data_mut()[(i, i)] = c(0.0, 0.0);
    }
    let h_off = SparseOp::from_qoperator(&h_off_dense, 0.0);

    // Total decay operator on the system space, lifted by identity.
    let ds = layout.system_dim();
    let mut k_sys = DMatrix::<C64>::zeros(ds, ds);
    let mut channels = Vec::new();
    for diss in &markov {
        for ch in &diss.channels {
            k_sys += ch.ldl.data().scale(ch.rate);
            channels.push((SandwichOp::new(&ch.op, db, 0.0), ch.rate));
        }
    }
    let mut k_diag = vec![0.0f64; d];
    let mut k_off_entries = Vec::new();
    for r in 0..ds {
        for col in 0..ds {
            let v = k_sys[(r, col)];
            if r == col {
                for b in 0..db {
                    k_diag[r * db + b] = v.re;
                }
            } else if v != c(0.0, 0.0) {
                for b in 0..db {
                    k_off_entries.push(((r * db + b) as u32, (col * db + b) as u32, v));
                }
            }
        }
    }
    let k_off = if k_off_entries.is_empty() {
        None
    } else {
        Some(SparseOp::from_entries(d, k_off_entries))
    };

    Ok(GeneratorBundle {
        cfg: cfg.clone(),
        layout,
        h_s,
        h_total,
        markov,
        nm,
        rhs: CompiledRhs {
            dim: d,
            h_diag,
            k_diag,
            h_off,
            channels,
            k_off,
        },
    })
}

impl GeneratorBundle {
    pub fn joint_dim(&self) -> usize {
        self.rhs.dim
    }

    /// Writes the joint right-hand side L(rho) into `out` (column-major
    /// slices of length dim^2).
    pub fn rhs_into(&self, rho: &[C64], out: &mut [C64]) {
        self.rhs.apply(rho, out);
    }

    /// Dense convenience wrapper around [`Self::rhs_into`].
    pub fn apply_joint(&self, rho: &QOperator) -> Result<QOperator> {
        self.check_state(rho)?;
        let d = self.rhs.dim;
        let mut out = vec![c(0.0, 0.0); d * d];
        self.rhs.apply(rho.as_slice(), &mut out);
        QOperator::new(
            DMatrix::from_column_slice(d, d, &out),
            self.layout.dims.clone(),
        )
    }

    /// d rho_s / dt: bath factors of the joint right-hand side traced out.
    pub fn reduced_rhs(&self, rho: &QOperator) -> Result<QOperator> {
        let full = self.apply_joint(rho)?;
        if self.layout.has_baths() {
            full.partial_trace(&self.layout.system_factors())
        } else {
            Ok(full)
        }
    }

    /// Non-Markovian dissipator of interaction `k` on the system space:
    /// -i tr_baths [H_Ik, rho]. Traceless and Hermitian up to rounding.
    pub fn nm_dissipator(&self, k: usize, rho: &QOperator) -> Result<QOperator> {
        self.check_state(rho)?;
        let ni = self.nm.get(k).ok_or_else(|| {
            Error::Dimension(format!(
                "interaction index {k} out of range ({} spin-star baths)",
                self.nm.len()
            ))
        })?;
        let d = self.rhs.dim;
        let mut out = vec![c(0.0, 0.0); d * d];
        ni.sparse.commutator_acc(-C64::i(), rho.as_slice(), &mut out);
        let joint = QOperator::new(
            DMatrix::from_column_slice(d, d, &out),
            self.layout.dims.clone(),
        )?;
        joint.partial_trace(&self.layout.system_factors())
    }

    fn check_state(&self, rho: &QOperator) -> Result<()> {
        if rho.dim() != self.rhs.dim {
            return Err(Error::Dimension(format!(
                "state dim {} does not match joint dim {}",
                rho.dim(),
                self.rhs.dim
            )));
        }
        Ok(())
    }
}

/// Scratch buffers for RK4; reusable across steps.
pub struct Rk4Workspace {
    stage: Vec<C64>,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        let z = vec![c(0.0, 0.0); dim * dim];
        Self {
            stage: z.clone(),
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z,
        }
    }
}

fn rk4_update(rhs: &CompiledRhs, rho: &mut [C64], dt: f64, ws: &mut Rk4Workspace) {
    rhs.apply(rho, &mut ws.k1);
    copy_add_scaled(&mut ws.stage, rho, dt / 2.0, &ws.k1);
    rhs.apply(&ws.stage, &mut ws.k2);
    copy_add_scaled(&mut ws.stage, rho, dt / 2.0, &ws.k2);
    rhs.apply(&ws.stage, &mut ws.k3);
    copy_add_scaled(&mut ws.stage, rho, dt, &ws.k3);
    rhs.apply(&ws.stage, &mut ws.k4);
    crate::sparse::axpy_real(rho, dt / 6.0, &ws.k1);
    crate::sparse::axpy_real(rho, dt / 3.0, &ws.k2);
    crate::sparse::axpy_real(rho, dt / 3.0, &ws.k3);
    crate::sparse::axpy_real(rho, dt / 6.0, &ws.k4);
}

/// Re-symmetrizes, checks the pre-correction trace drift against the
/// instability limit, renormalizes, and reports the drift.
fn settle_step(rho: &mut [C64], dim: usize, t_last_good: f64) -> Result<f64> {
    let tr = hermitize_and_trace(rho, dim);
    let drift = (tr - 1.0).abs();
    if !tr.is_finite() || drift > tol::TRACE_DRIFT_ABORT {
        return Err(Error::Unstable {
            t_last_good,
            drift,
            limit: tol::TRACE_DRIFT_ABORT,
        });
    }
    scale_real(rho, 1.0 / tr);
    Ok(drift)
}

/// One classical RK4 step of the joint state, re-symmetrized and trace
/// renormalized. Fails with an instability error (advising a smaller dt) if
/// the pre-correction trace drifts beyond the abort limit.
pub fn rk4_step(bundle: &GeneratorBundle, state: &QOperator, dt: f64) -> Result<QOperator> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    bundle.check_state(state)?;
    let d = bundle.rhs.dim;
    let mut rho = state.as_slice().to_vec();
    let mut ws = Rk4Workspace::new(d);
    rk4_update(&bundle.rhs, &mut rho, dt, &mut ws);
    settle_step(&mut rho, d, 0.0)?;
    QOperator::new(
        DMatrix::from_column_slice(d, d, &rho),
        bundle.layout.dims.clone(),
    )
}

/// Snapshot passed to the observer at every recorded sample.
pub struct Sample<'a> {
    /// Sample index, 0 at t = 0.
    pub index: usize,
    /// Integrator step count at this sample.
    pub step: usize,
    pub t: f64,
    pub state: &'a QOperator,
    /// Largest pre-renormalization |tr - 1| of any single step since the
    /// previous sample (0 at t = 0).
    pub step_drift: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvolveStats {
    pub steps: usize,
    pub samples: usize,
    /// Worst per-step trace drift over the whole run.
    pub max_step_drift: f64,
}

/// Fixed-step RK4 from t = 0 to t_max with the configured dt, invoking the
/// observer at t = 0 and after every `record_stride` steps. The observer gets
/// read-only snapshots. Instability aborts with the last good time.
pub fn evolve<F>(bundle: &GeneratorBundle, rho0: &QOperator, mut observer: F) -> Result<EvolveStats>
where
    F: FnMut(Sample<'_>) -> Result<()>,
{
    bundle.check_state(rho0)?;
    let spec = &bundle.cfg.integrator;
    let dt = spec.dt;
    let steps = (spec.t_max / dt).round() as usize;
    let stride = spec.record_stride;
    let d = bundle.rhs.dim;

    let mut rho = rho0.as_slice().to_vec();
    let mut ws = Rk4Workspace::new(d);
    let snapshot = |data: &[C64]| -> Result<QOperator> {
        QOperator::new(
            DMatrix::from_column_slice(d, d, data),
            bundle.layout.dims.clone(),
        )
    };

    let state0 = snapshot(&rho)?;
    observer(Sample {
        index: 0,
        step: 0,
        t: 0.0,
        state: &state0,
        step_drift: 0.0,
    })?;

    let mut stats = EvolveStats {
        steps,
        samples: 1,
        max_step_drift: 0.0,
    };
    let mut window_drift = 0.0f64;
    for step in 1..=steps {
        rk4_update(&bundle.rhs, &mut rho, dt, &mut ws);
        let drift = settle_step(&mut rho, d, (step - 1) as f64 * dt)?;
        window_drift = window_drift.max(drift);
        stats.max_step_drift = stats.max_step_drift.max(drift);
        if step % stride == 0 {
            // The trace check alone cannot see divergence in sectors that do
            // not feed the diagonal; guard every sample entrywise.
            if !rho.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Unstable {
                    t_last_good: (step / stride - 1) as f64 * (stride as f64) * dt,
                    drift: f64::INFINITY,
                    limit: tol::TRACE_DRIFT_ABORT,
                });
            }
            let state = snapshot(&rho)?;
            observer(Sample {
                index: step / stride,
                step,
                t: step as f64 * dt,
                state: &state,
                step_drift: window_drift,
            })?;
            stats.samples += 1;
            window_drift = 0.0;
        }
    }
    Ok(stats)
}

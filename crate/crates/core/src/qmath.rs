//! Dense complex linear algebra on tensor-product spaces: operators tagged
//! with their factor layout, Kronecker products, partial traces, Hermitian
//! eigendecomposition and the matrix functions built on it, plus the entropy
//! functionals used by the thermodynamics layer.

use nalgebra::{DMatrix, DVector};

use crate::{tol, Error, Result};

pub type C64 = num_complex::Complex64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dense operator on a tensor-product Hilbert space.
///
/// `dims` records the factor dimensions in order; the matrix index of a basis
/// state is the mixed-radix number of its digits with the first factor most
/// significant, which is exactly the Kronecker-product convention (the left
/// factor indexes blocks). Storage is column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct QOperator {
    data: DMatrix<C64>,
    dims: Vec<usize>,
}

impl QOperator {
    pub fn new(data: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::Dimension(format!(
                "operator must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let prod: usize = dims.iter().product();
        if dims.is_empty() || prod != data.nrows() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "factor dims {:?} do not multiply to matrix dim {}",
                dims,
                data.nrows()
            )));
        }
        Ok(Self { data, dims })
    }

    /// Single-factor operator (dims = [n]).
    pub fn from_matrix(data: DMatrix<C64>) -> Result<Self> {
        let n = data.nrows();
        Self::new(data, vec![n])
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        Self {
            data: DMatrix::zeros(n, n),
            dims: dims.to_vec(),
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        Self {
            data: DMatrix::identity(n, n),
            dims: dims.to_vec(),
        }
    }

    /// Diagonal operator from real entries.
    pub fn from_diagonal_real(diag: &[f64], dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if diag.len() != n {
            return Err(Error::Dimension(format!(
                "diagonal length {} vs dims {:?}",
                diag.len(),
                dims
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = c(v, 0.0);
        }
        Self::new(m, dims.to_vec())
    }

    /// Projector onto a normalized state vector.
    pub fn projector(psi: &DVector<C64>, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if psi.len() != n {
            return Err(Error::Dimension(format!(
                "state length {} vs dims {:?}",
                psi.len(),
                dims
            )));
        }
        let nrm = psi.norm();
        if nrm <= 0.0 {
            return Err(Error::Domain("cannot normalize zero state vector".into()));
        }
        let v = psi / c(nrm, 0.0);
        Self::new(&v * v.adjoint(), dims.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.data
    }

    /// Column-major raw storage.
    pub fn as_slice(&self) -> &[C64] {
        self.data.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        self.data.as_mut_slice()
    }

    /// Reinterprets the factor structure without touching the matrix.
    pub fn with_dims(&self, dims: &[usize]) -> Result<Self> {
        Self::new(self.data.clone(), dims.to_vec())
    }

    pub fn adjoint(&self) -> Self {
        Self {
            data: self.data.adjoint(),
            dims: self.dims.clone(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            data: &self.data * s,
            dims: self.dims.clone(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim(), rhs.dim(), "matmul dimension mismatch");
        Self {
            data: &self.data * &rhs.data,
            dims: self.dims.clone(),
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                let d = (self.data[(i, j)] - self.data[(j, i)].conj()).norm_sqr();
                worst = worst.max(d);
            }
        }
        worst.sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Kronecker product; factor lists concatenate.
    pub fn kron(&self, rhs: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&rhs.dims);
        Self {
            data: self.data.kronecker(&rhs.data),
            dims,
        }
    }

    /// Traces out every factor not listed in `keep`.
    ///
    /// `keep` must be strictly increasing factor indices; the result keeps
    /// those factors in the same order. Tracing everything away returns a 1x1
    /// operator holding the trace.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let nf = self.dims.len();
        for w in keep.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Dimension(format!(
                    "keep list must be strictly increasing, got {:?}",
                    keep
                )));
            }
        }
        if keep.iter().any(|&k| k >= nf) {
            return Err(Error::Dimension(format!(
                "keep index out of range: {:?} with {} factors",
                keep, nf
            )));
        }
        let strides = factor_strides(&self.dims);
        let kept_dims: Vec<usize> = keep.iter().map(|&k| self.dims[k]).collect();
        let traced: Vec<usize> = (0..nf).filter(|f| !keep.contains(f)).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&f| self.dims[f]).collect();

        let kept_offsets = subspace_offsets(&kept_dims, &keep.iter().map(|&k| strides[k]).collect::<Vec<_>>());
        let traced_offsets =
            subspace_offsets(&traced_dims, &traced.iter().map(|&f| strides[f]).collect::<Vec<_>>());

        let dk: usize = kept_dims.iter().product();
        let mut out = DMatrix::zeros(dk, dk);
        for b in 0..dk {
            for a in 0..dk {
                let mut acc = c(0.0, 0.0);
                for &t in &traced_offsets {
                    acc += self.data[(kept_offsets[a] + t, kept_offsets[b] + t)];
                }
                out[(a, b)] = acc;
            }
        }
        let out_dims = if kept_dims.is_empty() {
            vec![1]
        } else {
            kept_dims
        };
        QOperator::new(out, out_dims)
    }
}

impl std::ops::Add for &QOperator {
    type Output = QOperator;
    fn add(self, rhs: &QOperator) -> QOperator {
        assert_eq!(self.dim(), rhs.dim(), "add dimension mismatch");
        QOperator {
            data: &self.data + &rhs.data,
            dims: self.dims.clone(),
        }
    }
}

impl std::ops::Sub for &QOperator {
    type Output = QOperator;
    fn sub(self, rhs: &QOperator) -> QOperator {
        assert_eq!(self.dim(), rhs.dim(), "sub dimension mismatch");
        QOperator {
            data: &self.data - &rhs.data,
            dims: self.dims.clone(),
        }
    }
}

/// Row-major strides of a factor list: the first factor is most significant.
pub fn factor_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    strides
}

/// Global index offsets of every basis state of a sub-product, given that
/// sub-product's factor dims and the matching global strides.
fn subspace_offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let mut offsets = Vec::with_capacity(total.max(1));
    for mut idx in 0..total.max(1) {
        let mut off = 0usize;
        for f in (0..dims.len()).rev() {
            off += (idx % dims[f]) * strides[f];
            idx /= dims[f];
        }
        offsets.push(off);
    }
    offsets
}

pub fn commutator(a: &QOperator, b: &QOperator) -> QOperator {
    &a.matmul(b) - &b.matmul(a)
}

pub fn anticommutator(a: &QOperator, b: &QOperator) -> QOperator {
    &a.matmul(b) + &b.matmul(a)
}

fn check_hermitian(m: &QOperator, what: &str) -> Result<()> {
    let defect = m.hermiticity_defect();
    if defect > tol::HERMITICITY {
        return Err(Error::NotHermitian(format!(
            "{what}: max |m - m^dag| = {defect:.3e} exceeds {:.1e}",
            tol::HERMITICITY
        )));
    }
    Ok(())
}

fn to_faer(m: &DMatrix<C64>) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Ascending eigenvalues of a Hermitian matrix (values only).
fn herm_eigenvalues_raw(m: &DMatrix<C64>) -> Result<Vec<f64>> {
    to_faer(m)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Consistency(format!("eigenvalue computation failed: {e:?}")))
}

/// Eigendecomposition of a Hermitian operator: ascending real eigenvalues and
/// the unitary of eigenvectors (columns), deterministically ordered. The
/// decomposition is verified against the input (`|A v - lambda v|` residual),
/// so a silently wrong solver result turns into an error instead of
/// corrupting downstream matrix functions.
pub fn herm_eig(h: &QOperator) -> Result<(Vec<f64>, QOperator)> {
    check_hermitian(h, "herm_eig input")?;
    let n = h.dim();
    let eig = to_faer(&h.data)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Consistency(format!("eigendecomposition failed: {e:?}")))?;
    let vals: Vec<f64> = eig.S().column_vector().iter().map(|x| x.re).collect();
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    for (j, col) in eig.U().col_iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            vecs[(i, j)] = *x;
        }
    }

    let av = &h.data * &vecs;
    let mut residual = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            residual = residual.max((av[(i, j)] - vecs[(i, j)] * c(vals[j], 0.0)).norm());
        }
    }
    let scale = h.max_norm().max(1.0);
    if residual > 1e-9 * scale {
        return Err(Error::Consistency(format!(
            "eigendecomposition residual {residual:.3e} exceeds {:.1e}",
            1e-9 * scale
        )));
    }
    Ok((vals, QOperator::new(vecs, h.dims().to_vec())?))
}

/// Applies a real scalar function to a Hermitian operator through its
/// eigendecomposition. Errors if the function leaves the real line on any
/// eigenvalue (NaN or infinity).
pub fn mat_func_hermitian(h: &QOperator, f: impl Fn(f64) -> f64) -> Result<QOperator> {
    let (vals, v) = herm_eig(h)?;
    let mut mapped = Vec::with_capacity(vals.len());
    for &lam in &vals {
        let y = f(lam);
        if !y.is_finite() {
            return Err(Error::Domain(format!(
                "matrix function not finite at eigenvalue {lam:.6e} (got {y})"
            )));
        }
        mapped.push(y);
    }
    Ok(rebuild_from_eig(&mapped, &v))
}

/// V diag(vals) V^dag with V's factor layout.
pub fn rebuild_from_eig(vals: &[f64], v: &QOperator) -> QOperator {
    let mut scaled = v.data().clone();
    for (j, &lam) in vals.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col *= c(lam, 0.0);
    }
    QOperator {
        data: &scaled * v.data().adjoint(),
        dims: v.dims().to_vec(),
    }
}

/// Von Neumann entropy -tr(rho ln rho) in nats. Small negative eigenvalues
/// from floating-point noise are clamped to zero and the clamped spectrum is
/// renormalized, which keeps the result nonnegative for any near-density input.
pub fn von_neumann_entropy(rho: &QOperator) -> Result<f64> {
    check_hermitian(rho, "von_neumann_entropy input")?;
    let vals = herm_eigenvalues_raw(&rho.data)?;
    Ok(entropy_of_eigenvalues(&vals))
}

pub fn entropy_of_eigenvalues(vals: &[f64]) -> f64 {
    let total: f64 = vals.iter().map(|&p| p.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    vals.iter()
        .map(|&p| {
            let q = p.max(0.0) / total;
            if q > 0.0 {
                -q * q.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// Result of the floored logarithm of a density matrix.
pub struct FlooredLog {
    /// ln of the floored, trace-renormalized density matrix.
    pub log: QOperator,
    /// Raw eigenvalues of the input, ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
}

/// ln(rho) with the spectral floor: eigenvalues are clamped from below at
/// `eps_log` and the clamped spectrum is renormalized to unit trace before
/// taking the log. Keeps the log finite on (numerically) rank-deficient states
/// while leaving well-conditioned spectra untouched at the 1e-12 level.
pub fn floored_log_density(rho: &QOperator, eps_log: f64) -> Result<FlooredLog> {
    if eps_log <= 0.0 {
        return Err(Error::Domain(format!(
            "eps_log must be positive, got {eps_log:.3e}"
        )));
    }
    let (vals, v) = herm_eig(rho)?;
    let clamped: Vec<f64> = vals.iter().map(|&p| p.max(eps_log)).collect();
    let total: f64 = clamped.iter().sum();
    let logs: Vec<f64> = clamped.iter().map(|&p| (p / total).ln()).collect();
    let min_eigenvalue = vals[0];
    Ok(FlooredLog {
        log: rebuild_from_eig(&logs, &v),
        eigenvalues: vals,
        min_eigenvalue,
    })
}

/// Quantum relative entropy S(rho || sigma) with the same spectral floor
/// applied to sigma. With a positive floor the support condition always holds;
/// with `eps_log = 0` a genuine support violation returns +infinity.
pub fn relative_entropy(rho: &QOperator, sigma: &QOperator) -> Result<f64> {
    relative_entropy_with(rho, sigma, tol::EPS_LOG_DEFAULT)
}

pub fn relative_entropy_with(rho: &QOperator, sigma: &QOperator, eps_log: f64) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "relative entropy needs equal dims, got {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let (p, u) = herm_eig(rho)?;
    let (q, w) = herm_eig(sigma)?;
    let p: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();

    let q_clamped: Vec<f64> = q.iter().map(|&x| x.max(eps_log)).collect();
    let q_total: f64 = q_clamped.iter().sum();

    // Overlap weights |<w_j|u_i>|^2 connect the two eigenbases.
    let overlap = w.data().adjoint() * u.data();
    let n = rho.dim();
    let mut cross = 0.0f64;
    for i in 0..n {
        if p[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            let wgt = overlap[(j, i)].norm_sqr();
            if wgt == 0.0 {
                continue;
            }
            let qj = q_clamped[j];
            if qj <= 0.0 {
                if p[i] * wgt > 1e-12 {
                    return Ok(f64::INFINITY);
                }
                continue;
            }
            cross += p[i] * wgt * (qj / q_total).ln();
        }
    }
    let own: f64 = p
        .iter()
        .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
        .sum();
    Ok(own - cross)
}

/// Trace distance (1/2)||a - b||_1 between Hermitian operators.
pub fn trace_distance(a: &QOperator, b: &QOperator) -> Result<f64> {
    let diff = a - b;
    check_hermitian(&diff, "trace_distance difference")?;
    let vals = herm_eigenvalues_raw(&diff.data)?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Minimum eigenvalue of a Hermitian matrix, exploiting block structure.
///
/// Entries with modulus below `drop_rel * max_entry` are treated as structural
/// zeros; connected components of the remaining support graph are eigensolved
/// independently. By Weyl's inequality the error is bounded by the spectral
/// norm of the dropped part, well under the tolerances this feeds.
pub fn min_eigenvalue_blocked(m: &QOperator, drop_rel: f64) -> Result<f64> {
    let n = m.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let maxabs = m.max_norm();
    if maxabs == 0.0 {
        return Ok(0.0);
    }
    let thr2 = (drop_rel * maxabs) * (drop_rel * maxabs);

    // Union-find over matrix indices connected by non-negligible entries.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in (j + 1)..n {
            if m.data[(i, j)].norm_sqr() > thr2 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }

    let mut min = f64::INFINITY;
    for idx in groups.values() {
        if idx.len() == 1 {
            min = min.min(m.data[(idx[0], idx[0])].re);
            continue;
        }
        let k = idx.len();
        let mut sub = DMatrix::zeros(k, k);
        for (bj, &j) in idx.iter().enumerate() {
            for (bi, &i) in idx.iter().enumerate() {
                sub[(bi, bj)] = m.data[(i, j)];
            }
        }
        let vals = herm_eigenvalues_raw(&sub)?;
        min = min.min(vals.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    Ok(min)
}

/// Seeded random operators for tests across the crate.
#[cfg(test)]
pub mod testkit {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rand_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    pub fn rand_hermitian(n: usize, seed: u64) -> QOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(n, &mut rng);
        QOperator::from_matrix((&a + a.adjoint()).scale(0.5)).unwrap()
    }

    pub fn rand_density(n: usize, seed: u64) -> QOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_matrix(n, &mut rng);
        let p = &a * a.adjoint();
        let tr = p.trace().re;
        QOperator::from_matrix(p / c(tr, 0.0)).unwrap()
    }
}

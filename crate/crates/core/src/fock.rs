//! Truncated Fock-space linear algebra.
//!
//! Single modes live in `span{|0>, ..., |cutoff>}`; multimode operators are
//! stored densely in Kronecker order, the first listed mode being the most
//! significant digit of the basis index.
//!
//! Gaussian unitaries are built from the spectral decomposition of their
//! (truncated) generator. Both generators are diagonal-phase conjugates of
//! real symmetric matrices, so a real symmetric eigensolver suffices and the
//! truncated unitaries are exactly unitary up to round-off.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Hermiticity and trace tolerance for density operators.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Smallest eigenvalue tolerated before a state counts as non-positive.
pub const PSD_FLOOR: f64 = -1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockDim {
    cutoff: usize,
}

impl FockDim {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidCutoff(cutoff));
        }
        Ok(Self { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of photon levels, `cutoff + 1`.
    pub fn size(&self) -> usize {
        self.cutoff + 1
    }
}

/// Labels and per-mode dimensions of a multimode Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSpace {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl ModeSpace {
    pub fn new<S: Into<String>>(modes: impl IntoIterator<Item = (S, FockDim)>) -> Self {
        let (labels, dims) = modes.into_iter().map(|(l, d)| (l.into(), d.size())).unzip();
        Self { labels, dims }
    }

    pub fn single(label: &str, dim: FockDim) -> Self {
        Self::new([(label, dim)])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    /// Basis index of the product Fock state with the given occupations.
    pub fn basis_index(&self, occupations: &[usize]) -> usize {
        assert_eq!(occupations.len(), self.dims.len());
        occupations.iter().zip(&self.dims).fold(0, |acc, (&n, &d)| {
            assert!(n < d, "occupation {n} exceeds mode dimension {d}");
            acc * d + n
        })
    }

    /// Per-mode occupations of a basis index.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    fn concat(&self, other: &ModeSpace) -> ModeSpace {
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut dims = self.dims.clone();
        dims.extend(other.dims.iter().copied());
        ModeSpace { labels, dims }
    }
}

/// Dense operator acting on one or more modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    pub matrix: CMatrix,
    pub space: ModeSpace,
}

impl ModeOperator {
    pub fn new(matrix: CMatrix, space: ModeSpace) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        Ok(Self { matrix, space })
    }

    fn single(matrix: CMatrix, dim: FockDim) -> Self {
        Self {
            matrix,
            space: ModeSpace::single("mode", dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            space: self.space.clone(),
        }
    }

    /// `max |U^dagger U - I|`, the unitarity defect.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let gram = self.matrix.adjoint() * &self.matrix;
        max_abs(&(gram - CMatrix::identity(n, n)))
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Ladder operator with `a[n-1, n] = sqrt(n)`.
pub fn annihilation(dim: FockDim) -> ModeOperator {
    ModeOperator::single(annihilation_matrix(dim.size()), dim)
}

pub(crate) fn annihilation_matrix(size: usize) -> CMatrix {
    let mut a = CMatrix::zeros(size, size);
    for n in 1..size {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn number_operator(dim: FockDim) -> ModeOperator {
    let d = dim.size();
    let m = CMatrix::from_diagonal(&CVector::from_iterator(
        d,
        (0..d).map(|n| C64::new(n as f64, 0.0)),
    ));
    ModeOperator::single(m, dim)
}

/// Spectral data of a real symmetric generator `J`, so that
/// `exp(-i r J) = W diag(exp(-i r lambda)) W^T`.
#[derive(Debug, Clone)]
struct RealSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl RealSpectrum {
    fn new(j: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(j);
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    fn phases(&self, r: f64) -> Vec<C64> {
        self.values
            .iter()
            .map(|&l| C64::from_polar(1.0, -r * l))
            .collect()
    }
}

/// Cached generator spectra for displacement and squeezing at one cutoff.
///
/// `D(r e^{i theta}) = P exp(-i r J_d) P^dagger` with `J_d = a + a^dagger` and
/// `P = diag(e^{i (theta + pi/2) n})`.
///
/// `S(r e^{i phi}) = Q exp(-i r J_s) Q^dagger` with
/// `J_s = (a^2 + a^dagger^2) / 2` and `Q = diag(e^{i (phi/2 - pi/4) n})`.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    dim: FockDim,
    disp: RealSpectrum,
    squeeze: RealSpectrum,
}

impl GaussianKernel {
    pub fn new(dim: FockDim) -> Self {
        let d = dim.size();
        let mut jd = DMatrix::<f64>::zeros(d, d);
        for n in 0..d - 1 {
            let v = ((n + 1) as f64).sqrt();
            jd[(n + 1, n)] = v;
            jd[(n, n + 1)] = v;
        }
        let mut js = DMatrix::<f64>::zeros(d, d);
        for n in 0..d.saturating_sub(2) {
            let v = 0.5 * (((n + 1) * (n + 2)) as f64).sqrt();
            js[(n + 2, n)] = v;
            js[(n, n + 2)] = v;
        }
        Self {
            dim,
            disp: RealSpectrum::new(jd),
            squeeze: RealSpectrum::new(js),
        }
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    fn frame(&self, angle: f64) -> Vec<C64> {
        (0..self.dim.size())
            .map(|n| C64::from_polar(1.0, angle * n as f64))
            .collect()
    }

    fn unitary(&self, spec: &RealSpectrum, r: f64, frame: &[C64]) -> CMatrix {
        let d = self.dim.size();
        let e = spec.phases(r);
        let w = &spec.vectors;
        CMatrix::from_fn(d, d, |j, k| {
            let s: C64 = (0..d).map(|m| e[m] * (w[(j, m)] * w[(k, m)])).sum();
            frame[j] * s * frame[k].conj()
        })
    }

    /// `D(alpha) = exp(alpha a^dagger - alpha^* a)`, `alpha = amp e^{i phase}`.
    pub fn displacement(&self, amp: f64, phase: f64) -> CMatrix {
        let frame = self.frame(phase + std::f64::consts::FRAC_PI_2);
        self.unitary(&self.disp, amp, &frame)
    }

    /// `S(xi) = exp((xi^* a^2 - xi a^dagger^2) / 2)`, `xi = amp e^{i phase}`.
    pub fn squeezing(&self, amp: f64, phase: f64) -> CMatrix {
        let frame = self.frame(0.5 * phase - std::f64::consts::FRAC_PI_4);
        self.unitary(&self.squeeze, amp, &frame)
    }

    /// Row `j` of a unitary `F exp(-i r J) F^dagger`, left-multiplied into `row`:
    /// returns `row * U`.
    fn row_times(&self, row: &[C64], spec: &RealSpectrum, r: f64, frame: &[C64]) -> Vec<C64> {
        let d = self.dim.size();
        let e = spec.phases(r);
        let w = &spec.vectors;
        // y_m = e_m * sum_k row_k F_k W[k, m]
        let y: Vec<C64> = (0..d)
            .map(|m| {
                let s: C64 = (0..d).map(|k| row[k] * frame[k] * w[(k, m)]).sum();
                s * e[m]
            })
            .collect();
        (0..d)
            .map(|l| {
                let s: C64 = (0..d).map(|m| y[m] * w[(l, m)]).sum();
                s * frame[l].conj()
            })
            .collect()
    }

    /// Row `j` of `S(xi) D(alpha)` in O(d^2) without forming either matrix.
    pub fn squeeze_displace_row(
        &self,
        j: usize,
        xi_amp: f64,
        xi_phase: f64,
        alpha_amp: f64,
        alpha_phase: f64,
    ) -> Vec<C64> {
        let d = self.dim.size();
        let mut basis = vec![ZERO; d];
        basis[j] = ONE;
        let sq_frame = self.frame(0.5 * xi_phase - std::f64::consts::FRAC_PI_4);
        let s_row = self.row_times(&basis, &self.squeeze, xi_amp, &sq_frame);
        let d_frame = self.frame(alpha_phase + std::f64::consts::FRAC_PI_2);
        self.row_times(&s_row, &self.disp, alpha_amp, &d_frame)
    }
}

pub fn displacement(alpha_amp: f64, alpha_phase: f64, dim: FockDim) -> ModeOperator {
    ModeOperator::single(
        GaussianKernel::new(dim).displacement(alpha_amp, alpha_phase),
        dim,
    )
}

pub fn squeezing(xi_amp: f64, xi_phase: f64, dim: FockDim) -> ModeOperator {
    ModeOperator::single(GaussianKernel::new(dim).squeezing(xi_amp, xi_phase), dim)
}

/// Matrix elements `<n-k| K_k |n> = sqrt(C(n,k) eta^(n-k) (1-eta)^k)` of the
/// pure-loss Kraus operators, `k = 0..=cutoff`.
pub fn loss_kraus(size: usize, eta: f64) -> Vec<CMatrix> {
    (0..size)
        .map(|k| {
            let mut m = CMatrix::zeros(size, size);
            for n in k..size {
                let amp =
                    (binomial(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt();
                m[(n - k, n)] = C64::new(amp, 0.0);
            }
            m
        })
        .collect()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Two-mode beamsplitter unitary on `(mode_a, mode_b)`, Kronecker order `a (x) b`.
///
/// Heisenberg action `a^dagger -> sqrt(1-T) a^dagger + sqrt(T) b^dagger`,
/// `b^dagger -> -sqrt(T) a^dagger + sqrt(1-T) b^dagger`, so that
/// `|1,0> -> sqrt(1-T) |1,0> + sqrt(T) |0,1>`.
pub fn beamsplitter_unitary(size_a: usize, size_b: usize, transmittance: f64) -> CMatrix {
    let theta = transmittance.clamp(0.0, 1.0).sqrt().asin();
    let a = annihilation_matrix(size_a).map(|z| z.re);
    let b = annihilation_matrix(size_b).map(|z| z.re);
    let ia = DMatrix::<f64>::identity(size_a, size_a);
    let ib = DMatrix::<f64>::identity(size_b, size_b);
    let a_full = a.kronecker(&ib);
    let b_full = ia.kronecker(&b);
    // G = theta (b^dagger a - a^dagger b), real antisymmetric
    let g = (b_full.transpose() * &a_full - a_full.transpose() * &b_full) * theta;
    g.exp().map(|x| C64::new(x, 0.0))
}

/// `X -> op_on(modes) * X` for an operator acting on a subset of modes.
fn apply_left(space: &ModeSpace, modes: &[usize], op: &CMatrix, x: &CMatrix) -> CMatrix {
    let n = space.total_dim();
    let sub_dims: Vec<usize> = modes.iter().map(|&m| space.dims[m]).collect();
    let sub_n: usize = sub_dims.iter().product();
    debug_assert_eq!(op.nrows(), sub_n);
    let mut out = CMatrix::zeros(n, x.ncols());
    let mut sub_digits = vec![0usize; modes.len()];
    for row in 0..n {
        let digits = space.digits(row);
        let sub_row = modes
            .iter()
            .zip(&sub_dims)
            .fold(0, |acc, (&m, &d)| acc * d + digits[m]);
        let mut src = digits.clone();
        for sub_col in 0..sub_n {
            let coef = op[(sub_row, sub_col)];
            if coef == ZERO {
                continue;
            }
            let mut rem = sub_col;
            for (slot, &d) in sub_digits.iter_mut().zip(&sub_dims).rev() {
                *slot = rem % d;
                rem /= d;
            }
            for (&m, &v) in modes.iter().zip(&sub_digits) {
                src[m] = v;
            }
            let src_idx = space.basis_index(&src);
            for c in 0..x.ncols() {
                out[(row, c)] += coef * x[(src_idx, c)];
            }
        }
    }
    out
}

/// `X -> U X U^dagger` with `U` acting on the listed modes.
fn conjugate(space: &ModeSpace, modes: &[usize], u: &CMatrix, x: &CMatrix) -> CMatrix {
    let left = apply_left(space, modes, u, x);
    apply_left(space, modes, u, &left.adjoint()).adjoint()
}

/// Summary of how far a matrix is from being a valid density operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDiagnostics {
    pub hermiticity_defect: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

/// Multimode density matrix in the truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
    space: ModeSpace,
}

impl DensityOperator {
    /// Wraps a matrix without checking positivity or normalization.
    pub fn from_matrix(matrix: CMatrix, space: ModeSpace) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        Ok(Self { matrix, space })
    }

    pub fn pure(ket: &CVector, space: ModeSpace) -> Result<Self> {
        Self::from_matrix(ket * ket.adjoint(), space)
    }

    /// Product Fock state `|n_1, ..., n_k>`.
    pub fn fock(space: ModeSpace, occupations: &[usize]) -> Self {
        let n = space.total_dim();
        let idx = space.basis_index(occupations);
        let mut m = CMatrix::zeros(n, n);
        m[(idx, idx)] = ONE;
        Self { matrix: m, space }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn space(&self) -> &ModeSpace {
        &self.space
    }

    pub fn modes(&self) -> &[String] {
        self.space.labels()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn normalized(&self) -> Self {
        let t = self.trace();
        Self {
            matrix: self.matrix.map(|z| z / t),
            space: self.space.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * factor),
            space: self.space.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.total_dim(),
                got: other.space.total_dim(),
            });
        }
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            space: self.space.clone(),
        })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
            space: self.space.concat(&other.space),
        }
    }

    /// Population of a product Fock state.
    pub fn population(&self, occupations: &[usize]) -> f64 {
        let i = self.space.basis_index(occupations);
        self.matrix[(i, i)].re
    }

    pub fn element(&self, row: &[usize], col: &[usize]) -> C64 {
        self.matrix[(self.space.basis_index(row), self.space.basis_index(col))]
    }

    /// `Tr(rho X)`.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (&self.matrix * op).trace()
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        let herm = max_abs(&(&self.matrix - self.matrix.adjoint()));
        let sym = (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5);
        let min_eig = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        StateDiagnostics {
            hermiticity_defect: herm,
            trace: self.trace(),
            min_eigenvalue: min_eig,
        }
    }

    /// Checks Hermiticity, unit trace and positivity at the module tolerances.
    pub fn validate(&self) -> Result<StateDiagnostics> {
        let d = self.diagnostics();
        if d.hermiticity_defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "hermiticity defect {:e}",
                d.hermiticity_defect
            )));
        }
        if (d.trace - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("trace {}", d.trace)));
        }
        if d.min_eigenvalue < PSD_FLOOR {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {:e}",
                d.min_eigenvalue
            )));
        }
        Ok(d)
    }

    /// `||rho - sigma||_1 / 2`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.space.dims != other.space.dims {
            return Err(Error::DimensionMismatch {
                expected: self.space.total_dim(),
                got: other.space.total_dim(),
            });
        }
        let diff = &self.matrix - &other.matrix;
        let herm = (&diff + diff.adjoint()).map(|z| z * 0.5);
        Ok(0.5
            * SymmetricEigen::new(herm)
                .eigenvalues
                .iter()
                .map(|l| l.abs())
                .sum::<f64>())
    }

    /// Applies an operator on the named modes on both sides, `U rho U^dagger`.
    pub fn conjugate_by(&self, modes: &[&str], op: &CMatrix) -> Result<Self> {
        let idx = modes
            .iter()
            .map(|m| self.space.index_of(m))
            .collect::<Result<Vec<_>>>()?;
        let sub_n: usize = idx.iter().map(|&i| self.space.dims[i]).product();
        if op.nrows() != sub_n {
            return Err(Error::DimensionMismatch {
                expected: sub_n,
                got: op.nrows(),
            });
        }
        Ok(Self {
            matrix: conjugate(&self.space, &idx, op, &self.matrix),
            space: self.space.clone(),
        })
    }

    /// Re-embeds the state into larger per-mode cutoffs (zero padding) or
    /// crops to smaller ones. Cropping discards population above the cutoff.
    pub fn resized(&self, cutoffs: &[FockDim]) -> Result<Self> {
        if cutoffs.len() != self.space.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dims.len(),
                got: cutoffs.len(),
            });
        }
        let target = ModeSpace {
            labels: self.space.labels.clone(),
            dims: cutoffs.iter().map(|c| c.size()).collect(),
        };
        let n = target.total_dim();
        let mut m = CMatrix::zeros(n, n);
        let src_n = self.space.total_dim();
        for i in 0..src_n {
            let di = self.space.digits(i);
            if di.iter().zip(&target.dims).any(|(&v, &d)| v >= d) {
                continue;
            }
            let ti = target.basis_index(&di);
            for j in 0..src_n {
                let dj = self.space.digits(j);
                if dj.iter().zip(&target.dims).any(|(&v, &d)| v >= d) {
                    continue;
                }
                m[(ti, target.basis_index(&dj))] = self.matrix[(i, j)];
            }
        }
        Ok(Self {
            matrix: m,
            space: target,
        })
    }
}

/// Beamsplitter of the given transmittance between two modes of `state`.
pub fn beamsplitter(
    state: &DensityOperator,
    mode_a: &str,
    mode_b: &str,
    transmittance: f64,
) -> Result<DensityOperator> {
    crate::error::check_range("transmittance", transmittance, 0.0, 1.0, "[0, 1]")?;
    let ia = state.space.index_of(mode_a)?;
    let ib = state.space.index_of(mode_b)?;
    let u = beamsplitter_unitary(state.space.dims[ia], state.space.dims[ib], transmittance);
    Ok(DensityOperator {
        matrix: conjugate(&state.space, &[ia, ib], &u, &state.matrix),
        space: state.space.clone(),
    })
}

/// Pure-loss channel of transmissivity `eta` on one mode.
pub fn loss_channel(state: &DensityOperator, mode: &str, eta: f64) -> Result<DensityOperator> {
    crate::error::check_range("eta", eta, 0.0, 1.0, "[0, 1]")?;
    let i = state.space.index_of(mode)?;
    let d = state.space.dims[i];
    let n = state.space.total_dim();
    let mut out = CMatrix::zeros(n, n);
    for k in loss_kraus(d, eta) {
        out += conjugate(&state.space, &[i], &k, &state.matrix);
    }
    Ok(DensityOperator {
        matrix: out,
        space: state.space.clone(),
    })
}

/// Reduced state on `keep`, in the original mode order.
pub fn partial_trace(state: &DensityOperator, keep: &[&str]) -> Result<DensityOperator> {
    if keep.is_empty() {
        return Err(Error::EmptyKeepSet);
    }
    let mut keep_idx = keep
        .iter()
        .map(|m| state.space.index_of(m))
        .collect::<Result<Vec<_>>>()?;
    keep_idx.sort_unstable();
    keep_idx.dedup();
    let space = &state.space;
    let kept = ModeSpace {
        labels: keep_idx.iter().map(|&i| space.labels[i].clone()).collect(),
        dims: keep_idx.iter().map(|&i| space.dims[i]).collect(),
    };
    let n = space.total_dim();
    let k = kept.total_dim();
    let mut out = CMatrix::zeros(k, k);
    let split = |idx: usize| -> (usize, Vec<usize>) {
        let digits = space.digits(idx);
        let kept_idx = keep_idx
            .iter()
            .fold(0, |acc, &m| acc * space.dims[m] + digits[m]);
        let rest: Vec<usize> = digits
            .iter()
            .enumerate()
            .filter(|(m, _)| !keep_idx.contains(m))
            .map(|(_, &v)| v)
            .collect();
        (kept_idx, rest)
    };
    let parts: Vec<(usize, Vec<usize>)> = (0..n).map(split).collect();
    for i in 0..n {
        for j in 0..n {
            if parts[i].1 == parts[j].1 {
                out[(parts[i].0, parts[j].0)] += state.matrix[(i, j)];
            }
        }
    }
    Ok(DensityOperator {
        matrix: out,
        space: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dim(c: usize) -> FockDim {
        FockDim::new(c).unwrap()
    }

    fn padé_exp(gen: &CMatrix) -> CMatrix {
        gen.clone().exp()
    }

    #[test]
    fn zero_cutoff_rejected() {
        assert_eq!(FockDim::new(0), Err(Error::InvalidCutoff(0)));
    }

    #[test]
    fn annihilation_entries() {
        let a = annihilation(dim(1)).matrix;
        assert_eq!(a[(0, 1)], ONE);
        assert_eq!(a[(0, 0)], ZERO);
        assert_eq!(a[(1, 0)], ZERO);
        assert_eq!(a[(1, 1)], ZERO);
        let a2 = annihilation(dim(2)).matrix;
        assert_abs_diff_eq!(a2[(1, 2)].re, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn number_operator_from_ladder() {
        let d = dim(6);
        let a = annihilation(d).matrix;
        let n = a.adjoint() * &a;
        for k in 0..=6 {
            let mut ket = CVector::zeros(7);
            ket[k] = ONE;
            let out = &n * &ket;
            assert_abs_diff_eq!(out[k].re, k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_matches_pade_exponential() {
        let d = dim(20);
        let a = annihilation(d).matrix;
        let alpha = C64::from_polar(0.9, 0.7);
        let gen = (a.adjoint() * alpha) - (&a * alpha.conj());
        let reference = padé_exp(&gen);
        let ours = displacement(0.9, 0.7, d).matrix;
        assert!(max_abs(&(ours - reference)) < 1e-10);
    }

    #[test]
    fn squeezing_matches_pade_exponential() {
        let d = dim(20);
        let a = annihilation(d).matrix;
        let xi = C64::from_polar(0.47, -1.3);
        let a2 = &a * &a;
        let gen = (&a2 * xi.conj() - a2.adjoint() * xi) * C64::new(0.5, 0.0);
        let reference = padé_exp(&gen);
        let ours = squeezing(0.47, -1.3, d).matrix;
        assert!(max_abs(&(ours - reference)) < 1e-10);
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let d = dim(10);
        let id = CMatrix::identity(11, 11);
        assert!(max_abs(&(displacement(0.0, 1.2, d).matrix - &id)) < 1e-13);
        assert!(max_abs(&(squeezing(0.0, 0.4, d).matrix - &id)) < 1e-13);
    }

    #[test]
    fn coherent_overlap() {
        let d = displacement(0.9, 0.3, dim(20)).matrix;
        assert_abs_diff_eq!(d[(0, 0)].re, (-0.81f64 / 2.0).exp(), epsilon = 1e-8);
        // <1|D(alpha)|0> = alpha e^{-|alpha|^2/2}
        let expect = C64::from_polar(0.9, 0.3) * (-0.81f64 / 2.0).exp();
        assert!((d[(1, 0)] - expect).norm() < 1e-8);
        assert!(displacement(0.9, 0.3, dim(20)).unitarity_defect() < 1e-8);
    }

    #[test]
    fn squeezed_vacuum_overlap_and_parity() {
        let s = squeezing(0.47, 0.9, dim(20)).matrix;
        assert_abs_diff_eq!(s[(0, 0)].norm_sqr(), 1.0 / 0.47f64.cosh(), epsilon = 1e-6);
        for n in (1..=20).step_by(2) {
            assert!(s[(n, 0)].norm() < 1e-10);
        }
        // <2|S(xi)|0> = -e^{i phi} tanh(r) / sqrt(2 cosh r)
        let expect = -C64::from_polar(0.47f64.tanh(), 0.9) / (2.0 * 0.47f64.cosh()).sqrt();
        assert!((s[(2, 0)] - expect).norm() < 1e-9);
    }

    #[test]
    fn fast_rows_match_dense_product() {
        let k = GaussianKernel::new(dim(20));
        let prod = k.squeezing(0.4, 2.1) * k.displacement(0.7, -0.5);
        for j in 0..2 {
            let row = k.squeeze_displace_row(j, 0.4, 2.1, 0.7, -0.5);
            for (l, v) in row.iter().enumerate() {
                assert!((v - prod[(j, l)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitarity_defect_does_not_grow_with_cutoff() {
        // The truncated generator is anti-Hermitian, so every cutoff gives a
        // unitary to round-off; the defect must stay at that floor.
        let mut prev = f64::INFINITY;
        for c in [10, 15, 20, 30] {
            let dd = displacement(0.9, 0.2, dim(c)).unitarity_defect();
            let ds = squeezing(0.47, 0.2, dim(c)).unitarity_defect();
            let defect = dd.max(ds);
            assert!(defect < 1e-12);
            assert!(defect <= prev.max(1e-13));
            prev = defect;
        }
    }

    fn two_modes(c: usize) -> ModeSpace {
        ModeSpace::new([("a", dim(c)), ("b", dim(c))])
    }

    #[test]
    fn beamsplitter_single_photon() {
        let rho = DensityOperator::fock(two_modes(2), &[1, 0]);
        let out = beamsplitter(&rho, "a", "b", 0.005).unwrap();
        assert_abs_diff_eq!(out.population(&[0, 1]), 0.005, epsilon = 1e-12);
        assert_abs_diff_eq!(out.population(&[1, 0]), 0.995, epsilon = 1e-12);
        // positive amplitudes on both branches
        assert!(out.element(&[1, 0], &[0, 1]).re > 0.0);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-12);

        let swap = beamsplitter(&rho, "a", "b", 1.0).unwrap();
        assert_abs_diff_eq!(swap.population(&[0, 1]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hong_ou_mandel() {
        let rho = DensityOperator::fock(two_modes(3), &[1, 1]);
        let out = beamsplitter(&rho, "a", "b", 0.5).unwrap();
        assert!(out.population(&[1, 1]) < 1e-12);
        assert_abs_diff_eq!(out.population(&[2, 0]), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn beamsplitter_unknown_mode() {
        let rho = DensityOperator::fock(two_modes(1), &[1, 0]);
        assert_eq!(
            beamsplitter(&rho, "a", "z", 0.5),
            Err(Error::UnknownMode("z".into()))
        );
    }

    #[test]
    fn loss_on_single_photon() {
        let space = ModeSpace::single("a", dim(3));
        let rho = DensityOperator::fock(space.clone(), &[1]);
        let out = loss_channel(&rho, "a", 0.7).unwrap();
        assert_abs_diff_eq!(out.population(&[1]), 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(out.population(&[0]), 0.3, epsilon = 1e-14);
        assert_eq!(loss_channel(&rho, "a", 1.0).unwrap(), rho);

        // coherence |1><0| scales with sqrt(eta)
        let mut ket = CVector::zeros(4);
        ket[0] = C64::new(0.6, 0.0);
        ket[1] = C64::new(0.8, 0.0);
        let sup = DensityOperator::pure(&ket, space).unwrap();
        let out = loss_channel(&sup, "a", 0.49).unwrap();
        assert_abs_diff_eq!(out.element(&[1], &[0]).re, 0.48 * 0.7, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_cases() {
        let sp = two_modes(1);
        let prod = DensityOperator::fock(sp.clone(), &[1, 0]);
        let red = partial_trace(&prod, &["a"]).unwrap();
        assert_abs_diff_eq!(red.population(&[1]), 1.0, epsilon = 1e-15);

        let mut ket = CVector::zeros(4);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ket[sp.basis_index(&[0, 1])] = C64::new(h, 0.0);
        ket[sp.basis_index(&[1, 0])] = C64::new(h, 0.0);
        let bell = DensityOperator::pure(&ket, sp).unwrap();
        let red = partial_trace(&bell, &["b"]).unwrap();
        assert!(max_abs(&(red.matrix() - CMatrix::identity(2, 2) * C64::new(0.5, 0.0))) < 1e-15);
        let scalar = partial_trace(&red, &["b"]).unwrap();
        assert_abs_diff_eq!(scalar.trace(), 1.0, epsilon = 1e-15);

        assert_eq!(partial_trace(&bell, &[]), Err(Error::EmptyKeepSet));
    }

    #[test]
    fn resize_round_trip() {
        let rho = DensityOperator::fock(two_modes(1), &[1, 0]);
        let big = rho.resized(&[dim(3), dim(3)]).unwrap();
        assert_abs_diff_eq!(big.population(&[1, 0]), 1.0);
        assert_eq!(big.resized(&[dim(1), dim(1)]).unwrap(), rho);
    }
}

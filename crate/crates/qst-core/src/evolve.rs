//! Propagation in the energy eigenbasis, pure dephasing of a density matrix,
//! and finite-time sweeps between potential landscapes.

use ndarray::prelude::*;
use num_complex::Complex64;

use crate::dense::eigh_dc;
use crate::error::{Error, Result};
use crate::fockspace::{occupancy_diagonal, FockBasis, ModeOrder, SparseOperator};
use crate::hamiltonian::{build_gate, build_total, landscape, GateMode, HubbardParams};
use crate::states::{DensityMatrix, EnsembleState};

/// Densifying a sparse Hamiltonian above this dimension is refused.
pub const SPECTRAL_CAP: usize = 6144;

/// Step-doubling agreement required from the sweep integrator.
const SWEEP_TOL: f64 = 1e-6;

/// Full eigensystem of a Hermitian operator. Eigenvalues ascend, eigenvector
/// columns are orthonormal, and each column's first significant entry is
/// real positive so decompositions of equal operators agree bit-for-bit.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<Complex64>,
    /// Digest of the operator this spectrum was computed from.
    pub source_digest: u64,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// FNV-1a over the CSR storage; collisions are not a safety concern, the
/// digest only guards against pairing a spectrum with the wrong operator.
pub fn operator_digest(op: &SparseOperator) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&(op.dim as u64).to_le_bytes());
    for &p in &op.indptr {
        eat(&(p as u64).to_le_bytes());
    }
    for &c in &op.indices {
        eat(&(c as u64).to_le_bytes());
    }
    for z in &op.data {
        eat(&z.re.to_le_bytes());
        eat(&z.im.to_le_bytes());
    }
    h
}

pub fn spectral_decompose(op: &SparseOperator) -> Result<Spectrum> {
    if op.dim > SPECTRAL_CAP {
        return Err(Error::SizeGuard(format!(
            "dense decomposition of dimension {} exceeds the cap of {SPECTRAL_CAP}",
            op.dim
        )));
    }
    let scale = op.norm_bound().max(1.0);
    if !op.is_hermitian(1e-10 * scale) {
        return Err(Error::Numerical(
            "operator is not Hermitian, refusing to diagonalize".into(),
        ));
    }
    let (eigenvalues, mut eigenvectors) = eigh_dc(&op.to_dense())?;
    for mut col in eigenvectors.columns_mut() {
        let peak = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let lead = col.iter().find(|z| z.norm() > 1e-8 * peak);
        if let Some(&z) = lead {
            let phase = z.conj() / z.norm();
            col.mapv_inplace(|w| w * phase);
        }
    }
    Ok(Spectrum { eigenvalues, eigenvectors, source_digest: operator_digest(op) })
}

/// V^H M without materializing V^H: conj(conj(M)^T V)^T, all BLAS.
fn into_eigenbasis(v: &Array2<Complex64>, m: ArrayView2<Complex64>) -> Array2<Complex64> {
    let mc = m.mapv(|z| z.conj());
    let prod = mc.t().dot(v);
    prod.t().mapv(|z| z.conj())
}

fn check_spectrum_dim(spec: &Spectrum, dim: usize) -> Result<()> {
    if spec.dim() != dim {
        return Err(Error::Dimension(format!(
            "spectrum dimension {} does not match state dimension {dim}",
            spec.dim()
        )));
    }
    Ok(())
}

/// exp(-i H tau) applied through the eigenbasis; tau may be negative.
pub fn propagate(spec: &Spectrum, psi: &Array1<Complex64>, tau: f64) -> Result<Array1<Complex64>> {
    if !tau.is_finite() {
        return Err(Error::Parameter(format!("propagation time {tau} is not finite")));
    }
    check_spectrum_dim(spec, psi.len())?;
    let m = psi.view().insert_axis(Axis(1));
    let mut c = into_eigenbasis(&spec.eigenvectors, m);
    for (i, &e) in spec.eigenvalues.iter().enumerate() {
        c[[i, 0]] *= Complex64::from_polar(1.0, -e * tau);
    }
    Ok(spec.eigenvectors.dot(&c).index_axis_move(Axis(1), 0))
}

/// Propagates every member under the same phases; weights are untouched and
/// members are renormalized to shed roundoff from the basis round trip.
pub fn propagate_ensemble(spec: &Spectrum, ens: &EnsembleState, tau: f64) -> Result<EnsembleState> {
    if !tau.is_finite() {
        return Err(Error::Parameter(format!("propagation time {tau} is not finite")));
    }
    check_spectrum_dim(spec, ens.basis.dim())?;
    let mut c = into_eigenbasis(&spec.eigenvectors, ens.members.view());
    for (i, &e) in spec.eigenvalues.iter().enumerate() {
        let ph = Complex64::from_polar(1.0, -e * tau);
        c.row_mut(i).mapv_inplace(|z| z * ph);
    }
    let mut members = spec.eigenvectors.dot(&c);
    for mut col in members.columns_mut() {
        let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.mapv_inplace(|z| z / n);
    }
    EnsembleState::new(ens.basis.clone(), ens.weights.clone(), members)
}

/// Which eigenbasis coherences a dephasing channel damps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DephasingRule {
    /// Every off-diagonal element, including those inside degenerate clusters.
    AllOffDiagonal,
    /// Only coherences between levels split by more than `tol`.
    DistinctEigenvalues { tol: f64 },
}

impl Default for DephasingRule {
    fn default() -> Self {
        DephasingRule::AllOffDiagonal
    }
}

/// Unitary evolution plus pure dephasing at rate gamma, exact in the
/// eigenbasis: rho~_ij(tau) = rho~_ij(0) e^{-i(E_i-E_j)tau} e^{-gamma tau}
/// on damped pairs. Populations in the eigenbasis are conserved.
pub fn dephase_propagate(
    spec: &Spectrum,
    rho: &DensityMatrix,
    tau: f64,
    gamma: f64,
    rule: DephasingRule,
) -> Result<DensityMatrix> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Parameter(format!("dephasing time {tau} must be non-negative")));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Parameter(format!("dephasing rate {gamma} must be non-negative")));
    }
    if let DephasingRule::DistinctEigenvalues { tol } = rule {
        if !tol.is_finite() || tol < 0.0 {
            return Err(Error::Parameter(format!("dephasing tolerance {tol} must be non-negative")));
        }
    }
    check_spectrum_dim(spec, rho.basis.dim())?;
    let v = &spec.eigenvectors;
    let vh = v.t().mapv(|z| z.conj());
    let mut tilde = vh.dot(&rho.matrix).dot(v);
    let damp = (-gamma * tau).exp();
    let dim = spec.dim();
    for i in 0..dim {
        for j in 0..dim {
            let de = spec.eigenvalues[i] - spec.eigenvalues[j];
            let damped = match rule {
                DephasingRule::AllOffDiagonal => i != j,
                DephasingRule::DistinctEigenvalues { tol } => de.abs() > tol,
            };
            let mut f = Complex64::from_polar(1.0, -de * tau);
            if damped {
                f *= damp;
            }
            tilde[[i, j]] *= f;
        }
    }
    DensityMatrix::new(rho.basis.clone(), v.dot(&tilde).dot(&vh))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepDirection {
    OpenToClosed,
    ClosedToOpen,
}

/// Finite-time switching drive. The outgoing gate profile ramps linearly to
/// zero over the first half of tau_sw and the incoming one ramps up over the
/// second half; lead potentials stay at eps_sd throughout. `steps: None`
/// lets the integrator pick a resolution and verify it by step doubling.
#[derive(Clone, Copy, Debug)]
pub struct SweepSchedule {
    pub direction: SweepDirection,
    pub tau_sw: f64,
    pub eps_open: f64,
    pub eps_closed: f64,
    pub eps_sd: f64,
    pub steps: Option<usize>,
}

struct SweepEngine {
    h0: SparseOperator,
    d_from: Vec<f64>,
    d_to: Vec<f64>,
    bound: f64,
    tau_sw: f64,
}

impl SweepEngine {
    fn build(params: &HubbardParams, basis: &FockBasis, schedule: &SweepSchedule) -> Result<Self> {
        params.validate()?;
        if !schedule.tau_sw.is_finite() || schedule.tau_sw < 0.0 {
            return Err(Error::Parameter(format!(
                "sweep duration {} must be non-negative",
                schedule.tau_sw
            )));
        }
        if schedule.steps == Some(0) {
            return Err(Error::Parameter("sweep step count must be positive".into()));
        }
        let l = params.l;
        let (from_mode, from_amp, to_mode, to_amp) = match schedule.direction {
            SweepDirection::OpenToClosed => {
                (GateMode::Open, schedule.eps_open, GateMode::Closed, schedule.eps_closed)
            }
            SweepDirection::ClosedToOpen => {
                (GateMode::Closed, schedule.eps_closed, GateMode::Open, schedule.eps_open)
            }
        };
        let from_ls = landscape(from_mode, l, from_amp, schedule.eps_sd)?;
        let to_ls = landscape(to_mode, l, to_amp, schedule.eps_sd)?;
        // The schedule owns the potential: params.eps is ignored and the
        // static part keeps only the lead offsets.
        let mut stat = params.clone();
        stat.eps = vec![0.0; l + 2];
        let full = basis.order == ModeOrder::full(l);
        let h0 = if full {
            stat.eps[0] = schedule.eps_sd;
            stat.eps[l + 1] = schedule.eps_sd;
            build_total(&stat, basis)?
        } else if basis.order == ModeOrder::gate(l) {
            build_gate(&stat, basis)?
        } else {
            return Err(Error::Dimension(format!(
                "basis covers {} sites, expected the gate or full device of L={l}",
                basis.order.n_sites
            )));
        };
        let dim = basis.dim();
        let mut d_from = vec![0.0; dim];
        let mut d_to = vec![0.0; dim];
        for g in 0..l {
            let site = if full { g + 1 } else { g };
            let occ = occupancy_diagonal(basis, site, None);
            let (ef, et) = (from_ls.eps[g + 1], to_ls.eps[g + 1]);
            for i in 0..dim {
                d_from[i] -= ef * occ[i];
                d_to[i] -= et * occ[i];
            }
        }
        let peak = |d: &[f64]| d.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let bound = h0.norm_bound() + peak(&d_from).max(peak(&d_to));
        Ok(SweepEngine { h0, d_from, d_to, bound, tau_sw: schedule.tau_sw })
    }

    /// Midpoint exponential per step, each applied by a scaled Taylor series
    /// sub-stepped so a single series argument has norm at most 0.5.
    fn run(&self, members: &[Array1<Complex64>], n_steps: usize) -> Result<Vec<Array1<Complex64>>> {
        let mut ys: Vec<Array1<Complex64>> = members.to_vec();
        self.march(&mut ys, n_steps, &mut |_, _| {})?;
        Ok(ys)
    }

    fn march(
        &self,
        ys: &mut [Array1<Complex64>],
        n_steps: usize,
        snap: &mut dyn FnMut(usize, &[Array1<Complex64>]),
    ) -> Result<()> {
        let dim = self.h0.dim;
        let h = self.tau_sw / n_steps as f64;
        let subs = ((h * self.bound) / 0.5).ceil().max(1.0) as usize;
        let c_step = Complex64::new(0.0, -h / subs as f64);
        let mut diag = vec![0.0; dim];
        let mut tmp = vec![Complex64::new(0.0, 0.0); dim];
        for j in 0..n_steps {
            let tm = (j as f64 + 0.5) * h;
            let x = 2.0 * tm / self.tau_sw;
            let (a, b) = ((1.0 - x).max(0.0), (x - 1.0).max(0.0));
            for i in 0..dim {
                diag[i] = a * self.d_from[i] + b * self.d_to[i];
            }
            for y in ys.iter_mut() {
                for _ in 0..subs {
                    let mut acc = y.clone();
                    let mut term = y.clone();
                    let mut converged = false;
                    for k in 1..=80u32 {
                        self.h0.matvec_into(term.as_slice().unwrap(), &mut tmp);
                        let scale = c_step / k as f64;
                        let mut t_norm = 0.0;
                        let mut a_norm = 0.0;
                        for i in 0..dim {
                            let next = scale * (tmp[i] + diag[i] * term[i]);
                            term[i] = next;
                            acc[i] += next;
                            t_norm += next.norm_sqr();
                            a_norm += acc[i].norm_sqr();
                        }
                        if t_norm.sqrt() <= 1e-16 * a_norm.sqrt() {
                            converged = true;
                            break;
                        }
                    }
                    if !converged {
                        return Err(Error::Convergence(
                            "sweep exponential series did not settle in 80 terms".into(),
                        ));
                    }
                    *y = acc;
                }
            }
            snap(j + 1, ys);
        }
        Ok(())
    }

    fn run_converged(&self, members: &[Array1<Complex64>], steps: Option<usize>) -> Result<Vec<Array1<Complex64>>> {
        if let Some(n) = steps {
            return self.run(members, n);
        }
        let mut n = 200usize.max((self.tau_sw * self.bound / 0.1).ceil() as usize);
        let mut coarse = self.run(members, n)?;
        for _ in 0..3 {
            let fine = self.run(members, 2 * n)?;
            let mut gap = 0.0f64;
            for (cf, cc) in fine.iter().zip(&coarse) {
                let d: f64 = cf.iter().zip(cc.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
                gap = gap.max(d.sqrt());
            }
            if gap < SWEEP_TOL {
                return Ok(fine);
            }
            n *= 2;
            coarse = fine;
        }
        Err(Error::Convergence(format!(
            "sweep integrator still moving after refining to {} steps",
            2 * n
        )))
    }
}

pub fn sweep_propagate(
    params: &HubbardParams,
    basis: &FockBasis,
    schedule: &SweepSchedule,
    psi: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    if psi.len() != basis.dim() {
        return Err(Error::Dimension(format!(
            "state length {} does not match basis dim {}",
            psi.len(),
            basis.dim()
        )));
    }
    let engine = SweepEngine::build(params, basis, schedule)?;
    if schedule.tau_sw == 0.0 {
        return Ok(psi.clone());
    }
    let out = engine.run_converged(std::slice::from_ref(psi), schedule.steps)?;
    Ok(out.into_iter().next().unwrap())
}

/// All members ride the same drive; one step-doubling check covers them all.
pub fn sweep_propagate_ensemble(
    params: &HubbardParams,
    schedule: &SweepSchedule,
    ens: &EnsembleState,
) -> Result<EnsembleState> {
    let engine = SweepEngine::build(params, &ens.basis, schedule)?;
    if schedule.tau_sw == 0.0 {
        return Ok(ens.clone());
    }
    let members: Vec<Array1<Complex64>> =
        ens.members.columns().into_iter().map(|c| c.to_owned()).collect();
    let out = engine.run_converged(&members, schedule.steps)?;
    let mut stacked = Array2::zeros((ens.basis.dim(), out.len()));
    for (k, col) in out.into_iter().enumerate() {
        let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        stacked.column_mut(k).assign(&col.mapv(|z| z / n));
    }
    EnsembleState::new(ens.basis.clone(), ens.weights.clone(), stacked)
}

/// Ensemble snapshots at `n_samples`+1 evenly spaced times across the drive,
/// endpoints included. The step count is a multiple of `n_samples` and is
/// doubled until the final snapshot settles, so one accepted resolution
/// covers every sample. A zero-length drive yields the single initial pair.
pub fn sweep_trace_ensemble(
    params: &HubbardParams,
    schedule: &SweepSchedule,
    ens: &EnsembleState,
    n_samples: usize,
) -> Result<Vec<(f64, EnsembleState)>> {
    if n_samples == 0 {
        return Err(Error::Parameter("trace needs at least one sample interval".into()));
    }
    let engine = SweepEngine::build(params, &ens.basis, schedule)?;
    if schedule.tau_sw == 0.0 {
        return Ok(vec![(0.0, ens.clone())]);
    }
    let members: Vec<Array1<Complex64>> =
        ens.members.columns().into_iter().map(|c| c.to_owned()).collect();
    let base = 200usize.max((schedule.tau_sw * engine.bound / 0.1).ceil() as usize);
    let mut n = base.next_multiple_of(n_samples);
    if let Some(fixed) = schedule.steps {
        n = fixed.next_multiple_of(n_samples);
    }
    let run_traced = |n_steps: usize| -> Result<Vec<Vec<Array1<Complex64>>>> {
        let every = n_steps / n_samples;
        let mut snaps: Vec<Vec<Array1<Complex64>>> = vec![members.clone()];
        let mut ys = members.clone();
        engine.march(&mut ys, n_steps, &mut |j, state| {
            if j % every == 0 {
                snaps.push(state.to_vec());
            }
        })?;
        Ok(snaps)
    };
    let mut snaps = run_traced(n)?;
    if schedule.steps.is_none() {
        let mut accepted = false;
        for _ in 0..3 {
            let fine = run_traced(2 * n)?;
            let mut gap = 0.0f64;
            for (cf, cc) in fine.last().unwrap().iter().zip(snaps.last().unwrap()) {
                let d: f64 = cf.iter().zip(cc.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
                gap = gap.max(d.sqrt());
            }
            snaps = fine;
            if gap < SWEEP_TOL {
                accepted = true;
                break;
            }
            n *= 2;
        }
        if !accepted {
            return Err(Error::Convergence(format!(
                "traced sweep still moving after refining to {} steps",
                2 * n
            )));
        }
    }
    let dim = ens.basis.dim();
    let mut out = Vec::with_capacity(snaps.len());
    for (k, cols) in snaps.into_iter().enumerate() {
        let mut stacked = Array2::zeros((dim, cols.len()));
        for (c, col) in cols.into_iter().enumerate() {
            let nn = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            stacked.column_mut(c).assign(&col.mapv(|z| z / nn));
        }
        let t = schedule.tau_sw * k as f64 / n_samples as f64;
        out.push((t, EnsembleState::new(ens.basis.clone(), ens.weights.clone(), stacked)?));
    }
    Ok(out)
}

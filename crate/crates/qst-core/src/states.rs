//! Initial and target states of the transistor: source qubit, maximally mixed
//! drain, gate ground or thermal mixture, composed as low-rank ensembles.

use std::sync::Arc;

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::dense::eigh_dc;
use crate::error::{Error, Result};
use crate::fockspace::{apply_create, FockBasis, SparseOperator, Spin};
use crate::hamiltonian::GateMode;

/// Degeneracies above this indicate a degenerate landscape, not a spin doublet.
pub const DEGENERACY_CAP: usize = 16;
/// Densifying beyond this dimension is a programming error; low-rank paths exist.
pub const DENSE_CAP: usize = 4096;
pub const DEFAULT_WEIGHT_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    pub amp_up: Complex64,
    pub amp_down: Complex64,
}

impl QubitState {
    pub fn up() -> Self {
        Self { amp_up: Complex64::ONE, amp_down: Complex64::ZERO }
    }

    pub fn down() -> Self {
        Self { amp_up: Complex64::ZERO, amp_down: Complex64::ONE }
    }

    /// cos(θ/2)|↑> + e^{iφ} sin(θ/2)|↓>.
    pub fn bloch(theta: f64, phi: f64) -> Self {
        Self {
            amp_up: Complex64::new((theta / 2.0).cos(), 0.0),
            amp_down: Complex64::from_polar((theta / 2.0).sin(), phi),
        }
    }

    pub fn new(amp_up: Complex64, amp_down: Complex64) -> Result<Self> {
        let s = Self { amp_up, amp_down };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.amp_up.norm_sqr() + self.amp_down.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "qubit state has norm² {n}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Mixture Σ_i w_i |v_i><v_i| stored as columns; members need not be orthogonal.
#[derive(Clone, Debug)]
pub struct EnsembleState {
    pub basis: Arc<FockBasis>,
    pub weights: Vec<f64>,
    pub members: Array2<Complex64>,
}

impl EnsembleState {
    pub fn new(
        basis: Arc<FockBasis>,
        weights: Vec<f64>,
        members: Array2<Complex64>,
    ) -> Result<Self> {
        if members.nrows() != basis.dim() || members.ncols() != weights.len() {
            return Err(Error::Dimension(format!(
                "ensemble shape {}x{} does not match basis dim {} and {} weights",
                members.nrows(),
                members.ncols(),
                basis.dim(),
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w <= 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "ensemble weights must be positive and sum to 1 (got sum {total})"
            )));
        }
        for (k, col) in members.columns().into_iter().enumerate() {
            let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>();
            if (n - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "ensemble member {k} has norm² {n}, expected 1"
                )));
            }
        }
        Ok(Self { basis, weights, members })
    }

    pub fn pure(basis: Arc<FockBasis>, vector: Array1<Complex64>) -> Result<Self> {
        let dim = basis.dim();
        Self::new(
            basis,
            vec![1.0],
            vector.into_shape_with_order((dim, 1)).map_err(|e| {
                Error::Dimension(format!("pure state vector has wrong length: {e}"))
            })?,
        )
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// Columns scaled by √w, so ρ = W W† and all fidelity cores reduce to W products.
    pub fn weighted_members(&self) -> Array2<Complex64> {
        let mut w = self.members.clone();
        for (k, &wt) in self.weights.iter().enumerate() {
            w.column_mut(k).mapv_inplace(|z| z * wt.sqrt());
        }
        w
    }
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub basis: Arc<FockBasis>,
    pub matrix: Array2<Complex64>,
}

impl DensityMatrix {
    pub fn new(basis: Arc<FockBasis>, matrix: Array2<Complex64>) -> Result<Self> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(Error::Dimension(format!(
                "density matrix is {}x{}, basis dim is {}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dim()
            )));
        }
        let tr: Complex64 = matrix.diag().sum();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Numerical(format!("density matrix trace {tr}, expected 1")));
        }
        Ok(Self { basis, matrix })
    }

    /// Full invariant check (Hermiticity and spectrum); O(dim³), for tests.
    pub fn validate(&self) -> Result<()> {
        let d = self.matrix.nrows();
        for r in 0..d {
            for c in r..d {
                let diff = (self.matrix[[r, c]] - self.matrix[[c, r]].conj()).norm();
                if diff > 1e-10 {
                    return Err(Error::Numerical(format!(
                        "density matrix not Hermitian at ({r},{c}): deviation {diff}"
                    )));
                }
            }
        }
        let (eigs, _) = self.matrix.eigh(UPLO::Lower)?;
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min}"
            )));
        }
        Ok(())
    }
}

fn eigh_dense(h: &SparseOperator, basis: &FockBasis) -> Result<(Array1<f64>, Array2<Complex64>)> {
    if h.dim != basis.dim() {
        return Err(Error::Dimension(format!(
            "operator dim {} does not match basis dim {}",
            h.dim,
            basis.dim()
        )));
    }
    if !h.is_hermitian(1e-10) {
        return Err(Error::Parameter("gate Hamiltonian is not Hermitian".into()));
    }
    eigh_dc(&h.to_dense())
}

/// Equal mixture of all gate eigenstates within deg_tol of the ground energy.
pub fn gate_ground_ensemble(
    h_gate: &SparseOperator,
    gate_basis: &Arc<FockBasis>,
    deg_tol: Option<f64>,
) -> Result<EnsembleState> {
    let (eigs, vecs) = eigh_dense(h_gate, gate_basis)?;
    let dim = eigs.len();
    let range = eigs[dim - 1] - eigs[0];
    let tol = deg_tol.unwrap_or(1e-8 * range);
    let g = eigs.iter().take_while(|&&e| e - eigs[0] <= tol).count();
    if g > DEGENERACY_CAP {
        return Err(Error::Parameter(format!(
            "ground degeneracy {g} exceeds cap {DEGENERACY_CAP}; the landscape is \
             likely flat or mirror-degenerate beyond a spin doublet"
        )));
    }
    EnsembleState::new(
        gate_basis.clone(),
        vec![1.0 / g as f64; g],
        vecs.slice(s![.., 0..g]).to_owned(),
    )
}

/// Canonical Boltzmann mixture over the fixed-n gate sector; kT in units of t.
pub fn gate_thermal_ensemble(
    h_gate: &SparseOperator,
    gate_basis: &Arc<FockBasis>,
    k_t: f64,
    weight_cutoff: Option<f64>,
) -> Result<EnsembleState> {
    if k_t < 0.0 {
        return Err(Error::Parameter(format!("kT must be >= 0, got {k_t}")));
    }
    if k_t == 0.0 {
        return gate_ground_ensemble(h_gate, gate_basis, None);
    }
    let cutoff = weight_cutoff.unwrap_or(DEFAULT_WEIGHT_CUTOFF);
    let (eigs, vecs) = eigh_dense(h_gate, gate_basis)?;
    // Shift by E0 so the partition sum is well conditioned at small kT.
    let boltz: Vec<f64> = eigs.iter().map(|&e| (-(e - eigs[0]) / k_t).exp()).collect();
    let z: f64 = boltz.iter().sum();
    let kept: Vec<usize> = (0..eigs.len()).filter(|&i| boltz[i] / z >= cutoff).collect();
    let z_kept: f64 = kept.iter().map(|&i| boltz[i]).sum();
    let weights: Vec<f64> = kept.iter().map(|&i| boltz[i] / z_kept).collect();
    let mut members = Array2::zeros((gate_basis.dim(), kept.len()));
    for (c, &i) in kept.iter().enumerate() {
        members.column_mut(c).assign(&vecs.column(i));
    }
    EnsembleState::new(gate_basis.clone(), weights, members)
}

/// Maps a gate-basis mode to the corresponding mode of the full device.
fn lift_gate_mode(gate_l: usize, gmode: usize) -> usize {
    let full_sites = gate_l + 2;
    if gmode < gate_l {
        1 + gmode
    } else {
        full_sites + 1 + (gmode - gate_l)
    }
}

/// One fermionic product member: creation operators are applied to the vacuum
/// in the written order source, gate (ascending), drain, which fixes every
/// relative sign.
pub(crate) fn compose_member(
    total_basis: &FockBasis,
    source_amps: &[(usize, Complex64)],
    gate_member: ArrayView1<Complex64>,
    gate_basis: &FockBasis,
    drain_mode: usize,
) -> Result<Array1<Complex64>> {
    let gate_l = gate_basis.order.l();
    let mut out: Array1<Complex64> = Array1::zeros(total_basis.dim());
    for &(smode, samp) in source_amps {
        if samp == Complex64::ZERO {
            continue;
        }
        for (gi, &gamp) in gate_member.iter().enumerate() {
            if gamp == Complex64::ZERO {
                continue;
            }
            let gword = gate_basis.states[gi];
            let mut seq = vec![smode];
            for gmode in 0..gate_basis.order.modes() {
                if gword >> gmode & 1 == 1 {
                    seq.push(lift_gate_mode(gate_l, gmode));
                }
            }
            seq.push(drain_mode);
            let mut word = 0u32;
            let mut sign = 1.0;
            for &m in seq.iter().rev() {
                match apply_create(word, m) {
                    Some((w, s)) => {
                        word = w;
                        sign *= s;
                    }
                    None => {
                        return Err(Error::Parameter(format!(
                            "mode {m} doubly created while composing a product state"
                        )));
                    }
                }
            }
            let idx = total_basis.index_of(word).ok_or_else(|| {
                Error::Dimension(
                    "composed word falls outside the total basis; check n_total = n + 2 \
                     and any S_z restriction"
                        .into(),
                )
            })?;
            out[idx] += sign * samp * gamp;
        }
    }
    let norm = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Numerical("composed member vanished".into()));
    }
    Ok(out / Complex64::from(norm))
}

fn check_compose_bases(gate_ens: &EnsembleState, total_basis: &Arc<FockBasis>) -> Result<usize> {
    let l = total_basis.order.l();
    if !total_basis.order.has_leads || gate_ens.basis.order.has_leads {
        return Err(Error::Parameter(
            "compose expects a gate-sector ensemble and a full-device basis".into(),
        ));
    }
    if gate_ens.basis.order.l() != l {
        return Err(Error::Dimension(format!(
            "gate ensemble has L={}, total basis has L={l}",
            gate_ens.basis.order.l()
        )));
    }
    if total_basis.n_total != gate_ens.basis.n_total + 2 {
        return Err(Error::Dimension(format!(
            "total basis holds {} electrons, expected n + 2 = {}",
            total_basis.n_total,
            gate_ens.basis.n_total + 2
        )));
    }
    Ok(l)
}

/// ρ(0) = |ψ_s><ψ_s| ⊗ ρ_gate ⊗ I_d/2 as an ensemble of 2g product members.
pub fn compose_initial(
    psi: &QubitState,
    gate_ens: &EnsembleState,
    total_basis: &Arc<FockBasis>,
) -> Result<EnsembleState> {
    psi.validate()?;
    check_compose_bases(gate_ens, total_basis)?;
    let order = total_basis.order;
    let source_amps = [
        (order.mode_index(order.source(), Spin::Up), psi.amp_up),
        (order.mode_index(order.source(), Spin::Down), psi.amp_down),
    ];
    let g = gate_ens.rank();
    let mut weights = Vec::with_capacity(2 * g);
    let mut members = Array2::zeros((total_basis.dim(), 2 * g));
    for (d, dspin) in [Spin::Up, Spin::Down].into_iter().enumerate() {
        let drain_mode = order.mode_index(order.drain(), dspin);
        for k in 0..g {
            let v = compose_member(
                total_basis,
                &source_amps,
                gate_ens.members.column(k),
                &gate_ens.basis,
                drain_mode,
            )?;
            members.column_mut(d * g + k).assign(&v);
            weights.push(0.5 * gate_ens.weights[k]);
        }
    }
    EnsembleState::new(total_basis.clone(), weights, members)
}

/// Open-mode target swaps the roles of source and drain; closed-mode target is
/// the initial state itself.
pub fn compose_target(
    mode: GateMode,
    psi: &QubitState,
    gate_ens: &EnsembleState,
    total_basis: &Arc<FockBasis>,
) -> Result<EnsembleState> {
    if mode == GateMode::Closed {
        return compose_initial(psi, gate_ens, total_basis);
    }
    psi.validate()?;
    check_compose_bases(gate_ens, total_basis)?;
    let order = total_basis.order;
    let g = gate_ens.rank();
    let mut weights = Vec::with_capacity(2 * g);
    let mut members = Array2::zeros((total_basis.dim(), 2 * g));
    for (si, sspin) in [Spin::Up, Spin::Down].into_iter().enumerate() {
        let source_amp = [(order.mode_index(order.source(), sspin), Complex64::ONE)];
        for k in 0..g {
            // ψ now lives on the drain: coherent superposition of drain modes.
            let up = compose_member(
                total_basis,
                &source_amp,
                gate_ens.members.column(k),
                &gate_ens.basis,
                order.mode_index(order.drain(), Spin::Up),
            )?;
            let down = compose_member(
                total_basis,
                &source_amp,
                gate_ens.members.column(k),
                &gate_ens.basis,
                order.mode_index(order.drain(), Spin::Down),
            )?;
            let v = &up * psi.amp_up + &down * psi.amp_down;
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            members.column_mut(si * g + k).assign(&(&v / Complex64::from(norm)));
            weights.push(0.5 * gate_ens.weights[k]);
        }
    }
    EnsembleState::new(total_basis.clone(), weights, members)
}

pub fn densify(ens: &EnsembleState) -> Result<DensityMatrix> {
    densify_capped(ens, DENSE_CAP)
}

pub fn densify_capped(ens: &EnsembleState, cap: usize) -> Result<DensityMatrix> {
    let d = ens.basis.dim();
    if d > cap {
        return Err(Error::SizeGuard(format!(
            "dense density matrix of dim {d} exceeds cap {cap}; use the low-rank \
             ensemble paths instead"
        )));
    }
    let w = ens.weighted_members();
    let mut rho = Array2::zeros((d, d));
    for col in w.columns() {
        for (r, &zr) in col.iter().enumerate() {
            if zr == Complex64::ZERO {
                continue;
            }
            for (c, &zc) in col.iter().enumerate() {
                rho[[r, c]] += zr * zc.conj();
            }
        }
    }
    DensityMatrix::new(ens.basis.clone(), rho)
}

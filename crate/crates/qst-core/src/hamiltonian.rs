//! Extended Fermi-Hubbard Hamiltonians for the transistor device:
//! gate/lead terms, spin-orbit coupling, chemical-potential landscapes,
//! and disorder-perturbed parameter sets.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::{hop_matrix, occ_bit, FockBasis, ModeOrder, SparseOperator, Spin};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum GateMode {
    Open,
    Closed,
}

impl GateMode {
    pub fn label(&self) -> &'static str {
        match self {
            GateMode::Open => "open",
            GateMode::Closed => "closed",
        }
    }
}

/// Every coupling of the device, in units of the uniform hopping t.
/// Bonds are (s,1), (1,2), ..., (L-1,L), (L,d); sites are s, 1..L, d.
#[derive(Clone, Debug, Serialize)]
pub struct HubbardParams {
    pub l: usize,
    pub t_bonds: Vec<f64>,
    pub u_sites: Vec<f64>,
    pub v_bonds: Vec<f64>,
    pub eps: Vec<f64>,
    pub soc_alpha: f64,
    pub soc_beta: f64,
}

impl HubbardParams {
    pub fn uniform(l: usize, t: f64, u: f64, v: f64) -> Self {
        HubbardParams {
            l,
            t_bonds: vec![t; l + 1],
            u_sites: vec![u; l + 2],
            v_bonds: vec![v; l + 1],
            eps: vec![0.0; l + 2],
            soc_alpha: 0.0,
            soc_beta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (nb, ns) = (self.l + 1, self.l + 2);
        if self.t_bonds.len() != nb || self.v_bonds.len() != nb {
            return Err(Error::Dimension(format!(
                "expected {nb} bond couplings for L={}",
                self.l
            )));
        }
        if self.u_sites.len() != ns || self.eps.len() != ns {
            return Err(Error::Dimension(format!(
                "expected {ns} site couplings for L={}",
                self.l
            )));
        }
        Ok(())
    }

    pub fn with_eps(mut self, eps: Vec<f64>) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_soc(mut self, alpha: f64, beta: f64) -> Self {
        self.soc_alpha = alpha;
        self.soc_beta = beta;
        self
    }

    pub fn zeta(&self) -> Complex64 {
        Complex64::new(self.soc_alpha, -self.soc_beta)
    }
}

/// Mirror-symmetric chemical-potential profile: eps_s = eps_d on the leads
/// and the mode generator on gate sites, mirrored about the middle.
#[derive(Clone, Debug, Serialize)]
pub struct PotentialLandscape {
    pub mode: GateMode,
    pub eps_mode: f64,
    pub eps_sd: f64,
    pub eps: Vec<f64>,
}

impl PotentialLandscape {
    pub fn gate_eps(&self) -> &[f64] {
        &self.eps[1..self.eps.len() - 1]
    }
}

pub fn landscape(mode: GateMode, l: usize, eps_mode: f64, eps_sd: f64) -> Result<PotentialLandscape> {
    if l == 0 {
        return Err(Error::Parameter("gate length must be at least 1".into()));
    }
    if eps_mode < 0.0 || eps_sd < 0.0 {
        return Err(Error::Parameter("landscape amplitudes must be non-negative".into()));
    }
    let half = l.div_ceil(2);
    let mut eps = vec![0.0; l + 2];
    eps[0] = eps_sd;
    eps[l + 1] = eps_sd;
    for k in 1..=half {
        let v = match mode {
            GateMode::Open => (half as f64 - k as f64).abs() * eps_mode,
            GateMode::Closed => (k as f64 - 1.0) * eps_mode,
        };
        eps[k] = v;
        eps[l + 1 - k] = v;
    }
    Ok(PotentialLandscape { mode, eps_mode, eps_sd, eps })
}

fn hubbard_triplets(
    basis: &FockBasis,
    sites: &[usize],
    bonds: &[(usize, usize, f64, f64)],
    u_of_site: &dyn Fn(usize) -> f64,
    eps_of_site: &dyn Fn(usize) -> f64,
    zeta: Complex64,
) -> Result<SparseOperator> {
    let order = basis.order;
    let dim = basis.dim();
    let mut diag = vec![Complex64::new(0.0, 0.0); dim];
    for (r, &w) in basis.states.iter().enumerate() {
        let mut e = 0.0;
        for &k in sites {
            let nu = occ_bit(w, order.mode_index(k, Spin::Up)) as f64;
            let nd = occ_bit(w, order.mode_index(k, Spin::Down)) as f64;
            e += u_of_site(k) * nu * nd;
            e -= eps_of_site(k) * (nu + nd);
        }
        for &(a, b, _, v) in bonds {
            let na = (occ_bit(w, order.mode_index(a, Spin::Up)) + occ_bit(w, order.mode_index(a, Spin::Down))) as f64;
            let nb = (occ_bit(w, order.mode_index(b, Spin::Up)) + occ_bit(w, order.mode_index(b, Spin::Down))) as f64;
            e += v * na * nb;
        }
        diag[r] = Complex64::new(e, 0.0);
    }
    let mut terms: Vec<(Complex64, SparseOperator)> = Vec::new();
    for &(a, b, t, _) in bonds {
        if t != 0.0 {
            for spin in [Spin::Up, Spin::Down] {
                let hop = hop_matrix(basis, order.mode_index(a, spin), order.mode_index(b, spin))?;
                terms.push((Complex64::new(-t, 0.0), hop.clone()));
                terms.push((Complex64::new(-t, 0.0), hop.adjoint()));
            }
        }
        if zeta != Complex64::new(0.0, 0.0) {
            let flip = hop_matrix(basis, order.mode_index(a, Spin::Up), order.mode_index(b, Spin::Down))?;
            let coeff = -Complex64::new(t, 0.0) * zeta;
            terms.push((coeff, flip.clone()));
            terms.push((coeff.conj(), flip.adjoint()));
        }
    }
    let mut triplets: Vec<(usize, usize, Complex64)> = diag
        .into_iter()
        .enumerate()
        .filter(|(_, z)| *z != Complex64::new(0.0, 0.0))
        .map(|(i, z)| (i, i, z))
        .collect();
    for (z, op) in &terms {
        for r in 0..dim {
            for k in op.indptr[r]..op.indptr[r + 1] {
                triplets.push((r, op.indices[k], *z * op.data[k]));
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, triplets))
}

/// Full device Hamiltonian H_gate + H_s + H_d + H_I (+ H_soc when zeta != 0).
pub fn build_total(params: &HubbardParams, basis: &FockBasis) -> Result<SparseOperator> {
    params.validate()?;
    if basis.order != ModeOrder::full(params.l) {
        return Err(Error::Dimension(format!(
            "basis covers {} sites, expected the full device of L={} plus leads",
            basis.order.n_sites, params.l
        )));
    }
    let n_sites = params.l + 2;
    let sites: Vec<usize> = (0..n_sites).collect();
    let bonds: Vec<(usize, usize, f64, f64)> = (0..n_sites - 1)
        .map(|b| (b, b + 1, params.t_bonds[b], params.v_bonds[b]))
        .collect();
    hubbard_triplets(
        basis,
        &sites,
        &bonds,
        &|k| params.u_sites[k],
        &|k| params.eps[k],
        params.zeta(),
    )
}

/// Gate-chain Hamiltonian: build_total restricted to sites 1..L.
pub fn build_gate(params: &HubbardParams, gate_basis: &FockBasis) -> Result<SparseOperator> {
    params.validate()?;
    if gate_basis.order != ModeOrder::gate(params.l) {
        return Err(Error::Dimension(format!(
            "basis covers {} sites, expected the bare gate of L={}",
            gate_basis.order.n_sites, params.l
        )));
    }
    let l = params.l;
    let sites: Vec<usize> = (0..l).collect();
    // gate site k (0-based) is device site k+1; gate bond k joins device bond k+1
    let bonds: Vec<(usize, usize, f64, f64)> = (0..l.saturating_sub(1))
        .map(|b| (b, b + 1, params.t_bonds[b + 1], params.v_bonds[b + 1]))
        .collect();
    hubbard_triplets(
        gate_basis,
        &sites,
        &bonds,
        &|k| params.u_sites[k + 1],
        &|k| params.eps[k + 1],
        params.zeta(),
    )
}

/// One uniform draw per coupling: per bond for t and V, per site for U,
/// a joint lead value and per-gate-site values for the potential.
#[derive(Clone, Debug, Serialize)]
pub struct DisorderDraw {
    pub lambda: f64,
    pub preserve_ms: bool,
    pub lam_t: Vec<f64>,
    pub lam_u: Vec<f64>,
    pub lam_v: Vec<f64>,
    /// (source, drain); equal when preserve_ms is set.
    pub lam_s: (f64, f64),
    pub lam_k: Vec<f64>,
    pub seed: u64,
}

pub fn draw_disorder(l: usize, lambda: f64, preserve_ms: bool, seed: u64) -> Result<DisorderDraw> {
    if lambda < 0.0 {
        return Err(Error::Parameter("lambda must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = |rng: &mut ChaCha8Rng| rng.random_range(-lambda..=lambda);
    let lam_t: Vec<f64> = (0..l + 1).map(|_| unif(&mut rng)).collect();
    let lam_u: Vec<f64> = (0..l + 2).map(|_| unif(&mut rng)).collect();
    let lam_v: Vec<f64> = (0..l + 1).map(|_| unif(&mut rng)).collect();
    let (lam_s, lam_k) = if preserve_ms {
        let s = unif(&mut rng);
        let mut lam_k = vec![0.0; l];
        for k in 1..=l.div_ceil(2) {
            let v = unif(&mut rng);
            lam_k[k - 1] = v;
            lam_k[l - k] = v;
        }
        ((s, s), lam_k)
    } else {
        let s0 = unif(&mut rng);
        let s1 = unif(&mut rng);
        let lam_k = (0..l).map(|_| unif(&mut rng)).collect();
        ((s0, s1), lam_k)
    };
    Ok(DisorderDraw { lambda, preserve_ms, lam_t, lam_u, lam_v, lam_s, lam_k, seed })
}

fn eps_multipliers(draw: &DisorderDraw, l: usize) -> Vec<f64> {
    let mut lam = Vec::with_capacity(l + 2);
    lam.push(draw.lam_s.0);
    lam.extend_from_slice(&draw.lam_k);
    lam.push(draw.lam_s.1);
    lam
}

/// Multiplicative perturbation X -> X (1 + Lambda) of every coupling.
pub fn apply_disorder(params: &HubbardParams, draw: &DisorderDraw) -> HubbardParams {
    let lam_e = eps_multipliers(draw, params.l);
    HubbardParams {
        l: params.l,
        t_bonds: params.t_bonds.iter().zip(&draw.lam_t).map(|(x, d)| x * (1.0 + d)).collect(),
        u_sites: params.u_sites.iter().zip(&draw.lam_u).map(|(x, d)| x * (1.0 + d)).collect(),
        v_bonds: params.v_bonds.iter().zip(&draw.lam_v).map(|(x, d)| x * (1.0 + d)).collect(),
        eps: params.eps.iter().zip(&lam_e).map(|(x, d)| x * (1.0 + d)).collect(),
        soc_alpha: params.soc_alpha,
        soc_beta: params.soc_beta,
    }
}

/// Additive perturbation X -> X + Lambda (Lambda in units of t); alternative
/// reading under which flat landscape regions also fluctuate.
pub fn apply_disorder_additive(params: &HubbardParams, draw: &DisorderDraw) -> HubbardParams {
    let lam_e = eps_multipliers(draw, params.l);
    HubbardParams {
        l: params.l,
        t_bonds: params.t_bonds.iter().zip(&draw.lam_t).map(|(x, d)| x + d).collect(),
        u_sites: params.u_sites.iter().zip(&draw.lam_u).map(|(x, d)| x + d).collect(),
        v_bonds: params.v_bonds.iter().zip(&draw.lam_v).map(|(x, d)| x + d).collect(),
        eps: params.eps.iter().zip(&lam_e).map(|(x, d)| x + d).collect(),
        soc_alpha: params.soc_alpha,
        soc_beta: params.soc_beta,
    }
}

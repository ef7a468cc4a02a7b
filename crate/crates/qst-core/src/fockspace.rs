//! Occupation-number bases for fixed-particle-number sectors and sparse
//! second-quantized operators with exact Jordan-Wigner sign bookkeeping.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Spin {
    Up,
    Down,
}

/// Spin-major mode ordering: all spin-up modes over the sites in order,
/// then all spin-down modes in the same site order.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ModeOrder {
    pub n_sites: usize,
    pub has_leads: bool,
}

impl ModeOrder {
    /// Full device: sites s, 1..L, d.
    pub fn full(l: usize) -> Self {
        ModeOrder { n_sites: l + 2, has_leads: true }
    }

    /// Gate chain alone: sites 1..L.
    pub fn gate(l: usize) -> Self {
        ModeOrder { n_sites: l, has_leads: false }
    }

    pub fn l(&self) -> usize {
        if self.has_leads {
            self.n_sites - 2
        } else {
            self.n_sites
        }
    }

    pub fn modes(&self) -> usize {
        2 * self.n_sites
    }

    pub fn source(&self) -> usize {
        0
    }

    pub fn drain(&self) -> usize {
        self.n_sites - 1
    }

    pub fn mode_index(&self, site: usize, spin: Spin) -> usize {
        debug_assert!(site < self.n_sites);
        match spin {
            Spin::Up => site,
            Spin::Down => self.n_sites + site,
        }
    }

    pub fn site_label(&self, site: usize) -> String {
        if !self.has_leads {
            return format!("{}", site + 1);
        }
        if site == 0 {
            "s".into()
        } else if site == self.n_sites - 1 {
            "d".into()
        } else {
            format!("{site}")
        }
    }
}

/// Identity of a sector basis; two states are composable only on equal ids.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BasisId {
    pub order: ModeOrder,
    pub n_total: usize,
    pub sz2: Option<i32>,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    pub order: ModeOrder,
    pub n_total: usize,
    /// Fixed 2*S_z = N_up - N_down, when sub-sectored.
    pub sz2: Option<i32>,
    /// Occupation words, strictly increasing; bit m = mode m occupied.
    pub states: Vec<u32>,
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn id(&self) -> BasisId {
        BasisId { order: self.order, n_total: self.n_total, sz2: self.sz2, dim: self.dim() }
    }

    pub fn index_of(&self, word: u32) -> Option<usize> {
        self.states.binary_search(&word).ok()
    }
}

pub fn occ_bit(word: u32, mode: usize) -> u32 {
    (word >> mode) & 1
}

/// Next larger word with the same popcount (Gosper's hack).
fn next_same_popcount(w: u32) -> u32 {
    let u = w & w.wrapping_neg();
    let v = w.wrapping_add(u);
    v | (((w ^ v) / u) >> 2)
}

fn enumerate_sector(order: ModeOrder, n_total: usize, sz2: Option<i32>) -> Result<FockBasis> {
    let m = order.modes();
    if m > 31 {
        return Err(Error::SizeGuard(format!("{m} modes exceed the 31-bit word limit")));
    }
    if n_total > m {
        return Err(Error::Parameter(format!(
            "n_total={n_total} exceeds the mode count {m}"
        )));
    }
    let n_up_fixed = match sz2 {
        None => None,
        Some(s) => {
            let two_nup = n_total as i64 + s as i64;
            if two_nup < 0 || two_nup % 2 != 0 {
                return Err(Error::Parameter(format!(
                    "sz2={s} is parity-incompatible with n_total={n_total}"
                )));
            }
            let n_up = (two_nup / 2) as usize;
            if n_up > n_total || n_up > order.n_sites || n_total - n_up > order.n_sites {
                return Err(Error::Parameter(format!(
                    "sz2={s} requires more than {} modes per spin",
                    order.n_sites
                )));
            }
            Some(n_up)
        }
    };
    let mut states = Vec::new();
    if n_total == 0 {
        states.push(0u32);
    } else {
        let up_mask: u32 = (1u32 << order.n_sites) - 1;
        let limit: u32 = 1u32 << m;
        let mut w: u32 = (1u32 << n_total) - 1;
        while w < limit {
            match n_up_fixed {
                Some(nu) if (w & up_mask).count_ones() as usize != nu => {}
                _ => states.push(w),
            }
            if w == limit - (1u32 << (m - n_total)) {
                // highest word of this popcount
                break;
            }
            w = next_same_popcount(w);
        }
    }
    Ok(FockBasis { order, n_total, sz2, states })
}

/// Sector basis of the full device (source + L gate sites + drain).
pub fn build_basis(l: usize, n_total: usize, sz2: Option<i32>) -> Result<FockBasis> {
    enumerate_sector(ModeOrder::full(l), n_total, sz2)
}

/// Sector basis of the gate chain alone.
pub fn build_gate_basis(l: usize, n: usize, sz2: Option<i32>) -> Result<FockBasis> {
    enumerate_sector(ModeOrder::gate(l), n, sz2)
}

/// CSR matrix over a sector basis; assembly is exact (no drop tolerance).
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<Complex64>,
}

impl SparseOperator {
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut rows: Vec<usize> = Vec::with_capacity(triplets.len());
        for (r, c, z) in triplets {
            if let (Some(&lr), Some(&lc)) = (rows.last(), indices.last()) {
                if lr == r && lc == c {
                    *data.last_mut().unwrap() += z;
                    continue;
                }
            }
            rows.push(r);
            indices.push(c);
            data.push(z);
        }
        // drop exact zeros produced by cancellation
        let mut k = 0;
        for i in 0..data.len() {
            if data[i] != Complex64::new(0.0, 0.0) {
                rows[k] = rows[i];
                indices[k] = indices[i];
                data[k] = data[i];
                k += 1;
            }
        }
        rows.truncate(k);
        indices.truncate(k);
        data.truncate(k);
        for &r in &rows {
            indptr[r + 1] += 1;
        }
        for i in 0..dim {
            indptr[i + 1] += indptr[i];
        }
        SparseOperator { dim, indptr, indices, data }
    }

    pub fn diagonal(dim: usize, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), dim);
        let triplets = diag
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, Complex64::new(v, 0.0)))
            .collect();
        SparseOperator::from_triplets(dim, triplets)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] += self.data[k];
            }
        }
        out
    }

    pub fn matvec_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(v.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * v[self.indices[k]];
            }
            out[r] = acc;
        }
    }

    pub fn matvec(&self, v: &Array1<Complex64>) -> Array1<Complex64> {
        let mut out = Array1::zeros(self.dim);
        self.matvec_into(v.as_slice().unwrap(), out.as_slice_mut().unwrap());
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                triplets.push((self.indices[k], r, self.data[k].conj()));
            }
        }
        SparseOperator::from_triplets(self.dim, triplets)
    }

    pub fn scaled(&self, z: Complex64) -> Self {
        let mut out = self.clone();
        for d in &mut out.data {
            *d *= z;
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let adj = self.adjoint();
        if adj.indptr != self.indptr || adj.indices != self.indices {
            // structures may legally differ only through sub-tol entries; fall back to dense compare
            let a = self.to_dense();
            let b = adj.to_dense();
            return a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| (x - y).norm() <= tol);
        }
        adj.data
            .iter()
            .zip(self.data.iter())
            .all(|(x, y)| (x - y).norm() <= tol)
    }

    /// Gershgorin bound on the spectral radius: max row sum of moduli.
    pub fn norm_bound(&self) -> f64 {
        let mut best: f64 = 0.0;
        for r in 0..self.dim {
            let s: f64 = (self.indptr[r]..self.indptr[r + 1])
                .map(|k| self.data[k].norm())
                .sum();
            best = best.max(s);
        }
        best
    }

    /// Sum of scaled operators over a common basis dimension.
    pub fn linear_combination(dim: usize, terms: &[(Complex64, &SparseOperator)]) -> Result<Self> {
        let mut triplets = Vec::new();
        for (z, op) in terms {
            if op.dim != dim {
                return Err(Error::Dimension(format!(
                    "operator dim {} differs from {}",
                    op.dim, dim
                )));
            }
            for r in 0..dim {
                for k in op.indptr[r]..op.indptr[r + 1] {
                    triplets.push((r, op.indices[k], *z * op.data[k]));
                }
            }
        }
        Ok(SparseOperator::from_triplets(dim, triplets))
    }
}

/// Sign picked up by c_mode acting on word: (-1)^(occupied modes below `mode`).
fn jw_sign(word: u32, mode: usize) -> f64 {
    let below = word & ((1u32 << mode) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn apply_annihilate(word: u32, mode: usize) -> Option<(u32, f64)> {
    if occ_bit(word, mode) == 0 {
        return None;
    }
    Some((word & !(1u32 << mode), jw_sign(word, mode)))
}

pub fn apply_create(word: u32, mode: usize) -> Option<(u32, f64)> {
    if occ_bit(word, mode) == 1 {
        return None;
    }
    Some((word | (1u32 << mode), jw_sign(word, mode)))
}

/// Matrix of c†_i c_j over the sector basis.
pub fn hop_matrix(basis: &FockBasis, i: usize, j: usize) -> Result<SparseOperator> {
    let m = basis.order.modes();
    if i >= m || j >= m {
        return Err(Error::Parameter(format!("mode out of range: ({i},{j}) with {m} modes")));
    }
    if i == j {
        return Err(Error::Parameter(
            "hop_matrix requires i != j; use number_matrix for densities".into(),
        ));
    }
    let mut triplets = Vec::new();
    for (col, &w) in basis.states.iter().enumerate() {
        let Some((w1, s1)) = apply_annihilate(w, j) else { continue };
        let Some((w2, s2)) = apply_create(w1, i) else { continue };
        let row = basis.index_of(w2).ok_or_else(|| {
            Error::Parameter(format!(
                "hop ({i},{j}) leaves the sector; the basis fixes S_z"
            ))
        })?;
        triplets.push((row, col, Complex64::new(s1 * s2, 0.0)));
    }
    Ok(SparseOperator::from_triplets(basis.dim(), triplets))
}

/// Diagonal matrix of n_site (spin summed) or n_site^spin.
pub fn number_matrix(basis: &FockBasis, site: usize, spin: Option<Spin>) -> Result<SparseOperator> {
    if site >= basis.order.n_sites {
        return Err(Error::Parameter(format!(
            "site {site} out of range for {} sites",
            basis.order.n_sites
        )));
    }
    let diag = occupancy_diagonal(basis, site, spin);
    Ok(SparseOperator::diagonal(basis.dim(), &diag))
}

pub fn occupancy_diagonal(basis: &FockBasis, site: usize, spin: Option<Spin>) -> Vec<f64> {
    let up = basis.order.mode_index(site, Spin::Up);
    let dn = basis.order.mode_index(site, Spin::Down);
    basis
        .states
        .iter()
        .map(|&w| match spin {
            Some(Spin::Up) => occ_bit(w, up) as f64,
            Some(Spin::Down) => occ_bit(w, dn) as f64,
            None => (occ_bit(w, up) + occ_bit(w, dn)) as f64,
        })
        .collect()
}

/// Dense annihilation operator on the full Fock space of all 2^M words,
/// for brute-force algebra checks on small M.
pub fn annihilator_dense(order: ModeOrder, mode: usize) -> Result<Array2<Complex64>> {
    let m = order.modes();
    if m > 10 {
        return Err(Error::SizeGuard(format!("full Fock space with {m} modes is too large")));
    }
    if mode >= m {
        return Err(Error::Parameter(format!("mode {mode} out of range")));
    }
    let dim = 1usize << m;
    let mut out = Array2::zeros((dim, dim));
    for w in 0..dim as u32 {
        if let Some((w1, s)) = apply_annihilate(w, mode) {
            out[[w1 as usize, w as usize]] = Complex64::new(s, 0.0);
        }
    }
    Ok(out)
}

fn site_tensor_guard(n_sites: usize) -> Result<()> {
    if n_sites > 5 {
        return Err(Error::SizeGuard(format!(
            "site-tensor embedding supports at most 5 sites, got {n_sites}; disable the negativity observable"
        )));
    }
    Ok(())
}

/// Parity of reordering the creation-operator string from spin-major mode
/// order to site-major (per-site up,down) order.
fn site_major_sign(word: u32, n_sites: usize) -> f64 {
    let mut swaps = 0u32;
    for k in 0..n_sites {
        if occ_bit(word, n_sites + k) == 1 {
            let above = (word & (((1u32 << n_sites) - 1) & !((1u32 << (k + 1)) - 1))).count_ones();
            swaps += above;
        }
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn site_tensor_index(word: u32, n_sites: usize) -> usize {
    let mut idx = 0usize;
    for k in 0..n_sites {
        let digit = (occ_bit(word, k) + 2 * occ_bit(word, n_sites + k)) as usize;
        idx = idx * 4 + digit;
    }
    idx
}

/// Embed a sector state as a tensor over (sites) with local dimension 4
/// (empty, up, down, up+down), site 0 as the slowest index.
pub fn embed_site_tensor(basis: &FockBasis, vector: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    site_tensor_guard(basis.order.n_sites)?;
    if vector.len() != basis.dim() {
        return Err(Error::Dimension(format!(
            "vector length {} differs from basis dim {}",
            vector.len(),
            basis.dim()
        )));
    }
    let n_sites = basis.order.n_sites;
    let mut out = Array1::zeros(4usize.pow(n_sites as u32));
    for (r, &w) in basis.states.iter().enumerate() {
        let amp = vector[r];
        if amp != Complex64::new(0.0, 0.0) {
            out[site_tensor_index(w, n_sites)] = amp * site_major_sign(w, n_sites);
        }
    }
    Ok(out)
}

/// Inverse of embed_site_tensor on the sector support.
pub fn project_site_tensor(basis: &FockBasis, tensor: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    site_tensor_guard(basis.order.n_sites)?;
    let n_sites = basis.order.n_sites;
    if tensor.len() != 4usize.pow(n_sites as u32) {
        return Err(Error::Dimension(format!(
            "tensor length {} is not 4^{n_sites}",
            tensor.len()
        )));
    }
    let mut out = Array1::zeros(basis.dim());
    for (r, &w) in basis.states.iter().enumerate() {
        out[r] = tensor[site_tensor_index(w, n_sites)] * site_major_sign(w, n_sites);
    }
    Ok(out)
}

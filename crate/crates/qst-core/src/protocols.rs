//! Device-level experiment drivers: time scans of both gate settings,
//! brute-force operating-point search, finite-time switching, repeated
//! transfer cycles, and robustness sweeps against disorder and noise.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{
    propagate_ensemble, spectral_decompose, sweep_propagate_ensemble, sweep_trace_ensemble,
    dephase_propagate, DephasingRule, SweepDirection, SweepSchedule,
};
use crate::fockspace::{build_basis, build_gate_basis, FockBasis, Spin};
use crate::hamiltonian::{
    apply_disorder, build_gate, build_total, draw_disorder, landscape, GateMode, HubbardParams,
};
use crate::measure::{
    charge_profile, fidelity, log_negativity, nuclear_norm, FidelityConvention, ModeSetup,
    QuadratureSpec, TransferSystem,
};
use crate::states::{
    compose_initial, compose_member, compose_target, densify, gate_ground_ensemble,
    gate_thermal_ensemble, EnsembleState, QubitState,
};

/// One device configuration: geometry, filling, base couplings, and the two
/// landscape amplitudes that define an operating point.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub l: usize,
    pub n: usize,
    pub eps_sd: f64,
    pub eps_open: f64,
    pub eps_closed: f64,
    pub base: HubbardParams,
    pub quad: QuadratureSpec,
    pub conv: FidelityConvention,
}

impl SystemSpec {
    /// Default couplings t=1, U=50t, V=1t at the given operating point.
    pub fn new(l: usize, n: usize, eps_sd: f64, eps_open: f64, eps_closed: f64) -> Result<Self> {
        if n == 0 || n > 2 * l {
            return Err(Error::Parameter(format!(
                "gate filling n={n} must lie in 1..={} for L={l}",
                2 * l
            )));
        }
        Ok(SystemSpec {
            l,
            n,
            eps_sd,
            eps_open,
            eps_closed,
            base: HubbardParams::uniform(l, 1.0, 50.0, 1.0),
            quad: QuadratureSpec::SinglePoint,
            conv: FidelityConvention::default(),
        })
    }

    /// Base couplings with the full landscape profile for one mode.
    pub fn params_for(&self, mode: GateMode) -> Result<HubbardParams> {
        let amp = match mode {
            GateMode::Open => self.eps_open,
            GateMode::Closed => self.eps_closed,
        };
        let ls = landscape(mode, self.l, amp, self.eps_sd)?;
        let mut p = self.base.clone();
        p.eps = ls.eps;
        Ok(p)
    }

    pub fn prepare(&self, mode: GateMode) -> Result<ModeSetup> {
        mode_setup(&self.params_for(mode)?, self.l, self.n)
    }

    pub fn prepare_both(&self) -> Result<TransferSystem> {
        Ok(TransferSystem {
            open: self.prepare(GateMode::Open)?,
            closed: self.prepare(GateMode::Closed)?,
        })
    }
}

/// Basis pair, injected gate ensemble, and total spectrum for one landscape;
/// `params.eps` must already hold the full profile. The gate ensemble is
/// always prepared without the spin-flip hopping: spin flips act during
/// transport, not during loading.
fn mode_setup(params: &HubbardParams, l: usize, n: usize) -> Result<ModeSetup> {
    let gate_basis = Arc::new(build_gate_basis(l, n, None)?);
    let mut loading = params.clone();
    loading.soc_alpha = 0.0;
    loading.soc_beta = 0.0;
    let gate_ens = gate_ground_ensemble(&build_gate(&loading, &gate_basis)?, &gate_basis, None)?;
    let total_basis = Arc::new(build_basis(l, n + 2, None)?);
    let spectrum = Arc::new(spectral_decompose(&build_total(params, &total_basis)?)?);
    Ok(ModeSetup { total_basis, gate_ens, spectrum })
}

/// Eigenbasis cores for sweeping fidelity over time at fixed input: with
/// P = V^H A and Q = V^H B holding the weighted initial and target members,
/// the root fidelity at tau is the nuclear norm of Q^H Lambda(tau) P.
struct FidelityScan {
    p: Array2<Complex64>,
    qh: Array2<Complex64>,
    eigs: Array1<f64>,
}

impl FidelityScan {
    fn new(setup: &ModeSetup, mode: GateMode, psi: &QubitState) -> Result<Self> {
        let init = compose_initial(psi, &setup.gate_ens, &setup.total_basis)?;
        let target = compose_target(mode, psi, &setup.gate_ens, &setup.total_basis)?;
        let vh = setup.spectrum.eigenvectors.t().mapv(|z| z.conj());
        let p = vh.dot(&init.weighted_members());
        let qh = vh.dot(&target.weighted_members()).t().mapv(|z| z.conj());
        Ok(FidelityScan { p, qh, eigs: setup.spectrum.eigenvalues.clone() })
    }

    fn root_at(&self, tau: f64) -> Result<f64> {
        let mut scaled = self.p.clone();
        for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -self.eigs[i] * tau);
            row.mapv_inplace(|z| z * ph);
        }
        nuclear_norm(&self.qh.dot(&scaled))
    }
}

/// Input-averaged scan: one core set per quadrature node.
struct AveragedScan {
    nodes: Vec<(f64, FidelityScan)>,
}

impl AveragedScan {
    fn new(setup: &ModeSetup, mode: GateMode, quad: &QuadratureSpec) -> Result<Self> {
        let mut nodes = Vec::new();
        for (psi, w) in quad.nodes()? {
            nodes.push((w, FidelityScan::new(setup, mode, &psi)?));
        }
        Ok(AveragedScan { nodes })
    }

    fn value_at(&self, tau: f64, conv: FidelityConvention) -> Result<f64> {
        let mut total = 0.0;
        for (w, scan) in &self.nodes {
            let f = scan.root_at(tau)?;
            total += w * match conv {
                FidelityConvention::Root => f,
                FidelityConvention::Squared => f * f,
            };
        }
        Ok(total)
    }
}

fn check_time_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::Parameter("time grid must not be empty".into()));
    }
    for w in taus.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Parameter("time grid must be strictly increasing".into()));
        }
    }
    if taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::Parameter("time grid must be finite".into()));
    }
    Ok(())
}

/// First strict extremum wins, so on an ascending grid ties resolve to the
/// smaller time.
fn extremum(taus: &[f64], vals: &[f64], maximize: bool) -> (f64, f64) {
    let mut at = taus[0];
    let mut best = vals[0];
    for (&t, &v) in taus.iter().zip(vals).skip(1) {
        if (maximize && v > best) || (!maximize && v < best) {
            at = t;
            best = v;
        }
    }
    (at, best)
}

/// Extra per-time observables recorded along a run.
#[derive(Clone, Copy, Debug, Default)]
pub struct ObservableSet {
    pub occupancy: bool,
    pub negativity: bool,
}

/// Full time series of one run: both gate settings are always scanned, and
/// the requested state observables follow the selected mode with a spin-up
/// input.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub l: usize,
    pub n: usize,
    pub mode: GateMode,
    pub eps_sd: f64,
    pub eps_open: f64,
    pub eps_closed: f64,
    pub tau: Vec<f64>,
    pub f_open: Vec<f64>,
    pub f_closed: Vec<f64>,
    pub occupancy: Option<Vec<Vec<f64>>>,
    pub negativity: Option<Vec<f64>>,
    /// Argmax of the selected mode's series; ties resolve to the smaller time.
    pub tau_opt: f64,
    pub peak: f64,
    /// Argmin of the selected mode's series, the binding point for retention.
    pub tau_floor: f64,
    pub floor: f64,
}

pub fn run_transistor(
    spec: &SystemSpec,
    taus: &[f64],
    mode: GateMode,
    want: ObservableSet,
) -> Result<RunRecord> {
    check_time_grid(taus)?;
    if want.negativity && spec.l + 2 > 5 {
        return Err(Error::SizeGuard(format!(
            "negativity tracks at most 5 sites, got {}; disable the negativity \
             observable or reduce L",
            spec.l + 2
        )));
    }
    let system = spec.prepare_both()?;
    let open_scan = AveragedScan::new(&system.open, GateMode::Open, &spec.quad)?;
    let closed_scan = AveragedScan::new(&system.closed, GateMode::Closed, &spec.quad)?;
    let mut f_open = Vec::with_capacity(taus.len());
    let mut f_closed = Vec::with_capacity(taus.len());
    for &t in taus {
        f_open.push(open_scan.value_at(t, spec.conv)?);
        f_closed.push(closed_scan.value_at(t, spec.conv)?);
    }
    let (occupancy, negativity) = if want.occupancy || want.negativity {
        let setup = system.setup(mode);
        let init = compose_initial(&QubitState::up(), &setup.gate_ens, &setup.total_basis)?;
        let mut occ = Vec::new();
        let mut neg = Vec::new();
        for &t in taus {
            let state = propagate_ensemble(&setup.spectrum, &init, t)?;
            if want.occupancy {
                occ.push(charge_profile(&state)?);
            }
            if want.negativity {
                neg.push(log_negativity(&densify(&state)?)?);
            }
        }
        (want.occupancy.then_some(occ), want.negativity.then_some(neg))
    } else {
        (None, None)
    };
    let selected = match mode {
        GateMode::Open => &f_open,
        GateMode::Closed => &f_closed,
    };
    let (tau_opt, peak) = extremum(taus, selected, true);
    let (tau_floor, floor) = extremum(taus, selected, false);
    Ok(RunRecord {
        l: spec.l,
        n: spec.n,
        mode,
        eps_sd: spec.eps_sd,
        eps_open: spec.eps_open,
        eps_closed: spec.eps_closed,
        tau: taus.to_vec(),
        f_open,
        f_closed,
        occupancy,
        negativity,
        tau_opt,
        peak,
        tau_floor,
        floor,
    })
}

/// Search space of the open-mode brute-force optimization. Amplitude grids
/// hold the candidate lead and gate values; the time grid is scanned in full
/// for every amplitude pair.
#[derive(Clone, Debug)]
pub struct SearchGrid {
    pub eps_sd: Vec<f64>,
    pub eps_open: Vec<f64>,
    pub tau: Vec<f64>,
}

impl SearchGrid {
    /// Integer amplitudes over [0,100] and integer times over [0,500].
    pub fn full() -> Self {
        SearchGrid {
            eps_sd: (0..=100).map(f64::from).collect(),
            eps_open: (0..=100).map(f64::from).collect(),
            tau: (0..=500).map(f64::from).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, axis) in [("eps_sd", &self.eps_sd), ("eps_open", &self.eps_open)] {
            if axis.is_empty() {
                return Err(Error::Parameter(format!("search axis {name} must not be empty")));
            }
            if axis.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Parameter(format!(
                    "search axis {name} must hold finite non-negative values"
                )));
            }
        }
        check_time_grid(&self.tau)
    }
}

/// Best time found in one amplitude cell.
#[derive(Clone, Debug, Serialize)]
pub struct CellBest {
    pub eps_sd: f64,
    pub eps_open: f64,
    pub tau: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizerResult {
    pub l: usize,
    pub n: usize,
    pub eps_sd: f64,
    pub eps_open: f64,
    pub tau_opt: f64,
    pub achieved: f64,
    /// False when a budget stopped the scan before the last cell.
    pub complete: bool,
    /// Count of (eps_sd, eps_open, tau) fidelity evaluations.
    pub evaluations: usize,
    /// Per-cell winners in evaluation order (eps_sd outer, eps_open inner).
    pub cells: Vec<CellBest>,
}

/// Exhaustive scan over the amplitude grid, full time scan per cell, local
/// time refinement to unit step around the winner. Ties prefer smaller tau,
/// then smaller eps_open, then smaller eps_sd, so results do not depend on
/// the worker count. `budget` caps the number of amplitude cells evaluated.
pub fn optimize_open(
    spec: &SystemSpec,
    grid: &SearchGrid,
    budget: Option<usize>,
) -> Result<OptimizerResult> {
    grid.validate()?;
    let n_cells = grid.eps_sd.len() * grid.eps_open.len();
    let todo = budget.map_or(n_cells, |b| b.min(n_cells));
    if todo == 0 {
        return Err(Error::Parameter("cell budget must allow at least one cell".into()));
    }
    let complete = todo == n_cells;

    // The gate block never sees the lead offset, so ensembles are shared
    // across eps_sd.
    let gate_basis = Arc::new(build_gate_basis(spec.l, spec.n, None)?);
    let mut gate_cache: HashMap<u64, EnsembleState> = HashMap::new();
    for &eo in &grid.eps_open {
        if let std::collections::hash_map::Entry::Vacant(slot) = gate_cache.entry(eo.to_bits()) {
            let mut p = spec.base.clone();
            p.eps = landscape(GateMode::Open, spec.l, eo, 0.0)?.eps;
            p.soc_alpha = 0.0;
            p.soc_beta = 0.0;
            slot.insert(gate_ground_ensemble(&build_gate(&p, &gate_basis)?, &gate_basis, None)?);
        }
    }
    let total_basis = Arc::new(build_basis(spec.l, spec.n + 2, None)?);

    let eval_cell = |idx: usize| -> Result<CellBest> {
        let sd = grid.eps_sd[idx / grid.eps_open.len()];
        let eo = grid.eps_open[idx % grid.eps_open.len()];
        let mut p = spec.base.clone();
        p.eps = landscape(GateMode::Open, spec.l, eo, sd)?.eps;
        let setup = ModeSetup {
            total_basis: total_basis.clone(),
            gate_ens: gate_cache[&eo.to_bits()].clone(),
            spectrum: Arc::new(spectral_decompose(&build_total(&p, &total_basis)?)?),
        };
        let scan = AveragedScan::new(&setup, GateMode::Open, &spec.quad)?;
        let mut vals = Vec::with_capacity(grid.tau.len());
        for &t in &grid.tau {
            vals.push(scan.value_at(t, spec.conv)?);
        }
        let (tau, value) = extremum(&grid.tau, &vals, true);
        Ok(CellBest { eps_sd: sd, eps_open: eo, tau, value })
    };
    let cells: Vec<CellBest> =
        (0..todo).into_par_iter().map(eval_cell).collect::<Result<Vec<_>>>()?;
    let mut evaluations = todo * grid.tau.len();

    let better = |cand: &CellBest, best: &CellBest| {
        cand.value > best.value
            || (cand.value == best.value
                && (cand.tau, cand.eps_open, cand.eps_sd)
                    < (best.tau, best.eps_open, best.eps_sd))
    };
    let mut best = cells[0].clone();
    for cand in &cells[1..] {
        if better(cand, &best) {
            best = cand.clone();
        }
    }

    // Refine the winning time to unit step when the scan grid is coarser.
    let pos = grid.tau.iter().position(|&t| t == best.tau).unwrap();
    let mut gap = 0.0f64;
    if pos > 0 {
        gap = gap.max(grid.tau[pos] - grid.tau[pos - 1]);
    }
    if pos + 1 < grid.tau.len() {
        gap = gap.max(grid.tau[pos + 1] - grid.tau[pos]);
    }
    if gap > 1.0 {
        let mut p = spec.base.clone();
        p.eps = landscape(GateMode::Open, spec.l, best.eps_open, best.eps_sd)?.eps;
        let setup = ModeSetup {
            total_basis: total_basis.clone(),
            gate_ens: gate_cache[&best.eps_open.to_bits()].clone(),
            spectrum: Arc::new(spectral_decompose(&build_total(&p, &total_basis)?)?),
        };
        let scan = AveragedScan::new(&setup, GateMode::Open, &spec.quad)?;
        let lo = (best.tau - gap).max(0.0).ceil() as i64;
        let hi = (best.tau + gap).floor() as i64;
        for k in lo..=hi {
            let t = k as f64;
            let v = scan.value_at(t, spec.conv)?;
            evaluations += 1;
            if v > best.value || (v == best.value && t < best.tau) {
                best.tau = t;
                best.value = v;
            }
        }
    }

    Ok(OptimizerResult {
        l: spec.l,
        n: spec.n,
        eps_sd: best.eps_sd,
        eps_open: best.eps_open,
        tau_opt: best.tau,
        achieved: best.value,
        complete,
        evaluations,
        cells,
    })
}

/// Retention fidelity of the closed gate over a time grid at the given gate
/// amplitude. Without spin-flip hopping the total spin projection is
/// conserved, so the state factors over projection sectors and each sector
/// is diagonalized on its own.
pub fn closed_retention_curve(
    spec: &SystemSpec,
    eps_closed: f64,
    taus: &[f64],
) -> Result<Vec<f64>> {
    check_time_grid(taus)?;
    let mut s = spec.clone();
    s.eps_closed = eps_closed;
    if spec.base.soc_alpha == 0.0 && spec.base.soc_beta == 0.0 {
        closed_curve_blocked(&s, taus)
    } else {
        let setup = s.prepare(GateMode::Closed)?;
        let scan = AveragedScan::new(&setup, GateMode::Closed, &s.quad)?;
        taus.iter().map(|&t| scan.value_at(t, s.conv)).collect()
    }
}

/// Minimum of the retention curve over the integer grid [0,500]; ties
/// resolve to the smaller time. Returns (minimum, time).
pub fn closed_min_fidelity(spec: &SystemSpec, eps_closed: f64) -> Result<(f64, f64)> {
    let taus: Vec<f64> = (0..=500).map(f64::from).collect();
    let vals = closed_retention_curve(spec, eps_closed, &taus)?;
    let (tau, v) = extremum(&taus, &vals, false);
    Ok((v, tau))
}

fn closed_curve_blocked(spec: &SystemSpec, taus: &[f64]) -> Result<Vec<f64>> {
    let params = spec.params_for(GateMode::Closed)?;
    let mut loading = params.clone();
    loading.soc_alpha = 0.0;
    loading.soc_beta = 0.0;
    let n = spec.n as i32;

    // Gate ground multiplet across projection blocks, one eigh per block.
    struct Block {
        basis: Arc<FockBasis>,
        eigs: Array1<f64>,
        vecs: Array2<Complex64>,
    }
    let mut blocks: Vec<(i32, Block)> = Vec::new();
    let mut e_min = f64::INFINITY;
    let mut e_max = f64::NEG_INFINITY;
    let mut g = -n;
    while g <= n {
        if let Ok(basis) = build_gate_basis(spec.l, spec.n, Some(g)) {
            if basis.dim() > 0 {
                let basis = Arc::new(basis);
                let sp = spectral_decompose(&build_gate(&loading, &basis)?)?;
                e_min = e_min.min(sp.eigenvalues[0]);
                e_max = e_max.max(sp.eigenvalues[sp.dim() - 1]);
                blocks.push((g, Block { basis, eigs: sp.eigenvalues, vecs: sp.eigenvectors }));
            }
        }
        g += 2;
    }
    let tol = 1e-8 * (e_max - e_min);
    let mut members: Vec<(i32, &Block, usize)> = Vec::new();
    for (gz, block) in &blocks {
        for (k, &e) in block.eigs.iter().enumerate() {
            if e - e_min <= tol {
                members.push((*gz, block, k));
            }
        }
    }
    let w = 0.5 / members.len() as f64;

    // Composed members grouped by total projection; the spin-up source adds
    // +1, the drain electron adds +/-1.
    let order_probe = build_basis(spec.l, spec.n + 2, None)?.order;
    let source_amps = [(order_probe.mode_index(order_probe.source(), Spin::Up), Complex64::ONE)];
    let mut sectors: BTreeMap<i32, Vec<(i32, &Block, usize, Spin)>> = BTreeMap::new();
    for &(gz, block, k) in &members {
        for (dspin, dsz) in [(Spin::Up, 1), (Spin::Down, -1)] {
            sectors.entry(gz + 1 + dsz).or_default().push((gz, block, k, dspin));
        }
    }

    let mut roots = vec![0.0f64; taus.len()];
    for (ts, cols) in &sectors {
        let basis = Arc::new(build_basis(spec.l, spec.n + 2, Some(*ts))?);
        let sp = spectral_decompose(&build_total(&params, &basis)?)?;
        let mut b = Array2::zeros((basis.dim(), cols.len()));
        for (c, &(_, block, k, dspin)) in cols.iter().enumerate() {
            let drain = order_probe.mode_index(order_probe.drain(), dspin);
            let v = compose_member(
                &basis,
                &source_amps,
                block.vecs.column(k),
                &block.basis,
                drain,
            )?;
            b.column_mut(c).assign(&v.mapv(|z| z * w.sqrt()));
        }
        let coeff = sp.eigenvectors.t().mapv(|z| z.conj()).dot(&b);
        let coeff_h = coeff.t().mapv(|z| z.conj());
        for (ti, &tau) in taus.iter().enumerate() {
            let mut scaled = coeff.clone();
            for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
                let ph = Complex64::from_polar(1.0, -sp.eigenvalues[i] * tau);
                row.mapv_inplace(|z| z * ph);
            }
            roots[ti] += nuclear_norm(&coeff_h.dot(&scaled))?;
        }
    }
    Ok(match spec.conv {
        FidelityConvention::Root => roots,
        FidelityConvention::Squared => roots.into_iter().map(|r| r * r).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosedScanPoint {
    pub eps_closed: f64,
    pub min_value: f64,
    pub tau_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosedResult {
    pub l: usize,
    pub n: usize,
    pub eps_sd: f64,
    pub threshold: f64,
    /// Smallest feasible integer amplitude, or None when the scan exhausts
    /// [0,100] without meeting the threshold.
    pub eps_closed: Option<f64>,
    pub achieved: f64,
    pub tau_min: f64,
    pub scanned: Vec<ClosedScanPoint>,
}

/// Ascending integer scan for the smallest gate amplitude whose retention
/// fidelity stays at or above `threshold` over the whole time window.
pub fn optimize_closed(spec: &SystemSpec, threshold: f64) -> Result<ClosedResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Parameter(format!("threshold {threshold} must lie in [0,1]")));
    }
    let mut scanned = Vec::new();
    for ec in 0..=100 {
        let ec = f64::from(ec);
        let (min_value, tau_min) = closed_min_fidelity(spec, ec)?;
        scanned.push(ClosedScanPoint { eps_closed: ec, min_value, tau_min });
        if min_value >= threshold {
            return Ok(ClosedResult {
                l: spec.l,
                n: spec.n,
                eps_sd: spec.eps_sd,
                threshold,
                eps_closed: Some(ec),
                achieved: min_value,
                tau_min,
                scanned,
            });
        }
    }
    let best = scanned
        .iter()
        .cloned()
        .reduce(|a, b| if b.min_value > a.min_value { b } else { a })
        .unwrap();
    Ok(ClosedResult {
        l: spec.l,
        n: spec.n,
        eps_sd: spec.eps_sd,
        threshold,
        eps_closed: None,
        achieved: best.min_value,
        tau_min: best.tau_min,
        scanned,
    })
}

/// Transition fidelities of the gate chain under the finite-time ramp, both
/// directions, one point per requested duration.
#[derive(Clone, Debug, Serialize)]
pub struct SwitchPoint {
    pub tau_sw: f64,
    pub forward: f64,
    pub reverse: f64,
}

/// The drive acts on the gate sector alone: the ramp deforms the gate
/// landscape while the leads stay put, and the figure of merit is the
/// overlap with the destination ground ensemble.
pub fn switching_curve(spec: &SystemSpec, tau_sws: &[f64]) -> Result<Vec<SwitchPoint>> {
    if tau_sws.is_empty() {
        return Err(Error::Parameter("switching needs at least one duration".into()));
    }
    if tau_sws.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Parameter("switching durations must be finite and non-negative".into()));
    }
    let gate_basis = Arc::new(build_gate_basis(spec.l, spec.n, None)?);
    let rho_open = gate_ground_ensemble(
        &build_gate(&spec.params_for(GateMode::Open)?, &gate_basis)?,
        &gate_basis,
        None,
    )?;
    let rho_closed = gate_ground_ensemble(
        &build_gate(&spec.params_for(GateMode::Closed)?, &gate_basis)?,
        &gate_basis,
        None,
    )?;
    let mut out = Vec::with_capacity(tau_sws.len());
    for &tau_sw in tau_sws {
        let fwd = SweepSchedule {
            direction: SweepDirection::OpenToClosed,
            tau_sw,
            eps_open: spec.eps_open,
            eps_closed: spec.eps_closed,
            eps_sd: spec.eps_sd,
            steps: None,
        };
        let forward = fidelity(
            &sweep_propagate_ensemble(&spec.base, &fwd, &rho_open)?,
            &rho_closed,
            spec.conv,
        )?;
        let rev = SweepSchedule { direction: SweepDirection::ClosedToOpen, ..fwd };
        let reverse = fidelity(
            &sweep_propagate_ensemble(&spec.base, &rev, &rho_closed)?,
            &rho_open,
            spec.conv,
        )?;
        out.push(SwitchPoint { tau_sw, forward, reverse });
    }
    Ok(out)
}

/// Gate charge profile at evenly spaced instants of one ramp, starting from
/// the ground ensemble of the outgoing landscape.
pub fn switching_trace(
    spec: &SystemSpec,
    tau_sw: f64,
    direction: SweepDirection,
    n_samples: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let gate_basis = Arc::new(build_gate_basis(spec.l, spec.n, None)?);
    let from_mode = match direction {
        SweepDirection::OpenToClosed => GateMode::Open,
        SweepDirection::ClosedToOpen => GateMode::Closed,
    };
    let start = gate_ground_ensemble(
        &build_gate(&spec.params_for(from_mode)?, &gate_basis)?,
        &gate_basis,
        None,
    )?;
    let schedule = SweepSchedule {
        direction,
        tau_sw,
        eps_open: spec.eps_open,
        eps_closed: spec.eps_closed,
        eps_sd: spec.eps_sd,
        steps: None,
    };
    let mut out = Vec::new();
    for (t, state) in sweep_trace_ensemble(&spec.base, &schedule, &start, n_samples)? {
        out.push((t, charge_profile(&state)?));
    }
    Ok(out)
}

/// Repeated transfer protocol: hold the open landscape, catch the best
/// transfer inside an integer time window, then ramp closed, dwell, and ramp
/// back open without ever resetting the device.
#[derive(Clone, Copy, Debug)]
pub struct CycleConfig {
    pub cycles: usize,
    pub tau_opt: f64,
    /// Ramp duration as a fraction of tau_opt.
    pub tau_sw_frac: f64,
    /// Closed-phase hold; None holds for tau_opt.
    pub dwell: Option<f64>,
    /// The per-cycle catch window is [0, window_frac * tau_opt] in unit steps.
    pub window_frac: f64,
}

impl CycleConfig {
    pub fn for_tau(cycles: usize, tau_opt: f64) -> Self {
        CycleConfig { cycles, tau_opt, tau_sw_frac: 0.18, dwell: None, window_frac: 1.5 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CyclePoint {
    pub cycle: usize,
    pub fidelity: f64,
    pub tau_at_peak: f64,
}

/// After cycle m the reference is the m-times-swapped composition: odd
/// cycles compare against the transferred state, even cycles against the
/// original one.
pub fn repeated_cycles(spec: &SystemSpec, cfg: &CycleConfig) -> Result<Vec<CyclePoint>> {
    if cfg.cycles == 0 {
        return Err(Error::Parameter("cycle count must be at least 1".into()));
    }
    if !(cfg.tau_opt > 0.0) || cfg.tau_sw_frac < 0.0 || cfg.window_frac <= 0.0 {
        return Err(Error::Parameter("cycle timing parameters must be positive".into()));
    }
    if spec.base.soc_alpha != 0.0 || spec.base.soc_beta != 0.0 {
        return Err(Error::Parameter(
            "cycling assumes spin-rotation symmetry; run without spin-flip hopping".into(),
        ));
    }
    let system = spec.prepare_both()?;
    let psi = QubitState::up();
    let init = compose_initial(&psi, &system.open.gate_ens, &system.open.total_basis)?;
    let swapped = compose_target(GateMode::Open, &psi, &system.open.gate_ens, &system.open.total_basis)?;
    let window = (cfg.window_frac * cfg.tau_opt).floor() as usize;
    let tau_sw = cfg.tau_sw_frac * cfg.tau_opt;
    let dwell = cfg.dwell.unwrap_or(cfg.tau_opt);
    let mut state = init.clone();
    let mut out = Vec::with_capacity(cfg.cycles);
    for m in 1..=cfg.cycles {
        let target = if m % 2 == 1 { &swapped } else { &init };
        let mut best = (f64::NEG_INFINITY, 0.0f64);
        for tt in 0..=window {
            let cand = propagate_ensemble(&system.open.spectrum, &state, tt as f64)?;
            let f = fidelity(&cand, target, spec.conv)?;
            if f > best.0 {
                best = (f, tt as f64);
            }
        }
        state = propagate_ensemble(&system.open.spectrum, &state, best.1)?;
        out.push(CyclePoint { cycle: m, fidelity: best.0, tau_at_peak: best.1 });
        if m < cfg.cycles {
            let down = SweepSchedule {
                direction: SweepDirection::OpenToClosed,
                tau_sw,
                eps_open: spec.eps_open,
                eps_closed: spec.eps_closed,
                eps_sd: spec.eps_sd,
                steps: None,
            };
            state = sweep_propagate_ensemble(&spec.base, &down, &state)?;
            state = propagate_ensemble(&system.closed.spectrum, &state, dwell)?;
            let up = SweepSchedule { direction: SweepDirection::ClosedToOpen, ..down };
            state = sweep_propagate_ensemble(&spec.base, &up, &state)?;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DisorderStats {
    pub lambda: f64,
    pub preserve_ms: bool,
    pub n_real: usize,
    pub seed: u64,
    pub mean_open: f64,
    pub stderr_open: f64,
    pub mean_closed: f64,
    pub stderr_closed: f64,
}

/// Monte Carlo average at the fixed clean operating point: every coupling is
/// scaled by its own uniform draw from [-lambda, lambda], the device is
/// loaded from the disordered gate ground state, and the open and closed
/// settings are read out at tau_opt and 2 tau_opt. Per-realization RNG
/// streams derive from (seed, index), so worker count never changes results.
pub fn disorder_average(
    spec: &SystemSpec,
    lambda: f64,
    n_real: usize,
    preserve_ms: bool,
    seed: u64,
    tau_opt: f64,
) -> Result<DisorderStats> {
    if n_real == 0 {
        return Err(Error::Parameter("disorder average needs at least one draw".into()));
    }
    if !tau_opt.is_finite() || tau_opt < 0.0 {
        return Err(Error::Parameter(format!("tau_opt {tau_opt} must be non-negative")));
    }
    let po = spec.params_for(GateMode::Open)?;
    let pc = spec.params_for(GateMode::Closed)?;
    let item_seeds: Vec<u64> = (0..n_real)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r.random()
        })
        .collect();
    let pairs: Vec<(f64, f64)> = item_seeds
        .par_iter()
        .map(|&s| -> Result<(f64, f64)> {
            let draw = draw_disorder(spec.l, lambda, preserve_ms, s)?;
            let open = mode_setup(&apply_disorder(&po, &draw), spec.l, spec.n)?;
            let fo = AveragedScan::new(&open, GateMode::Open, &spec.quad)?
                .value_at(tau_opt, spec.conv)?;
            let closed = mode_setup(&apply_disorder(&pc, &draw), spec.l, spec.n)?;
            let fc = AveragedScan::new(&closed, GateMode::Closed, &spec.quad)?
                .value_at(2.0 * tau_opt, spec.conv)?;
            Ok((fo, fc))
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = |pick: &dyn Fn(&(f64, f64)) -> f64| {
        let mean = pairs.iter().map(pick).sum::<f64>() / n_real as f64;
        let var = pairs.iter().map(|p| (pick(p) - mean).powi(2)).sum::<f64>() / n_real as f64;
        (mean, (var / n_real as f64).sqrt())
    };
    let (mean_open, stderr_open) = stats(&|p| p.0);
    let (mean_closed, stderr_closed) = stats(&|p| p.1);
    Ok(DisorderStats {
        lambda,
        preserve_ms,
        n_real,
        seed,
        mean_open,
        stderr_open,
        mean_closed,
        stderr_closed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NoiseKind {
    /// Boltzmann-weighted gate loading at temperature kT, unitary transport.
    Thermal,
    /// Pure dephasing of eigenbasis coherences at rate gamma.
    Dephasing,
    /// Spin-flip hopping of Rashba strength alpha with beta = 4 alpha.
    SpinOrbit,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoisePoint {
    pub value: f64,
    pub f_open: f64,
    pub f_closed: f64,
}

/// Robustness curve at the fixed operating point: open readout at tau_opt,
/// closed readout at 2 tau_opt, one point per grid value.
pub fn noise_sweep(
    spec: &SystemSpec,
    kind: NoiseKind,
    grid: &[f64],
    tau_opt: f64,
) -> Result<Vec<NoisePoint>> {
    if grid.is_empty() {
        return Err(Error::Parameter("noise grid must not be empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Parameter("noise values must be finite and non-negative".into()));
    }
    if !tau_opt.is_finite() || tau_opt < 0.0 {
        return Err(Error::Parameter(format!("tau_opt {tau_opt} must be non-negative")));
    }
    let tau_closed = 2.0 * tau_opt;
    let mut out = Vec::with_capacity(grid.len());
    match kind {
        NoiseKind::Thermal => {
            let system = spec.prepare_both()?;
            let gate_basis = Arc::new(build_gate_basis(spec.l, spec.n, None)?);
            let h_open = build_gate(&spec.params_for(GateMode::Open)?, &gate_basis)?;
            let h_closed = build_gate(&spec.params_for(GateMode::Closed)?, &gate_basis)?;
            for &kt in grid {
                let mut open = system.open.clone();
                open.gate_ens = gate_thermal_ensemble(&h_open, &gate_basis, kt, None)?;
                let mut closed = system.closed.clone();
                closed.gate_ens = gate_thermal_ensemble(&h_closed, &gate_basis, kt, None)?;
                out.push(NoisePoint {
                    value: kt,
                    f_open: AveragedScan::new(&open, GateMode::Open, &spec.quad)?
                        .value_at(tau_opt, spec.conv)?,
                    f_closed: AveragedScan::new(&closed, GateMode::Closed, &spec.quad)?
                        .value_at(tau_closed, spec.conv)?,
                });
            }
        }
        NoiseKind::Dephasing => {
            let system = spec.prepare_both()?;
            let nodes = spec.quad.nodes()?;
            for &gamma in grid {
                let mut f_open = 0.0;
                let mut f_closed = 0.0;
                for (psi, w) in &nodes {
                    for (setup, mode, tau, acc) in [
                        (&system.open, GateMode::Open, tau_opt, &mut f_open),
                        (&system.closed, GateMode::Closed, tau_closed, &mut f_closed),
                    ] {
                        let rho = densify(&compose_initial(psi, &setup.gate_ens, &setup.total_basis)?)?;
                        let target = compose_target(mode, psi, &setup.gate_ens, &setup.total_basis)?;
                        let evolved = dephase_propagate(
                            &setup.spectrum,
                            &rho,
                            tau,
                            gamma,
                            DephasingRule::AllOffDiagonal,
                        )?;
                        *acc += w * fidelity(&evolved, &target, spec.conv)?;
                    }
                }
                out.push(NoisePoint { value: gamma, f_open, f_closed });
            }
        }
        NoiseKind::SpinOrbit => {
            for &alpha in grid {
                let mut s = spec.clone();
                s.base = spec.base.clone().with_soc(alpha, 4.0 * alpha);
                if alpha != 0.0 {
                    s.quad = QuadratureSpec::recommended(true);
                }
                let system = s.prepare_both()?;
                out.push(NoisePoint {
                    value: alpha,
                    f_open: AveragedScan::new(&system.open, GateMode::Open, &s.quad)?
                        .value_at(tau_opt, s.conv)?,
                    f_closed: AveragedScan::new(&system.closed, GateMode::Closed, &s.quad)?
                        .value_at(tau_closed, s.conv)?,
                });
            }
        }
    }
    Ok(out)
}

/// One bundled operating point; the reported value and time are the
/// reference targets the simulator is compared against.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReferenceRow {
    pub l: usize,
    pub n: usize,
    pub f_bar: f64,
    pub tau_opt: f64,
    pub eps_sd: f64,
    pub eps_open: f64,
    pub eps_closed: f64,
    /// Device sectors above 1500 states are kept out of default test runs.
    pub slow_tier: bool,
}

/// Reference operating points for every studied gate length and filling.
/// The L=3 full-filling case has no feasible closed amplitude and is not
/// listed.
pub fn reference_rows() -> Vec<ReferenceRow> {
    let rows: [(usize, usize, f64, f64, f64, f64, f64); 19] = [
        (3, 1, 0.983, 64.0, 39.0, 10.0, 20.0),
        (3, 2, 0.974, 459.0, 74.0, 1.0, 54.0),
        (4, 1, 0.972, 81.0, 30.0, 4.0, 14.0),
        (4, 2, 0.871, 286.0, 25.0, 1.0, 10.0),
        (4, 3, 0.970, 107.0, 85.0, 55.0, 54.0),
        (4, 4, 0.982, 255.0, 23.0, 35.0, 64.0),
        (5, 1, 0.959, 129.0, 37.0, 3.0, 3.0),
        (5, 2, 0.651, 484.0, 36.0, 1.0, 6.0),
        (5, 3, 0.961, 409.0, 93.0, 39.0, 9.0),
        (5, 4, 0.723, 270.0, 31.0, 5.0, 50.0),
        (5, 5, 0.821, 434.0, 99.0, 1.0, 40.0),
        (6, 1, 0.969, 153.0, 37.0, 2.0, 2.0),
        (6, 2, 0.414, 492.0, 39.0, 1.0, 3.0),
        (6, 3, 0.930, 493.0, 85.0, 4.0, 8.0),
        (6, 4, 0.764, 346.0, 32.0, 1.0, 9.0),
        (6, 5, 0.791, 455.0, 75.0, 1.0, 31.0),
        (6, 6, 0.887, 424.0, 49.0, 23.0, 3.0),
        (7, 1, 0.925, 184.0, 35.0, 1.0, 1.0),
        (8, 1, 0.921, 270.0, 39.0, 1.0, 2.0),
    ];
    rows.iter()
        .map(|&(l, n, f_bar, tau_opt, eps_sd, eps_open, eps_closed)| ReferenceRow {
            l,
            n,
            f_bar,
            tau_opt,
            eps_sd,
            eps_open,
            eps_closed,
            slow_tier: sector_dim(2 * (l + 2), n + 2) > 1500,
        })
        .collect()
}

fn sector_dim(modes: usize, k: usize) -> usize {
    let mut out: usize = 1;
    for i in 0..k {
        out = out * (modes - i) / (i + 1);
    }
    out
}

/// Millielectronvolt-scale preset for the physical-units discussion:
/// t = 0.02 meV with U = 50t, V = 5t and a deeper landscape than the t = 1,
/// V = 1 defaults.
#[derive(Clone, Debug)]
pub struct ExperimentalPreset {
    pub t_mev: f64,
    pub spec: SystemSpec,
    pub tau_opt: f64,
}

pub fn experimental_preset() -> ExperimentalPreset {
    let mut spec = SystemSpec::new(3, 1, 35.0, 15.0, 11.0).unwrap();
    spec.base = HubbardParams::uniform(3, 1.0, 50.0, 5.0);
    ExperimentalPreset { t_mev: 0.02, spec, tau_opt: 71.0 }
}

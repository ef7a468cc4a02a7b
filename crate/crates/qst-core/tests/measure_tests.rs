use ndarray::prelude::*;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use qst_core::evolve::{
    dephase_propagate, propagate_ensemble, spectral_decompose, DephasingRule,
};
use qst_core::fockspace::{
    apply_annihilate, apply_create, build_basis, build_gate_basis, FockBasis, SparseOperator,
};
use qst_core::hamiltonian::{build_gate, build_total, landscape, GateMode, HubbardParams};
use qst_core::measure::{
    average_fidelity, average_fidelity_with_convergence, charge_occupancy, charge_profile,
    fidelity, log_negativity, transfer_fidelity, FidelityConvention, ModeSetup, QuadratureSpec,
    TransferSystem,
};
use qst_core::states::{
    compose_initial, densify, gate_ground_ensemble, EnsembleState, QubitState,
};
use qst_core::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_member(rng: &mut ChaCha8Rng, dim: usize) -> Array1<Complex64> {
    let mut v = Array1::from_shape_fn(dim, |_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / n);
    v
}

fn random_ensemble(rng: &mut ChaCha8Rng, basis: &Arc<FockBasis>, rank: usize) -> EnsembleState {
    let dim = basis.dim();
    let mut members = Array2::zeros((dim, rank));
    for k in 0..rank {
        members.column_mut(k).assign(&random_member(rng, dim));
    }
    let raw: Vec<f64> = (0..rank).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    EnsembleState::new(basis.clone(), weights, members).unwrap()
}

fn setup_mode(l: usize, n: usize, mode: GateMode, eps_mode: f64, eps_sd: f64, soc: Option<(f64, f64)>) -> ModeSetup {
    let ls = landscape(mode, l, eps_mode, eps_sd).unwrap();
    let mut params = HubbardParams::uniform(l, 1.0, 50.0, 1.0).with_eps(ls.eps.clone()).unwrap();
    if let Some((a, b)) = soc {
        params = params.with_soc(a, b);
    }
    let total_basis = Arc::new(build_basis(l, n + 2, None).unwrap());
    let gate_basis = Arc::new(build_gate_basis(l, n, None).unwrap());
    let h_gate = build_gate(&params, &gate_basis).unwrap();
    let gate_ens = gate_ground_ensemble(&h_gate, &gate_basis, None).unwrap();
    let h = build_total(&params, &total_basis).unwrap();
    let spectrum = Arc::new(spectral_decompose(&h).unwrap());
    ModeSetup { total_basis, gate_ens, spectrum }
}

fn l3_system(soc: Option<(f64, f64)>) -> TransferSystem {
    TransferSystem {
        open: setup_mode(3, 1, GateMode::Open, 10.0, 39.0, soc),
        closed: setup_mode(3, 1, GateMode::Closed, 20.0, 39.0, soc),
    }
}

#[test]
fn fidelity_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let basis = Arc::new(build_gate_basis(3, 2, None).unwrap());
    let a = random_ensemble(&mut rng, &basis, 3);
    let b = random_ensemble(&mut rng, &basis, 4);
    let da = densify(&a).unwrap();

    for conv in [FidelityConvention::Root, FidelityConvention::Squared] {
        assert!((fidelity(&a, &a, conv).unwrap() - 1.0).abs() < 1e-12);
        assert!((fidelity(&da, &da, conv).unwrap() - 1.0).abs() < 1e-12);
        let fab = fidelity(&a, &b, conv).unwrap();
        assert!((fab - fidelity(&b, &a, conv).unwrap()).abs() < 1e-12);
        assert!(fab < 0.999);
    }
    let root = fidelity(&a, &b, FidelityConvention::Root).unwrap();
    let sq = fidelity(&a, &b, FidelityConvention::Squared).unwrap();
    assert!((sq - root * root).abs() < 1e-12);
    assert!(sq <= root);

    // orthogonal pure states
    let dim = basis.dim();
    let mut e0: Array1<Complex64> = Array1::zeros(dim);
    let mut e1: Array1<Complex64> = Array1::zeros(dim);
    e0[0] = Complex64::ONE;
    e1[1] = Complex64::ONE;
    let p0 = EnsembleState::pure(basis.clone(), e0).unwrap();
    let p1 = EnsembleState::pure(basis.clone(), e1).unwrap();
    assert!(fidelity(&p0, &p1, FidelityConvention::Root).unwrap() < 1e-12);

    let other = Arc::new(build_gate_basis(3, 1, None).unwrap());
    let q = random_ensemble(&mut rng, &other, 2);
    assert!(matches!(fidelity(&a, &q, FidelityConvention::Root), Err(Error::Dimension(_))));
}

#[test]
fn low_rank_fidelity_matches_dense_path() {
    let basis = Arc::new(build_basis(3, 3, None).unwrap());
    assert_eq!(basis.dim(), 120);
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let a = random_ensemble(&mut rng, &basis, 4);
        let b = random_ensemble(&mut rng, &basis, 4);
        let (da, db) = (densify(&a).unwrap(), densify(&b).unwrap());
        let conv = FidelityConvention::Root;
        let dense = fidelity(&da, &db, conv).unwrap();
        for f in [
            fidelity(&a, &b, conv).unwrap(),
            fidelity(&a, &db, conv).unwrap(),
            fidelity(&da, &b, conv).unwrap(),
        ] {
            assert!((f - dense).abs() < 1e-10, "path disagrees: {f} vs {dense}");
        }
    }
}

#[test]
fn quadrature_nodes_integrate_bloch_moments() {
    let single = QuadratureSpec::SinglePoint.nodes().unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].1, 1.0);
    assert_eq!(single[0].0.amp_up, Complex64::ONE);

    let nodes = QuadratureSpec::Grid { n_theta: 12, n_phi: 12 }.nodes().unwrap();
    assert_eq!(nodes.len(), 144);
    let wsum: f64 = nodes.iter().map(|(_, w)| w).sum();
    assert!((wsum - 1.0).abs() < 1e-13);

    // Gauss nodes in u = cosθ are exact for polynomials up to degree 23
    for k in 0..=23usize {
        let m: f64 = nodes
            .iter()
            .map(|(psi, w)| {
                let u = 2.0 * psi.amp_up.norm_sqr() - 1.0;
                w * u.powi(k as i32)
            })
            .sum();
        let want = if k % 2 == 0 { 1.0 / (k as f64 + 1.0) } else { 0.0 };
        assert!((m - want).abs() < 1e-12, "cosθ moment {k}: {m} vs {want}");
    }
    // the uniform φ grid kills every harmonic below its order
    for m in 1..12usize {
        let z: Complex64 = nodes
            .iter()
            .map(|(psi, w)| {
                let phi = psi.amp_down.arg();
                Complex64::from_polar(*w, m as f64 * phi)
            })
            .sum();
        assert!(z.norm() < 1e-12, "φ harmonic {m} survives: {z}");
    }

    assert!(QuadratureSpec::Grid { n_theta: 0, n_phi: 4 }.nodes().is_err());
    assert_eq!(QuadratureSpec::recommended(false), QuadratureSpec::SinglePoint);
    assert_eq!(QuadratureSpec::recommended(true), QuadratureSpec::Grid { n_theta: 12, n_phi: 12 });
}

#[test]
fn single_point_average_is_exact_without_soc() {
    let sys = l3_system(None);
    let conv = FidelityConvention::Squared;
    let tau = 64.0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reference = transfer_fidelity(&sys, GateMode::Open, tau, &QubitState::up(), conv).unwrap();
    for _ in 0..20 {
        let theta = rng.random::<f64>() * std::f64::consts::PI;
        let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let f = transfer_fidelity(&sys, GateMode::Open, tau, &QubitState::bloch(theta, phi), conv).unwrap();
        assert!((f - reference).abs() < 1e-10, "spin-rotation covariance broken: {f} vs {reference}");
    }

    let grid = QuadratureSpec::Grid { n_theta: 12, n_phi: 12 };
    let averaged = average_fidelity(&sys, GateMode::Open, tau, &grid, conv).unwrap();
    let single = average_fidelity(&sys, GateMode::Open, tau, &QuadratureSpec::SinglePoint, conv).unwrap();
    assert!((averaged - single).abs() < 1e-10);

    let (value, shift) = average_fidelity_with_convergence(&sys, GateMode::Open, tau, &QuadratureSpec::SinglePoint, conv).unwrap();
    assert_eq!(shift, 0.0);
    assert_eq!(value, single);
}

#[test]
fn averaged_fidelity_matches_operating_point() {
    let sys = l3_system(None);
    let conv = FidelityConvention::Squared;
    let quad = QuadratureSpec::SinglePoint;

    let open = average_fidelity(&sys, GateMode::Open, 64.0, &quad, conv).unwrap();
    assert!((open - 0.983).abs() <= 0.005, "open transfer at the operating time: {open}");

    for tau in [0.0, 125.0, 250.0, 375.0, 500.0] {
        let f = average_fidelity(&sys, GateMode::Closed, tau, &quad, conv).unwrap();
        assert!(f >= 0.98, "closed hold leaks at tau={tau}: {f}");
    }
    assert!((average_fidelity(&sys, GateMode::Closed, 0.0, &quad, conv).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn grid_average_converges_under_spin_orbit_coupling() {
    let sys = l3_system(Some((0.1, 0.05)));
    let conv = FidelityConvention::Squared;
    let tau = 64.0;

    // coupling breaks the spin-rotation covariance, so the grid is earning its keep
    let up = transfer_fidelity(&sys, GateMode::Open, tau, &QubitState::up(), conv).unwrap();
    let side = transfer_fidelity(&sys, GateMode::Open, tau, &QubitState::bloch(1.3, 0.4), conv).unwrap();
    assert!((up - side).abs() > 1e-6, "coupled run should depend on the input spin");

    let grid = QuadratureSpec::Grid { n_theta: 12, n_phi: 12 };
    let (value, shift) = average_fidelity_with_convergence(&sys, GateMode::Open, tau, &grid, conv).unwrap();
    assert!(shift < 1e-8, "doubling the grid moved the average by {shift}");
    assert!(value > 0.0 && value < 1.0);
}

#[test]
fn charge_profiles_match_reference_configurations() {
    let sys = l3_system(None);
    let open = &sys.open;
    let init = compose_initial(&QubitState::up(), &open.gate_ens, &open.total_basis).unwrap();

    let profile = charge_profile(&init).unwrap();
    assert_eq!(profile.len(), 5);
    assert!((profile[0] - 1.0).abs() < 1e-10);
    assert!((profile[4] - 1.0).abs() < 1e-10);
    assert!((profile[1] - profile[3]).abs() < 1e-10);
    assert!((profile[1] - 0.49056261).abs() < 1e-7);
    assert!((profile[2] - 0.01887478).abs() < 1e-7);
    assert!(profile[2] < 0.02);
    let total: f64 = profile.iter().sum();
    assert!((total - 3.0).abs() < 1e-10);

    // dense path sees the same numbers
    let dense = densify(&init).unwrap();
    for k in 0..5 {
        assert!((charge_occupancy(&dense, k).unwrap() - profile[k]).abs() < 1e-10);
    }

    // conservation along the evolution
    let evolved = propagate_ensemble(&open.spectrum, &init, 37.3).unwrap();
    let moved: f64 = charge_profile(&evolved).unwrap().iter().sum();
    assert!((moved - 3.0).abs() < 1e-10);

    // closed landscape pins the gate electron on the middle site
    let closed_profile = charge_profile(&sys.closed.gate_ens).unwrap();
    assert!((closed_profile[1] - 0.99507377).abs() < 1e-7);
    assert!(closed_profile[1] > 0.99);
    assert!((closed_profile[0] - closed_profile[2]).abs() < 1e-10);

    assert!(charge_occupancy(&init, 5).is_err());
}

#[test]
fn half_filled_chain_pins_edges_and_spreads_the_rest() {
    let ls = landscape(GateMode::Open, 6, 1.0, 39.0).unwrap();
    let params = HubbardParams::uniform(6, 1.0, 50.0, 1.0).with_eps(ls.eps.clone()).unwrap();
    let gate_basis = Arc::new(build_gate_basis(6, 4, None).unwrap());
    let h_gate = build_gate(&params, &gate_basis).unwrap();
    let ground = gate_ground_ensemble(&h_gate, &gate_basis, None).unwrap();

    let profile = charge_profile(&ground).unwrap();
    let expected = [0.950870, 0.572115, 0.477016, 0.477016, 0.572115, 0.950870];
    for (k, (&got, &want)) in profile.iter().zip(&expected).enumerate() {
        assert!((got - want).abs() < 1e-5, "site {k}: {got} vs {want}");
    }
    assert!(profile[0] > 0.9 && profile[5] > 0.9);
    for k in 1..5 {
        assert!(profile[k] > 0.3 && profile[k] < 0.7, "inner site {k} not delocalized: {}", profile[k]);
    }
    let total: f64 = profile.iter().sum();
    assert!((total - 4.0).abs() < 1e-10);
}

#[test]
fn negativity_tracks_the_transfer() {
    let sys = l3_system(None);
    let open = &sys.open;
    let init = compose_initial(&QubitState::up(), &open.gate_ens, &open.total_basis).unwrap();

    // the composed initial state is a mixture of products across the cut
    let chi0 = log_negativity(&densify(&init).unwrap()).unwrap();
    assert!(chi0 < 1e-10, "separable start shows negativity {chi0}");

    let pinned = [
        (5.0, 0.4328191548),
        (10.0, 0.6778556172),
        (16.0, 0.5873072920),
        (20.0, 0.6779743414),
        (32.5, 0.6422910744),
        (40.0, 0.5767518762),
        (50.0, 0.7266798551),
        (60.0, 0.4660941746),
        (65.0, 0.3475563518),
    ];
    let mut at_opt = f64::NAN;
    for &(tau, want) in &pinned {
        let evolved = propagate_ensemble(&open.spectrum, &init, tau).unwrap();
        let chi = log_negativity(&densify(&evolved).unwrap()).unwrap();
        assert!((chi - want).abs() < 1e-8, "chi({tau}) = {chi}, expected {want}");
        if tau == 65.0 {
            at_opt = chi;
        }
    }
    // entanglement builds up mid-transfer and recedes to its minimum when the
    // spin has landed on the drain
    for &(tau, want) in &pinned[..pinned.len() - 1] {
        assert!(at_opt < want, "chi at the transfer time should undercut chi({tau})");
    }
}

#[test]
fn negativity_calibrates_on_qubit_pairs() {
    // one gate site flanked by the two leads, two electrons
    let basis = Arc::new(build_basis(1, 2, None).unwrap());
    let up_pair = (1u32 << 0) | (1 << 1);
    let down_pair = (1u32 << 3) | (1 << 4);
    let (i_up, i_down) = (
        basis.index_of(up_pair).unwrap(),
        basis.index_of(down_pair).unwrap(),
    );

    let mut product: Array1<Complex64> = Array1::zeros(basis.dim());
    product[i_up] = Complex64::ONE;
    let rho = densify(&EnsembleState::pure(basis.clone(), product).unwrap()).unwrap();
    assert!(log_negativity(&rho).unwrap() < 1e-12);

    let mut bell: Array1<Complex64> = Array1::zeros(basis.dim());
    bell[i_up] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    bell[i_down] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let rho = densify(&EnsembleState::pure(basis.clone(), bell).unwrap()).unwrap();
    let chi = log_negativity(&rho).unwrap();
    assert!((chi - 1.0).abs() < 1e-10, "maximally entangled pair: {chi}");
}

#[test]
fn negativity_ignores_local_rotations() {
    let sys = l3_system(None);
    let open = &sys.open;
    let basis = &open.total_basis;
    let init = compose_initial(&QubitState::up(), &open.gate_ens, basis).unwrap();
    let evolved = propagate_ensemble(&open.spectrum, &init, 10.0).unwrap();
    let rho = densify(&evolved).unwrap();
    let chi = log_negativity(&rho).unwrap();
    assert!(chi > 0.5);

    // hopping restricted to the gate chain generates a gate-local unitary
    let mut gate_only = HubbardParams::uniform(3, 1.0, 0.0, 0.0);
    gate_only.t_bonds[0] = 0.0;
    gate_only.t_bonds[3] = 0.0;
    let h_gate_local = build_total(&gate_only, basis).unwrap();
    let spec = spectral_decompose(&h_gate_local).unwrap();
    let rotated = dephase_propagate(&spec, &rho, 0.7, 0.0, DephasingRule::AllOffDiagonal).unwrap();
    let chi_rot = log_negativity(&rotated).unwrap();
    assert!((chi_rot - chi).abs() < 1e-10, "gate-local rotation moved chi: {chi_rot} vs {chi}");

    // spin flips on source and drain generate a leads-local unitary
    let s_sites = basis.order.n_sites;
    let mut triplets = Vec::new();
    for site in [0, s_sites - 1] {
        let (mu, md) = (site, s_sites + site);
        for (col, &w) in basis.states.iter().enumerate() {
            for (from, to) in [(mu, md), (md, mu)] {
                if let Some((w1, s1)) = apply_annihilate(w, from) {
                    if let Some((w2, s2)) = apply_create(w1, to) {
                        triplets.push((basis.index_of(w2).unwrap(), col, c(s1 * s2, 0.0)));
                    }
                }
            }
        }
    }
    let h_leads_local = SparseOperator::from_triplets(basis.dim(), triplets);
    let spec = spectral_decompose(&h_leads_local).unwrap();
    let rotated = dephase_propagate(&spec, &rho, 1.3, 0.0, DephasingRule::AllOffDiagonal).unwrap();
    let chi_rot = log_negativity(&rotated).unwrap();
    assert!((chi_rot - chi).abs() < 1e-10, "leads-local rotation moved chi: {chi_rot} vs {chi}");
}

#[test]
fn negativity_guards_its_domain() {
    // gate-only basis has no leads partition
    let gate_basis = Arc::new(build_gate_basis(3, 1, None).unwrap());
    let mut v: Array1<Complex64> = Array1::zeros(gate_basis.dim());
    v[0] = Complex64::ONE;
    let rho = densify(&EnsembleState::pure(gate_basis, v).unwrap()).unwrap();
    assert!(matches!(log_negativity(&rho), Err(Error::Parameter(_))));

    // six device sites exceed the embedding cap
    let wide = Arc::new(build_basis(4, 2, None).unwrap());
    let mut v: Array1<Complex64> = Array1::zeros(wide.dim());
    v[0] = Complex64::ONE;
    let rho = densify(&EnsembleState::pure(wide, v).unwrap()).unwrap();
    assert!(matches!(log_negativity(&rho), Err(Error::SizeGuard(_))));
}

use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qst_core::fockspace::{
    annihilator_dense, apply_create, build_basis, build_gate_basis, embed_site_tensor, hop_matrix,
    number_matrix, occ_bit, project_site_tensor, ModeOrder, Spin,
};

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn sector_dimensions() {
    assert_eq!(build_basis(3, 3, None).unwrap().dim(), 120);
    assert_eq!(build_basis(3, 1, Some(1)).unwrap().dim(), 5);
    assert_eq!(build_basis(6, 8, None).unwrap().dim(), 12870);
    assert_eq!(build_basis(3, 0, None).unwrap().dim(), 1);
    assert_eq!(build_basis(1, 6, None).unwrap().dim(), 1);
    assert_eq!(build_gate_basis(3, 1, None).unwrap().dim(), 6);
}

#[test]
fn sector_enumeration_sorted_and_deterministic() {
    let b1 = build_basis(4, 3, None).unwrap();
    let b2 = build_basis(4, 3, None).unwrap();
    assert_eq!(b1.states, b2.states);
    for w in &b1.states {
        assert_eq!(w.count_ones(), 3);
    }
    for pair in b1.states.windows(2) {
        assert!(pair[0] < pair[1]);
    }
    for (i, &w) in b1.states.iter().enumerate() {
        assert_eq!(b1.index_of(w), Some(i));
    }
}

#[test]
fn invalid_sectors_rejected() {
    assert!(build_basis(3, 11, None).is_err());
    // parity-incompatible spin projection
    assert!(build_basis(3, 2, Some(1)).is_err());
    // more up electrons than up modes
    assert!(build_gate_basis(2, 3, Some(3)).is_err());
}

#[test]
fn mode_order_is_spin_major() {
    let order = ModeOrder::full(3);
    assert_eq!(order.modes(), 10);
    for site in 0..order.n_sites {
        for site2 in 0..order.n_sites {
            assert!(order.mode_index(site, Spin::Up) < order.mode_index(site2, Spin::Down));
        }
    }
    assert_eq!(order.site_label(0), "s");
    assert_eq!(order.site_label(2), "2");
    assert_eq!(order.site_label(4), "d");
}

#[test]
fn hop_signs_match_hand_enumeration() {
    // L=3 device, one electron: c†_{1u} c_{su} crosses no occupied mode
    let b = build_basis(3, 1, None).unwrap();
    let order = b.order;
    let su = order.mode_index(0, Spin::Up);
    let u1 = order.mode_index(1, Spin::Up);
    let hop = hop_matrix(&b, u1, su).unwrap();
    let src = b.index_of(1u32 << su).unwrap();
    let dst = b.index_of(1u32 << u1).unwrap();
    let dense = hop.to_dense();
    assert_eq!(dense[[dst, src]], c64(1.0, 0.0));

    // two electrons: c†_{du} c_{su} crosses the occupied mode 1u, sign -1
    let b2 = build_basis(3, 2, None).unwrap();
    let du = order.mode_index(4, Spin::Up);
    let w_in = (1u32 << su) | (1u32 << u1);
    let w_out = (1u32 << u1) | (1u32 << du);
    let hop2 = hop_matrix(&b2, du, su).unwrap();
    let dense2 = hop2.to_dense();
    assert_eq!(dense2[[b2.index_of(w_out).unwrap(), b2.index_of(w_in).unwrap()]], c64(-1.0, 0.0));
}

#[test]
fn hop_is_adjoint_of_reverse_hop() {
    let b = build_basis(2, 3, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let i = rng.random_range(0..b.order.modes());
        let mut j = rng.random_range(0..b.order.modes());
        if j == i {
            j = (j + 1) % b.order.modes();
        }
        let a = hop_matrix(&b, i, j).unwrap();
        let bt = hop_matrix(&b, j, i).unwrap().adjoint();
        assert_eq!(a.indptr, bt.indptr);
        assert_eq!(a.indices, bt.indices);
        assert_eq!(a.data, bt.data);
    }
}

#[test]
fn anticommutators_brute_force() {
    // full Fock spaces with M = 6 and M = 8 modes
    for order in [ModeOrder::full(1), ModeOrder::full(2)] {
        let m = order.modes();
        let ops: Vec<_> = (0..m).map(|k| annihilator_dense(order, k).unwrap()).collect();
        for i in 0..m {
            for j in i..m {
                let ci = &ops[i];
                let cj = &ops[j];
                let anti = ci.dot(cj) + cj.dot(ci);
                assert!(anti.iter().all(|z| z.norm() == 0.0), "{{c_{i}, c_{j}}} != 0");
                let cjd = cj.t().mapv(|z| z.conj());
                let mixed = ci.dot(&cjd) + cjd.dot(ci);
                for (idx, z) in mixed.indexed_iter() {
                    let want = if i == j && idx.0 == idx.1 { 1.0 } else { 0.0 };
                    assert_eq!(*z, c64(want, 0.0), "{{c_{i}, c†_{j}}} mismatch at {idx:?}");
                }
            }
        }
    }
}

#[test]
fn number_matrix_counts_occupations() {
    let b = build_basis(3, 1, Some(1)).unwrap();
    for site in 0..5 {
        let n = number_matrix(&b, site, None).unwrap();
        let tr: Complex64 = n.to_dense().diag().sum();
        assert_eq!(tr, c64(1.0, 0.0));
    }

    let order = ModeOrder::gate(1);
    let bg = build_gate_basis(1, 2, None).unwrap();
    let both = (1u32 << order.mode_index(0, Spin::Up)) | (1u32 << order.mode_index(0, Spin::Down));
    let idx = bg.index_of(both).unwrap();
    let nu = number_matrix(&bg, 0, Some(Spin::Up)).unwrap().to_dense();
    let nd = number_matrix(&bg, 0, Some(Spin::Down)).unwrap().to_dense();
    assert_eq!(nu[[idx, idx]] * nd[[idx, idx]], c64(1.0, 0.0));
}

#[test]
fn number_matrix_rejects_unknown_site() {
    let b = build_basis(3, 1, None).unwrap();
    assert!(number_matrix(&b, 5, None).is_err());
    assert!(hop_matrix(&b, 2, 2).is_err());
}

#[test]
fn embed_single_occupation() {
    let b = build_basis(3, 1, None).unwrap();
    let mut v: Array1<Complex64> = Array1::zeros(b.dim());
    let su = b.order.mode_index(0, Spin::Up);
    v[b.index_of(1u32 << su).unwrap()] = c64(1.0, 0.0);
    let t = embed_site_tensor(&b, &v).unwrap();
    assert_eq!(t.len(), 1024);
    // site 0 is the slowest tensor index; digit 1 = spin up
    assert_eq!(t[256], c64(1.0, 0.0));
    assert_eq!(t.iter().filter(|z| **z != c64(0.0, 0.0)).count(), 1);
}

#[test]
fn embed_preserves_norm_and_roundtrips() {
    let b = build_basis(3, 3, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let mut v: Array1<Complex64> =
            Array1::from_iter((0..b.dim()).map(|_| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)));
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.mapv_inplace(|z| z / norm);
        let t = embed_site_tensor(&b, &v).unwrap();
        let tnorm = t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((tnorm - 1.0).abs() < 1e-12);
        let back = project_site_tensor(&b, &t).unwrap();
        for (x, y) in back.iter().zip(v.iter()) {
            assert!((x - y).norm() < 1e-14);
        }
    }
}

#[test]
fn embed_guard_rejects_large_devices() {
    let b = build_basis(4, 1, None).unwrap();
    let v: Array1<Complex64> = Array1::zeros(b.dim());
    assert!(embed_site_tensor(&b, &v).is_err());
}

#[test]
fn create_then_annihilate_is_occupation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let w: u32 = rng.random_range(0..1 << 8);
        let mode = rng.random_range(0..8);
        match apply_create(w, mode) {
            Some((w2, s)) => {
                assert_eq!(occ_bit(w, mode), 0);
                assert_eq!(occ_bit(w2, mode), 1);
                assert_eq!(s.abs(), 1.0);
            }
            None => assert_eq!(occ_bit(w, mode), 1),
        }
    }
}

mod common;

use aligned_mtl::aggregate::{align, align_ub, align_with_spectrum, SharedRepGradients, TaskWeights};
use aligned_mtl::diagnostics::stability_report;
use aligned_mtl::linalg::{dot, gram, norm, sym_eigh, task_spectrum, Matrix};
use aligned_mtl::Error;
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (ChaCha8Rng, Matrix, TaskWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(1..=6);
    let n = rng.random_range(t..=16);
    let kappa = 10f64.powf(rng.random_range(0.0..4.0));
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let g = with_condition(&mut rng, n, t, kappa, scale);
    let w = random_weights(&mut rng, t);
    (rng, g, w)
}

#[test]
fn hand_executed_examples() {
    let g = Matrix::from_columns(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let res = align(&g, &TaskWeights::uniform(2)).unwrap();
    assert!(rel_err(&res.alpha, &[0.25, 0.5]) < 1e-15);
    assert!(rel_err(&res.g_hat0, &[0.5, 0.5]) < 1e-15);
    assert!((res.sigma - 1.0).abs() < 1e-15);

    let same = Matrix::from_columns(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let res = align(&same, &TaskWeights::uniform(2)).unwrap();
    assert_eq!(res.rank, 1);
    assert!(rel_err(&res.g_hat0, &[1.0, 0.0]) < 1e-15);
    assert!(rel_err(&res.alpha, &[0.5, 0.5]) < 1e-15);

    assert!(matches!(align(&Matrix::zeros(3, 2), &TaskWeights::uniform(2)), Err(Error::ZeroGradient)));
}

#[test]
fn orthogonal_equal_norms_are_left_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let q = from_na(&(orthonormal(&mut rng, 7, 3) * 2.5));
    let w = TaskWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
    let res = align(&q, &w).unwrap();
    assert!(rel_err(&res.alpha, w.as_slice()) < 1e-12);
    assert!(rel_err(&res.g_hat0, &q.matvec(w.as_slice()).unwrap()) < 1e-12);
}

#[test]
fn aligned_system_is_perfectly_conditioned() {
    for seed in 0..200 {
        let (_, g, w) = instance(seed);
        let res = align(&g, &w).unwrap();
        let report = stability_report(&res.aligned_matrix(&g).unwrap()).unwrap();
        assert!((report.kappa - 1.0).abs() < 1e-6);
        assert!((report.gms_min - 1.0).abs() < 1e-6);
        if g.cols() > 1 {
            assert!(report.cos_min.abs() < 1e-6);
        }
    }
}

#[test]
fn ub_with_identity_jacobian_is_align() {
    for seed in 0..50 {
        let (_, g, w) = instance(seed);
        let a = align(&g, &w).unwrap();
        let b = align_ub(&SharedRepGradients::identity(g.clone()), &w).unwrap();
        assert!(rel_err(&b.g_hat0, &a.g_hat0) < 1e-14);
    }
}

#[test]
fn ub_with_aligned_representation_is_linear_scalarisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let z = from_na(&orthonormal(&mut rng, 6, 3)).scale(0.7);
    let j = gaussian(&mut rng, 9, 6);
    let w = TaskWeights::new(vec![0.5, 0.1, 0.4]).unwrap();
    let rep = SharedRepGradients::new(z.clone(), j.clone()).unwrap();
    let res = align_ub(&rep, &w).unwrap();
    let expected = j.matvec(&z.matvec(w.as_slice()).unwrap()).unwrap();
    assert!(rel_err(&res.g_hat0, &expected) < 1e-12);
    assert!(SharedRepGradients::new(z, gaussian(&mut rng, 9, 5)).is_err());
}

/// Assembles `σ_min U Vᵀ` from two independent symmetric eigendecompositions:
/// `GᵀG` for `V` and `GGᵀ` for `U`, matching signs through `G v`.
fn parameter_space_alignment(g: &Matrix) -> Matrix {
    let t = g.cols();
    let right = sym_eigh(&gram(g)).unwrap();
    let left = sym_eigh(&gram(&g.transpose())).unwrap();
    let sigma_min = right.eigenvalues[t - 1].sqrt();
    let mut out = Matrix::zeros(g.rows(), t);
    for r in 0..t {
        let v = right.eigenvector(r);
        let mut u = left.eigenvector(r);
        if dot(&u, &g.matvec(&v).unwrap()) < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..g.rows() {
            for k in 0..t {
                out[(i, k)] += sigma_min * u[i] * v[k];
            }
        }
    }
    out
}

#[test]
fn task_space_route_matches_parameter_space_route() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let t = rng.random_range(2..=5);
        let n = rng.random_range(t..=10);
        // distinct, well separated singular values keep the eigenvector
        // oracle well defined
        let s: Vec<f64> = (0..t).map(|i| 3.0 * 0.6f64.powi(i as i32)).collect();
        let g = with_singular_values(&mut rng, n, &s);
        let res = align(&g, &TaskWeights::uniform(t)).unwrap();
        let task_space = res.aligned_matrix(&g).unwrap();
        let via_eigh = parameter_space_alignment(&g);
        let via_svd = polar(&g).scale(res.sigma);
        let scale = task_space.frobenius_norm();
        assert!(fro_dist(&task_space, &via_eigh) <= 1e-8 * scale);
        assert!(fro_dist(&task_space, &via_svd) <= 1e-8 * scale);
    }
}

#[test]
fn weight_projections_explain_the_inner_product() {
    // ⟨g₀, ĝ₀⟩ = Σ σ_R σᵣ (wᵀvᵣ)²
    for seed in 0..50 {
        let (_, g, w) = instance(seed);
        let res = align(&g, &w).unwrap();
        let s = res.spectrum.singular_values();
        let expected: f64 = s.iter().zip(&res.weight_projections).map(|(sr, p)| res.sigma * sr * p * p).sum();
        let g0 = g.matvec(w.as_slice()).unwrap();
        let ip = dot(&g0, &res.g_hat0);
        assert!((ip - expected).abs() <= 1e-10 * expected.abs().max(1e-300) + 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn positive_homogeneity(seed in any::<u64>(), log_c in -4.0f64..4.0) {
        let (_, g, w) = instance(seed);
        let c = 10f64.powf(log_c);
        let a = align(&g, &w).unwrap().g_hat0;
        let b = align(&g.scale(c), &w).unwrap().g_hat0;
        let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
        prop_assert!(rel_err(&b, &scaled) <= 1e-9 || norm(&scaled) < 1e-300);
    }

    #[test]
    fn rotation_equivariance(seed in any::<u64>()) {
        let (mut rng, g, w) = instance(seed);
        let r = from_na(&orthonormal(&mut rng, g.rows(), g.rows()));
        let a = align(&g, &w).unwrap().g_hat0;
        let b = align(&r.matmul(&g).unwrap(), &w).unwrap().g_hat0;
        let ra = r.matvec(&a).unwrap();
        let scale = norm(&a).max(g.max_abs() * 1e-12);
        let diff: f64 = b.iter().zip(&ra).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-8 * scale.max(1.0) , "diff {diff}");
    }

    #[test]
    fn permutation_invariance(seed in any::<u64>()) {
        let (mut rng, g, w) = instance(seed);
        let t = g.cols();
        let mut perm: Vec<usize> = (0..t).collect();
        for i in (1..t).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let gp = g.select_columns(&perm);
        let wp = TaskWeights::new(perm.iter().map(|&i| w[i]).collect()).unwrap();
        let a = align(&g, &w).unwrap().g_hat0;
        let b = align(&gp, &wp).unwrap().g_hat0;
        prop_assert!(rel_err(&b, &a) <= 1e-9 || norm(&a) < 1e-300);
    }

    #[test]
    fn eigenvector_signs_do_not_matter(seed in any::<u64>(), flips in any::<u8>()) {
        let (_, g, w) = instance(seed);
        let base = task_spectrum(&g);
        let mut flipped = base.clone();
        for r in 0..g.cols() {
            if flips >> (r % 8) & 1 == 1 {
                for i in 0..g.cols() {
                    flipped.eigenvectors[(i, r)] = -flipped.eigenvectors[(i, r)];
                }
            }
        }
        let a = align_with_spectrum(&g, &w, base).unwrap();
        let b = align_with_spectrum(&g, &w, flipped).unwrap();
        prop_assert!(b.balance.sub(&a.balance).unwrap().max_abs() <= 1e-12 * a.balance.max_abs());
        prop_assert!(rel_err(&b.alpha, &a.alpha) <= 1e-12 || norm(&a.alpha) == 0.0);
        prop_assert!(rel_err(&b.g_hat0, &a.g_hat0) <= 1e-12 || norm(&a.g_hat0) == 0.0);
    }

    #[test]
    fn alignment_never_opposes_the_weighted_gradient(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.random_range(1..=6);
        let n = rng.random_range(1..=10);
        let r = rng.random_range(1..=t);
        let g = low_rank(&mut rng, n, t, r);
        let w = random_weights(&mut rng, t);
        let res = align(&g, &w).unwrap();
        let g0 = g.matvec(w.as_slice()).unwrap();
        prop_assert!(dot(&g0, &res.g_hat0) >= -1e-12);
        prop_assert!(res.rank <= r);
    }
}

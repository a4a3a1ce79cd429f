use proptest::prelude::*;
use risce_core::channel::{
    assemble_cascaded, effective_channel, effective_channel_cascaded, sample_cascaded, RisPhase, SystemConfig,
};
use risce_core::estimators::{
    empirical_correlation, lmmse_single, ls_double, ls_single, nmse, NoiseConvention, NoiseScalar,
};
use risce_core::numerics::{left_pinv, sample_cn};
use risce_core::pilot::{build_single_schedule, synthesize_double_rx, synthesize_single_rx, SingleLink};
use risce_core::{CMatrix, Complex, RngStream};

fn random_phase(n: usize, rng: &mut RngStream) -> RisPhase<f64> {
    let p: Vec<f64> = (0..n).map(|_| rng.uniform() * std::f64::consts::TAU).collect();
    RisPhase::new(rng.uniform(), &p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, l in 1usize..6, n in 1usize..6) {
        let mut rng = RngStream::new(seed, 0);
        let a = sample_cn::<f64>(m, k, 1.0, &mut rng);
        let b = sample_cn::<f64>(k, l, 1.0, &mut rng);
        let c = sample_cn::<f64>(l, n, 1.0, &mut rng);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.rel_diff(&right) < 1e-10);
    }

    #[test]
    fn fro_norm_is_adjoint_invariant(seed in any::<u64>(), m in 1usize..9, n in 1usize..9) {
        let a = sample_cn::<f64>(m, n, 1.0, &mut RngStream::new(seed, 1));
        prop_assert_eq!(a.fro_norm_sq(), a.conj_transpose().fro_norm_sq());
    }

    #[test]
    fn pinv_is_left_inverse(seed in any::<u64>(), n in 1usize..7, extra in 0usize..6) {
        let a = sample_cn::<f64>(n + extra, n, 1.0, &mut RngStream::new(seed, 2));
        let p = left_pinv(&a).unwrap();
        prop_assert!(p.matmul(&a).unwrap().max_abs_diff(&CMatrix::identity(n)) < 1e-8);
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), stream in any::<u64>()) {
        let a = sample_cn::<f64>(3, 3, 0.5, &mut RngStream::new(seed, stream));
        let b = sample_cn::<f64>(3, 3, 0.5, &mut RngStream::new(seed, stream));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn nmse_is_rotation_invariant(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 3);
        let h = sample_cn::<f64>(5, 3, 1.0, &mut rng);
        let est = sample_cn::<f64>(5, 3, 1.0, &mut rng);
        let g = sample_cn::<f64>(5, 5, 1.0, &mut rng);
        let q = orthonormalize(&g);
        let a = nmse(std::slice::from_ref(&est), std::slice::from_ref(&h)).unwrap();
        let b = nmse(&[q.matmul(&est).unwrap()], &[q.matmul(&h).unwrap()]).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
    }
}

fn orthonormalize(g: &CMatrix) -> CMatrix {
    let n = g.cols();
    let mut q = CMatrix::zeros(g.rows(), n);
    for j in 0..n {
        let mut v = g.column(j);
        for k in 0..j {
            let qk = q.column(k);
            let dot = qk.iter().zip(&v).fold(Complex::new(0.0, 0.0), |a, (x, y)| a + x.conj() * y);
            for (vi, qi) in v.iter_mut().zip(&qk) {
                *vi -= dot * qi;
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<_> = v.into_iter().map(|z| z / nrm).collect();
        q.set_column(j, &v);
    }
    q
}

fn desk_system() -> SystemConfig {
    SystemConfig {
        antennas: 16,
        elements: 8,
        ..SystemConfig::default()
    }
}

#[test]
fn cascaded_form_matches_direct_form() {
    let cfg = desk_system();
    let base = RngStream::new(11, 0);
    for t in 0..100 {
        let (cs, cc) = sample_cascaded::<f64>(&cfg, 0, &base.derive(t)).unwrap();
        assert_eq!(assemble_cascaded(&cs).unwrap(), cc);
        let mut r = base.derive(1000 + t);
        let t1 = random_phase(8, &mut r);
        let t2 = random_phase(8, &mut r);
        let direct = CMatrix::column_vector(&effective_channel(&cs, &t1, &t2).unwrap());
        let cascaded = CMatrix::column_vector(&effective_channel_cascaded(&cc, &t1, &t2).unwrap());
        assert!(direct.rel_diff(&cascaded) < 1e-9);
    }
}

#[test]
fn ls_single_is_unbiased() {
    let (m, n) = (4, 3);
    let mut rng = RngStream::new(12, 0);
    let h = sample_cn::<f64>(m, n, 1.0, &mut rng);
    let sched = build_single_schedule::<f64>(SingleLink::Ris1, n, n).unwrap();
    let trials = 10_000;
    let var = 1.0;
    let mut sum = CMatrix::zeros(m, n);
    for _ in 0..trials {
        let y = synthesize_single_rx(&h, &sched, var, &mut rng).unwrap();
        sum = sum.add(&ls_single(&y, sched.phi()).unwrap().sub(&h).unwrap()).unwrap();
    }
    let mean = sum.scale(1.0 / trials as f64);
    // per-entry residual variance σ²/I, each part half of it
    let se = (var / n as f64 / 2.0 / trials as f64).sqrt();
    for z in mean.as_slice() {
        assert!(z.re.abs() < 4.0 * se && z.im.abs() < 4.0 * se, "{z}");
    }
}

#[test]
fn ls_double_residual_matches_colored_noise_trace() {
    let cfg = desk_system();
    let (_, cc) = sample_cascaded::<f64>(&cfg, 0, &RngStream::new(13, 0)).unwrap();
    let var = 2e-9;
    let gram = cc.h2.conj_transpose().matmul(&cc.h2).unwrap();
    let gram_inv = risce_core::numerics::solve_hermitian(&gram, &CMatrix::identity(8)).unwrap();
    let expected = var * 8.0 * gram_inv.trace().re;
    let mut rng = RngStream::new(13, 1);
    let trials = 5_000;
    let mut acc = 0.0;
    for _ in 0..trials {
        let y3 = synthesize_double_rx(&cc.h2, &cc.h3, var, &mut rng).unwrap();
        acc += ls_double(&cc.h2, &y3).unwrap().sub(&cc.h3).unwrap().fro_norm_sq();
    }
    let emp = acc / trials as f64;
    assert!((emp / expected - 1.0).abs() < 0.04, "{emp} vs {expected}");
}

#[test]
fn lmmse_with_true_prior_beats_ls() {
    // iid CN(0, 1) channel rows: the true correlation is M·I.
    let (m, n) = (6, 4);
    let mut rng = RngStream::new(14, 0);
    let sched = build_single_schedule::<f64>(SingleLink::Ris2, n, n).unwrap();
    let train: Vec<CMatrix> = (0..10_000).map(|_| sample_cn(m, n, 1.0, &mut rng)).collect();
    let r = empirical_correlation(&train).unwrap();
    let var = 1.0;
    let theta = NoiseScalar::new(NoiseConvention::PerEntry, var, m, n);
    let (mut e_ls, mut e_lm) = (0.0, 0.0);
    for _ in 0..2000 {
        let h = sample_cn::<f64>(m, n, 1.0, &mut rng);
        let y = synthesize_single_rx(&h, &sched, var, &mut rng).unwrap();
        e_ls += ls_single(&y, sched.phi()).unwrap().sub(&h).unwrap().fro_norm_sq();
        e_lm += lmmse_single(&y, sched.phi(), &r, &theta).unwrap().sub(&h).unwrap().fro_norm_sq();
    }
    assert!(e_lm <= e_ls * 1.01, "lmmse {e_lm} vs ls {e_ls}");
}

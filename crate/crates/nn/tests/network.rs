use risce_core::estimators::nmse;
use risce_core::numerics::sample_cn;
use risce_core::{CMatrix, Complex, RngStream};
use risce_nn::checkpoint::{read_params, write_params};
use risce_nn::net::{self_attention_shifted, AttentionVars};
use risce_nn::suite::gradcheck_suite;
use risce_nn::{
    nmse_loss, pack_complex, self_attention, unpack_complex, AttentionLayerParams, NetConfig, NetParams, OutputHead,
    Tape, Tensor,
};

fn cfg(c: usize, b: usize, skip: bool, c2: usize, rows: usize, cols: usize) -> NetConfig {
    NetConfig {
        channels: c,
        blocks: b,
        skip_connection: skip,
        post_concat_channels: c2,
        rows,
        cols,
        head: OutputHead::Projection,
    }
}

fn normal(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.standard_normal())
}

fn random_attention(c: usize, rng: &mut RngStream) -> AttentionLayerParams<f64> {
    let mut p = AttentionLayerParams::<f64>::init(c, rng);
    for b in [&mut p.b_k, &mut p.b_q, &mut p.b_v, &mut p.b_o] {
        *b = normal(&[c], rng);
    }
    p
}

fn attend(x: &Tensor<f64>, p: &AttentionLayerParams<f64>, shift: Option<f64>) -> Tensor<f64> {
    let mut t = Tape::new();
    let vars = p.register(&mut t);
    let xv = t.leaf(x.clone());
    let y = self_attention_shifted(&mut t, xv, &vars, shift).unwrap();
    t.value(y).clone()
}

#[test]
fn zero_key_weights_collapse_attention_to_row_means() {
    let mut rng = RngStream::new(1, 0);
    let (h, w, c) = (2, 3, 4);
    let l = h * w;
    let mut p = random_attention(c, &mut rng);
    p.w_k = Tensor::zeros(&[c, c]);
    p.b_k = Tensor::zeros(&[c]);
    let x = normal(&[h, w, c], &mut rng);
    let got = attend(&x, &p, None);

    // Direct evaluation: V = W_V·X + b_V with tokens as columns.
    let xt = |tok: usize, f: usize| x.data()[tok * c + f];
    let v = |f: usize, tok: usize| p.b_v.data()[f] + (0..c).map(|g| p.w_v.data()[f * c + g] * xt(tok, g)).sum::<f64>();
    let col: Vec<f64> = (0..c).map(|f| (0..l).map(|tok| v(f, tok)).sum::<f64>() / (l * l) as f64).collect();
    let out: Vec<f64> = (0..c)
        .map(|f| p.b_o.data()[f] + (0..c).map(|g| p.w_o.data()[f * c + g] * col[g]).sum::<f64>())
        .collect();
    for tok in 0..l {
        for f in 0..c {
            assert!((got.data()[tok * c + f] - out[f]).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_is_token_permutation_equivariant() {
    let mut rng = RngStream::new(2, 0);
    let (h, w, c) = (3, 3, 4);
    let p = random_attention(c, &mut rng);
    let x = normal(&[h, w, c], &mut rng);
    let mut perm: Vec<usize> = (0..h * w).collect();
    rng.shuffle(&mut perm);
    let permute = |t: &Tensor<f64>| {
        Tensor::from_fn(&[h, w, c], |i| t.data()[perm[i / c] * c + i % c])
    };
    let a = permute(&attend(&x, &p, None));
    let b = attend(&permute(&x), &p, None);
    assert!(a.max_abs_diff(&b) < 1e-5);
}

#[test]
fn attention_ignores_a_constant_logit_shift() {
    let mut rng = RngStream::new(3, 0);
    let p = random_attention(4, &mut rng);
    let x = normal(&[2, 3, 4], &mut rng);
    let base = attend(&x, &p, None);
    for s in [-40.0, 3.5, 80.0] {
        assert!(attend(&x, &p, Some(s)).max_abs_diff(&base) < 1e-5);
    }
}

#[test]
fn attention_public_entry_matches_unshifted() {
    let mut rng = RngStream::new(4, 0);
    let p = random_attention(3, &mut rng);
    let x = normal(&[2, 2, 3], &mut rng);
    let mut t = Tape::new();
    let vars: AttentionVars = p.register(&mut t);
    let xv = t.leaf(x.clone());
    let y = self_attention(&mut t, xv, &vars).unwrap();
    assert_eq!(t.value(y), &attend(&x, &p, None));
}

#[test]
fn pack_round_trip_and_norm() {
    let mut rng = RngStream::new(5, 0);
    let h: CMatrix = sample_cn(4, 3, 1.0, &mut rng);
    let packed = pack_complex(&h);
    assert_eq!(packed.shape(), &[4, 3, 2]);
    assert_eq!(unpack_complex(&packed).unwrap(), h);
    assert!((packed.sum_sq() - h.fro_norm_sq()).abs() < 1e-6);

    let real = CMatrix::from_fn(2, 2, |i, j| Complex::new((i + 2 * j) as f64, 0.0));
    let p = pack_complex(&real);
    assert!(p.data().iter().skip(1).step_by(2).all(|&v| v == 0.0));
}

#[test]
fn forward_preserves_shape() {
    for (m, n) in [(3, 3), (4, 3), (5, 7), (8, 8)] {
        for (skip, head) in [(true, OutputHead::Projection), (false, OutputHead::Direct)] {
            let config = NetConfig {
                head,
                ..cfg(4, 2, skip, 6, m, n)
            };
            let net = NetParams::<f32>::init(config, 1).unwrap();
            let y = sample_cn(m, n, 1.0, &mut RngStream::new(6, m as u64));
            assert_eq!(net.forward(&y).unwrap().shape(), (m, n));
        }
    }
    let net = NetParams::<f32>::init(cfg(4, 1, true, 6, 4, 4), 1).unwrap();
    assert!(net.forward(&sample_cn(4, 5, 1.0, &mut RngStream::new(6, 0))).is_err());
}

#[test]
fn zero_input_gives_finite_bias_driven_output() {
    let mut net = NetParams::<f32>::init(cfg(4, 2, true, 6, 4, 3), 2).unwrap();
    let zero = CMatrix::zeros(4, 3).cast::<f32>();
    // With zero biases every layer maps zero to zero.
    assert!(net.forward(&zero).unwrap().as_slice().iter().all(|z| z.re == 0.0 && z.im == 0.0));
    let mut rng = RngStream::new(7, 0);
    for p in net.params.iter_mut().filter(|p| p.value.rank() == 1) {
        p.value = Tensor::from_fn(p.value.shape(), |_| rng.standard_normal() as f32);
    }
    let out = net.forward(&zero).unwrap();
    assert!(out.is_finite());
    assert!(out.max_abs() > 0.0);
    // Input weights never see a nonzero input.
    net.params[0].value = net.params[0].value.map(|v| 3.0 * v);
    assert_eq!(net.forward(&zero).unwrap(), out);
}

/// Closed-form scalar count from the layer list.
fn expected_count(c: usize, b: usize, skip: bool, c2: usize, head: OutputHead) -> usize {
    let first = 9 * 2 * c + c;
    let block = 4 * (c * c + c) + 9 * c * c + c;
    let fuse_in = if skip { 2 * c } else { c };
    let tail = match head {
        OutputHead::Projection => 9 * fuse_in * c2 + c2 + 2 * c2 + 2,
        OutputHead::Direct => 9 * fuse_in * 2 + 2,
    };
    first + b * block + tail
}

#[test]
fn parameter_count_matches_closed_form() {
    for (c, b, c2) in [(1, 0, 1), (32, 2, 64), (128, 4, 256), (5, 3, 7)] {
        for skip in [false, true] {
            for head in [OutputHead::Projection, OutputHead::Direct] {
                let net = NetParams::<f32>::init(NetConfig { head, ..cfg(c, b, skip, c2, 3, 3) }, 0).unwrap();
                assert_eq!(net.scalar_count(), expected_count(c, b, skip, c2, head));
            }
        }
    }
    // Full-scale network without the skip connection.
    assert_eq!(expected_count(128, 4, false, 256, OutputHead::Projection), 1_152_642);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(NetParams::<f32>::init(cfg(0, 1, true, 4, 3, 3), 0).is_err());
    assert!(NetParams::<f32>::init(cfg(4, 1, true, 0, 3, 3), 0).is_err());
    assert!(NetParams::<f32>::init(cfg(4, 1, true, 4, 0, 3), 0).is_err());
}

#[test]
fn nmse_loss_cases() {
    let mut rng = RngStream::new(8, 0);
    let labels: Vec<CMatrix> = (0..3).map(|_| sample_cn(3, 2, 1.0, &mut rng)).collect();
    let preds: Vec<CMatrix> = (0..3).map(|_| sample_cn(3, 2, 1.0, &mut rng)).collect();
    let lt: Vec<Tensor<f64>> = labels.iter().map(pack_complex).collect();

    let mut t = Tape::new();
    let same: Vec<_> = lt.iter().map(|l| t.leaf(l.clone())).collect();
    let zero: Vec<_> = lt.iter().map(|l| t.leaf(Tensor::zeros(l.shape()))).collect();
    let other: Vec<_> = preds.iter().map(|p| t.leaf(pack_complex(p))).collect();
    let l0 = nmse_loss(&mut t, &same, &lt).unwrap();
    let l1 = nmse_loss(&mut t, &zero, &lt).unwrap();
    let l2 = nmse_loss(&mut t, &other, &lt).unwrap();
    assert_eq!(t.value(l0).item(), 0.0);
    assert!((t.value(l1).item() - 1.0).abs() < 1e-15);
    assert!((t.value(l2).item() - nmse(&preds, &labels).unwrap()).abs() < 1e-6);

    let zl = vec![Tensor::zeros(&[3, 2, 2])];
    assert!(nmse_loss(&mut t, &same[..1], &zl).is_err());
}

#[test]
fn nmse_loss_gradient_skips_labels() {
    let mut t = Tape::<f64>::new();
    let p = t.leaf(Tensor::full(&[2, 1, 2], 1.0));
    let label = Tensor::from_vec(&[2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let l = nmse_loss(&mut t, &[p], std::slice::from_ref(&label)).unwrap();
    let g = t.backward(l);
    // d/dp ‖p − y‖² / ‖y‖² = 2(p − y) / 2.
    assert_eq!(g.get(p).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn checkpoint_round_trip_through_a_file() {
    let net = NetParams::<f32>::init(cfg(4, 2, true, 6, 4, 3), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    write_params(&net.params, std::fs::File::create(&path).unwrap()).unwrap();
    let loaded = read_params::<f32, _>(std::fs::File::open(&path).unwrap()).unwrap();
    let back = NetParams::from_params(net.config.clone(), loaded).unwrap();
    assert_eq!(back, net);
    let wrong = NetParams::<f32>::from_params(cfg(4, 1, true, 6, 4, 3), back.params);
    assert!(wrong.is_err());
}

#[test]
fn gradient_suite_passes() {
    let report = gradcheck_suite(7).unwrap();
    assert!(report.len() >= 10);
    for r in &report {
        assert!(r.passed(), "{} rel err {:e}", r.name, r.max_rel_err);
        assert!(r.instances >= 3);
    }
}

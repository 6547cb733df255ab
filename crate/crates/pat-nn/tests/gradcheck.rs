//! Finite-difference and brute-force oracles for every layer, all in f64.

use pat_core::rng;
use pat_nn::layers::*;
use pat_nn::loss::l1_loss;
use pat_nn::tensor::Tensor4;
use rand::Rng as _;

const FD_STEP: f64 = 1e-5;

fn random_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut rng::Rng) -> Tensor4<f64> {
    Tensor4::from_data(n, c, h, w, (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Central finite difference of `f` at `x[i]`.
fn fd(buffer: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let saved = buffer[i];
    buffer[i] = saved + FD_STEP;
    let hi = f(buffer);
    buffer[i] = saved - FD_STEP;
    let lo = f(buffer);
    buffer[i] = saved;
    (hi - lo) / (2.0 * FD_STEP)
}

fn assert_close(analytic: f64, numeric: f64, tol: f64, what: &str) {
    let scale = 1.0f64.max(analytic.abs()).max(numeric.abs());
    assert!(
        (analytic - numeric).abs() / scale <= tol,
        "{what}: analytic {analytic} vs numeric {numeric}"
    );
}

/// Random projection turning a tensor output into a scalar loss.
fn project(y: &Tensor4<f64>, probe: &[f64]) -> f64 {
    y.data.iter().zip(probe).map(|(a, b)| a * b).sum()
}

#[test]
fn conv_one_by_one_identity() {
    let mut p = ConvParams::<f64>::same(1, 1, 1).unwrap();
    p.weight[0] = 1.0;
    let x = random_tensor(2, 1, 5, 5, &mut rng::seeded(1));
    let y = conv2d_forward(&x, &p).unwrap();
    assert_eq!(x.data, y.data);
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rngen = rng::seeded(2);
    let x = random_tensor(1, 1, 4, 4, &mut rngen);
    let mut p = ConvParams::<f64>::same(1, 1, 3).unwrap();
    for w in p.weight.iter_mut() {
        *w = rngen.gen_range(-1.0..1.0);
    }
    p.bias[0] = 0.25;
    let y = conv2d_forward(&x, &p).unwrap();
    for oy in 0..4i64 {
        for ox in 0..4i64 {
            let mut acc = 0.25;
            for ky in 0..3i64 {
                for kx in 0..3i64 {
                    let (iy, ix) = (oy + ky - 1, ox + kx - 1);
                    if (0..4).contains(&iy) && (0..4).contains(&ix) {
                        acc += p.weight[(ky * 3 + kx) as usize]
                            * x.data[(iy * 4 + ix) as usize];
                    }
                }
            }
            let got = y.data[(oy * 4 + ox) as usize];
            assert_eq!(got, acc, "pixel ({oy},{ox})");
        }
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    // linear layer: 1e-6 tolerance; >= 10 random configurations
    let mut rngen = rng::seeded(3);
    let configs: Vec<(usize, usize, usize, usize, usize, usize)> = vec![
        // (n, c_in, c_out, k, h, stride)
        (1, 1, 1, 3, 6, 1),
        (1, 2, 3, 3, 5, 1),
        (2, 3, 2, 3, 4, 1),
        (1, 1, 4, 1, 6, 1),
        (1, 4, 1, 3, 7, 1),
        (2, 2, 2, 5, 8, 1),
        (1, 3, 3, 3, 6, 1),
        (1, 2, 2, 2, 6, 2),
        (1, 3, 4, 2, 4, 2),
        (2, 1, 2, 2, 8, 2),
        (1, 2, 5, 3, 5, 1),
    ];
    for &(n, c_in, c_out, k, h, stride) in &configs {
        let padding = if stride == 1 { (k - 1) / 2 } else { 0 };
        let mut p = ConvParams::<f64>::zeros(c_in, c_out, k, stride, padding).unwrap();
        for w in p.weight.iter_mut() {
            *w = rngen.gen_range(-1.0..1.0);
        }
        for b in p.bias.iter_mut() {
            *b = rngen.gen_range(-0.5..0.5);
        }
        let x = random_tensor(n, c_in, h, h, &mut rngen);
        let y = conv2d_forward(&x, &p).unwrap();
        let probe: Vec<f64> = (0..y.len()).map(|_| rngen.gen_range(-1.0..1.0)).collect();
        let grad_out =
            Tensor4::from_data(y.n, y.c, y.h, y.w, probe.clone()).unwrap();
        let (gx, gp) = conv2d_backward(&x, &p, &grad_out).unwrap();

        let mut xbuf = x.data.clone();
        for i in (0..xbuf.len()).step_by(1 + xbuf.len() / 17) {
            let num = fd(&mut xbuf, i, |b| {
                let xt = Tensor4::from_data(x.n, x.c, x.h, x.w, b.to_vec()).unwrap();
                project(&conv2d_forward(&xt, &p).unwrap(), &probe)
            });
            assert_close(gx.data[i], num, 1e-6, "conv grad_x");
        }
        let mut wbuf = p.weight.clone();
        for i in (0..wbuf.len()).step_by(1 + wbuf.len() / 17) {
            let num = fd(&mut wbuf, i, |b| {
                let mut pt = p.clone();
                pt.weight = b.to_vec();
                project(&conv2d_forward(&x, &pt).unwrap(), &probe)
            });
            assert_close(gp.weight[i], num, 1e-6, "conv grad_w");
        }
        let mut bbuf = p.bias.clone();
        for i in 0..bbuf.len() {
            let num = fd(&mut bbuf, i, |b| {
                let mut pt = p.clone();
                pt.bias = b.to_vec();
                project(&conv2d_forward(&x, &pt).unwrap(), &probe)
            });
            assert_close(gp.bias[i], num, 1e-6, "conv grad_b");
        }
    }
}

#[test]
fn relu_values_and_gradient() {
    let x = Tensor4::from_data(1, 1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
    let y = relu_forward(&x);
    assert_eq!(y.data, vec![0.0, 0.0, 2.0]);

    let pos = Tensor4::from_data(1, 1, 2, 2, vec![0.5, 1.0, 2.0, 0.1]).unwrap();
    assert_eq!(relu_forward(&pos).data, pos.data);
    let ones = Tensor4::from_data(1, 1, 2, 2, vec![1.0; 4]).unwrap();
    assert_eq!(relu_backward(&pos, &ones).unwrap().data, vec![1.0; 4]);

    // finite differences away from the kink
    let mut rngen = rng::seeded(4);
    let mut vals: Vec<f64> = (0..16).map(|_| rngen.gen_range(-1.0..1.0)).collect();
    for v in vals.iter_mut() {
        if v.abs() < 1e-3 {
            *v += 0.1;
        }
    }
    let x = Tensor4::from_data(1, 1, 4, 4, vals).unwrap();
    let probe: Vec<f64> = (0..16).map(|_| rngen.gen_range(-1.0..1.0)).collect();
    let grad_out = Tensor4::from_data(1, 1, 4, 4, probe.clone()).unwrap();
    let g = relu_backward(&x, &grad_out).unwrap();
    let mut buf = x.data.clone();
    for i in 0..16 {
        let num = fd(&mut buf, i, |b| {
            let xt = Tensor4::from_data(1, 1, 4, 4, b.to_vec()).unwrap();
            project(&relu_forward(&xt), &probe)
        });
        assert_close(g.data[i], num, 1e-6, "relu grad");
    }
}

#[test]
fn maxpool_window_max_and_ties() {
    let x = Tensor4::from_data(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (y, arg) = maxpool2_forward(&x).unwrap();
    assert_eq!(y.data, vec![4.0]);
    assert_eq!(arg, vec![3]);

    let flat = Tensor4::from_data(1, 1, 4, 4, vec![7.0; 16]).unwrap();
    let (y, arg) = maxpool2_forward(&flat).unwrap();
    assert!(y.data.iter().all(|&v| v == 7.0));
    // ties route to the first (top-left) element of each window
    assert_eq!(arg, vec![0, 2, 8, 10]);
    let ones = Tensor4::from_data(1, 1, 2, 2, vec![1.0; 4]).unwrap();
    let g = maxpool2_backward(&flat, &arg, &ones).unwrap();
    let mut expected = vec![0.0; 16];
    for i in [0, 2, 8, 10] {
        expected[i] = 1.0;
    }
    assert_eq!(g.data, expected);

    assert!(maxpool2_forward(&Tensor4::<f64>::zeros(1, 1, 3, 4)).is_err());
}

#[test]
fn maxpool_matches_enumeration_oracle() {
    let mut rngen = rng::seeded(5);
    for _ in 0..10 {
        let x = random_tensor(1, 2, 8, 8, &mut rngen);
        let (y, arg) = maxpool2_forward(&x).unwrap();
        for c in 0..2 {
            let xp = x.plane(0, c);
            let yp = y.plane(0, c);
            for oy in 0..4 {
                for ox in 0..4 {
                    let idxs = [
                        2 * oy * 8 + 2 * ox,
                        2 * oy * 8 + 2 * ox + 1,
                        (2 * oy + 1) * 8 + 2 * ox,
                        (2 * oy + 1) * 8 + 2 * ox + 1,
                    ];
                    let best = idxs
                        .iter()
                        .copied()
                        .fold(idxs[0], |b, i| if xp[i] > xp[b] { i } else { b });
                    assert_eq!(yp[oy * 4 + ox], xp[best]);
                    assert_eq!(arg[(c * 16) + oy * 4 + ox], best);
                }
            }
        }
        // backward routes each output gradient to its argmax
        let probe: Vec<f64> = (0..y.len()).map(|_| rngen.gen_range(-1.0..1.0)).collect();
        let grad_out = Tensor4::from_data(1, 2, 4, 4, probe.clone()).unwrap();
        let g = maxpool2_backward(&x, &arg, &grad_out).unwrap();
        assert_eq!(g.data.iter().filter(|v| **v != 0.0).count() <= 32, true);
        let total_in: f64 = probe.iter().sum();
        let total_out: f64 = g.data.iter().sum();
        assert!((total_in - total_out).abs() < 1e-12);
    }
}

#[test]
fn upconv_stamp_semantics() {
    let mut p = ConvParams::<f64>::zeros(1, 1, 2, 2, 0).unwrap();
    p.weight.fill(1.0);
    let x = Tensor4::from_data(1, 1, 1, 1, vec![1.0]).unwrap();
    let y = upconv2_forward(&x, &p).unwrap();
    assert_eq!(y.shape(), (1, 1, 2, 2));
    assert_eq!(y.data, vec![1.0; 4]);
}

#[test]
fn upconv_is_adjoint_of_strided_conv() {
    // <upconv(x), q> == <x, conv_s2(q)> when the conv uses the transposed
    // weight layout (c_in/c_out swapped)
    let mut rngen = rng::seeded(6);
    for _ in 0..5 {
        let (c_lo, c_hi) = (3, 2);
        let mut up = ConvParams::<f64>::zeros(c_lo, c_hi, 2, 2, 0).unwrap();
        for w in up.weight.iter_mut() {
            *w = rngen.gen_range(-1.0..1.0);
        }
        // zero bias: the adjoint identity is about the linear part
        let x = random_tensor(1, c_lo, 5, 5, &mut rngen);
        let q = random_tensor(1, c_hi, 10, 10, &mut rngen);
        let up_x = upconv2_forward(&x, &up).unwrap();
        // build the strided conv with swapped roles: weight[lo][hi][ky][kx]
        let mut conv = ConvParams::<f64>::zeros(c_hi, c_lo, 2, 2, 0).unwrap();
        for lo in 0..c_lo {
            for hi in 0..c_hi {
                for t in 0..4 {
                    conv.weight[(lo * c_hi + hi) * 4 + t] = up.weight[(hi * c_lo + lo) * 4 + t];
                }
            }
        }
        let conv_q = conv2d_forward(&q, &conv).unwrap();
        let lhs: f64 = up_x.data.iter().zip(&q.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&conv_q.data).map(|(a, b)| a * b).sum();
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        assert!((lhs - rhs).abs() / scale <= 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn upconv_gradients_match_finite_differences() {
    let mut rngen = rng::seeded(7);
    for &(c_in, c_out, h) in &[(1usize, 1usize, 3usize), (2, 3, 4), (3, 1, 5)] {
        let mut p = ConvParams::<f64>::zeros(c_in, c_out, 2, 2, 0).unwrap();
        for w in p.weight.iter_mut() {
            *w = rngen.gen_range(-1.0..1.0);
        }
        for b in p.bias.iter_mut() {
            *b = rngen.gen_range(-0.5..0.5);
        }
        let x = random_tensor(1, c_in, h, h, &mut rngen);
        let y = upconv2_forward(&x, &p).unwrap();
        let probe: Vec<f64> = (0..y.len()).map(|_| rngen.gen_range(-1.0..1.0)).collect();
        let grad_out = Tensor4::from_data(y.n, y.c, y.h, y.w, probe.clone()).unwrap();
        let (gx, gp) = upconv2_backward(&x, &p, &grad_out).unwrap();
        let mut xbuf = x.data.clone();
        for i in 0..xbuf.len() {
            let num = fd(&mut xbuf, i, |b| {
                let xt = Tensor4::from_data(x.n, x.c, x.h, x.w, b.to_vec()).unwrap();
                project(&upconv2_forward(&xt, &p).unwrap(), &probe)
            });
            assert_close(gx.data[i], num, 1e-6, "upconv grad_x");
        }
        let mut wbuf = p.weight.clone();
        for i in 0..wbuf.len() {
            let num = fd(&mut wbuf, i, |b| {
                let mut pt = p.clone();
                pt.weight = b.to_vec();
                project(&upconv2_forward(&x, &pt).unwrap(), &probe)
            });
            assert_close(gp.weight[i], num, 1e-6, "upconv grad_w");
        }
        let mut bbuf = p.bias.clone();
        for i in 0..bbuf.len() {
            let num = fd(&mut bbuf, i, |b| {
                let mut pt = p.clone();
                pt.bias = b.to_vec();
                project(&upconv2_forward(&x, &pt).unwrap(), &probe)
            });
            assert_close(gp.bias[i], num, 1e-6, "upconv grad_b");
        }
    }
}

#[test]
fn concat_split_inverse_and_routing() {
    let mut rngen = rng::seeded(8);
    let a = random_tensor(1, 8, 16, 16, &mut rngen);
    let b = random_tensor(1, 8, 16, 16, &mut rngen);
    let y = concat_channels(&a, &b).unwrap();
    assert_eq!(y.shape(), (1, 16, 16, 16));
    let (a2, b2) = split_channels(&y, 8).unwrap();
    assert_eq!(a, a2);
    assert_eq!(b, b2);

    // gradient routing: perturbing only branch a only moves the a-part
    let mut a_pert = a.clone();
    a_pert.data[100] += 1.0;
    let y_pert = concat_channels(&a_pert, &b).unwrap();
    let diff: Vec<usize> = y
        .data
        .iter()
        .zip(&y_pert.data)
        .enumerate()
        .filter(|(_, (u, v))| u != v)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(diff, vec![100]);

    assert!(concat_channels(&a, &random_tensor(1, 2, 8, 8, &mut rngen)).is_err());
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let mut rngen = rng::seeded(9);
    let target = random_tensor(1, 2, 4, 4, &mut rngen);
    let pred = random_tensor(1, 2, 4, 4, &mut rngen);
    let (_, g) = l1_loss(&pred, &target).unwrap();
    let mut buf = pred.data.clone();
    for i in 0..buf.len() {
        let num = fd(&mut buf, i, |b| {
            let pt = Tensor4::from_data(1, 2, 4, 4, b.to_vec()).unwrap();
            l1_loss(&pt, &target).unwrap().0
        });
        assert_close(g.data[i], num, 1e-5, "l1 grad");
    }
}

#[test]
fn three_layer_composition_gradcheck() {
    // conv -> relu -> conv -> l1 against a fixed target, end-to-end
    let mut rngen = rng::seeded(10);
    let mut p1 = ConvParams::<f64>::same(1, 3, 3).unwrap();
    let mut p2 = ConvParams::<f64>::same(3, 1, 3).unwrap();
    for w in p1.weight.iter_mut().chain(p2.weight.iter_mut()) {
        *w = rngen.gen_range(-0.5..0.5);
    }
    for b in p1.bias.iter_mut().chain(p2.bias.iter_mut()) {
        *b = rngen.gen_range(-0.2..0.2);
    }
    let x = random_tensor(1, 1, 6, 6, &mut rngen);
    let target = random_tensor(1, 1, 6, 6, &mut rngen);

    let run = |x: &Tensor4<f64>, p1: &ConvParams<f64>, p2: &ConvParams<f64>| -> f64 {
        let h = relu_forward(&conv2d_forward(x, p1).unwrap());
        let y = conv2d_forward(&h, p2).unwrap();
        l1_loss(&y, &target).unwrap().0
    };

    // analytic gradients by chaining the backwards
    let a1 = conv2d_forward(&x, &p1).unwrap();
    let h = relu_forward(&a1);
    let y = conv2d_forward(&h, &p2).unwrap();
    let (_, gl) = l1_loss(&y, &target).unwrap();
    let (gh, gp2) = conv2d_backward(&h, &p2, &gl).unwrap();
    let ga1 = relu_backward(&a1, &gh).unwrap();
    let (gx, gp1) = conv2d_backward(&x, &p1, &ga1).unwrap();

    let mut buf = x.data.clone();
    for i in 0..buf.len() {
        let num = fd(&mut buf, i, |b| {
            let xt = Tensor4::from_data(1, 1, 6, 6, b.to_vec()).unwrap();
            run(&xt, &p1, &p2)
        });
        assert_close(gx.data[i], num, 1e-4, "stack grad_x");
    }
    let mut buf = p1.weight.clone();
    for i in 0..buf.len() {
        let num = fd(&mut buf, i, |b| {
            let mut pt = p1.clone();
            pt.weight = b.to_vec();
            run(&x, &pt, &p2)
        });
        assert_close(gp1.weight[i], num, 1e-4, "stack grad_w1");
    }
    let mut buf = p2.weight.clone();
    for i in 0..buf.len() {
        let num = fd(&mut buf, i, |b| {
            let mut pt = p2.clone();
            pt.weight = b.to_vec();
            run(&x, &p1, &pt)
        });
        assert_close(gp2.weight[i], num, 1e-4, "stack grad_w2");
    }
}

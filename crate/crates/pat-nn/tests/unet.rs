//! Behavioral tests for the residual U-net.

use pat_core::grid::{Grid, Image};
use pat_core::rng;
use pat_nn::optim::TrainConfig;
use pat_nn::tensor::Tensor4;
use pat_nn::unet::{image_to_tensor, tensor_to_image, UNetConfig, UNetModel};
use rand::Rng as _;

fn desk_config() -> UNetConfig {
    UNetConfig {
        features: 4,
        levels: 3,
        kernel: 3,
    }
}

fn random_image(d: usize, seed: u64) -> Image<f64> {
    let mut rngen = rng::seeded(seed);
    let mut img = Image::zeros(Grid::new(d).unwrap());
    for v in img.values_mut() {
        *v = rngen.gen_range(-1.0..1.0);
    }
    img
}

#[test]
fn zero_weights_give_identity() {
    let mut model = UNetModel::<f64>::build(desk_config(), 11).unwrap();
    model.set_all_weights_zero();
    let x = random_image(16, 1);
    let y = model.forward_image(&x).unwrap();
    assert_eq!(x.values(), y.values());
}

#[test]
fn channel_sequence_doubles() {
    let cfg = UNetConfig::default();
    assert_eq!(
        (0..5).map(|l| cfg.channels(l)).collect::<Vec<_>>(),
        vec![32, 64, 128, 256, 512]
    );
    let model = UNetModel::<f32>::build(
        UNetConfig { features: 2, levels: 3, kernel: 3 },
        0,
    )
    .unwrap();
    assert_eq!(model.layer("enc0.a").unwrap().c_out, 2);
    assert_eq!(model.layer("enc2.b").unwrap().c_out, 8);
    assert_eq!(model.layer("up1").unwrap().c_in, 8);
    assert_eq!(model.layer("dec0.a").unwrap().c_in, 4);
    assert_eq!(model.layer("final").unwrap().c_out, 1);
}

#[test]
fn smallest_legal_network_runs() {
    let cfg = UNetConfig { features: 1, levels: 2, kernel: 3 };
    let model = UNetModel::<f32>::build(cfg, 5).unwrap();
    let x = Tensor4::<f32>::from_data(1, 1, 8, 8, vec![0.5; 64]).unwrap();
    let y = model.forward(&x).unwrap();
    assert_eq!(y.shape(), (1, 1, 8, 8));
}

#[test]
fn input_validation() {
    let model = UNetModel::<f32>::build(desk_config(), 5).unwrap();
    // 10 not divisible by 2^(levels-1) = 4
    let x = Tensor4::<f32>::zeros(1, 1, 10, 10);
    assert!(model.forward(&x).is_err());
    let x = Tensor4::<f32>::zeros(1, 2, 16, 16);
    assert!(model.forward(&x).is_err());
    assert!(UNetConfig { features: 0, levels: 3, kernel: 3 }.validate().is_err());
    assert!(UNetConfig { features: 4, levels: 1, kernel: 3 }.validate().is_err());
    assert!(UNetConfig { features: 4, levels: 3, kernel: 2 }.validate().is_err());
}

#[test]
fn same_seed_same_model() {
    let a = UNetModel::<f32>::build(desk_config(), 42).unwrap();
    let b = UNetModel::<f32>::build(desk_config(), 42).unwrap();
    let c = UNetModel::<f32>::build(desk_config(), 43).unwrap();
    assert_eq!(a.encode().unwrap(), b.encode().unwrap());
    assert_ne!(a.encode().unwrap(), c.encode().unwrap());
}

#[test]
fn serialization_round_trip_bit_identical_forward() {
    let model = UNetModel::<f32>::build(desk_config(), 7).unwrap();
    let bytes = model.encode().unwrap();
    let back = UNetModel::<f32>::decode(&bytes).unwrap();
    let x = random_image(16, 2).map(|v| v as f32);
    let y0 = model.forward_image(&x).unwrap();
    let y1 = back.forward_image(&x).unwrap();
    assert_eq!(y0.values(), y1.values());
}

#[test]
fn training_is_deterministic() {
    let pairs: Vec<(Image<f32>, Image<f32>)> = (0..4)
        .map(|i| {
            (
                random_image(16, 100 + i).map(|v| v as f32),
                random_image(16, 200 + i).map(|v| 0.5 * v as f32),
            )
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 1e-3,
        momentum: 0.9,
        batch_size: 1,
        seed: 3,
    };
    let mut a = UNetModel::<f32>::build(desk_config(), 9).unwrap();
    let mut b = UNetModel::<f32>::build(desk_config(), 9).unwrap();
    let ha = a.train(&pairs, &cfg).unwrap();
    let hb = b.train(&pairs, &cfg).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.encode().unwrap(), b.encode().unwrap());
}

#[test]
fn first_step_decreases_loss_first_order() {
    // one batch-1 step with fresh velocity: delta loss ~ -eta * ||grad||^2
    let model = UNetModel::<f64>::build(desk_config(), 13).unwrap();
    let x = image_to_tensor(&random_image(16, 3)).unwrap();
    let target = image_to_tensor(&random_image(16, 4)).unwrap();
    let (loss0, grads) = model.loss_and_gradients(&x, &target).unwrap();
    let gnorm2: f64 = grads
        .iter()
        .map(|g| {
            g.weight.iter().map(|v| v * v).sum::<f64>() + g.bias.iter().map(|v| v * v).sum::<f64>()
        })
        .sum();
    let eta = 1e-6;
    let cfg = TrainConfig {
        learning_rate: eta,
        momentum: 0.0,
        ..Default::default()
    };
    let mut stepped = model.clone();
    stepped.apply_gradients(&grads, &cfg).unwrap();
    let (loss1, _) = stepped.loss_and_gradients(&x, &target).unwrap();
    let predicted = -eta * gnorm2;
    let actual = loss1 - loss0;
    assert!(
        (actual - predicted).abs() <= 0.25 * predicted.abs(),
        "predicted {predicted}, actual {actual}"
    );
}

#[test]
fn overfits_single_sample() {
    // ~200 steps on one pair should cut the loss by >10x
    let mut model = UNetModel::<f32>::build(desk_config(), 21).unwrap();
    let grid = Grid::new(16).unwrap();
    let mut x = Image::<f32>::zeros(grid);
    for iy in 0..16 {
        for ix in 0..16 {
            let (cx, cy) = (grid.coord(ix), grid.coord(iy));
            *x.at_mut(ix, iy) = (0.5 * (-(cx * cx + cy * cy) / 0.2).exp()) as f32;
        }
    }
    let y = x.map(|v| 0.8 * v + 0.05);
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 1e-2,
        momentum: 0.9,
        batch_size: 1,
        seed: 1,
    };
    let history = model.train(&[(x, y)], &cfg).unwrap();
    let best = history.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        best < 0.1 * history[0],
        "loss {} -> best {best}",
        history[0]
    );
}

#[test]
fn empty_dataset_rejected() {
    let mut model = UNetModel::<f32>::build(desk_config(), 1).unwrap();
    assert!(model.train(&[], &TrainConfig::default()).is_err());
}

#[test]
fn evaluate_perfect_and_identity_baselines() {
    let mut model = UNetModel::<f64>::build(desk_config(), 2).unwrap();
    model.set_all_weights_zero();
    let truth = random_image(16, 8);
    // identity model on (X=truth, Y=truth) is perfect
    let report = model.evaluate(&[(truth.clone(), truth.clone())]).unwrap();
    assert_eq!(report.per_sample, vec![0.0]);
    // identity model on corrupted inputs reproduces the input error column
    let mut corrupted = truth.clone();
    for v in corrupted.values_mut() {
        *v *= 1.1;
    }
    let expected = pat_core::metrics::rel_l2_error(&corrupted, &truth).unwrap();
    let report = model.evaluate(&[(corrupted, truth)]).unwrap();
    assert!((report.per_sample[0] - expected).abs() < 1e-12);
}

#[test]
fn tensor_image_round_trip() {
    let img = random_image(8, 77);
    let t = image_to_tensor(&img).unwrap();
    let back = tensor_to_image(&t).unwrap();
    assert_eq!(img.values(), back.values());
}

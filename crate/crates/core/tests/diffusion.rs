mod common;

use common::oracle;
use dynscene::diffusion::{ddim_step, forward_noise, predict_clean, Latent, LatentCodec, NoiseSchedule};
use dynscene::image::{Image, Mask};
use dynscene::{ten1, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_latent(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Latent<f64> {
    Latent::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn schedule_is_the_sequential_product() {
    for (n, s, e) in [(50, 0.002, 0.4), (3, 0.1, 0.3), (1, 0.25, 0.25), (1000, 1e-4, 0.02)] {
        let sched = NoiseSchedule::<f64>::linear(n, s, e).unwrap();
        let betas = oracle::linear_betas(n, s, e);
        let want = oracle::alpha_bars(&betas);
        for i in 1..=n {
            assert!((sched.beta(i) - betas[i - 1]).abs() <= 1e-15);
            let got = sched.alpha_bar(i);
            assert!((got - want[i - 1]).abs() <= f64::EPSILON * want[i - 1], "step {i}: {got} vs {}", want[i - 1]);
            assert!(got > 0.0 && got < 1.0);
            if i > 1 {
                assert!(got < sched.alpha_bar(i - 1));
            }
        }
    }
}

#[test]
fn three_step_hand_values() {
    let s = NoiseSchedule::<f64>::linear(3, 0.1, 0.3).unwrap();
    for (i, want) in [(1, 0.9), (2, 0.72), (3, 0.504)] {
        assert!((s.alpha_bar(i) - want).abs() < 1e-12);
    }
    let one = NoiseSchedule::<f64>::linear(1, 0.2, 0.2).unwrap();
    assert!((one.alpha_bar(1) - 0.8).abs() < 1e-15);
}

#[test]
fn schedule_rejects_bad_ranges() {
    assert!(NoiseSchedule::<f64>::linear(0, 0.1, 0.2).is_err());
    assert!(NoiseSchedule::<f64>::linear(10, 0.3, 0.2).is_err());
    assert!(NoiseSchedule::<f64>::linear(10, 0.0, 0.2).is_err());
    assert!(NoiseSchedule::<f64>::linear(10, 0.1, 1.0).is_err());
}

#[test]
fn forward_noise_scalar_example() {
    let s = NoiseSchedule::<f64>::linear(3, 0.1, 0.3).unwrap();
    let z0 = Latent::from_vec(1, 1, 1, vec![1.0]).unwrap();
    let z = forward_noise(&z0, 2, &z0.clone(), &s).unwrap();
    assert!((z.data[0] - (0.72f64.sqrt() + 0.28f64.sqrt())).abs() < 1e-15);
    assert!((z.data[0] - 1.3777).abs() < 1e-4);
    assert_eq!(z.step, 2);
}

#[test]
fn round_trip_recovers_clean_latent_at_every_step() {
    let sched = NoiseSchedule::<f64>::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z0 = random_latent(&mut rng, 3, 8, 8);
    for i in 1..=sched.num_steps() {
        let eps = random_latent(&mut rng, 3, 8, 8);
        let zi = forward_noise(&z0, i, &eps, &sched).unwrap();
        let (_, z0_hat) = ddim_step(&zi, &eps, i, &sched).unwrap();
        let err = z0_hat.max_abs_diff(&z0).unwrap();
        assert!(err <= 1e-5, "step {i}: {err}");
    }
}

#[test]
fn ddim_forms_agree_with_oracle() {
    let sched = NoiseSchedule::<f64>::default_schedule();
    let abs = oracle::alpha_bars(&oracle::linear_betas(50, 0.002, 0.4));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let z = random_latent(&mut rng, 1, 2, 2);
        let eps = random_latent(&mut rng, 1, 2, 2);
        for i in 1..=50 {
            let mut zi = z.clone();
            zi.step = i;
            let (prev, _) = ddim_step(&zi, &eps, i, &sched).unwrap();
            let ab_prev = if i == 1 { 1.0 } else { abs[i - 2] };
            for (j, got) in prev.data.iter().enumerate() {
                let a = oracle::ddim_direction_form(z.data[j], eps.data[j], abs[i - 1], ab_prev);
                let b = oracle::ddim_interp_form(z.data[j], eps.data[j], abs[i - 1], ab_prev);
                let scale = a.abs().max(1e-12);
                assert!((got - a).abs() / scale <= 1e-6, "step {i}: {got} vs {a}");
                assert!((a - b).abs() / scale <= 1e-6);
            }
        }
    }
}

#[test]
fn terminal_step_lands_on_clean_estimate() {
    let sched = NoiseSchedule::<f64>::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut z = random_latent(&mut rng, 2, 3, 3);
    z.step = 1;
    let eps = random_latent(&mut rng, 2, 3, 3);
    let (prev, x) = ddim_step(&z, &eps, 1, &sched).unwrap();
    assert_eq!(prev.data, x.data);
    assert_eq!(prev.step, 0);
}

#[test]
fn step_errors() {
    let sched = NoiseSchedule::<f64>::linear(4, 0.1, 0.2).unwrap();
    let z = Latent::<f64>::zeros(1, 2, 2);
    assert!(matches!(forward_noise(&z, 0, &z, &sched), Err(Error::StepOutOfRange { .. })));
    assert!(matches!(forward_noise(&z, 5, &z, &sched), Err(Error::StepOutOfRange { .. })));
    assert!(matches!(forward_noise(&z, 1, &Latent::zeros(1, 2, 3), &sched), Err(Error::ShapeMismatch { .. })));
    assert!(predict_clean(&z, &z, 0, &sched).is_err());
    let mut zi = z.clone();
    zi.step = 2;
    assert!(ddim_step(&zi, &z, 3, &sched).is_err());
}

#[test]
fn operations_are_deterministic() {
    let sched = NoiseSchedule::<f64>::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let z0 = random_latent(&mut rng, 3, 4, 4);
    let eps = random_latent(&mut rng, 3, 4, 4);
    let a = forward_noise(&z0, 17, &eps, &sched).unwrap();
    let b = forward_noise(&z0, 17, &eps, &sched).unwrap();
    assert_eq!(a, b);
    assert_eq!(ddim_step(&a, &eps, 17, &sched).unwrap(), ddim_step(&b, &eps, 17, &sched).unwrap());
}

#[test]
fn avgpool_codec_examples() {
    let c = LatentCodec::AvgPool2;
    let flat = Image::filled(3, 6, 4, 0.37);
    let z: Latent<f64> = c.encode(&flat).unwrap();
    assert_eq!(z.shape(), [3, 3, 2]);
    assert!(z.data.iter().all(|v| (v - 0.37).abs() < 1e-7));
    let back = c.decode(&z);
    assert_eq!(back.shape(), [3, 6, 4]);
    assert!(back.data.iter().all(|v| (v - 0.37).abs() < 1e-6));

    let checker = Image::from_vec(1, 2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let z: Latent<f64> = c.encode(&checker).unwrap();
    assert_eq!(z.data, vec![0.5]);
    assert!(c.encode::<f64>(&Image::rgb(5, 4)).is_err());
}

#[test]
fn avgpool_mask_needs_half_coverage() {
    let m = Mask::from_vec(2, 4, vec![true, false, false, false, true, false, false, false]).unwrap();
    assert_eq!(LatentCodec::AvgPool2.encode_mask(&m).unwrap().data, vec![true, false]);
}

#[test]
fn ten1_layout_matches_hand_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.ten");
    ten1::write(&p, &[2, 3], &[1.0, -2.0, 0.5, 0.0, 3.25, -0.125]).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    let mut want = b"TEN1\0\0\0\0".to_vec();
    want.extend(2u32.to_le_bytes());
    want.extend(2u32.to_le_bytes());
    want.extend(3u32.to_le_bytes());
    for v in [1.0f32, -2.0, 0.5, 0.0, 3.25, -0.125] {
        want.extend(v.to_le_bytes());
    }
    assert_eq!(bytes, want);
    let t = ten1::read(&p).unwrap();
    assert_eq!(t.dims, vec![2, 3]);
    std::fs::write(&p, &want[..want.len() - 1]).unwrap();
    assert!(ten1::read(&p).is_err());
}

proptest! {
    #[test]
    fn identity_codec_roundtrip(data in proptest::collection::vec(0.0f32..=1.0, 3 * 4 * 6)) {
        let img = Image::from_vec(3, 4, 6, data).unwrap();
        let z: Latent<f64> = LatentCodec::Identity.encode(&img).unwrap();
        prop_assert_eq!(LatentCodec::Identity.decode(&z), img);
    }

    #[test]
    fn clean_estimate_inverts_forward_noise(x in -3.0f64..3.0, e in -3.0f64..3.0, i in 1usize..=50) {
        let sched = NoiseSchedule::<f64>::default_schedule();
        let z0 = Latent::from_vec(1, 1, 1, vec![x]).unwrap();
        let eps = Latent::from_vec(1, 1, 1, vec![e]).unwrap();
        let zi = forward_noise(&z0, i, &eps, &sched).unwrap();
        let back = predict_clean(&zi, &eps, i, &sched).unwrap();
        prop_assert!((back.data[0] - x).abs() <= 1e-5);
    }
}

use ddcomm::channel::{crystallization_check, sample_random_channel, twisted_convolve_dd, DDChannel};
use ddcomm::detect::{demap, hard_bits, map_bits, Constellation};
use ddcomm::metrics::{ber, log2_1p_exp_neg, pragmatic_capacity, psd};
use ddcomm::zak::{dzt, idzt, DDFrame, DDGrid, TimeSignal};
use ddcomm::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(g: DDGrid, seed: u64) -> DDFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DDFrame::from_fn(g, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dzt_roundtrip_and_parseval(m in 1usize..13, n in 1usize..13, seed in any::<u64>()) {
        let g = DDGrid::new(m, n, 1.0).unwrap();
        let x = frame(g, seed);
        let t = idzt(&x);
        let e: f64 = t.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((e - x.norm_sqr()).abs() <= 1e-12 * x.norm_sqr().max(1.0));
        let back = dzt(&t, &g).unwrap();
        prop_assert!(max_diff(back.as_slice(), x.as_slice()) <= 1e-12);
    }

    #[test]
    fn twisted_convolution_is_linear_in_the_channel(seed in any::<u64>(), s2 in any::<u64>()) {
        let g = DDGrid::new(8, 8, 1.0).unwrap();
        let x = frame(g, seed);
        let a = sample_random_channel(3, 4.0, 4.0, &g, false, s2).unwrap();
        let b = sample_random_channel(2, 4.0, 4.0, &g, false, s2 ^ 0x5555).unwrap();
        let both = DDChannel::new(a.paths.iter().chain(&b.paths).cloned().collect());
        let ya = twisted_convolve_dd(&x, &a).unwrap();
        let yb = twisted_convolve_dd(&x, &b).unwrap();
        let y = twisted_convolve_dd(&x, &both).unwrap();
        let sum: Vec<C64> = ya.as_slice().iter().zip(yb.as_slice()).map(|(p, q)| p + q).collect();
        prop_assert!(max_diff(y.as_slice(), &sum) <= 1e-12);
    }

    #[test]
    fn single_integer_path_preserves_energy(seed in any::<u64>(), l in 0i64..8, k in -4i64..4) {
        let g = DDGrid::new(8, 8, 1.0).unwrap();
        let x = frame(g, seed);
        let ch = DDChannel::from_bins(&g, &[(C64::new(1.0, 0.0), l as f64, k as f64)]);
        let y = twisted_convolve_dd(&x, &ch).unwrap();
        prop_assert!((y.norm_sqr() - x.norm_sqr()).abs() <= 1e-12 * x.norm_sqr());
    }

    #[test]
    fn random_channels_are_crystallized(seed in any::<u64>(), p in 1usize..6, fractional in any::<bool>()) {
        let g = DDGrid::new(16, 16, 1.0).unwrap();
        let ch = sample_random_channel(p, 5.0, 3.0, &g, fractional, seed).unwrap();
        prop_assert_eq!(ch.paths.len(), p);
        prop_assert!(crystallization_check(&ch, g.t));
        if !fractional {
            prop_assert!(ch.integer_bins(&g).is_ok());
        }
        let again = DDChannel::from_record(&ch.to_record(g.dt())).unwrap();
        prop_assert_eq!(again.seed, ch.seed);
        for (a, b) in again.paths.iter().zip(&ch.paths) {
            prop_assert_eq!(a.gain, b.gain);
            prop_assert_eq!(a.nu, b.nu);
            prop_assert!((a.tau - b.tau).abs() <= 1e-12);
        }
    }

    #[test]
    fn ber_is_a_fraction(bits in proptest::collection::vec(0u8..2, 0..200), flips in proptest::collection::vec(any::<bool>(), 200)) {
        let rx: Vec<u8> = bits.iter().zip(&flips).map(|(b, f)| b ^ (*f as u8)).collect();
        let v = ber(&bits, &rx).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(ber(&bits, &bits).unwrap(), 0.0);
        let inv: Vec<u8> = bits.iter().map(|b| b ^ 1).collect();
        if !bits.is_empty() {
            prop_assert_eq!(ber(&bits, &inv).unwrap(), 1.0);
        }
    }

    #[test]
    fn capacity_stays_in_range(seed in any::<u64>(), scale in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..400).map(|_| rng.random_range(0..2u8)).collect();
        let llrs: Vec<f64> = (0..400).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
        let c = pragmatic_capacity(&llrs, &bits, 2).unwrap();
        prop_assert!((0.0..=2.0).contains(&c.bits));
        prop_assert!(c.stderr >= 0.0);
    }

    #[test]
    fn softplus_matches_direct_form(x in -30.0f64..30.0) {
        let direct = (1.0 + (-x).exp()).log2();
        prop_assert!((log2_1p_exp_neg(x) - direct).abs() <= 1e-12 * direct.max(1e-3));
    }

    #[test]
    fn psd_integrates_to_power_for_constant_modulus(seed in any::<u64>(), amp in 0.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<C64> = (0..1024).map(|_| C64::from_polar(amp, std::f64::consts::TAU * rng.random::<f64>())).collect();
        let s = TimeSignal::new(samples, 8.0, 0.0);
        let p = psd(&s, 128, 64).unwrap();
        let df = p.x[1] - p.x[0];
        let total: f64 = p.values.iter().sum::<f64>() * df;
        prop_assert!((total - amp * amp).abs() <= 1e-10 * amp * amp);
    }

    #[test]
    fn qpsk_roundtrip_without_noise(seed in any::<u64>()) {
        let g = DDGrid::new(4, 4, 1.0).unwrap();
        let c = Constellation::qpsk();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..32).map(|_| rng.random_range(0..2u8)).collect();
        let x = map_bits(&bits, &c, &g).unwrap();
        let (hard, llrs) = demap(x.as_slice(), &c, 0.1);
        prop_assert_eq!(&hard, &bits);
        prop_assert_eq!(hard_bits(&llrs), bits);
    }
}

#[test]
fn capacity_saturates_with_confident_correct_llrs() {
    let bits: Vec<u8> = (0..1000).map(|i| (i % 3 == 0) as u8).collect();
    let llrs: Vec<f64> = bits.iter().map(|&b| if b == 0 { 60.0 } else { -60.0 }).collect();
    let c = pragmatic_capacity(&llrs, &bits, 2).unwrap();
    assert!((c.bits - 2.0).abs() < 1e-12);
    let zero = pragmatic_capacity(&vec![0.0; 1000], &bits, 2).unwrap();
    assert!(zero.bits.abs() < 1e-12);
}

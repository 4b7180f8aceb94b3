mod common;

use common::{bits, dense_te};
use nodality_core::influence::{self, share_of_influence, transfer_entropy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_dense_tables_on_all_short_binary_series() {
    let mut worst = 0.0f64;
    for len in 3..=10usize {
        for mx in 0..(1u32 << len) {
            let x = bits(mx, len);
            for my in 0..(1u32 << len) {
                let y = bits(my, len);
                let fast = transfer_entropy(&x, &y, 1, 2).unwrap();
                worst = worst.max((fast - dense_te(&x, &y)).abs());
            }
        }
    }
    assert!(worst < 1e-12, "max deviation {worst}");
}

#[test]
fn copy_process_converges_to_one_bit() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..1000).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let mut y = vec![0.0; 1000];
        y[1..].copy_from_slice(&x[..999]);
        let te = transfer_entropy(&x, &y, 1, 2).unwrap();
        assert!((te - 1.0).abs() < 0.05, "seed {seed}: {te}");
    }
}

#[test]
fn phi_antisymmetric_and_bounded_on_random_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let n = rng.random_range(3..100);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..20))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u32..20))).collect();
        let bins = rng.random_range(2..5);
        let a = share_of_influence(&x, &y, 1, bins).unwrap();
        let b = share_of_influence(&y, &x, 1, bins).unwrap();
        assert_eq!(a.phi, -b.phi);
        assert!((-1.0..=1.0).contains(&a.phi));
        assert!(influence::entropy(&x, bins).unwrap() >= 0.0);
    }
}

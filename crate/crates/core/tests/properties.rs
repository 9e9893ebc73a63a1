mod common;

use common::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use pair_core::acquisition::{normalize_global, AcqMeta, AcquisitionSet};
use pair_core::fft::{dft_centered, idft_centered};
use pair_core::grid::{ComplexGrid, Domain, RealImage};
use pair_core::io::{quantize, MaskRle, Window};
use pair_core::lifting::{lift, singular_values, support_points, svt, unlift};
use pair_core::metrics::{aae, psnr, DirectionField};
use pair_core::operators::ShotPhaseSet;
use pair_core::sim::make_interleave_masks;
use pair_core::wtv::{wtv_subgradient, wtv_value, EdgeWeights};
use proptest::prelude::*;

fn grid_strategy(max: usize) -> impl Strategy<Value = ComplexGrid> {
    (1..=max, 1..=max).prop_flat_map(|(n, m)| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * m).prop_map(move |v| {
            let data = v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            ComplexGrid::from_vec(n, m, Domain::Image, data).unwrap()
        })
    })
}

fn image_strategy(min: usize, max: usize) -> impl Strategy<Value = RealImage> {
    (min..=max, min..=max).prop_flat_map(|(n, m)| {
        prop::collection::vec(0.0f64..1.0, n * m).prop_map(move |v| RealImage::from_vec(n, m, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_is_unitary(x in grid_strategy(12)) {
        let k = dft_centered(&x);
        prop_assert!((k.norm() - x.norm()).abs() <= 1e-12 * x.norm().max(1.0));
        let back = idft_centered(&k);
        prop_assert!(max_abs_diff(back.as_slice(), x.as_slice()) < 1e-12);
    }

    #[test]
    fn unlift_inverts_lift(seed in any::<u64>(), n in 5usize..14, m in 5usize..14, radius in 0usize..3) {
        let mut r = rng(seed);
        let x = random_grid(&mut r, n, m, Domain::Kspace);
        let back = unlift(&lift(&x, &support_points(radius)).unwrap()).unwrap();
        prop_assert!(max_abs_diff(back.as_slice(), x.as_slice()) < 1e-12);
    }

    #[test]
    fn svt_keeps_the_head_and_never_grows(
        rows in 2usize..8, cols in 2usize..8, eps in 0usize..4, sigma in 0.0f64..2.0, seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(rows, cols, |_, _| gaussian_like(&mut r));
        let out = svt(&a, eps, sigma).unwrap();
        let (s, t) = (singular_values(&a), singular_values(&out));
        for i in 0..s.len() {
            prop_assert!(t[i] <= s[i] + 1e-10);
            if i < eps {
                prop_assert!((t[i] - s[i]).abs() < 1e-9);
            }
        }
        let same = svt(&a, eps, 0.0).unwrap();
        prop_assert!((same - a).abs().max() < 1e-10);
    }

    #[test]
    fn phases_have_unit_modulus(x in grid_strategy(8)) {
        let p = ShotPhaseSet::from_images(std::slice::from_ref(&x)).unwrap();
        prop_assert!(p.get(0).as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rle_round_trips(bits in prop::collection::vec(any::<bool>(), 0..200)) {
        let rle = MaskRle::encode(&bits);
        prop_assert_eq!(rle.decode(bits.len()).unwrap(), bits);
    }

    #[test]
    fn quantization_is_monotone(img in image_strategy(1, 6)) {
        let q = quantize(&img, Window::Fixed { lo: 0.0, hi: 1.0 }).unwrap();
        let v = img.as_slice();
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] <= v[j] {
                    prop_assert!(q[i] <= q[j]);
                }
            }
        }
    }

    #[test]
    fn tv_is_nonnegative_and_shift_invariant(img in image_strategy(2, 8), shift in -2.0f64..2.0) {
        let (n, m) = img.shape();
        let w = EdgeWeights::unit(n, m);
        let v = wtv_value(&img, &w).unwrap();
        prop_assert!(v >= 0.0);
        let moved = img.map(|x| x + shift);
        prop_assert!((wtv_value(&moved, &w).unwrap() - v).abs() < 1e-9);
        let g: f64 = wtv_subgradient(&img, &w).unwrap().as_slice().iter().sum();
        prop_assert!(g.abs() < 1e-9);
    }

    #[test]
    fn psnr_is_scale_invariant(seed in any::<u64>(), s in 0.1f64..10.0) {
        let mut r = rng(seed);
        let a = random_image(&mut r, 5, 5).map(|v| v + 0.1);
        let b = random_image(&mut r, 5, 5);
        let p = psnr(&a, &b).unwrap();
        prop_assert!((psnr(&a.scaled(s), &b.scaled(s)).unwrap() - p).abs() < 1e-9);
    }

    #[test]
    fn aae_is_symmetric_and_bounded(v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..10),
                                     w in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..10)) {
        let n = v.len().min(w.len());
        let to = |x: &[(f64, f64, f64)]| x[..n].iter().map(|&(a, b, c)| [a, b, c + 1e-3]).collect::<Vec<_>>();
        let a = DirectionField::new(1, n, to(&v), vec![true; n]).unwrap();
        let b = DirectionField::new(1, n, to(&w), vec![true; n]).unwrap();
        let (x, y) = (aae(&a, &b).unwrap(), aae(&b, &a).unwrap());
        prop_assert!((x - y).abs() < 1e-9);
        prop_assert!((0.0..=90.0 + 1e-9).contains(&x));
    }

    #[test]
    fn interleave_masks_partition_lines(shots in 1usize..9, per in 1usize..12) {
        let m = shots * per;
        let masks = make_interleave_masks(4, m, shots).unwrap();
        let mut seen = vec![0; m];
        for mask in &masks {
            prop_assert_eq!(mask.pe_lines().len(), per);
            for l in mask.pe_lines() {
                seen[l] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn normalization_puts_the_combined_peak_at_one(seed in any::<u64>(), factor in 0.01f64..100.0) {
        let mut r = rng(seed);
        let masks = make_interleave_masks(6, 8, 2).unwrap();
        let kspace = (0..4).map(|_| random_grid(&mut r, 6, 8, Domain::Kspace)).collect();
        let set = AcquisitionSet::new(kspace, 2, masks, AcqMeta::default()).unwrap().scaled(factor);
        let (norm, _) = normalize_global(&set).unwrap();
        prop_assert!((norm.zero_filled_rss().max() - 1.0).abs() < 1e-12);
    }
}

use proptest::prelude::*;

use hrd_core::alignment::{build_index_map, PatchVectors};
use hrd_core::distribution::{bin_centers, BinLogits, DepthRange};
use hrd_core::grid::Grid;
use hrd_core::io::{decode_pfm, encode_pfm, HdtTensor, TensorData};
use hrd_core::loss::chamfer_1d;
use hrd_core::sphere::{erp_to_sphere, gnomonic_forward, gnomonic_inverse, sphere_to_erp, ErpGeometry, SphereDir};

fn dir() -> impl Strategy<Value = SphereDir> {
    (-std::f64::consts::PI..std::f64::consts::PI, -1.5..1.5f64).prop_map(|(t, p)| SphereDir::new(t, p))
}

proptest! {
    #[test]
    fn gnomonic_round_trip(center in dir(), du in -1.0..1.0f64, dv in -1.0..1.0f64) {
        let p = gnomonic_inverse(hrd_core::sphere::TangentCoord::new(du, dv), center);
        let t = gnomonic_forward(p, center).unwrap();
        prop_assert!((t.u - du).abs() < 1e-9 && (t.v - dv).abs() < 1e-9);
    }

    #[test]
    fn erp_round_trip(u in 0.0..1024.0f64, v in 0.0..512.0f64) {
        let g = ErpGeometry::new(1024, 512).unwrap();
        let p = erp_to_sphere(u, v, g).unwrap();
        let (u2, v2) = sphere_to_erp(p, g);
        prop_assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9);
    }

    #[test]
    fn bins_partition_range(logits in prop::collection::vec(0.0..50.0f64, 2..64), lo in 0.0..5.0f64, span in 0.1..20.0f64) {
        let r = DepthRange::new(lo, lo + span).unwrap();
        let h = bin_centers(&BinLogits::new(logits).unwrap(), r, 1e-3).unwrap();
        let sum: f64 = h.widths().iter().sum();
        prop_assert!((sum - span).abs() <= 1e-9 * span.max(1.0));
        prop_assert!(h.centers().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(h.centers()[0] > lo && *h.centers().last().unwrap() < lo + span);
    }

    #[test]
    fn index_map_scale_invariant(
        feats in prop::collection::vec(0.1..1.0f32, 4 * 8 * 3),
        vecs in prop::collection::vec(0.1..1.0f32, 5 * 3),
        alpha_exp in -10i32..10,
        beta_exp in -10i32..10,
    ) {
        // power-of-two scales are exact in f32, so labels must match exactly
        let (alpha, beta) = (2f32.powi(alpha_exp), 2f32.powi(beta_exp));
        let f = Grid::new(4, 8, 3, feats.clone()).unwrap();
        let v = PatchVectors::new(5, 3, vecs.clone()).unwrap();
        let fs = Grid::new(4, 8, 3, feats.iter().map(|x| x * alpha).collect()).unwrap();
        let vs = PatchVectors::new(5, 3, vecs.iter().map(|x| x * beta).collect()).unwrap();
        let a = build_index_map(&f, &v).unwrap();
        let b = build_index_map(&fs, &vs).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn chamfer_symmetric_and_nonnegative(
        x in prop::collection::vec(0.0..10.0f64, 1..30),
        c in prop::collection::vec(0.0..10.0f64, 1..30),
    ) {
        let a = chamfer_1d(&x, &c, false).unwrap().loss;
        let b = chamfer_1d(&c, &x, false).unwrap().loss;
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn hdt_bytes_round_trip(dims in prop::collection::vec(0u32..5, 0..4), seed in any::<u64>()) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let data = TensorData::F64((0..n).map(|k| f64::from_bits(seed.wrapping_mul(k as u64 + 1))).collect());
        let t = HdtTensor::new(dims, data).unwrap();
        let bytes = t.to_bytes();
        prop_assert_eq!(HdtTensor::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn pfm_bytes_round_trip(h in 1usize..9, w in 1usize..9, three in any::<bool>(), bits in any::<u32>()) {
        let c = if three { 3 } else { 1 };
        let g = Grid::from_fn(h, w, c, |r, col, px| {
            px.iter_mut().enumerate().for_each(|(k, v)| *v = f32::from_bits(bits ^ ((r * 131 + col * 17 + k) as u32)))
        });
        let bytes = encode_pfm(&g).unwrap();
        prop_assert_eq!(encode_pfm(&decode_pfm(&bytes).unwrap()).unwrap(), bytes);
    }
}

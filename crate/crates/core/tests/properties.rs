mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use metric_slice::diffeo::{signed_permutations, DiffeoGrid};
use metric_slice::finite::{self, Rot, SpdPoint};
use metric_slice::io::{decode_field, encode_field, Field};
use metric_slice::l2::l2_exp;
use metric_slice::rng::{perturbed_identity, smooth_symtensor, SplitMix64};
use metric_slice::slice::orbit_split;
use metric_slice::tensor::MetricGeometry;
use metric_slice::{GridSpec, Sym2};

fn spd() -> impl Strategy<Value = SpdPoint> {
    (0.2f64..3.0, 0.2f64..3.0, -0.9f64..0.9).prop_map(|(a, d, c)| {
        let b = c * (a * d).sqrt();
        SpdPoint::new(Sym2::new(a, b, d)).unwrap()
    })
}

fn close(a: &SpdPoint, b: &SpdPoint, tol: f64) -> bool {
    finite::frobenius_distance(a, b) <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_action_composes(a in spd(), s in 0.0..2.0 * PI, t in 0.0..2.0 * PI) {
        let (r, q) = (Rot::new(s), Rot::new(t));
        let lhs = finite::act(&r.compose(&q), &a);
        let rhs = finite::act(&r, &finite::act(&q, &a));
        prop_assert!(close(&lhs, &rhs, 1e-13));
        prop_assert!(close(&finite::act(&r.inverse(), &finite::act(&r, &a)), &a, 1e-13));
    }

    #[test]
    fn rotation_preserves_frobenius_distance(a in spd(), b in spd(), t in 0.0..2.0 * PI) {
        let r = Rot::new(t);
        let d0 = finite::frobenius_distance(&a, &b);
        let d1 = finite::frobenius_distance(&finite::act(&r, &a), &finite::act(&r, &b));
        prop_assert!((d0 - d1).abs() <= 1e-13 * (1.0 + d0));
    }

    #[test]
    fn spd_chart_roundtrip(a in spd()) {
        let back = SpdPoint::from_chart(a.chart()).unwrap();
        prop_assert!(close(&back, &a, 1e-14));
    }

    #[test]
    fn slice_chart_inverts(a11 in 1.2f64..3.0, a22 in 0.5f64..1.0, angle in 0.0..2.0 * PI, u in -1.0f64..1.0, v in -1.0f64..1.0) {
        let base = SpdPoint::diag(a11, a22).unwrap();
        let slice = finite::slice_at(&base, 0.05).unwrap();
        let scale = 0.05 / (1.0 + u.hypot(v));
        let sp = slice.point([u * scale, v * scale]).unwrap();
        let q = slice.chart(angle, &sp);
        let (coset, back) = slice.chart_inverse(&q).unwrap();
        prop_assert!(close(&back, &sp, 1e-12));
        prop_assert!(close(&slice.chart(coset, &back), &q, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn field_files_roundtrip_bit_exactly(seed in any::<u64>(), n in 4usize..12) {
        let spec = GridSpec::new(n).unwrap();
        let mut rng = SplitMix64::new(seed);
        let fields = [
            Field::Metric(perturbed_identity(spec, &mut rng, 0.2)),
            Field::SymTensor(smooth_symtensor(spec, &mut rng, 1.0)),
        ];
        for f in fields {
            let bytes = encode_field(&f);
            let back = decode_field(bytes.as_slice()).unwrap();
            prop_assert_eq!(encode_field(&back), bytes);
        }
    }

    #[test]
    fn lattice_maps_compose_as_a_group(i in 0usize..8, j in 0usize..8, s in prop::array::uniform4(-20i64..20)) {
        let spec = GridSpec::new(8).unwrap();
        let perms = signed_permutations();
        let a = DiffeoGrid::lattice(spec, perms[i], [s[0], s[1]]).unwrap();
        let b = DiffeoGrid::lattice(spec, perms[j], [s[2], s[3]]).unwrap();
        let g = perturbed_identity(spec, &mut SplitMix64::new(s[0] as u64), 0.2);
        let ab = a.compose(&b).unwrap();
        // left action: μ(a ∘ b, γ) = μ(a, μ(b, γ))
        prop_assert_eq!(ab.pullback(&g).unwrap(), a.pullback(&b.pullback(&g).unwrap()).unwrap());
        let id = ab.compose(&ab.invert().unwrap()).unwrap();
        prop_assert_eq!(id.pullback(&g).unwrap(), g);
    }

    #[test]
    fn lattice_maps_commute_with_exp(i in 0usize..8, s in prop::array::uniform2(-20i64..20), seed in any::<u64>()) {
        let spec = GridSpec::new(8).unwrap();
        let mut rng = SplitMix64::new(seed);
        let g = perturbed_identity(spec, &mut rng, 0.2);
        let v = smooth_symtensor(spec, &mut rng, 0.1);
        let iota = DiffeoGrid::lattice(spec, signed_permutations()[i], s).unwrap();
        let moved = iota.pullback(l2_exp(&g, &v, 1.0, 1e-10).unwrap().endpoint()).unwrap();
        let other = l2_exp(&iota.pullback(&g).unwrap(), &iota.pullback_tensor(&v).unwrap(), 1.0, 1e-10).unwrap();
        let geom = MetricGeometry::new(&moved).unwrap();
        let err = geom.sigma_norm(&(other.endpoint().tensor() - moved.tensor()));
        prop_assert!(err <= 1e-12 * geom.sigma_norm(moved.tensor()));
    }

    #[test]
    fn split_reconstructs_and_is_orthogonal(seed in any::<u64>()) {
        let spec = GridSpec::new(12).unwrap();
        let mut rng = SplitMix64::new(seed);
        let g = perturbed_identity(spec, &mut rng, 0.2);
        let s = smooth_symtensor(spec, &mut rng, 0.1);
        let r = orbit_split(&g, &s, 1e-10).unwrap();
        let geom = MetricGeometry::new(&g).unwrap();
        let lx = geom.lie_derivative(&r.x);
        let rebuilt = &lx + &r.h;
        prop_assert!(common::sigma_norm(&g, &(&rebuilt - &s)) <= 1e-12 * common::sigma_norm(&g, &s));
        prop_assert!(r.orthogonality_defect <= 1e-8);
    }
}

//! Property tests against independent references.

mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diracflow::eigen::dense;
use diracflow::gauge::predicted_sf;
use diracflow::harness::config::{DomainConfig, GaugeConfig, HoleConfig, to_toml};
use diracflow::harness::parse_config;

fn two_hole(signs: [f64; 3]) -> DomainConfig {
    DomainConfig::Disk {
        center: [0.0, 0.0],
        radius: 1.0,
        b: signs[0],
        holes: vec![
            HoleConfig { center: [-0.45, 0.0], radius: 0.25, b: signs[1] },
            HoleConfig { center: [0.45, 0.0], radius: 0.25, b: signs[2] },
        ],
    }
}

fn sign() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(-1.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prediction_sums_positive_windings(w1 in -3i64..=3, w2 in -3i64..=3, s0 in sign(), s1 in sign(), s2 in sign(), mag in 0.1f64..10.0) {
        let signs = [s0 * mag, s1, s2 / mag];
        let d = two_hole(signs).build().unwrap();
        let g = GaugeConfig { windings: vec![w1, w2], ..Default::default() }.build();
        prop_assert_eq!(predicted_sf(&g, &d).unwrap(), support::two_hole_flow([w1, w2], signs));
    }

    #[test]
    fn annulus_prediction_is_closed_form(w in -4i64..=4, bi in sign(), bo in sign()) {
        let d = DomainConfig::Annulus { r_inner: 0.3, r_outer: 1.0, b_inner: bi, b_outer: bo }.build().unwrap();
        let g = GaugeConfig { windings: vec![w], ..Default::default() }.build();
        prop_assert_eq!(predicted_sf(&g, &d).unwrap(), support::annulus_flow(w, bi, bo));
    }

    #[test]
    fn config_round_trip_is_idempotent(w1 in -3i64..=3, w2 in -3i64..=3, s0 in sign(), s1 in sign(), s2 in sign(), n in 32usize..512) {
        let text = format!(
            "[domain]\nshape = \"disk\"\nradius = 1.0\nb = {s0:?}\nholes = [{{ center = [-0.45, 0.0], radius = 0.25, b = {s1:?} }}, {{ center = [0.45, 0.0], radius = 0.25, b = {s2:?} }}]\n[gauge]\nwindings = [{w1}, {w2}]\n[radial]\nn = {n}\n"
        );
        let cfg = parse_config(&text).unwrap();
        let once = to_toml(&cfg).unwrap();
        let again = parse_config(&once).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(to_toml(&again).unwrap(), once);
    }

    #[test]
    fn eigensolver_matches_the_jacobi_reference(n in 1usize..=16, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = support::random_hermitian(n, &mut rng);
        let got = dense::eigvalsh(&h).unwrap();
        let want = support::jacobi_eigvalsh(&h);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use nts_core::charmatrix::{chain_grid, det_delta};
use nts_core::contour::{Contour, CountOptions, Rect};
use nts_core::fixtures::{example1, example2};
use nts_core::rootfinder::{count_roots_in_contour, find_roots_in_region, verify_cluster_multiplicity, RootOptions};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn roots_come_in_conjugate_pairs(alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let sys = example1(alpha, beta);
        let rect = Rect::new(-3.0, 3.0, -15.0, 15.0);
        let rep = find_roots_in_region(&sys, &rect, &RootOptions::default()).unwrap();
        prop_assume!(rep.is_complete());
        let roots: Vec<Complex64> = rep.roots().iter().map(|r| r.value()).collect();
        for z in &roots {
            let partner = roots.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner < 1e-6 * (1.0 + z.norm()), "{z} has no conjugate partner");
        }
    }

    #[test]
    fn similarity_preserves_spectrum(
        gamma in -2.0f64..2.0,
        s in proptest::collection::vec(-1.0f64..1.0, 4),
        re in -1.0f64..2.0,
        im in -10.0f64..10.0,
    ) {
        let t = DMatrix::from_row_slice(2, 2, &[2.0 + s[0], s[1], s[2], 2.0 + s[3]]);
        let sys = example2(gamma);
        let moved = sys.similarity_transform(&t).unwrap();
        let z = Complex64::new(re, im);
        let (a, b) = (det_delta(&sys, z), det_delta(&moved, z));
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
        let rect = Contour::Rect(Rect::new(-2.5, 0.5, -12.3, 12.7));
        let opts = CountOptions::default();
        let n0 = count_roots_in_contour(&sys, &rect, &opts).unwrap();
        let n1 = count_roots_in_contour(&moved, &rect, &opts).unwrap();
        prop_assert_eq!(n0, n1);
    }

    #[test]
    fn cluster_counts_grow_with_radius(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, k in 5i64..25) {
        let sys = example1(alpha, beta);
        let opts = CountOptions::default();
        let mut last = 0;
        for fraction in [0.2, 0.4, 0.6] {
            let grid = chain_grid(&sys, k, k, fraction).unwrap();
            let c = verify_cluster_multiplicity(&sys, &grid, k, 1, &opts).unwrap();
            prop_assert!(c.count >= last);
            last = c.count;
        }
        prop_assert_eq!(last, 2);
    }
}

use esr_cs::dictionary::Dictionary;
use esr_cs::spectrum::{
    compute_resonances, lorentzian, resonance_centers, synthesize_spectrum, BiasField, FrequencyWindow, NvConstants,
    ResonanceSet,
};
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0).prop_filter("nonzero", |d| d.iter().map(|x| x * x).sum::<f64>() > 1e-3)
}

proptest! {
    #[test]
    fn splitting_is_linear_in_field(b in 0.0f64..300.0, k in 0.0f64..4.0, d in direction()) {
        let consts = NvConstants::default();
        let f = BiasField::new(b, d).unwrap();
        let base = resonance_centers(&f, &consts);
        let scaled = resonance_centers(&f.scaled(k).unwrap(), &consts);
        for (s, c) in scaled.iter().zip(&base) {
            prop_assert!((s - 2870.0 - k * (c - 2870.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn resonances_pair_symmetrically_about_d(b in 0.0f64..300.0, d in direction()) {
        let c = resonance_centers(&BiasField::new(b, d).unwrap(), &NvConstants::default());
        for i in 0..4 {
            prop_assert!((c[i] + c[7 - i] - 2.0 * 2870.0).abs() < 1e-9);
        }
        // Splitting of axis n is 2 gamma B |B_hat . n|, so the outermost pair is at most 2 gamma B apart.
        prop_assert!(c[7] - c[0] <= 2.0 * 2.87 * b + 1e-9);
    }

    #[test]
    fn axis_order_and_field_sign_do_not_matter(b in 0.0f64..300.0, d in direction(), perm in Just([2usize, 0, 3, 1])) {
        let consts = NvConstants::default();
        let mut shuffled = consts.clone();
        for (i, &p) in perm.iter().enumerate() {
            shuffled.orientation_axes[i] = consts.orientation_axes[p];
        }
        let f = BiasField::new(b, d).unwrap();
        let flipped = BiasField::new(b, [-d[0], -d[1], -d[2]]).unwrap();
        let base = resonance_centers(&f, &consts);
        prop_assert_eq!(resonance_centers(&f, &shuffled), base);
        for (x, y) in resonance_centers(&flipped, &consts).iter().zip(&base) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn width_is_full_width_at_half_maximum(c in 2500.0f64..3200.0, w in 0.5f64..50.0) {
        let peak = lorentzian(c, c, w);
        prop_assert!((peak - 2.0 / (std::f64::consts::PI * w)).abs() < 1e-12 * peak);
        prop_assert!((lorentzian(c - w / 2.0, c, w) - peak / 2.0).abs() < 1e-12 * peak);
        prop_assert!((lorentzian(c + w / 2.0, c, w) - peak / 2.0).abs() < 1e-12 * peak);
    }

    #[test]
    fn dictionary_columns_peak_at_their_candidate(w in 2.0f64..30.0, k in 0usize..41) {
        let grid: Vec<f64> = (0..=40).map(|i| 2800.0 + 2.5 * i as f64).collect();
        let d = Dictionary::build(&grid, &grid, &[w]).unwrap();
        let col = d.matrix().column(k);
        prop_assert!(col.iter().all(|&v| v > 0.0));
        let argmax = (0..col.len()).max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap()).unwrap();
        prop_assert_eq!(argmax, k);
    }

    #[test]
    fn dictionary_times_amplitudes_is_the_spectrum(
        amps in prop::collection::vec(0.0f64..200.0, 8),
        w in 3.0f64..25.0,
        seed in any::<u64>(),
    ) {
        let grid: Vec<f64> = (0..=120).map(|i| 2700.0 + 3.0 * i as f64).collect();
        let centers: Vec<f64> = (0..8).map(|i| 2720.0 + 40.0 * i as f64).collect();
        let truth = ResonanceSet::new(centers.clone(), vec![w; 8], amps.clone()).unwrap();
        let dict = Dictionary::build(&grid, &centers, &[w]).unwrap();
        let clean = synthesize_spectrum(&truth, &grid, 1000.0, f64::INFINITY, seed).unwrap().clean_counts;
        let dips = dict.apply(&amps).unwrap();
        for (c, d) in clean.iter().zip(&dips) {
            prop_assert!((1000.0 - c - d).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_seeds_give_equal_spectra(seed in any::<u64>(), snr in 0.5f64..50.0) {
        let window = FrequencyWindow::centered(2870.0, 650.0).unwrap();
        let f = BiasField::new(100.0, [0.3, 0.5, 0.8]).unwrap();
        let truth = compute_resonances(&f, &NvConstants::default(), &window, 15.0, 100.0).unwrap();
        let grid = window.grid(651);
        let a = synthesize_spectrum(&truth, &grid, 1000.0, snr, seed).unwrap();
        let b = synthesize_spectrum(&truth, &grid, 1000.0, snr, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

use meshfl::analysis::*;
use meshfl::channel::db_to_linear;
use meshfl::Error;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

#[test]
fn reference_form_frozen_values() {
    let theta = db_to_linear(-16.0);
    let p = p_succ_reference(1e-3, 0.3, 50.0, theta, 4.0).unwrap();
    assert!(close(p, 0.556_223_503_366_300_1, 1e-12), "{p}");
    let p3 = p_succ_reference(1e-2, 0.3, 25.0, theta, 3.0).unwrap();
    assert!(close(p3, 0.294_689_000_464_864_4, 1e-12), "{p3}");
    let p6 = p_succ_reference(1e-2, 0.3, 25.0, theta, 6.0).unwrap();
    assert!(close(p6, 0.124_181_984_278_633_3, 1e-12), "{p6}");
}

#[test]
fn verbatim_form_frozen_value() {
    let inputs = ClosedFormInputs {
        intensity: 1e-3,
        tx_prob: 0.3,
        disk_radius: 500.0,
        link_distance: 1.0,
        theta: 0.02512,
        path_loss_exponent: 4.0,
    };
    let p = p_succ_verbatim(&inputs).unwrap();
    assert!(close(p, 3.344_704_278_296_659_3e-26, 1e-9), "{p}");
}

#[test]
fn verbatim_over_reference_log_ratio_is_radius_squared() {
    for (r_disk, r) in [(500.0, 10.0), (100.0, 3.0), (0.4, 2.0)] {
        let theta = db_to_linear(-10.0);
        let inputs = ClosedFormInputs {
            intensity: 1e-4,
            tx_prob: 0.5,
            disk_radius: r_disk,
            link_distance: r,
            theta,
            path_loss_exponent: 3.5,
        };
        let lp = p_succ_verbatim(&inputs).unwrap().ln();
        let lr = p_succ_reference(1e-4, 0.5, r, theta, 3.5).unwrap().ln();
        assert!(close(lp / lr, r_disk * r_disk, 1e-9), "{}", lp / lr);
    }
}

#[test]
fn alpha_two_and_below_is_a_domain_error() {
    for a in [2.0, 1.5, f64::NAN] {
        assert!(matches!(alpha_kernel(a), Err(Error::Domain(_))));
        assert!(matches!(p_succ_reference(1e-3, 0.3, 10.0, 1.0, a), Err(Error::Domain(_))));
    }
    let msg = alpha_kernel(2.0).unwrap_err().to_string();
    assert!(msg.contains("sin(2 pi / alpha)"), "{msg}");
}

#[test]
fn kernel_tends_to_one_for_large_alpha() {
    assert!((alpha_kernel(1e6).unwrap() - 1.0).abs() < 1e-9);
    assert!(close(alpha_kernel(4.0).unwrap(), std::f64::consts::FRAC_PI_2, 1e-15));
}

#[test]
fn degenerate_inputs() {
    // no interferers, certain success
    assert_eq!(p_succ_reference(0.0, 0.3, 50.0, 1.0, 4.0).unwrap(), 1.0);
    assert_eq!(p_succ_reference(1e-3, 0.0, 50.0, 1.0, 4.0).unwrap(), 1.0);
    assert!(p_succ_reference(1e-3, 1.2, 50.0, 1.0, 4.0).is_err());
    assert!(p_succ_reference(1e-3, 0.3, 0.0, 1.0, 4.0).is_err());
    assert!(p_succ_reference(1e-3, 0.3, 10.0, 0.0, 4.0).is_err());
    assert!(expected_success_count(1e-3, 1.5, 100.0).is_err());
}

#[test]
fn expected_count_and_pmf() {
    let n = expected_success_count(1e-3 * 0.3, 0.5, 200.0).unwrap();
    assert!(close(n, std::f64::consts::PI * 4e4 * 3e-4 * 0.5, 1e-15));
    let total: f64 = (0..200).map(|l| success_count_pmf(l, n)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let mean: f64 = (0..200).map(|l| l as f64 * success_count_pmf(l, n)).sum();
    assert!((mean - n).abs() < 1e-10);
    assert!(close(success_count_pmf(3, 2.0), (-2.0f64).exp() * 8.0 / 6.0, 1e-13));
    assert_eq!(success_count_pmf(0, 0.0), 1.0);
    assert_eq!(success_count_pmf(2, 0.0), 0.0);
}

#[test]
fn success_probability_falls_with_density_and_threshold() {
    let mut last = 1.0;
    for lambda in [1e-3, 5e-3, 1e-2, 5e-2, 1e-1] {
        let p = p_succ_reference(lambda, 0.3, 25.0, db_to_linear(-16.0), 4.0).unwrap();
        assert!(p < last);
        last = p;
    }
    let mut last = 1.0;
    for db in [-20.0, -10.0, 0.0, 10.0] {
        let p = p_succ_reference(1e-3, 0.3, 25.0, db_to_linear(db), 4.0).unwrap();
        assert!(p < last);
        last = p;
    }
}

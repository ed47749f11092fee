use edgeburst::model::{stability_check, StabilityClass};
use edgeburst::spectral;
use edgeburst::{ModelParams, Statistics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fermionic_damping_is_never_unstable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..25 {
        let t2 = rng.random_range(0.2..2.0);
        let t1 = rng.random_range(0.01..=1.0) * t2;
        let cells = rng.random_range(4..16);
        let p = ModelParams {
            t1,
            t2,
            gamma1: rng.random_range(0.0..2.0),
            gamma2: 0.0,
            gamma_g: rng.random_range(0.0..2.0),
            gamma_l: rng.random_range(0.0..2.0),
            cells,
            x0: rng.random_range(1..=cells),
            bc: edgeburst::Boundary::OBC,
            statistics: Statistics::Fermionic,
        };
        let s = stability_check(&p.damping_matrix()).unwrap();
        assert_ne!(s.class, StabilityClass::Unstable, "{p:?} {s:?}");
    }
}

#[test]
fn supercritical_obc_chain_is_unstable() {
    let p = ModelParams { gamma_g: 0.8 + 0.7, ..ModelParams::quadratic(0.5, 1.0, 0.8, 0.8, 60, 30) };
    let s = stability_check(&p.damping_matrix()).unwrap();
    assert_eq!(s.class, StabilityClass::Unstable, "{s:?}");
}

#[test]
fn numerical_onset_brackets_closed_form_on_medium_chain() {
    let p = ModelParams::quadratic(0.5, 1.0, 0.8, 0.8, 80, 40);
    let c = spectral::critical_imbalance(&p).unwrap();
    assert!(spectral::obc_max_real(&p, 0.9 * c).unwrap() < 0.0);
    assert!(spectral::obc_max_real(&p, 1.1 * c).unwrap() > 1e-9);
}

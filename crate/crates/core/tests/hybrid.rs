mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{dvector, DVector};
use proptest::prelude::*;
use rand::Rng;
use safeclf::*;

fn hs(n: DVector<f64>, d: f64) -> HalfSpace64 {
    HalfSpace::new(n, d).unwrap()
}

/// Faces 0: +x, 1: +y, 2: −x, 3: −y, all at distance 1.
fn unit_square() -> Polytope64 {
    Polytope::from_halfspaces(vec![
        hs(dvector![1.0, 0.0], 1.0),
        hs(dvector![0.0, 1.0], 1.0),
        hs(dvector![-1.0, 0.0], 1.0),
        hs(dvector![0.0, -1.0], 1.0),
    ])
    .unwrap()
}

fn params(p: &Polytope64, target: &DVector<f64>, mu: f64) -> SwitchingParams<f64> {
    SwitchingParams::new(p, target, mu, 0.1, TieBreakRule::Canonical).unwrap()
}

#[test]
fn reference_direction_examples() {
    let p = unit_square();
    let (v, q) = reference_direction(&p, &dvector![3.0, 0.0]).unwrap();
    assert_eq!((v, q), (dvector![1.0, 0.0], 0));
    // Beyond the (1, 1) vertex both faces 0 and 1 tie.
    let (_, q) = reference_direction(&p, &dvector![2.0, 2.0]).unwrap();
    assert_eq!(q, 0);
    assert!(matches!(
        reference_direction(&p, &dvector![0.2, 0.0]),
        Err(Error::InvalidScenario(_))
    ));
}

#[test]
fn switching_params_validate_sigma() {
    let p = unit_square();
    let t = dvector![3.0, 0.0];
    for (mu, sigma) in [(0.2, 0.2), (0.2, 0.0), (0.2, 0.3)] {
        let err = SwitchingParams::new(&p, &t, mu, sigma, TieBreakRule::Canonical).unwrap_err();
        assert_eq!(
            err.to_string(),
            "invalid parameter: sigma must satisfy 0 < sigma < mu"
        );
    }
}

#[test]
fn prediction_set_examples() {
    let p = unit_square();
    let v = dvector![1.0, 0.0];
    assert_eq!(prediction_set(&p, &v, 2, 0), vec![0, 1, 3]);
    assert_eq!(prediction_set(&p, &v, 0, 0), vec![0]);
    assert_eq!(prediction_set(&p, &v, 1, 0), vec![0]);
}

#[test]
fn next_index_examples() {
    let p = unit_square();
    let target = dvector![3.0, 0.0];
    let prm = params(&p, &target, 0.2);
    let aux = AuxiliaryState {
        setpoint: target.clone(),
        active: 0,
    };
    assert_eq!(next_index(&p, &aux, &prm), 0);
    // Setpoint on face 2 at height 1.2: face 1 clears it by μ.
    let aux = AuxiliaryState {
        setpoint: dvector![-1.0, 1.2],
        active: 2,
    };
    assert_eq!(next_index(&p, &aux, &prm), 1);
    // Faces 1 and 3 tie at the left face's midpoint: smallest index.
    let aux = AuxiliaryState {
        setpoint: dvector![-1.0, 0.0],
        active: 2,
    };
    assert_eq!(next_index(&p, &aux, &prm), 1);
}

#[test]
fn jump_set_examples() {
    let p = unit_square();
    let target = dvector![3.0, 0.0];
    let prm = params(&p, &target, 0.2);
    let aux = AuxiliaryState {
        setpoint: dvector![-1.0, 1.2],
        active: 2,
    };
    // On the active hyperplane with h_q̂ = μ.
    assert!(in_jump_set(&p, &dvector![-1.0, 1.2], &aux, &prm));
    // Active face violated.
    assert!(!in_jump_set(&p, &dvector![-0.5, 1.5], &aux, &prm));
    // Gap exactly σ: h_1 − h_2 = 0.1 at (−1.05, 1.05)? h_1 = 0.05, h_2 = 0.05 → gap 0. Use (−1, 1.1).
    let x = dvector![-1.0, 1.1];
    assert_abs_diff_eq!(
        p.halfspace(1).value(&x) - p.halfspace(2).value(&x),
        0.1,
        epsilon = 1e-15
    );
    assert!(in_jump_set(
        &p,
        &x,
        &aux,
        &SwitchingParams {
            sigma: 0.1,
            ..prm.clone()
        }
    ));
}

#[test]
fn scaling_factor_examples() {
    let p = unit_square();
    let (tau, q) =
        scaling_factor(&p, &dvector![-1.0, 0.0], &dvector![0.0, 1.0], &[1], 0.2).unwrap();
    assert_abs_diff_eq!(tau, 1.2, epsilon = 1e-15);
    assert_eq!(q, 1);
    let (tau, _) =
        scaling_factor(&p, &dvector![-1.0, 1.5], &dvector![0.0, 1.0], &[1, 3], 0.2).unwrap();
    assert_eq!(tau, 0.0);
    assert!(matches!(
        scaling_factor(&p, &dvector![-1.0, 0.0], &dvector![0.0, 1.0], &[3], 0.2),
        Err(Error::InfeasibleSwitch)
    ));
}

#[test]
fn scaling_factor_matches_grid_scan() {
    let mut rng = common::rng(99);
    for _ in 0..200 {
        let k = rng.random_range(3..8);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let verts = (0..k)
            .map(|i| {
                let a = phase
                    + std::f64::consts::TAU * i as f64 / k as f64
                    + rng.random_range(-0.2..0.2);
                let r = rng.random_range(0.5..2.0);
                dvector![r * a.cos(), r * a.sin()]
            })
            .collect();
        let Ok(p) = Polytope::from_vertices_2d(verts) else {
            continue;
        };
        let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let dir = common::random_unit(&mut rng, 2);
        let mu = rng.random_range(0.05..1.0);
        let pred: Vec<usize> = (0..p.len()).filter(|_| rng.random_bool(0.6)).collect();
        if pred.is_empty() {
            continue;
        }
        let faces: Vec<(DVector<f64>, f64)> = pred
            .iter()
            .map(|&q| (p.halfspace(q).normal().clone(), p.halfspace(q).offset()))
            .collect();
        match scaling_factor(&p, &x, &dir, &pred, mu) {
            Ok((tau, _)) => {
                let scan = common::tau_grid_scan(&faces, &x, &dir, mu, tau + 1.0, 1e-4).unwrap();
                assert!((scan - tau).abs() <= 1e-3, "tau {tau} scan {scan}");
            }
            Err(Error::InfeasibleSwitch) => {
                assert!(common::tau_grid_scan(&faces, &x, &dir, mu, 50.0, 1e-2).is_none());
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn jump_update_moves_setpoint_to_lateral_face() {
    let p = unit_square();
    let target = dvector![-3.0, 0.0];
    let prm = params(&p, &target, 0.2);
    // Start to the right; the initial face is +x, setpoint goes to the first lateral face.
    let aux0 = initialize_aux(&p, &dvector![3.0, 0.2], &target, &prm, None).unwrap();
    assert_eq!(aux0.active, 0);
    assert!(aux_invariants_hold(&p, &target, &aux0, &prm, 1e-9));
    assert_abs_diff_eq!(p.halfspace(0).value(&aux0.setpoint), 0.0, epsilon = 1e-12);
    let q_hat = next_index(&p, &aux0, &prm);
    assert!(p.halfspace(q_hat).value(&aux0.setpoint) >= 0.2 - 1e-12);
    // Jump from the setpoint itself.
    let x = aux0.setpoint.clone();
    assert!(in_jump_set(&p, &x, &aux0, &prm));
    let aux1 = jump_update(&p, &x, &target, &aux0, &prm).unwrap();
    assert_eq!(aux1.active, q_hat);
    assert!(aux_invariants_hold(&p, &target, &aux1, &prm, 1e-9));
    let v = &prm.reference;
    assert!(v.dot(p.halfspace(aux1.active).normal()) > v.dot(p.halfspace(aux0.active).normal()));
}

#[test]
fn jump_to_target_side_resets_setpoint() {
    let p = unit_square();
    let target = dvector![-3.0, 0.0];
    let prm = params(&p, &target, 0.2);
    let aux = AuxiliaryState {
        setpoint: dvector![-1.2, 1.0],
        active: 1,
    };
    let x = dvector![-1.15, 1.05];
    let next = jump_update(&p, &x, &target, &aux, &prm).unwrap();
    assert_eq!(
        next,
        AuxiliaryState {
            setpoint: target.clone(),
            active: 2
        }
    );
    let cbf_only = baseline_cbf_only_update(&p, &x, &target, &aux, &prm);
    assert_eq!(cbf_only.setpoint, target);
    assert_eq!(cbf_only.active, 2);
}

#[test]
fn initialize_aux_examples() {
    let p = unit_square();
    let target = dvector![-3.0, 0.0];
    let prm = params(&p, &target, 0.2);
    // Same half-space as the target.
    let aux = initialize_aux(&p, &dvector![-2.0, 0.5], &target, &prm, None).unwrap();
    assert_eq!(
        aux,
        AuxiliaryState {
            setpoint: target.clone(),
            active: 2
        }
    );
    // Diametrically opposite start.
    let aux = initialize_aux(&p, &dvector![3.0, 0.0], &target, &prm, None).unwrap();
    assert!(aux_invariants_hold(&p, &target, &aux, &prm, 1e-9));
    assert_abs_diff_eq!(aux.setpoint, dvector![1.0, 1.2], epsilon = 1e-12);
    // Tie between faces 0 and 1 beyond the vertex: smallest index unless overridden.
    let x0 = dvector![2.0, 2.0];
    assert_eq!(
        initialize_aux(&p, &x0, &target, &prm, None).unwrap().active,
        0
    );
    assert_eq!(
        initialize_aux(&p, &x0, &target, &prm, Some(1))
            .unwrap()
            .active,
        1
    );
    assert!(initialize_aux(&p, &x0, &target, &prm, Some(3)).is_err());
    assert!(matches!(
        initialize_aux(&p, &dvector![0.5, 0.0], &target, &prm, None),
        Err(Error::InvalidScenario(_))
    ));
}

#[test]
fn tiebreak_override_flips_side() {
    let p = unit_square();
    let target = dvector![-3.0, 0.0];
    let prm = SwitchingParams::new(
        &p,
        &target,
        0.2,
        0.1,
        TieBreakRule::Fixed(dvector![0.0, -1.0]),
    )
    .unwrap();
    let aux = initialize_aux(&p, &dvector![3.0, 0.0], &target, &prm, None).unwrap();
    assert_abs_diff_eq!(aux.setpoint, dvector![1.0, -1.2], epsilon = 1e-12);
}

fn arb_scene() -> impl Strategy<Value = (Polytope64, DVector<f64>, DVector<f64>, f64)> {
    (
        3usize..9,
        0.0f64..std::f64::consts::TAU,
        0.0f64..std::f64::consts::TAU,
        0.0f64..std::f64::consts::TAU,
        1.5f64..4.0,
        1.5f64..4.0,
        0.05f64..1.0,
    )
        .prop_map(|(k, phase, ta, xa, tr, xr, mu)| {
            let v = (0..k)
                .map(|i| {
                    let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
                    dvector![a.cos(), 0.8 * a.sin()]
                })
                .collect();
            let p = Polytope::from_vertices_2d(v).unwrap();
            (
                p,
                dvector![tr * ta.cos(), tr * ta.sin()],
                dvector![xr * xa.cos(), xr * xa.sin()],
                mu,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn switching_invariants_hold((p, target, x0, mu) in arb_scene()) {
        let prm = SwitchingParams::new(&p, &target, mu, mu / 2.0, TieBreakRule::Canonical).unwrap();
        let mut aux = initialize_aux(&p, &x0, &target, &prm, None).unwrap();
        prop_assert!(aux_invariants_hold(&p, &target, &aux, &prm, 1e-9));
        let mut visited = vec![aux.active];
        // Walk the setpoint chain: from each placed setpoint the jump set is entered.
        for _ in 0..=p.len() {
            if aux.setpoint == target {
                break;
            }
            let q_hat = next_index(&p, &aux, &prm);
            let gap = p.halfspace(q_hat).value(&aux.setpoint) - p.halfspace(aux.active).value(&aux.setpoint);
            prop_assert!(gap >= mu - 1e-9);
            // The flow approaches the setpoint from the safe side of the active face.
            let x = &aux.setpoint + p.halfspace(aux.active).normal() * 1e-9;
            prop_assert!(in_jump_set(&p, &x, &aux, &prm));
            let before = aux.active;
            let h_before = p.halfspace(before).value(&x);
            aux = jump_update(&p, &x, &target, &aux, &prm).unwrap();
            prop_assert!(aux_invariants_hold(&p, &target, &aux, &prm, 1e-9));
            prop_assert!(p.halfspace(aux.active).value(&x) >= h_before + prm.sigma - 1e-9);
            if before != prm.target_index {
                prop_assert!(prm.reference.dot(p.halfspace(aux.active).normal()) > prm.reference.dot(p.halfspace(before).normal()));
            }
            prop_assert!(!visited.contains(&aux.active) || aux.setpoint == target);
            visited.push(aux.active);
        }
        prop_assert_eq!(aux.setpoint, target);
        prop_assert!(visited.len() <= p.len() + 1);
    }
}

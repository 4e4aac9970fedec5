use std::time::Instant;

use acopf_core::cases::{CASE118, CASE30};
use acopf_core::equations::{injection_jacobian, injections};
use acopf_core::powerflow::{network_losses, BranchFlow};
use acopf_core::{
    build_admittance, parse_matpower_case, solve_newton, Network, PfOptions, SetpointProfile,
};
use proptest::prelude::*;

// Reference operating points computed with an independent MATPOWER-compatible
// solver at 1e-10 tolerance; angles in degrees. The reference keeps the
// case118 slack at its case-file angle of 30 degrees.
const CASE30_VM: [f64; 8] = [
    1.0, 1.0, 0.9831382891, 0.9800929954, 0.9824061968, 0.9731840212, 0.9673554477, 0.9606237083,
];
const CASE30_VA: [f64; 8] = [
    0.0, -0.415490719, -1.5220739375, -1.7947276548, -1.8638226717, -2.2669567069, -2.6518367678,
    -2.7257694386,
];
const CASE30_LOSS_MW: f64 = 2.4438031367772393;
const CASE30_SLACK_MW: f64 = 25.973803136777484;

const CASE118_VM: [f64; 8] = [
    0.955, 0.9713927945, 0.9676919444, 0.998, 1.0019846369, 0.99, 0.9893278877, 1.015,
];
const CASE118_VA: [f64; 8] = [
    10.9727399814, 11.512547449, 11.856190021, 15.5740897627, 16.0191785216, 13.2918717562,
    12.8473377873, 21.0405843776,
];
const CASE118_LOSS_MW: f64 = 132.86287188870278;

fn load(text: &str) -> Network {
    parse_matpower_case(text).unwrap()
}

fn check_case(text: &str, vm: &[f64], va: &[f64], slack_deg: f64, loss_mw: f64) {
    let net = load(text);
    let sp = SetpointProfile::from_network(&net);
    let start = Instant::now();
    let sol = solve_newton(&net, &sp, &PfOptions::default()).unwrap();
    let elapsed = start.elapsed();
    assert!(sol.converged);
    assert!(sol.max_mismatch <= 1e-8);
    assert_eq!(sol.state.v_ang[net.slack_index().unwrap()], 0.0);
    assert!(sol.iterations <= 10, "{} iterations", sol.iterations);
    assert!(elapsed.as_secs_f64() < 1.0);
    for i in 0..vm.len() {
        assert!((sol.state.v_mag[i] - vm[i]).abs() < 1e-7, "vm {i}");
        assert!((sol.state.v_ang[i].to_degrees() + slack_deg - va[i]).abs() < 1e-6, "va {i}");
    }
    let gen: f64 = sol.p_gen.iter().sum();
    let demand: f64 = net.p_loads().iter().sum();
    let losses = network_losses(&net, &sol.state, &sol.branch_flows);
    assert!((gen - demand - losses).abs() < 1e-7);
    assert!((losses * net.base_mva - loss_mw).abs() < 1e-5);
}

#[test]
fn case30_matches_reference() {
    check_case(CASE30, &CASE30_VM, &CASE30_VA, 0.0, CASE30_LOSS_MW);
    let net = load(CASE30);
    let sol = solve_newton(&net, &SetpointProfile::from_network(&net), &PfOptions::default()).unwrap();
    assert!((sol.p_slack * net.base_mva - CASE30_SLACK_MW).abs() < 1e-5);
}

#[test]
fn case118_matches_reference() {
    check_case(CASE118, &CASE118_VM, &CASE118_VA, 30.0, CASE118_LOSS_MW);
}

#[test]
fn two_bus_matches_grid_search() {
    let net = two_bus_case();
    let sol = solve_newton(&net, &SetpointProfile::from_network(&net), &PfOptions::default()).unwrap();
    // Coarse grid over (V2, δ2) minimizing the mismatch norm, then local refinement.
    let y = build_admittance(&net).unwrap();
    let resid = |v2: f64, d2: f64| {
        let (p, q) = injections(&y, &[1.0, v2], &[0.0, d2]);
        (p[1] + 0.5).powi(2) + q[1].powi(2)
    };
    let (mut bv, mut bd, mut span) = (1.0, 0.0, 0.2);
    for _ in 0..40 {
        let mut best = (f64::INFINITY, bv, bd);
        for a in 0..=20 {
            for b in 0..=20 {
                let v2 = bv - span + span * a as f64 / 10.0;
                let d2 = bd - span + span * b as f64 / 10.0;
                let r = resid(v2, d2);
                if r < best.0 {
                    best = (r, v2, d2);
                }
            }
        }
        (bv, bd) = (best.1, best.2);
        span *= 0.5;
    }
    assert!((sol.state.v_mag[1] - bv).abs() < 1e-6);
    assert!((sol.state.v_ang[1] - bd).abs() < 1e-6);
}

fn two_bus_case() -> Network {
    load("function mpc = two
mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 135 1 1.1 0.9;
2 1 50 0 0 0 1 1 0 135 1 1.1 0.9;
];
mpc.gen = [
1 0 0 500 -500 1 100 1 200 0;
];
mpc.branch = [
1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
2 0 0 2 1 0;
];
")
}

#[test]
fn branch_flows_balance_bus_injections() {
    let net = load(CASE30);
    let sol = solve_newton(&net, &SetpointProfile::from_network(&net), &PfOptions::default()).unwrap();
    let y = build_admittance(&net).unwrap();
    let (p, q) = injections(&y, &sol.state.v_mag, &sol.state.v_ang);
    let index = net.bus_index_map();
    let mut p_out = vec![0.0; net.n_bus()];
    let mut q_out = vec![0.0; net.n_bus()];
    for (br, BranchFlow { from, to }) in net.branches.iter().zip(&sol.branch_flows) {
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        p_out[f] += from.re;
        q_out[f] += from.im;
        p_out[t] += to.re;
        q_out[t] += to.im;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        let v2 = sol.state.v_mag[i].powi(2);
        assert!((p[i] - p_out[i] - bus.g_shunt * v2).abs() < 1e-10);
        assert!((q[i] - q_out[i] + bus.b_shunt * v2).abs() < 1e-10);
    }
}

#[test]
fn admittance_matches_dense_oracle() {
    let net = load(CASE118);
    let y = build_admittance(&net).unwrap().to_dense();
    let index = net.bus_index_map();
    let n = net.n_bus();
    let mut dense = vec![vec![num_complex::Complex64::new(0.0, 0.0); n]; n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        let z = num_complex::Complex64::new(br.r, br.x);
        let ys = 1.0 / z;
        let a = num_complex::Complex64::from_polar(br.tap, br.shift);
        let jb2 = num_complex::Complex64::new(0.0, br.b_charging / 2.0);
        dense[f][f] += (ys + jb2) / (a * a.conj());
        dense[t][t] += ys + jb2;
        dense[f][t] -= ys / a.conj();
        dense[t][f] -= ys / a;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        dense[i][i] += num_complex::Complex64::new(bus.g_shunt, bus.b_shunt);
    }
    for i in 0..n {
        for k in 0..n {
            assert!((y[i][k] - dense[i][k]).norm() < 1e-9, "({i},{k})");
        }
    }
}

#[test]
fn solution_is_invariant_to_bus_order() {
    let net = load(CASE30);
    let base = solve_newton(&net, &SetpointProfile::from_network(&net), &PfOptions::default()).unwrap();
    let mut shuffled = net.clone();
    shuffled.buses.reverse();
    shuffled.buses.rotate_left(7);
    let sol = solve_newton(&shuffled, &SetpointProfile::from_network(&shuffled), &PfOptions::default())
        .unwrap();
    let pos = shuffled.bus_index_map();
    for (i, bus) in net.buses.iter().enumerate() {
        let j = pos[&bus.id];
        assert!((base.state.v_mag[i] - sol.state.v_mag[j]).abs() < 1e-10);
        assert!((base.state.v_ang[i] - sol.state.v_ang[j]).abs() < 1e-10);
    }
    assert!((base.p_slack - sol.p_slack).abs() < 1e-10);
}

#[test]
fn parser_round_trip_on_bundled_cases() {
    for text in [CASE30, CASE118] {
        let net = load(text);
        let again = parse_matpower_case(&acopf_core::serialize_case(&net)).unwrap();
        assert_eq!(net, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jacobian_matches_finite_differences(
        th in prop::collection::vec(-0.2f64..0.2, 30),
        v in prop::collection::vec(0.9f64..1.1, 30),
    ) {
        let net = load(CASE30);
        let y = build_admittance(&net).unwrap();
        let n = net.n_bus();
        let state: Vec<f64> = th.into_iter().chain(v).collect();
        let identity: Vec<Option<usize>> = (0..2 * n).map(Some).collect();
        let jac = injection_jacobian(&y, &state[n..], &state[..n], &identity, &identity, 2 * n).to_dense();
        let h = 1e-6;
        for c in 0..2 * n {
            let mut xp = state.clone();
            let mut xm = state.clone();
            xp[c] += h;
            xm[c] -= h;
            let (pp, qp) = injections(&y, &xp[n..], &xp[..n]);
            let (pm, qm) = injections(&y, &xm[n..], &xm[..n]);
            for r in 0..n {
                let fd_p = (pp[r] - pm[r]) / (2.0 * h);
                let fd_q = (qp[r] - qm[r]) / (2.0 * h);
                prop_assert!((jac[(r, c)] - fd_p).abs() < 1e-5);
                prop_assert!((jac[(n + r, c)] - fd_q).abs() < 1e-5);
            }
        }
    }
}

use std::sync::Arc;

use proptest::prelude::*;

use perihyp::field::random::{random_field, seeded_rng, Band};
use perihyp::field::{PeriodicField, SpaceGrid, TimeGrid};
use perihyp::identities::battery_problem;
use perihyp::problem::FirstOrderProblem;
use perihyp::report::to_json_string;
use perihyp::transport::{solve_shift_equation, Setup, ShiftEquation, ShiftMode, Transport};

const BAND: Band = Band {
    t_modes: 4,
    x_modes: 2,
    amplitude: 1.0,
};

fn grids() -> (TimeGrid, SpaceGrid) {
    (TimeGrid::new(32).unwrap(), SpaceGrid::new(16).unwrap())
}

fn field(seed: u64, ncomp: usize) -> PeriodicField {
    let (time, space) = grids();
    random_field(&mut seeded_rng(seed), &time, space, ncomp, BAND)
}

fn transport(seed: u64) -> Transport {
    transport_with(seed, battery_problem())
}

fn transport_with(seed: u64, p: FirstOrderProblem) -> Transport {
    let (time, space) = grids();
    let setup = Arc::new(Setup::for_problem(&p, &time, space).unwrap());
    Transport::at_state(&p, setup, &field(seed, 2)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn time_shifts_compose(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let u = field(seed, 2);
        let twice = u.time_shift(a).time_shift(b);
        prop_assert!(twice.sup_dist(&u.time_shift(a + b)).unwrap() <= 1e-12 * (1.0 + u.sup_norm()));
    }

    #[test]
    fn whole_period_shift_is_identity(seed in any::<u64>(), m in -3i32..4) {
        let u = field(seed, 1);
        prop_assert!(u.time_shift(f64::from(m)).sup_dist(&u).unwrap() <= 1e-12 * (1.0 + u.sup_norm()));
    }

    #[test]
    fn time_shift_preserves_sup_on_grid_shifts(seed in any::<u64>(), j in 0usize..32) {
        let u = field(seed, 2);
        let s = u.time_shift(j as f64 / 32.0);
        prop_assert!((s.sup_norm() - u.sup_norm()).abs() <= 1e-12 * (1.0 + u.sup_norm()));
    }

    #[test]
    fn shift_equation_solution_satisfies_the_equation(
        seed in any::<u64>(),
        level in prop_oneof![0.1f64..0.8, 1.3f64..4.0],
        shift in -1.0f64..1.0,
    ) {
        let time = TimeGrid::new(32).unwrap();
        let mut rng = seeded_rng(seed);
        let gain: Vec<f64> = time.nodes().map(|t| level * (1.0 + 0.1 * (2.0 * std::f64::consts::PI * t).cos())).collect();
        let rhs: Vec<f64> = (0..32).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let eq = ShiftEquation { time: time.clone(), gain: gain.clone(), shift, rhs: rhs.clone() };
        let sol = solve_shift_equation(&eq, ShiftMode::Auto).unwrap();
        let shifted = time.shift(&sol.values, shift);
        let worst = (0..32).map(|i| (sol.values[i] - gain[i] * shifted[i] - rhs[i]).abs()).fold(0.0, f64::max);
        let scale = 1.0 + sol.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(worst <= 1e-10 * scale, "defect {worst:e}");
    }

    #[test]
    fn c_and_d_are_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let tr = transport(seed);
        let (v, w) = (field(seed ^ 1, 2), field(seed ^ 2, 2));
        let comb = v.lincomb(alpha, &w, beta).unwrap();
        for op in [Transport::apply_c, Transport::apply_d] {
            let lhs = op(&tr, &comb).unwrap();
            let rhs = op(&tr, &v).unwrap().lincomb(alpha, &op(&tr, &w).unwrap(), beta).unwrap();
            prop_assert!(lhs.sup_dist(&rhs).unwrap() <= 1e-11 * (1.0 + rhs.sup_norm()));
        }
    }

    #[test]
    fn reduced_solve_inverts_i_minus_c(seed in any::<u64>(), r in prop_oneof![Just([0.6, 0.7]), Just([2.5, -1.8])]) {
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-0.2*u1 + 0.1*u1*u2", "0.1*u1^2 - 0.2*u2", r[0], r[1]).unwrap();
        let tr = transport_with(seed, p);
        let f = field(seed ^ 3, 2);
        let v = tr.solve_i_minus_c(&f, ShiftMode::Auto).unwrap().field;
        let back = v.sub(&tr.apply_c(&v).unwrap()).unwrap();
        prop_assert!(back.sup_dist(&f).unwrap() <= 1e-10 * (1.0 + v.sup_norm()));
    }

    #[test]
    fn json_floats_round_trip(values in prop::collection::vec(-1e300f64..1e300, 0..16)) {
        let text = to_json_string(&values).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, values);
    }
}

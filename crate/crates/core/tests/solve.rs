use proptest::prelude::*;
use tvfluid::dist::{Distribution, RateFunction};
use tvfluid::kernel::Grid;
use tvfluid::processes::{balance_residuals, flow_ledger, process_checks};
use tvfluid::solver::{solve, InitialCondition, InitialGuess, Model, ResidualProfile, SolverConfig};

fn law(pick: u8, scale: f64) -> Distribution {
    match pick % 4 {
        0 => Distribution::exponential(scale).unwrap(),
        1 => Distribution::erlang(2, 2.0 * scale).unwrap(),
        2 => Distribution::uniform(0.0, 2.0 / scale).unwrap(),
        _ => Distribution::weibull(1.5, 1.0 / scale).unwrap(),
    }
}

prop_compose! {
    fn model()(
        v in prop::collection::vec(0.0f64..3.0, 4),
        fp in 0u8..4,
        gp in 0u8..4,
        theta in 0.5f64..2.0,
        mu in 0.5f64..2.0,
        mass in 0.0f64..1.0,
    ) -> Model {
        let rate = RateFunction::piecewise_linear(vec![(0.0, v[0]), (1.0, v[1]), (2.0, v[2]), (3.0, v[3])]).unwrap();
        let z0 = ResidualProfile::StationaryExcess { mass };
        Model::new(rate, law(fp, theta), law(gp, mu), InitialCondition::in_service(z0)).unwrap()
    }
}

fn config(h: f64) -> SolverConfig {
    SolverConfig::new(Grid::new(h, 3.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_invariant_holds(m in model()) {
        let sol = solve(&m, &config(0.05)).unwrap();
        prop_assert!(sol.diagnostics().residual <= 1e-10);
        for c in sol.structural_checks().into_iter().chain(process_checks(&sol).unwrap()) {
            prop_assert!(c.passed, "{} = {} > {}", c.name, c.value, c.bound);
        }
        let ledger = flow_ledger(&sol).unwrap();
        let (queue, system) = balance_residuals(&sol, &ledger);
        let bound = 10.0 * 0.05 * (m.extended_rate().sup() + m.service().rate());
        prop_assert!(queue <= bound && system <= bound);
        for i in 0..sol.x().len() {
            prop_assert!((sol.q()[i] - (sol.x()[i] - 1.0).max(0.0)).abs() < 1e-15);
            prop_assert!((sol.z()[i] - sol.x()[i].min(1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn starting_guess_does_not_matter(m in model()) {
        let a = solve(&m, &config(0.05)).unwrap();
        let mut cfg = config(0.05);
        cfg.initial_guess = InitialGuess::Zero;
        let b = solve(&m, &cfg).unwrap();
        cfg.initial_guess = InitialGuess::Constant(2.0 * a.x()[0] + 1.0);
        let c = solve(&m, &cfg).unwrap();
        for i in 0..a.x().len() {
            prop_assert!((a.x()[i] - b.x()[i]).abs() <= 2e-10);
            prop_assert!((a.x()[i] - c.x()[i]).abs() <= 2e-10);
        }
    }
}

#[test]
fn empty_system_stays_empty() {
    let rate = RateFunction::constant(0.0, 0.0, 3.0).unwrap();
    let exp = Distribution::exponential(1.0).unwrap();
    let m = Model::new(rate, exp.clone(), exp, InitialCondition::empty()).unwrap();
    let sol = solve(&m, &config(0.05)).unwrap();
    assert!(sol.x().iter().all(|x| *x == 0.0));
}

#[test]
fn infinite_server_regime_matches_closed_form() {
    // λ ≡ 0.5 with exponential service never fills the servers:
    // X(t) = z e^{−μt} + (λ/μ)(1 − e^{−μt}).
    let rate = RateFunction::constant(0.5, 0.0, 3.0).unwrap();
    let g = Distribution::exponential(1.3).unwrap();
    let z0 = ResidualProfile::Exponential { mass: 0.2, rate: 1.3 };
    let m = Model::new(rate, Distribution::exponential(1.0).unwrap(), g, InitialCondition::in_service(z0)).unwrap();
    let sol = solve(&m, &config(0.01)).unwrap();
    for (i, x) in sol.x().iter().enumerate() {
        let t = 0.01 * i as f64;
        let exact = 0.2 * (-1.3 * t).exp() + 0.5 / 1.3 * (1.0 - (-1.3 * t).exp());
        assert!((x - exact).abs() < 1e-4, "t={t}: {x} vs {exact}");
    }
}

#[test]
fn overloaded_state_settles_near_its_fixed_point() {
    // With θ = μ = 1 every customer leaves at unit rate whether waiting or in
    // service, so X' = λ − X and X(t) = 2(1 − e^{−t}).
    let rate = RateFunction::constant(2.0, 0.0, 10.0).unwrap();
    let exp = Distribution::exponential(1.0).unwrap();
    let m = Model::new(rate, exp.clone(), exp, InitialCondition::empty()).unwrap();
    let sol = solve(&m, &SolverConfig::new(Grid::new(0.02, 10.0).unwrap())).unwrap();
    let exact = 2.0 * (1.0 - (-10.0f64).exp());
    assert!((sol.x().last().unwrap() - exact).abs() < 1e-3);
}

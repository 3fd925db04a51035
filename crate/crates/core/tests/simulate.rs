use proptest::prelude::*;
use tvfluid::dist::{Distribution, RateFunction};
use tvfluid::kernel::Grid;
use tvfluid::sim::{simulate, SimScenario};
use tvfluid::solver::{InitialCondition, Model, ResidualProfile};

fn model(level: f64, mass: f64) -> Model {
    let rate = RateFunction::piecewise_linear(vec![(0.0, level), (2.0, 2.0 * level), (4.0, 0.5 * level)]).unwrap();
    Model::new(
        rate,
        Distribution::erlang(2, 1.5).unwrap(),
        Distribution::uniform(0.0, 2.0).unwrap(),
        InitialCondition::in_service(ResidualProfile::StationaryExcess { mass }),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_customer_is_accounted_for(level in 0.2f64..2.5, mass in 0.0f64..1.0, n in 5usize..60, seed in any::<u64>()) {
        let grid = Grid::new(0.05, 4.0).unwrap();
        let ens = simulate(&SimScenario::new(model(level, mass), grid, n, 3, seed)).unwrap();
        for rep in &ens.replications {
            prop_assert!(rep.counts.conserved());
            prop_assert_eq!(rep.counts.idle_violations, 0);
            for i in 0..grid.len() {
                let (x, q, z) = (rep.path.x[i], rep.path.q[i], rep.path.z[i]);
                prop_assert!(z <= 1.0 + 1e-12);
                prop_assert!((x - q - z).abs() < 1e-12);
                // Nobody waits while a server is free.
                prop_assert!(q == 0.0 || z == 1.0);
            }
        }
    }
}

#[test]
fn same_seed_same_paths() {
    let grid = Grid::new(0.05, 4.0).unwrap();
    let sc = SimScenario::new(model(1.2, 0.4), grid, 40, 4, 99);
    assert_eq!(simulate(&sc).unwrap(), simulate(&sc).unwrap());
    let other = SimScenario::new(model(1.2, 0.4), grid, 40, 4, 100);
    assert_ne!(simulate(&sc).unwrap().mean, simulate(&other).unwrap().mean);
}

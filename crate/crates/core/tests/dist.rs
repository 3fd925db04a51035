use proptest::prelude::*;
use tvfluid::dist::{Distribution, RateFunction};

fn laws() -> Vec<Distribution> {
    vec![
        Distribution::exponential(1.3).unwrap(),
        Distribution::erlang(3, 2.0).unwrap(),
        Distribution::uniform(0.5, 2.5).unwrap(),
        Distribution::hyperexponential(vec![0.3, 0.7], vec![0.5, 3.0]).unwrap(),
        Distribution::weibull(2.0, 1.1).unwrap(),
    ]
}

proptest! {
    #[test]
    fn cdf_is_monotone_and_bounded(a in 0.0f64..6.0, d in 0.0f64..2.0) {
        for g in laws() {
            let (fa, fb) = (g.cdf(a).unwrap(), g.cdf(a + d).unwrap());
            prop_assert!((0.0..=1.0).contains(&fa));
            prop_assert!(fb >= fa - 1e-15);
            prop_assert!((g.complement(a) - (1.0 - fa)).abs() < 1e-14);
        }
    }

    #[test]
    fn integrated_ccdf_has_the_ccdf_as_derivative(x in 0.05f64..5.0) {
        for g in laws() {
            let eps = 1e-5;
            let slope = (g.moments(x + eps).integrated_ccdf - g.moments(x - eps).integrated_ccdf) / (2.0 * eps);
            prop_assert!((slope - g.complement(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_complement_round_trips(v in 0.001f64..0.999) {
        for g in laws() {
            let x = g.inverse_complement(v);
            prop_assert!((g.complement(x) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn cumulative_arrivals_add_up(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0) {
        let mut t = [a, b, c];
        t.sort_by(f64::total_cmp);
        let r = RateFunction::piecewise_linear(vec![(0.0, 0.3), (4.0, 2.0), (7.0, 0.1), (10.0, 1.0)]).unwrap();
        let whole = r.cumulative_arrivals(t[0], t[2]).unwrap();
        let parts = r.cumulative_arrivals(t[0], t[1]).unwrap() + r.cumulative_arrivals(t[1], t[2]).unwrap();
        prop_assert!((whole - parts).abs() < 1e-12);
        prop_assert!(whole >= 0.0);
    }
}

#[test]
fn means_match_closed_forms() {
    let cases = [(0, 1.0 / 1.3), (1, 1.5), (2, 1.5), (3, 0.3 / 0.5 + 0.7 / 3.0)];
    let laws = laws();
    for (k, mean) in cases {
        assert!((laws[k].mean() - mean).abs() < 1e-12, "law {k}");
        // ∫₀^∞ F^c = mean.
        assert!((laws[k].moments(200.0).integrated_ccdf - mean).abs() < 1e-9, "law {k}");
    }
}

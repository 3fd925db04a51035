use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::kernel::Grid;

use super::FluidSolution;

/// Renewal function `U_G = Σ_{n≥0} G^{*n}` on the grid, with `G^{*0}` the unit
/// step at 0. Convolution powers are accumulated until the newest term drops
/// below `tol`; more than `max(10·T/E[G], 64)` terms is reported as divergence.
pub fn renewal_function(service: &Distribution, grid: &Grid, tol: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    let w: Vec<f64> = (0..n.saturating_sub(1))
        .map(|k| {
            service.cdf(grid.time(k + 1)).unwrap_or(1.0) - service.cdf(grid.time(k)).unwrap_or(0.0)
        })
        .collect();
    let limit = ((10.0 * grid.last_time() / service.mean()).ceil() as usize).max(64);
    let mut term = vec![1.0; n];
    let mut total = term.clone();
    for _ in 0..limit {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                (0..i)
                    .map(|k| 0.5 * w[k] * (term[i - k] + term[i - k - 1]))
                    .sum::<f64>()
            })
            .collect();
        let size = next.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        for (t, v) in total.iter_mut().zip(&next) {
            *t += v;
        }
        term = next;
        if size < tol {
            return Ok(total);
        }
    }
    Err(Error::Divergence {
        message: format!("renewal series did not fall below {tol} within {limit} terms"),
        residual: term.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
    })
}

/// On the maximal prefix where `X ≥ 1`, compare the entry process `a` with the
/// renewal representation `∫₀ᵗ (1 − Z̄(0)(C_{t−s})) dU_G(s)`. Returns the
/// largest absolute gap (0 for an empty prefix).
pub fn overloaded_prefix_check(solution: &FluidSolution, renewal: &[f64]) -> Result<f64> {
    let grid = solution.grid();
    if renewal.len() != grid.len() {
        return Err(Error::Config(format!(
            "renewal function has {} nodes, grid has {}",
            renewal.len(),
            grid.len()
        )));
    }
    let prefix = solution.x().iter().take_while(|&&x| x >= 1.0).count();
    if prefix == 0 {
        return Ok(0.0);
    }
    let model = solution.model();
    let phi: Vec<f64> = (0..prefix).map(|i| 1.0 - model.z0(grid.time(i))).collect();
    let a = solution.a();
    let mut worst: f64 = 0.0;
    for i in 0..prefix {
        let mut r = phi[i] * renewal[0];
        for k in 0..i {
            r += 0.5 * (renewal[k + 1] - renewal[k]) * (phi[i - k] + phi[i - k - 1]);
        }
        worst = worst.max((a[i] - r).abs());
    }
    Ok(worst)
}

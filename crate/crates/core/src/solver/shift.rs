use crate::error::{Error, Result};
use crate::kernel::Grid;
use crate::processes::in_service_profile;

use super::{FluidSolution, InitialCondition, Model, ResidualProfile, Solver, SolverConfig};

/// Restart the solution at grid node `tau`: the shifted model has arrival rate
/// `λ(τ + ·)`, initial waiting time `ω(τ)` and in-service residual profile
/// `Z̄(τ)(C_·)`. The returned solution lives on `[0, T − τ]`.
pub fn time_shift(sol: &FluidSolution, tau: f64) -> Result<FluidSolution> {
    let grid = sol.grid();
    let i = grid
        .index_of(tau)
        .ok_or_else(|| Error::Domain(format!("shift time {tau} is not a grid node")))?;
    if i == 0 {
        return Ok(sol.clone());
    }
    if i + 1 >= grid.len() {
        return Err(Error::Domain(format!("shift time {tau} leaves no horizon")));
    }
    let h = grid.step();
    let tau = grid.time(i);
    let horizon = grid.last_time() - tau;
    let new_grid = Grid::new(h, horizon)?;
    let model = sol.model();
    let rate = model.extended_rate();
    let w = sol.omega()[i];

    let profile = in_service_profile(sol, i, 2 * new_grid.len() + 2)?;
    let initial = InitialCondition {
        omega0: w,
        pre_rate: if w > 0.0 {
            Some(rate.shifted(tau, tau - w, tau)?)
        } else {
            None
        },
        z0: ResidualProfile::Tabulated {
            step: h,
            values: profile.values,
        },
    };
    let shifted = Model::new(
        rate.shifted(tau, tau, grid.last_time().max(rate.end()))?,
        model.patience().clone(),
        model.service().clone(),
        initial,
    )?;
    let config = SolverConfig {
        grid: new_grid,
        ..sol.config().clone()
    };
    // The shifted profile inherits the O(h²) quadrature error of the
    // reconstruction, so non-idling is checked at that scale.
    Solver::with_idle_tolerance(shifted, config, 10.0 * h * h)?.run()
}

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, RateFunction};
use crate::error::{Error, Result};
use crate::kernel::{Grid, Kernel};

/// Initial in-service residual profile `x ↦ Z̄(0)(C_x)`: the mass of fluid in
/// service at time 0 whose remaining service time exceeds `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ResidualProfile {
    Empty,
    /// `mass · e^{−rate·x}`.
    Exponential { mass: f64, rate: f64 },
    /// `mass · (1 − G_e(x))`: servers in stationary-excess state.
    StationaryExcess { mass: f64 },
    /// Values at `x = k·step`, linearly interpolated and held constant past
    /// the last node.
    Tabulated { step: f64, values: Vec<f64> },
}

impl ResidualProfile {
    pub fn eval(&self, x: f64, service: &Distribution) -> f64 {
        let x = x.max(0.0);
        match self {
            ResidualProfile::Empty => 0.0,
            ResidualProfile::Exponential { mass, rate } => mass * (-rate * x).exp(),
            ResidualProfile::StationaryExcess { mass } => {
                let ge = service.moments(x).integrated_ccdf / service.mean();
                mass * (1.0 - ge).max(0.0)
            }
            ResidualProfile::Tabulated { step, values } => {
                let pos = x / step;
                let k = pos.floor() as usize;
                if k + 1 >= values.len() {
                    return *values.last().unwrap_or(&0.0);
                }
                let frac = pos - k as f64;
                values[k] + frac * (values[k + 1] - values[k])
            }
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            ResidualProfile::Empty => Ok(()),
            ResidualProfile::Exponential { mass, rate } => {
                if !(*mass >= 0.0) || !(*rate > 0.0) {
                    return Err(Error::Config(format!(
                        "exponential residual profile needs mass >= 0 and rate > 0, got ({mass}, {rate})"
                    )));
                }
                Ok(())
            }
            ResidualProfile::StationaryExcess { mass } => {
                if !(*mass >= 0.0) {
                    return Err(Error::Config(format!("residual profile mass must be >= 0, got {mass}")));
                }
                Ok(())
            }
            ResidualProfile::Tabulated { step, values } => {
                if !(*step > 0.0) || values.is_empty() {
                    return Err(Error::Config("tabulated residual profile needs step > 0 and values".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Config("tabulated residual profile values must be finite and >= 0".into()));
                }
                Ok(())
            }
        }
    }
}

/// Residual-time initial state: `ω(0)`, the arrival rate before time 0 and
/// the in-service residual profile. The initial queue `Q(0)` is derived as
/// `∫₀^{ω(0)} F^c(s) λ(−s) ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub omega0: f64,
    /// Rate on `[−ω(0), 0]`; required when `ω(0) > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_rate: Option<RateFunction>,
    pub z0: ResidualProfile,
}

impl InitialCondition {
    pub fn empty() -> Self {
        InitialCondition {
            omega0: 0.0,
            pre_rate: None,
            z0: ResidualProfile::Empty,
        }
    }

    pub fn in_service(z0: ResidualProfile) -> Self {
        InitialCondition {
            omega0: 0.0,
            pre_rate: None,
            z0,
        }
    }
}

/// Everything the key equation needs: arrival rate on `[0, T]`, patience and
/// service laws, initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    rate: RateFunction,
    extended: RateFunction,
    patience: Distribution,
    service: Distribution,
    initial: InitialCondition,
}

impl Model {
    pub fn new(
        rate: RateFunction,
        patience: Distribution,
        service: Distribution,
        initial: InitialCondition,
    ) -> Result<Self> {
        initial.z0.validate_shape()?;
        if !(initial.omega0 >= 0.0) || !initial.omega0.is_finite() {
            return Err(Error::Config(format!(
                "ω(0) must be finite and nonnegative, got {}",
                initial.omega0
            )));
        }
        if rate.start() > 0.0 {
            return Err(Error::Config(format!("arrival rate must start at or before 0, got {}", rate.start())));
        }
        let future = if rate.start() < 0.0 {
            rate.shifted(0.0, 0.0, rate.end())?
        } else {
            rate
        };
        let extended = if initial.omega0 > 0.0 {
            let pre = initial.pre_rate.as_ref().ok_or_else(|| {
                Error::Config("ω(0) > 0 requires a pre-zero arrival rate".into())
            })?;
            let tol = 1e-12 * (1.0 + initial.omega0);
            if pre.start() > -initial.omega0 + tol || (pre.end()).abs() > tol {
                return Err(Error::Config(format!(
                    "pre-zero rate covers [{}, {}], expected [{}, 0]",
                    pre.start(),
                    pre.end(),
                    -initial.omega0
                )));
            }
            let pre = pre.shifted(0.0, -initial.omega0, 0.0)?;
            RateFunction::join(&pre, &future)?
        } else {
            future.clone()
        };
        Ok(Model {
            rate: future,
            extended,
            patience,
            service,
            initial,
        })
    }

    /// Arrival rate on `[0, T]`.
    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    /// Arrival rate on `[−ω(0), T]`.
    pub fn extended_rate(&self) -> &RateFunction {
        &self.extended
    }

    pub fn patience(&self) -> &Distribution {
        &self.patience
    }

    pub fn service(&self) -> &Distribution {
        &self.service
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.initial
    }

    pub fn omega0(&self) -> f64 {
        self.initial.omega0
    }

    /// `Z̄(0)(C_x)`.
    pub fn z0(&self, x: f64) -> f64 {
        self.initial.z0.eval(x, &self.service)
    }

    /// `Q(0) = ∫₀^{ω(0)} F^c(s) λ(−s) ds`.
    pub fn q0(&self) -> f64 {
        if self.initial.omega0 == 0.0 {
            return 0.0;
        }
        let grid = Grid::new(self.initial.omega0, self.initial.omega0).expect("positive ω(0)");
        let k = Kernel::new(self.extended.clone(), self.patience.clone(), self.initial.omega0, &grid)
            .expect("extended rate covers [−ω(0), 0]");
        k.node(0).n_f()
    }

    /// Check the initial condition against the grid: `Z̄(0)(C_·)` nonincreasing,
    /// at most 1, free of atoms at grid scale, and non-idling at time 0
    /// (`Q(0) > 0 ⇒ Z̄(0)(C_0) = 1` within `idle_tol`).
    pub fn validate_initial(&self, grid: &Grid, idle_tol: f64) -> Result<()> {
        let h = grid.step();
        if self.rate.end() < grid.last_time() - 1e-9 * h {
            return Err(Error::Config(format!(
                "arrival rate ends at {} before the horizon {}",
                self.rate.end(),
                grid.last_time()
            )));
        }
        let z_at0 = self.z0(0.0);
        if z_at0 > 1.0 + idle_tol {
            return Err(Error::Config(format!("Z̄(0)(C_0) = {z_at0} exceeds the capacity 1")));
        }
        let modulus = 10.0 * self.service.rate().max(1.0) * h;
        let mut prev = z_at0;
        let span = 2 * grid.len();
        for k in 1..span {
            let v = self.z0(k as f64 * h);
            if v > prev + 1e-12 {
                return Err(Error::Config(format!(
                    "Z̄(0)(C_x) must be nonincreasing; increases at x = {}",
                    k as f64 * h
                )));
            }
            if prev - v > modulus {
                return Err(Error::Config(format!(
                    "Z̄(0)(C_x) drops by {} over one grid step at x = {} (atom?)",
                    prev - v,
                    k as f64 * h
                )));
            }
            prev = v;
        }
        let q0 = self.q0();
        if q0 > idle_tol && (z_at0 - 1.0).abs() > idle_tol {
            return Err(Error::Config(format!(
                "non-idling violated at time 0: Q(0) = {q0} > 0 but Z̄(0)(C_0) = {z_at0}"
            )));
        }
        Ok(())
    }
}

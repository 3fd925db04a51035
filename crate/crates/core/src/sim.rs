//! Discrete-event simulation of the `n`-server queue with abandonment.
//!
//! Arrivals form a nonhomogeneous Poisson process with rate `n·λ(t)`
//! (thinning), service is FCFS, and a waiting customer abandons when its
//! patience runs out before service starts. Simultaneous events resolve as
//! abandonment, then departure (and the service start it triggers), then
//! arrival. Replication `r` draws from ChaCha8 keyed by `(seed, r)`, so runs
//! are reproducible regardless of thread count.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Grid, Kernel};
use crate::solver::{FluidSolution, Model};

/// A customer waiting at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waiter {
    /// Arrival epoch, `≤ 0`.
    pub arrival: f64,
    /// Remaining patience at time 0.
    pub patience: f64,
}

/// Explicit initial customers, used instead of sampling from the fluid state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialPopulation {
    /// Remaining service times of the customers in service.
    pub in_service: Vec<f64>,
    /// Waiting customers in FCFS order.
    pub waiting: Vec<Waiter>,
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub n: usize,
    pub model: Model,
    pub grid: Grid,
    pub seed: u64,
    pub replications: usize,
    pub population: Option<InitialPopulation>,
}

impl SimScenario {
    pub fn new(model: Model, grid: Grid, n: usize, replications: usize, seed: u64) -> Self {
        SimScenario {
            n,
            model,
            grid,
            seed,
            replications,
            population: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("server count n must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        let rate = self.model.rate();
        if !rate.sup().is_finite() {
            return Err(Error::Config("arrival rate supremum is not finite".into()));
        }
        if rate.end() < self.grid.last_time() {
            return Err(Error::Config(format!(
                "arrival rate ends at {} before the horizon {}",
                rate.end(),
                self.grid.last_time()
            )));
        }
        if let Some(p) = &self.population {
            if p.in_service.len() > self.n {
                return Err(Error::Config(format!(
                    "{} initial customers in service exceed n = {}",
                    p.in_service.len(),
                    self.n
                )));
            }
            if !p.waiting.is_empty() && p.in_service.len() < self.n {
                return Err(Error::Config("initial waiters while servers idle".into()));
            }
        }
        Ok(())
    }
}

/// Scaled state `(X_n, Q_n, Z_n)/n` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub z: Vec<f64>,
}

/// Event counts of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FlowCounts {
    /// Includes the customers waiting at time 0.
    pub arrivals: u64,
    /// Customers that started service after time 0.
    pub entered_service: u64,
    pub abandoned: u64,
    pub completed: u64,
    pub waiting_at_end: u64,
    /// Times a customer waited while a server was idle.
    pub idle_violations: u64,
}

impl FlowCounts {
    /// `arrivals = entered + abandoned + waiting at T`.
    pub fn conserved(&self) -> bool {
        self.arrivals == self.entered_service + self.abandoned + self.waiting_at_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub path: SamplePath,
    pub counts: FlowCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEnsemble {
    pub n: usize,
    pub seed: u64,
    pub grid: Grid,
    pub replications: Vec<Replication>,
    pub mean: SamplePath,
    pub variance: SamplePath,
}

impl SimEnsemble {
    fn from_replications(n: usize, seed: u64, grid: Grid, replications: Vec<Replication>) -> Self {
        let len = grid.len();
        let r = replications.len() as f64;
        // Welford updates keep identical samples exact.
        let moments = |pick: fn(&SamplePath) -> &Vec<f64>| {
            let mut mean = vec![0.0; len];
            let mut m2 = vec![0.0; len];
            for (k, rep) in replications.iter().enumerate() {
                let count = (k + 1) as f64;
                for ((m, s), v) in mean.iter_mut().zip(m2.iter_mut()).zip(pick(&rep.path)) {
                    let d = v - *m;
                    *m += d / count;
                    *s += d * (v - *m);
                }
            }
            let var = if replications.len() > 1 {
                m2.iter().map(|s| s / (r - 1.0)).collect()
            } else {
                vec![0.0; len]
            };
            (mean, var)
        };
        let (mx, vx) = moments(|p| &p.x);
        let (mq, vq) = moments(|p| &p.q);
        let (mz, vz) = moments(|p| &p.z);
        SimEnsemble {
            n,
            seed,
            grid,
            replications,
            mean: SamplePath { x: mx, q: mq, z: mz },
            variance: SamplePath { x: vx, q: vq, z: vz },
        }
    }

    /// Noise-free surrogate whose every replication is the fluid trajectory.
    pub fn from_fluid(sol: &FluidSolution, n: usize, replications: usize) -> Self {
        let path = SamplePath {
            x: sol.x().to_vec(),
            q: sol.q().to_vec(),
            z: sol.z().to_vec(),
        };
        let reps = (0..replications.max(1))
            .map(|_| Replication {
                path: path.clone(),
                counts: FlowCounts::default(),
            })
            .collect();
        Self::from_replications(n, 0, *sol.grid(), reps)
    }
}

/// Run all replications in parallel on the current rayon pool.
pub fn simulate(scenario: &SimScenario) -> Result<SimEnsemble> {
    scenario.validate()?;
    let sampler = InitialSampler::new(scenario)?;
    let reps: Vec<Replication> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            rng.set_stream(r as u64);
            run_replication(scenario, &sampler, &mut rng)
        })
        .collect();
    Ok(SimEnsemble::from_replications(
        scenario.n,
        scenario.seed,
        scenario.grid,
        reps,
    ))
}

/// Samples initial customers from the fluid state at scale `n`.
struct InitialSampler {
    waiting: usize,
    in_service: usize,
    kernel: Option<Kernel>,
    q0: f64,
}

impl InitialSampler {
    fn new(s: &SimScenario) -> Result<Self> {
        if s.population.is_some() {
            return Ok(InitialSampler {
                waiting: 0,
                in_service: 0,
                kernel: None,
                q0: 0.0,
            });
        }
        let m = &s.model;
        let q0 = m.q0();
        let n = s.n as f64;
        let kernel = if q0 > 0.0 {
            let g = Grid::new(m.omega0(), m.omega0())?;
            Some(Kernel::new(m.extended_rate().clone(), m.patience().clone(), m.omega0(), &g)?)
        } else {
            None
        };
        Ok(InitialSampler {
            waiting: (n * q0 + 1e-9).floor() as usize,
            in_service: ((n * m.z0(0.0) + 1e-9).floor() as usize).min(s.n),
            kernel,
            q0,
        })
    }

    fn sample<R: Rng>(&self, s: &SimScenario, rng: &mut R) -> InitialPopulation {
        if let Some(p) = &s.population {
            return p.clone();
        }
        let m = &s.model;
        let in_service = (0..self.in_service)
            .map(|_| residual_service(m, rng.random::<f64>()))
            .collect();
        let mut waiting: Vec<Waiter> = match &self.kernel {
            Some(k) => {
                let node = k.node(0);
                (0..self.waiting)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let age = node.f_dt_inverse(u * self.q0).unwrap_or(0.0);
                        let total = m.patience().sample_beyond(age, rng);
                        Waiter {
                            arrival: -age,
                            patience: (total - age).max(0.0),
                        }
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        waiting.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
        InitialPopulation { in_service, waiting }
    }
}

/// Draw `R` with `P(R > x) = Z̄(0)(C_x)/Z̄(0)(C_0)` by inverting the profile.
fn residual_service(m: &Model, u: f64) -> f64 {
    let top = m.z0(0.0);
    let target = u * top;
    let mut hi = m.service().mean().max(1e-6);
    while m.z0(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if m.z0(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy)]
struct Key(f64);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Customer {
    id: u64,
    deadline: f64,
}

fn run_replication<R: Rng>(s: &SimScenario, sampler: &InitialSampler, rng: &mut R) -> Replication {
    let n = s.n;
    let scale = 1.0 / n as f64;
    let horizon = s.grid.last_time();
    let rate = s.model.rate();
    let lam_max = rate.sup() * n as f64;
    let patience = s.model.patience();
    let service = s.model.service();

    let init = sampler.sample(s, rng);
    let mut completions: BinaryHeap<Reverse<Key>> = init
        .in_service
        .iter()
        .map(|r| Reverse(Key(*r)))
        .collect();
    let mut queue: VecDeque<Customer> = VecDeque::new();
    let mut deadlines: BinaryHeap<Reverse<(Key, u64)>> = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut counts = FlowCounts::default();
    for w in &init.waiting {
        let c = Customer {
            id: next_id,
            deadline: w.patience,
        };
        next_id += 1;
        deadlines.push(Reverse((Key(c.deadline), c.id)));
        queue.push_back(c);
        counts.arrivals += 1;
    }
    // Deadlines of customers who already entered service are skipped lazily.
    let mut gone = std::collections::HashSet::new();

    let next_arrival = |rng: &mut R, from: f64| -> f64 {
        if lam_max <= 0.0 {
            return f64::INFINITY;
        }
        let mut t = from;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / lam_max;
            if t > horizon {
                return f64::INFINITY;
            }
            let v: f64 = rng.random();
            if v * lam_max <= rate.rate(t) * n as f64 {
                return t;
            }
        }
    };

    let len = s.grid.len();
    let mut path = SamplePath {
        x: vec![0.0; len],
        q: vec![0.0; len],
        z: vec![0.0; len],
    };
    let mut arrival = next_arrival(rng, 0.0);
    let mut k = 0;
    loop {
        while let Some(Reverse((_, id))) = deadlines.peek() {
            if gone.contains(id) {
                let id = *id;
                deadlines.pop();
                gone.remove(&id);
            } else {
                break;
            }
        }
        let t_ab = deadlines.peek().map_or(f64::INFINITY, |Reverse((d, _))| d.0);
        let t_dep = completions.peek().map_or(f64::INFINITY, |Reverse(d)| d.0);
        let t_next = t_ab.min(t_dep).min(arrival);
        // Record the state on grid nodes before the next event.
        while k < len && s.grid.time(k) < t_next {
            let busy = completions.len() as f64;
            let waiting = queue.len() as f64;
            path.z[k] = busy * scale;
            path.q[k] = waiting * scale;
            path.x[k] = path.q[k] + path.z[k];
            k += 1;
        }
        if k >= len || !t_next.is_finite() {
            break;
        }
        if t_ab <= t_dep && t_ab <= arrival {
            let Reverse((_, id)) = deadlines.pop().expect("peeked");
            let pos = queue.iter().position(|c| c.id == id).expect("waiting customer");
            queue.remove(pos);
            counts.abandoned += 1;
        } else if t_dep <= arrival {
            completions.pop();
            counts.completed += 1;
            if let Some(c) = queue.pop_front() {
                gone.insert(c.id);
                completions.push(Reverse(Key(t_dep + service.sample(rng))));
                counts.entered_service += 1;
            }
        } else {
            counts.arrivals += 1;
            if completions.len() < n {
                completions.push(Reverse(Key(arrival + service.sample(rng))));
                counts.entered_service += 1;
            } else {
                let c = Customer {
                    id: next_id,
                    deadline: arrival + patience.sample(rng),
                };
                next_id += 1;
                deadlines.push(Reverse((Key(c.deadline), c.id)));
                queue.push_back(c);
            }
            arrival = next_arrival(rng, arrival);
        }
        if !queue.is_empty() && completions.len() < n {
            counts.idle_violations += 1;
        }
    }
    counts.waiting_at_end = queue.len() as u64;
    Replication { path, counts }
}

/// Sup-norm gaps between the ensemble mean and the fluid trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub replications: usize,
    pub sup_x: f64,
    pub sup_q: f64,
    pub sup_z: f64,
}

pub fn compare(sol: &FluidSolution, ens: &SimEnsemble) -> Result<Comparison> {
    let g = sol.grid();
    if g.len() != ens.grid.len() || (g.step() - ens.grid.step()).abs() > 1e-12 * g.step() {
        return Err(Error::Domain(format!(
            "grid mismatch: fluid has {} nodes of step {}, ensemble {} of step {}",
            g.len(),
            g.step(),
            ens.grid.len(),
            ens.grid.step()
        )));
    }
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    Ok(Comparison {
        n: ens.n,
        replications: ens.replications.len(),
        sup_x: sup(sol.x(), &ens.mean.x),
        sup_q: sup(sol.q(), &ens.mean.q),
        sup_z: sup(sol.z(), &ens.mean.z),
    })
}

/// Whether the `X` errors strictly decrease along the given order of `n`.
pub fn strictly_decreasing(rows: &[Comparison]) -> bool {
    rows.windows(2).all(|w| w[1].n > w[0].n && w[1].sup_x < w[0].sup_x)
}

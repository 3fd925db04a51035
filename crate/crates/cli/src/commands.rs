use std::path::{Path, PathBuf};

use serde::Serialize;
use tvfluid::elapsed::{equivalence_report, EquivalenceReport};
use tvfluid::processes::{balance_residuals, flow_ledger, process_checks, FlowLedger};
use tvfluid::sim::{compare, simulate, strictly_decreasing, Comparison, FlowCounts, SimScenario};
use tvfluid::solver::{solve, FluidSolution, InvariantCheck, SolveDiagnostics};

use crate::output::{csv, write_json, write_text};
use crate::{CliError, Scenario, SimBlock};

/// What a command wrote and whether its checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub failed_checks: usize,
}

impl RunReport {
    fn new(out: &Path, names: &[&str], failed_checks: usize) -> Self {
        RunReport {
            files: names.iter().map(|n| out.join(n)).collect(),
            failed_checks,
        }
    }
}

/// A solved scenario with its ledger and every invariant check.
pub struct Solved {
    pub solution: FluidSolution,
    pub ledger: FlowLedger,
    pub checks: Vec<InvariantCheck>,
    pub balance: Balance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Balance {
    pub queue: f64,
    pub system: f64,
    /// `10h·(sup λ + μ)`.
    pub bound: f64,
}

pub fn solve_scenario(sc: &Scenario) -> Result<Solved, CliError> {
    let model = sc.model()?;
    let config = sc.solver_config()?;
    let solution = solve(&model, &config)?;
    let ledger = flow_ledger(&solution)?;
    let (queue, system) = balance_residuals(&solution, &ledger);
    let h = config.grid.step();
    let bound = 10.0 * h * (model.extended_rate().sup() + model.service().rate());
    let balance = Balance { queue, system, bound };
    let mut checks = vec![InvariantCheck::new(
        "key-equation-residual",
        solution.diagnostics().residual,
        config.picard_tol,
    )];
    checks.extend(solution.structural_checks());
    checks.extend(process_checks(&solution)?);
    checks.push(InvariantCheck::new("queue-balance", queue, bound));
    checks.push(InvariantCheck::new("system-balance", system, bound));
    Ok(Solved {
        solution,
        ledger,
        checks,
        balance,
    })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    scenario: &'a str,
    h: f64,
    horizon: f64,
    nodes: usize,
    q0: f64,
    solver: &'a SolveDiagnostics,
    balance: Balance,
    checks: &'a [InvariantCheck],
    passed: bool,
}

fn summary<'a>(sc: &'a Scenario, s: &'a Solved) -> SolveSummary<'a> {
    let grid = s.solution.grid();
    SolveSummary {
        scenario: &sc.name,
        h: grid.step(),
        horizon: grid.horizon(),
        nodes: grid.len(),
        q0: s.solution.q0(),
        solver: s.solution.diagnostics(),
        balance: s.balance,
        checks: &s.checks,
        passed: s.checks.iter().all(|c| c.passed),
    }
}

fn failures(checks: &[InvariantCheck]) -> usize {
    checks.iter().filter(|c| !c.passed).count()
}

/// `trajectories.csv` (t, X, Q, Z, omega, A, L, S, E, a) and `diagnostics.json`.
pub fn run_solve(sc: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    let s = solve_scenario(sc)?;
    let sol = &s.solution;
    let a = sol.a();
    let header: Vec<String> = ["t", "X", "Q", "Z", "omega", "A", "L", "S", "E", "a"]
        .iter()
        .map(|c| c.to_string())
        .collect();
    let led = &s.ledger;
    let text = csv(
        &header,
        &[&led.t, sol.x(), sol.q(), sol.z(), sol.omega(), &led.a, &led.l, &led.s, &led.e, &a],
    );
    write_text(out, "trajectories.csv", &text)?;
    write_json(out, "diagnostics.json", &summary(sc, &s))?;
    Ok(RunReport::new(out, &["trajectories.csv", "diagnostics.json"], failures(&s.checks)))
}

/// `invariants.json` with every check and its slack.
pub fn run_check_invariants(sc: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    let s = solve_scenario(sc)?;
    write_json(out, "invariants.json", &summary(sc, &s))?;
    Ok(RunReport::new(out, &["invariants.json"], failures(&s.checks)))
}

fn sim_block(sc: &Scenario) -> Result<&SimBlock, CliError> {
    sc.sim
        .as_ref()
        .ok_or_else(|| CliError::Schema("sim: block required for simulation".into()))
}

#[derive(Serialize)]
struct EnsembleSummary {
    n: usize,
    replications: usize,
    seed: u64,
    conserved: bool,
    totals: FlowCounts,
}

fn add_counts(total: &mut FlowCounts, c: &FlowCounts) {
    total.arrivals += c.arrivals;
    total.entered_service += c.entered_service;
    total.abandoned += c.abandoned;
    total.completed += c.completed;
    total.waiting_at_end += c.waiting_at_end;
    total.idle_violations += c.idle_violations;
}

/// Per `n`: `ensemble_n{n}.csv` (mean and variance of X, Q, Z over n),
/// `replications_n{n}.csv` (X/n per replication); plus `simulation.json`.
pub fn run_simulate(sc: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    let block = sim_block(sc)?;
    let model = sc.model()?;
    let grid = sc.grid()?;
    let times: Vec<f64> = (0..grid.len()).map(|i| grid.time(i)).collect();
    let mut names = Vec::new();
    let mut summaries = Vec::new();
    let mut violations = 0;
    for &n in &block.n {
        let ens = simulate(&SimScenario::new(model.clone(), grid, n, block.replications, block.seed))?;
        let m = &ens.mean;
        let v = &ens.variance;
        let header: Vec<String> = ["t", "mean_X", "mean_Q", "mean_Z", "var_X", "var_Q", "var_Z"]
            .iter()
            .map(|c| c.to_string())
            .collect();
        let name = format!("ensemble_n{n}.csv");
        write_text(out, &name, &csv(&header, &[&times, &m.x, &m.q, &m.z, &v.x, &v.q, &v.z]))?;
        names.push(name);

        let mut header = vec!["t".to_string()];
        let mut cols: Vec<&[f64]> = vec![&times];
        for (r, rep) in ens.replications.iter().enumerate() {
            header.push(format!("X_r{r}"));
            cols.push(&rep.path.x);
        }
        let name = format!("replications_n{n}.csv");
        write_text(out, &name, &csv(&header, &cols))?;
        names.push(name);

        let mut totals = FlowCounts::default();
        let mut conserved = true;
        for rep in &ens.replications {
            add_counts(&mut totals, &rep.counts);
            conserved &= rep.counts.conserved();
        }
        violations += usize::from(!conserved) + totals.idle_violations as usize;
        summaries.push(EnsembleSummary {
            n,
            replications: ens.replications.len(),
            seed: ens.seed,
            conserved,
            totals,
        });
    }
    write_json(out, "simulation.json", &summaries)?;
    names.push("simulation.json".into());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(RunReport::new(out, &refs, violations))
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    scenario: &'a str,
    rows: &'a [Comparison],
    strictly_decreasing: bool,
}

/// `comparison.csv` (t, fluid_X, mean_X_n{n}…) and `comparison.json` with the
/// sup-norm errors per `n`.
pub fn run_compare(sc: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    let block = sim_block(sc)?;
    let s = solve_scenario(sc)?;
    let sol = &s.solution;
    let grid = *sol.grid();
    let mut header = vec!["t".to_string(), "fluid_X".to_string()];
    let mut means = Vec::new();
    let mut rows = Vec::new();
    for &n in &block.n {
        let ens = simulate(&SimScenario::new(
            sol.model().clone(),
            grid,
            n,
            block.replications,
            block.seed,
        ))?;
        rows.push(compare(sol, &ens)?);
        header.push(format!("mean_X_n{n}"));
        means.push(ens.mean.x);
    }
    let times = sol.times();
    let mut cols: Vec<&[f64]> = vec![&times, sol.x()];
    cols.extend(means.iter().map(Vec::as_slice));
    write_text(out, "comparison.csv", &csv(&header, &cols))?;
    write_json(
        out,
        "comparison.json",
        &ComparisonSummary {
            scenario: &sc.name,
            rows: &rows,
            strictly_decreasing: strictly_decreasing(&rows),
        },
    )?;
    Ok(RunReport::new(out, &["comparison.csv", "comparison.json"], 0))
}

#[derive(Serialize)]
struct EquivalenceSummary<'a> {
    scenario: &'a str,
    report: &'a EquivalenceReport,
    passed: bool,
}

/// `equivalence.json`; requires an elapsed-form initial condition.
pub fn run_equivalence(sc: &Scenario, out: &Path) -> Result<RunReport, CliError> {
    let report = equivalence_report(&sc.elapsed()?)?;
    let passed = report.passed();
    write_json(
        out,
        "equivalence.json",
        &EquivalenceSummary {
            scenario: &sc.name,
            report: &report,
            passed,
        },
    )?;
    Ok(RunReport::new(out, &["equivalence.json"], usize::from(!passed)))
}

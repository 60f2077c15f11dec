use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::config::EvalConfig;
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::parser::{num, parse};
use crate::semantics::{diff_robustness, robustness};
use crate::signal::Signal;

use super::descent::{gradient_descent, AnnealSchedule, GdOptions, Method};
use super::loss::MarginLoss;

/// Planar region referenced as `inside(NAME)` in a plan specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum Region {
    Box { x: [f64; 2], y: [f64; 2] },
    Circle { center: [f64; 2], radius: f64 },
}

impl Region {
    /// Predicate text that is positive inside the region.
    pub fn predicate(&self) -> String {
        match self {
            Region::Box { x, y } => {
                format!("box(x0 in [{}, {}], x1 in [{}, {}]) > 0", num(x[0]), num(x[1]), num(y[0]), num(y[1]))
            }
            Region::Circle { center, radius } => {
                format!("norm(x0 - {}, x1 - {}) < {}", num(center[0]), num(center[1]), num(*radius))
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Region::Box { x, y } => x[0] < x[1] && y[0] < y[1],
            Region::Circle { radius, .. } => *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("region `{name}` is empty")))
        }
    }
}

/// Replaces each `inside(NAME)` with the predicate of region `NAME`.
pub fn expand_regions(spec: &str, regions: &IndexMap<String, Region>) -> Result<String> {
    let mut out = String::with_capacity(spec.len());
    let mut rest = spec;
    while let Some(at) = rest.find("inside(") {
        out.push_str(&rest[..at]);
        let tail = &rest[at + "inside(".len()..];
        let close = tail.find(')').ok_or_else(|| Error::InvalidFormula("unclosed `inside(`".into()))?;
        let name = tail[..close].trim();
        let region = regions.get(name).ok_or_else(|| Error::InvalidFormula(format!("unknown region `{name}`")))?;
        out.push('(');
        out.push_str(&region.predicate());
        out.push(')');
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Single-integrator planning problem in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProblem {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Number of states; controls number one fewer.
    pub steps: usize,
    pub dt: f64,
    pub u_max: f64,
    /// STL constraint on the states, `inside(NAME)` allowed.
    pub spec: String,
    #[serde(default)]
    pub regions: IndexMap<String, Region>,
    #[serde(default = "defaults::gamma")]
    pub gamma_state: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma_control: f64,
    #[serde(default = "defaults::margin")]
    pub margin: f64,
    #[serde(default)]
    pub solver: PlanOptions,
}

mod defaults {
    pub fn gamma() -> f64 {
        0.3
    }
    pub fn margin() -> f64 {
        0.05
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    pub step: f64,
    pub iters: usize,
    pub method: Method,
    pub eval: EvalConfig,
    pub anneal: Option<AnnealSchedule>,
    /// Project the result onto the dynamics before reporting.
    pub project: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            step: 0.05,
            iters: 5000,
            method: Method::Plain,
            eval: EvalConfig::soft(1.0),
            anneal: Some(AnnealSchedule::default()),
            project: true,
        }
    }
}

impl PlanProblem {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidConfig("a plan needs at least two states".into()));
        }
        if !(self.dt > 0.0) || !(self.u_max > 0.0) {
            return Err(Error::InvalidConfig("dt and u_max must be positive".into()));
        }
        if self.start.iter().chain(&self.goal).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("start and goal must be finite".into()));
        }
        for (name, r) in &self.regions {
            r.validate(name)?;
        }
        self.solver.eval.validate()?;
        self.formula()?;
        Ok(())
    }

    pub fn formula(&self) -> Result<Formula> {
        let f = parse(&expand_regions(&self.spec, &self.regions)?, 2)?;
        if !f.parameters().is_empty() {
            return Err(Error::InvalidFormula("plan specifications cannot have learnable thresholds".into()));
        }
        Ok(f)
    }

    pub fn control_formula(&self) -> Formula {
        parse(&format!("always (norm(x0 - 0, x1 - 0) <= {})", num(self.u_max)), 2)
            .expect("control constraint is well formed")
    }

    /// Straight line from start to goal at constant velocity.
    pub fn straight_line(&self) -> Vec<f64> {
        let n = self.steps;
        let mut z = Vec::with_capacity(4 * n - 2);
        for k in 0..n {
            let a = k as f64 / (n - 1) as f64;
            z.push(self.start[0] + a * (self.goal[0] - self.start[0]));
            z.push(self.start[1] + a * (self.goal[1] - self.start[1]));
        }
        let span = (n - 1) as f64 * self.dt;
        for _ in 0..n - 1 {
            z.push((self.goal[0] - self.start[0]) / span);
            z.push((self.goal[1] - self.start[1]) / span);
        }
        z
    }

    /// Dynamics and boundary conditions as `E z = D` with
    /// `z = (x_1, ..., x_N, u_1, ..., u_{N-1})`.
    pub fn constraints(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.steps;
        let cols = 4 * n - 2;
        let rows = 2 * (n - 1) + 4;
        let mut e = DMatrix::zeros(rows, cols);
        let mut d = DVector::zeros(rows);
        let ux = 2 * n;
        for k in 0..n - 1 {
            for c in 0..2 {
                let r = 2 * k + c;
                e[(r, 2 * (k + 1) + c)] = 1.0;
                e[(r, 2 * k + c)] = -1.0;
                e[(r, ux + 2 * k + c)] = -self.dt;
            }
        }
        let base = 2 * (n - 1);
        for c in 0..2 {
            e[(base + c, c)] = 1.0;
            d[base + c] = self.start[c];
            e[(base + 2 + c, 2 * (n - 1) + c)] = 1.0;
            d[base + 2 + c] = self.goal[c];
        }
        (e, d)
    }

    fn residual_on_tape(&self, tape: &mut Tape, z: &[Var]) -> Var {
        let n = self.steps;
        let ux = 2 * n;
        let mut sq = Vec::with_capacity(2 * n + 2);
        let mut push = |tape: &mut Tape, r: Var| sq.push(tape.mul(r, r));
        for k in 0..n - 1 {
            for c in 0..2 {
                let step = tape.scale(z[ux + 2 * k + c], self.dt);
                let diff = tape.sub(z[2 * (k + 1) + c], z[2 * k + c]);
                let r = tape.sub(diff, step);
                push(tape, r);
            }
        }
        for c in 0..2 {
            let r = tape.add_const(z[c], -self.start[c]);
            push(tape, r);
            let r = tape.add_const(z[2 * (n - 1) + c], -self.goal[c]);
            push(tape, r);
        }
        tape.sum(&sq)
    }
}

/// Minimum-norm correction of `z` onto `E z = D`.
pub fn project(e: &DMatrix<f64>, d: &DVector<f64>, z: &[f64]) -> Result<Vec<f64>> {
    let zv = DVector::from_column_slice(z);
    let r = e * &zv - d;
    let gram = e * e.transpose();
    let chol = gram.cholesky().ok_or_else(|| Error::Optim("dynamics matrix is rank deficient".into()))?;
    let lambda = chol.solve(&r);
    Ok((zv - e.transpose() * lambda).as_slice().to_vec())
}

/// Sum of squared second differences of a `len × 2` state sequence.
pub fn smoothness(states: &[[f64; 2]]) -> f64 {
    states.windows(3).map(|w| (0..2).map(|c| (w[2][c] - 2.0 * w[1][c] + w[0][c]).powi(2)).sum::<f64>()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub states: Vec<[f64; 2]>,
    pub controls: Vec<[f64; 2]>,
    /// Exact robustness of the state specification.
    pub rho_spec: f64,
    /// Exact robustness of the control constraint.
    pub rho_control: f64,
    /// `||E z - D||` of the reported trajectory.
    pub residual: f64,
    /// Same, before projection.
    pub raw_residual: f64,
    pub smoothness: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl PlanResult {
    pub fn satisfied(&self) -> bool {
        self.rho_spec >= 0.0 && self.rho_control >= 0.0
    }

    /// `t,x0,x1,u0,u1`; the last row has no control.
    pub fn write_csv(&self, dt: f64, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x0", "x1", "u0", "u1"])?;
        for (k, x) in self.states.iter().enumerate() {
            let (u0, u1) = match self.controls.get(k) {
                Some(u) => (u[0].to_string(), u[1].to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([(k as f64 * dt).to_string(), x[0].to_string(), x[1].to_string(), u0, u1])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn diagnostics_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Diag {
            rho_spec: f64,
            rho_control: f64,
            satisfied: bool,
            residual: f64,
            raw_residual: f64,
            smoothness: f64,
            final_loss: f64,
            iterations: usize,
            wall_time_s: f64,
        }
        Ok(serde_json::to_string_pretty(&Diag {
            rho_spec: self.rho_spec,
            rho_control: self.rho_control,
            satisfied: self.satisfied(),
            residual: self.residual,
            raw_residual: self.raw_residual,
            smoothness: self.smoothness,
            final_loss: self.final_loss,
            iterations: self.iterations,
            wall_time_s: self.wall_time_s,
        })?)
    }
}

fn pairs(z: &[f64]) -> Vec<[f64; 2]> {
    z.chunks(2).map(|c| [c[0], c[1]]).collect()
}

/// Minimizes `||Ez - D||^2 + g1 J_m(rho(X, spec)) + g2 J_m(rho(U, theta))`
/// from the straight-line initialization.
pub fn plan(p: &PlanProblem) -> Result<PlanResult> {
    p.validate()?;
    let start = Instant::now();
    let (spec, theta) = (p.formula()?, p.control_formula());
    let n = p.steps;
    let loss = MarginLoss::new(p.margin);
    let no_params = IndexMap::new();
    let o = &p.solver;
    let gd = GdOptions { step: o.step, iters: o.iters, anneal: o.anneal, method: o.method, tol: None };

    let objective = |tape: &mut Tape, z: &[Var], w: Option<f64>| -> Result<Var> {
        let cfg = w.map_or(o.eval, |w| o.eval.with_w(w));
        let dyn_cost = p.residual_on_tape(tape, z);
        let rho_x = diff_robustness(tape, &z[..2 * n], 2, p.dt, &spec, &no_params, &cfg)?;
        let rho_u = diff_robustness(tape, &z[2 * n..], 2, p.dt, &theta, &no_params, &cfg)?;
        let jx = loss.apply(tape, &[rho_x]);
        let ju = loss.apply(tape, &[rho_u]);
        let jx = tape.scale(jx, p.gamma_state);
        let ju = tape.scale(ju, p.gamma_control);
        Ok(tape.sum(&[dyn_cost, jx, ju]))
    };
    let fit = gradient_descent(objective, &p.straight_line(), &gd)?;
    let final_loss = fit.history.last().copied().unwrap_or(f64::NAN);
    let iterations = fit.iterations;
    let raw = fit.params;

    let (e, d) = p.constraints();
    let residual_of = |z: &[f64]| (&e * DVector::from_column_slice(z) - &d).norm();
    let raw_residual = residual_of(&raw);
    let z = if o.project { project(&e, &d, &raw)? } else { raw };

    let states = pairs(&z[..2 * n]);
    let controls = pairs(&z[2 * n..]);
    let exact = EvalConfig { mode: crate::config::Mode::Exact, ..o.eval };
    let xs = Signal::from_states(states.iter().map(|s| s.to_vec()).collect(), 0.0, p.dt)?;
    let us = Signal::from_states(controls.iter().map(|u| u.to_vec()).collect(), 0.0, p.dt)?;
    Ok(PlanResult {
        rho_spec: robustness(&xs, &spec, &exact)?[0],
        rho_control: robustness(&us, &theta, &exact)?[0],
        residual: residual_of(&z),
        raw_residual,
        smoothness: smoothness(&states),
        final_loss,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        states,
        controls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial() -> PlanProblem {
        PlanProblem {
            start: [0.3, -0.2],
            goal: [0.3, -0.2],
            steps: 5,
            dt: 0.1,
            u_max: 1.0,
            spec: "true".into(),
            regions: IndexMap::new(),
            gamma_state: 0.3,
            gamma_control: 0.3,
            margin: 0.05,
            solver: PlanOptions { iters: 10, ..PlanOptions::default() },
        }
    }

    #[test]
    fn degenerate_plan_stays_put() {
        let r = plan(&trivial()).unwrap();
        assert!(r.residual < 1e-8);
        assert!(r.satisfied());
        assert_eq!(r.smoothness, 0.0);
    }

    #[test]
    fn straight_line_satisfies_dynamics() {
        let mut p = trivial();
        p.goal = [1.0, 2.0];
        let (e, d) = p.constraints();
        let z = DVector::from_vec(p.straight_line());
        assert!((e * z - d).norm() < 1e-12);
    }

    #[test]
    fn projection_lands_on_constraints() {
        let mut p = trivial();
        p.goal = [1.0, 0.0];
        let (e, d) = p.constraints();
        let mut z = p.straight_line();
        z[3] += 0.2;
        z[12] -= 0.1;
        let zp = project(&e, &d, &z).unwrap();
        assert!((e * DVector::from_vec(zp) - d).norm() < 1e-12);
    }

    #[test]
    fn regions_expand_to_predicates() {
        let mut regions = IndexMap::new();
        regions.insert("B".to_string(), Region::Box { x: [0.0, 1.0], y: [-1.0, 0.5] });
        regions.insert("C".to_string(), Region::Circle { center: [0.0, 0.0], radius: 0.4 });
        let s = expand_regions("eventually inside(B) and always not inside( C )", &regions).unwrap();
        assert_eq!(
            s,
            "eventually (box(x0 in [0, 1], x1 in [-1, 0.5]) > 0) and always not (norm(x0 - 0, x1 - 0) < 0.4)"
        );
        assert!(parse(&s, 2).is_ok());
        assert!(expand_regions("inside(D)", &regions).is_err());
    }
}

//! Newton-Raphson AC power flow in polar coordinates.
//!
//! Unknowns are the voltage angles of every non-slack bus followed by the
//! voltage magnitudes of every PQ bus, each block in bus order. The mismatch
//! vector uses the same ordering: `dP` for non-slack buses, then `dQ` for PQ
//! buses, with `d = specified - computed`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{branch_flows, build_ybus, AdmittanceMatrix, BranchFlow, BusType, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Generator setpoints on generator buses, case `Vm`/`Va` elsewhere.
    CaseVoltages,
    /// `1∠0` on load buses; generator buses still start at their setpoint.
    FlatStart,
}

#[derive(Debug, Clone, Copy)]
pub struct NrOptions {
    /// Bound on the largest absolute mismatch, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: InitMode,
    /// Give up once the largest mismatch exceeds this, p.u.
    pub divergence_limit: f64,
}

impl Default for NrOptions {
    fn default() -> Self {
        NrOptions {
            tolerance: 1e-8,
            max_iterations: 30,
            init: InitMode::CaseVoltages,
            divergence_limit: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusClasses {
    pub slack: usize,
    pub pv: Vec<usize>,
    pub pq: Vec<usize>,
}

impl BusClasses {
    /// Buses carrying an angle unknown, in bus order.
    pub fn angle_buses(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pv.iter().chain(&self.pq).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Slack is the unique type-3 bus; PV buses are the other buses with an
/// in-service generator; everything else is PQ.
pub fn classify_buses(grid: &Grid) -> Result<BusClasses> {
    let mut slacks = grid
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.bus_type == BusType::Slack)
        .map(|(i, _)| i);
    let slack = slacks.next().ok_or(Error::NoSlack)?;
    if slacks.next().is_some() {
        return Err(Error::InvalidGrid("more than one slack bus".into()));
    }
    let gen = grid.generation_by_bus();
    let (mut pv, mut pq) = (Vec::new(), Vec::new());
    for (i, g) in gen.iter().enumerate() {
        if i == slack {
            continue;
        }
        if g.vg.is_some() {
            pv.push(i);
        } else {
            pq.push(i);
        }
    }
    Ok(BusClasses { slack, pv, pq })
}

#[derive(Debug, Clone)]
pub struct JacobianSystem {
    /// Square, dimension `n_pv + 2 n_pq`.
    pub matrix: DMatrix<f64>,
    pub rhs: Vec<f64>,
    /// Bus position for each angle variable.
    pub angle_buses: Vec<usize>,
    /// Bus position for each magnitude variable.
    pub magnitude_buses: Vec<usize>,
}

impl JacobianSystem {
    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct PfSolution {
    pub v: Vec<Complex64>,
    /// Active power the slack generation supplies (injection plus local load).
    pub slack_p: f64,
    pub slack_q: f64,
    /// One record per branch in grid order; zero for out-of-service branches.
    pub branches: Vec<BranchFlow>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

struct Problem<'a> {
    grid: &'a Grid,
    ybus: &'a AdmittanceMatrix,
    classes: BusClasses,
    angle_buses: Vec<usize>,
    /// Variable position of each bus's angle / magnitude, if any.
    angle_var: Vec<Option<usize>>,
    mag_var: Vec<Option<usize>>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(grid: &'a Grid, ybus: &'a AdmittanceMatrix) -> Result<Self> {
        let n = grid.n_buses();
        if ybus.dimension() != n {
            return Err(Error::dims(n, ybus.dimension()));
        }
        let classes = classify_buses(grid)?;
        let angle_buses = classes.angle_buses();
        let mut angle_var = vec![None; n];
        for (k, &i) in angle_buses.iter().enumerate() {
            angle_var[i] = Some(k);
        }
        let mut mag_var = vec![None; n];
        for (k, &i) in classes.pq.iter().enumerate() {
            mag_var[i] = Some(angle_buses.len() + k);
        }
        let gen = grid.generation_by_bus();
        let p_spec = grid.buses.iter().zip(&gen).map(|(b, g)| g.pg - b.pd).collect();
        let q_spec = grid.buses.iter().zip(&gen).map(|(b, g)| g.qg - b.qd).collect();
        Ok(Problem {
            grid,
            ybus,
            classes,
            angle_buses,
            angle_var,
            mag_var,
            p_spec,
            q_spec,
        })
    }

    fn dimension(&self) -> usize {
        self.angle_buses.len() + self.classes.pq.len()
    }

    fn mismatch(&self, s: &[Complex64]) -> Vec<f64> {
        let dp = self.angle_buses.iter().map(|&i| self.p_spec[i] - s[i].re);
        let dq = self.classes.pq.iter().map(|&i| self.q_spec[i] - s[i].im);
        dp.chain(dq).collect()
    }

    /// Partials of the mismatch (not of the injections) with respect to the
    /// unknowns, assembled from the sparse admittance rows.
    fn jacobian_entries(&self, v: &[Complex64], current: &[Complex64]) -> Vec<Triplet<usize, usize, f64>> {
        let mut jac = Vec::new();
        let j = Complex64::i();
        for i in 0..self.grid.n_buses() {
            let row_p = self.angle_var[i];
            // dP rows share the angle numbering, dQ rows the magnitude numbering
            let row_q = self.mag_var[i];
            if row_p.is_none() && row_q.is_none() {
                continue;
            }
            let vi = v[i];
            let vn_i = vi / vi.norm();
            for (k, y) in self.ybus.matrix().row(i) {
                let vn_k = v[k] / v[k].norm();
                let (ds_dth, ds_dvm) = if k == i {
                    (
                        j * vi * (current[i] - y * vi).conj(),
                        vi * (y * vn_i).conj() + current[i].conj() * vn_i,
                    )
                } else {
                    (-j * vi * (y * v[k]).conj(), vi * (y * vn_k).conj())
                };
                if let Some(c) = self.angle_var[k] {
                    if let Some(r) = row_p {
                        jac.push(Triplet::new(r, c, -ds_dth.re));
                    }
                    if let Some(r) = row_q {
                        jac.push(Triplet::new(r, c, -ds_dth.im));
                    }
                }
                if let Some(c) = self.mag_var[k] {
                    if let Some(r) = row_p {
                        jac.push(Triplet::new(r, c, -ds_dvm.re));
                    }
                    if let Some(r) = row_q {
                        jac.push(Triplet::new(r, c, -ds_dvm.im));
                    }
                }
            }
        }
        jac
    }

    fn jacobian(&self, v: &[Complex64], current: &[Complex64]) -> DMatrix<f64> {
        let dim = self.dimension();
        let mut jac = DMatrix::zeros(dim, dim);
        for t in self.jacobian_entries(v, current) {
            jac[(t.row, t.col)] += t.val;
        }
        jac
    }

    fn initial_voltage(&self, init: InitMode) -> (Vec<f64>, Vec<f64>) {
        let gen = self.grid.generation_by_bus();
        let mut vm = Vec::with_capacity(self.grid.n_buses());
        let mut va = Vec::with_capacity(self.grid.n_buses());
        for (i, (b, g)) in self.grid.buses.iter().zip(&gen).enumerate() {
            let is_gen = i == self.classes.slack || g.vg.is_some();
            let (m, a) = match init {
                InitMode::CaseVoltages => (b.vm, b.va),
                InitMode::FlatStart if i == self.classes.slack => (1.0, b.va),
                InitMode::FlatStart => (1.0, 0.0),
            };
            vm.push(if is_gen { g.vg.unwrap_or(m) } else { m });
            va.push(a);
        }
        (vm, va)
    }
}

fn polar(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
}

pub fn compute_mismatch(grid: &Grid, ybus: &AdmittanceMatrix, v: &[Complex64]) -> Result<Vec<f64>> {
    if v.len() != grid.n_buses() {
        return Err(Error::dims(grid.n_buses(), v.len()));
    }
    let problem = Problem::new(grid, ybus)?;
    let s = crate::grid::bus_injections(ybus, v)?;
    Ok(problem.mismatch(&s))
}

pub fn build_jacobian(grid: &Grid, ybus: &AdmittanceMatrix, v: &[Complex64]) -> Result<JacobianSystem> {
    if v.len() != grid.n_buses() {
        return Err(Error::dims(grid.n_buses(), v.len()));
    }
    let problem = Problem::new(grid, ybus)?;
    let current = ybus.mul_vec(v)?;
    let s: Vec<Complex64> = v.iter().zip(&current).map(|(a, b)| a * b.conj()).collect();
    Ok(JacobianSystem {
        matrix: problem.jacobian(v, &current),
        rhs: problem.mismatch(&s),
        angle_buses: problem.angle_buses.clone(),
        magnitude_buses: problem.classes.pq.clone(),
    })
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Runs Newton-Raphson. Failures (singular Jacobian, divergence, iteration
/// limit) come back as `converged == false` rather than as errors.
pub fn solve_nr(grid: &Grid, options: &NrOptions) -> Result<PfSolution> {
    if options.tolerance <= 0.0 || options.max_iterations == 0 {
        return Err(Error::Config("tolerance must be positive and max_iterations at least 1".into()));
    }
    let ybus = build_ybus(grid)?;
    let problem = Problem::new(grid, &ybus)?;
    let (mut vm, mut va) = problem.initial_voltage(options.init);
    let n_ang = problem.angle_buses.len();

    let mut iterations = 0;
    let mut converged = false;
    let mut v = polar(&vm, &va);
    let mut current = ybus.mul_vec(&v)?;
    let mut max_mismatch;
    loop {
        let s: Vec<Complex64> = v.iter().zip(&current).map(|(a, b)| a * b.conj()).collect();
        let mis = problem.mismatch(&s);
        max_mismatch = max_abs(&mis);
        if !max_mismatch.is_finite() || max_mismatch > options.divergence_limit {
            break;
        }
        if max_mismatch < options.tolerance {
            converged = true;
            break;
        }
        if iterations == options.max_iterations {
            break;
        }
        let dim = problem.dimension();
        let entries = problem.jacobian_entries(&v, &current);
        let Ok(jac) = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &entries) else {
            break;
        };
        let Ok(lu) = jac.sp_lu() else {
            break;
        };
        let rhs = Mat::from_fn(dim, 1, |r, _| -mis[r]);
        let sol = lu.solve(&rhs);
        let dx: Vec<f64> = (0..dim).map(|r| sol[(r, 0)]).collect();
        if dx.iter().any(|d| !d.is_finite()) {
            break;
        }
        for (k, &i) in problem.angle_buses.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in problem.classes.pq.iter().enumerate() {
            vm[i] += dx[n_ang + k];
        }
        iterations += 1;
        v = polar(&vm, &va);
        current = ybus.mul_vec(&v)?;
    }

    let slack = problem.classes.slack;
    let s_slack = v[slack] * current[slack].conj();
    let bus = &grid.buses[slack];
    Ok(PfSolution {
        branches: branch_flows(grid, &v)?,
        slack_p: s_slack.re + bus.pd,
        slack_q: s_slack.im + bus.qd,
        v,
        converged,
        iterations,
        max_mismatch,
    })
}

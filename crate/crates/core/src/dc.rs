//! Linearized (DC) power flow.
//!
//! Lossless, unit voltage magnitudes, small angle differences. Shunt
//! conductances are treated as constant loads at 1 p.u. voltage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ac::classify_buses;
use crate::error::{Error, Result};
use crate::grid::{branch_flows, BranchFlow, Grid};

#[derive(Debug, Clone)]
pub struct DcSolution {
    /// Bus voltage angles, radians.
    pub theta: Vec<f64>,
    /// One record per branch in grid order. Only the active-power fields and
    /// the currents implied at unit voltage are populated; reactive power is 0.
    pub branches: Vec<BranchFlow>,
    /// Net active injection at each bus implied by the branch flows.
    pub injections: Vec<f64>,
}

pub fn solve_dc(grid: &Grid) -> Result<DcSolution> {
    let classes = classify_buses(grid)?;
    let ends = grid.branch_endpoints()?;
    let n = grid.n_buses();
    let slack = classes.slack;

    let mut bmat = DMatrix::<f64>::zeros(n, n);
    let mut p_shift = vec![0.0; n];
    for (br, &(f, t)) in grid.branches.iter().zip(&ends) {
        if !br.in_service {
            continue;
        }
        if br.x == 0.0 {
            return Err(Error::InvalidGrid("branch with zero reactance".into()));
        }
        let b = 1.0 / (br.x * br.effective_tau());
        bmat[(f, f)] += b;
        bmat[(t, t)] += b;
        bmat[(f, t)] -= b;
        bmat[(t, f)] -= b;
        // injection of the phase shifter, moved to the right-hand side
        let pf_shift = -br.shift * b;
        p_shift[f] += pf_shift;
        p_shift[t] -= pf_shift;
    }

    let gen = grid.generation_by_bus();
    let p_net: Vec<f64> = grid
        .buses
        .iter()
        .zip(&gen)
        .map(|(b, g)| g.pg - b.pd - b.gs)
        .collect();

    let free: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let theta_ref = grid.buses[slack].va;
    let mut theta = vec![theta_ref; n];
    if !free.is_empty() {
        let m = free.len();
        let reduced = DMatrix::from_fn(m, m, |r, c| bmat[(free[r], free[c])]);
        let rhs = DVector::from_fn(m, |r, _| {
            let i = free[r];
            p_net[i] - p_shift[i] - bmat[(i, slack)] * theta_ref
        });
        let lu = reduced.lu();
        // a zero row in the reduced matrix means a bus with no path to the slack
        let scale = bmat.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let u = lu.u();
        if (0..m).any(|k| u[(k, k)].abs() <= 1e-12 * scale.max(1.0)) {
            return Err(Error::SingularBMatrix);
        }
        let sol = lu.solve(&rhs).ok_or(Error::SingularBMatrix)?;
        for (r, &i) in free.iter().enumerate() {
            theta[i] = sol[r];
        }
    }

    let mut injections = vec![0.0; n];
    let branches = grid
        .branches
        .iter()
        .zip(&ends)
        .map(|(br, &(f, t))| {
            if !br.in_service {
                return BranchFlow::default();
            }
            let pf = (theta[f] - theta[t] - br.shift) / (br.x * br.effective_tau());
            let pt = -pf;
            injections[f] += pf;
            injections[t] += pt;
            let i_f = Complex64::from_polar(pf, theta[f]);
            let i_t = Complex64::from_polar(1.0, theta[t]) * pt;
            BranchFlow {
                pf,
                qf: 0.0,
                if_re: i_f.re,
                if_im: i_f.im,
                pt,
                qt: 0.0,
                it_re: i_t.re,
                it_im: i_t.im,
            }
        })
        .collect();

    Ok(DcSolution {
        theta,
        branches,
        injections,
    })
}

/// Scores a DC solution on the AC target layout: bus voltages `1∠θ` are fed
/// through the full branch model, one row per in-service branch.
pub fn dc_targets(grid: &Grid, solution: &DcSolution) -> Result<Vec<[f64; 8]>> {
    let v: Vec<Complex64> = solution.theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let flows = branch_flows(grid, &v)?;
    Ok(grid
        .in_service_branches()
        .into_iter()
        .map(|k| flows[k].to_array())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::fixtures::*;

    #[test]
    fn two_bus_angle_is_p_times_x() {
        let g = two_bus(0.5, 1.0);
        let sol = solve_dc(&g).unwrap();
        assert!((sol.theta[1] + 0.5).abs() < 1e-14);
        assert!((sol.branches[0].pf - 1.0).abs() < 1e-14);
        assert_eq!(sol.branches[0].pf + sol.branches[0].pt, 0.0);
    }

    #[test]
    fn no_injection_no_flow() {
        let mut g = cases::load("case9").unwrap();
        for b in &mut g.buses {
            b.pd = 0.0;
            b.qd = 0.0;
        }
        for gen in &mut g.generators {
            gen.pg = 0.0;
        }
        for br in &mut g.branches {
            br.b = 0.0;
        }
        let sol = solve_dc(&g).unwrap();
        assert!(sol.theta.iter().all(|t| t.abs() < 1e-15));
        assert!(sol.branches.iter().all(|f| f.pf == 0.0));
        let rows = dc_targets(&g, &sol).unwrap();
        assert!(rows.iter().flatten().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn injections_balance_and_flows_antisymmetric() {
        let g = cases::load("case300").unwrap();
        let sol = solve_dc(&g).unwrap();
        let total: f64 = sol.injections.iter().sum();
        assert!(total.abs() < 1e-9);
        assert!(sol.branches.iter().all(|f| f.pf + f.pt == 0.0));
    }

    #[test]
    fn linear_in_injections() {
        let g = cases::load("case30").unwrap();
        let base = solve_dc(&g).unwrap();
        let mut scaled = g.clone();
        let c = 1.7;
        for b in &mut scaled.buses {
            b.pd *= c;
            b.gs *= c;
        }
        for gen in &mut scaled.generators {
            gen.pg *= c;
        }
        let sol = solve_dc(&scaled).unwrap();
        let s = classify_buses(&g).unwrap().slack;
        for i in 0..g.n_buses() {
            let want = c * (base.theta[i] - base.theta[s]);
            assert!((sol.theta[i] - sol.theta[s] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn slack_keeps_reference_angle() {
        let mut g = cases::load("case14").unwrap();
        let s = classify_buses(&g).unwrap().slack;
        g.buses[s].va = 0.25;
        assert_eq!(solve_dc(&g).unwrap().theta[s], 0.25);
    }

    #[test]
    fn island_is_singular() {
        let mut g = two_bus(0.5, 1.0);
        g.buses.push(bus(3, BusType::Pq));
        assert!(matches!(solve_dc(&g), Err(Error::SingularBMatrix)));
    }

    use crate::grid::BusType;

    #[test]
    fn re_embedded_current_tracks_power_for_small_angles() {
        let g = two_bus(0.5, 0.02);
        let sol = solve_dc(&g).unwrap();
        assert!((sol.theta[1] + 0.01).abs() < 1e-15);
        let row = dc_targets(&g, &sol).unwrap()[0];
        // I_f = conj(S_f / V_f) with V_f = 1∠0, so Re I_f = P_f exactly here
        // and the AC P_f agrees with the DC flow to first order
        assert!((row[2] - row[0]).abs() < 1e-12);
        assert!((row[0] - sol.branches[0].pf).abs() < 1e-5);
        assert_eq!(dc_targets(&g, &sol).unwrap().len(), 1);
    }
}

//! Per-unit electrical model of a grid: buses, generators, branches, the
//! bus admittance matrix and branch flows evaluated from bus voltages.
//!
//! Branches use the MATPOWER pi-model: series admittance `y = 1/(r + jx)`,
//! total charging `b` split between the ends, and an ideal transformer at the
//! from-end with complex ratio `t = tau * e^{j shift}` (a stored `tau` of 0
//! means "no transformer" and behaves as 1).

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub bus_type: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    /// Radians.
    pub va: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    /// Stored for completeness; reactive limits are never enforced.
    pub qmax: f64,
    pub qmin: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub vg: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// Off-nominal turns ratio; 0 encodes a plain line.
    pub tau: f64,
    /// Radians.
    pub shift: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn is_transformer(&self) -> bool {
        self.tau != 0.0
    }

    pub fn effective_tau(&self) -> f64 {
        if self.tau == 0.0 {
            1.0
        } else {
            self.tau
        }
    }

    /// Two-port admittances `(y_ff, y_ft, y_tf, y_tt)` of the pi-model.
    pub fn admittances(&self) -> (Complex64, Complex64, Complex64, Complex64) {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x);
        let ych = Complex64::new(0.0, self.b / 2.0);
        let tap = Complex64::from_polar(self.effective_tau(), self.shift);
        let ytt = ys + ych;
        let yff = ytt / tap.norm_sqr();
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        (yff, yft, ytf, ytt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl Grid {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Maps external bus ids to dense positions `0..n_buses`.
    pub fn index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Dense endpoint positions for every branch, in branch order.
    pub fn branch_endpoints(&self) -> Result<Vec<(usize, usize)>> {
        let map = self.index_map();
        self.branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                let f = *map.get(&br.from).ok_or(Error::DanglingBranch { branch: k, bus: br.from })?;
                let t = *map.get(&br.to).ok_or(Error::DanglingBranch { branch: k, bus: br.to })?;
                Ok((f, t))
            })
            .collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.bus_type == BusType::Slack)
    }

    /// Positions of the in-service branches, in grid order.
    pub fn in_service_branches(&self) -> Vec<usize> {
        (0..self.branches.len()).filter(|&k| self.branches[k].in_service).collect()
    }

    /// Per-bus generator summary: summed in-service `Pg` and the voltage
    /// setpoint of the first in-service generator in file order.
    pub fn generation_by_bus(&self) -> Vec<BusGeneration> {
        let map = self.index_map();
        let mut out = vec![BusGeneration::default(); self.buses.len()];
        for g in self.generators.iter().filter(|g| g.in_service) {
            if let Some(&i) = map.get(&g.bus) {
                let slot = &mut out[i];
                slot.pg += g.pg;
                slot.qg += g.qg;
                if slot.vg.is_none() {
                    slot.vg = Some(g.vg);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BusGeneration {
    pub pg: f64,
    pub qg: f64,
    pub vg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    matrix: CsrMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dimension(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.matrix.get(i, k).unwrap_or_default()
    }

    /// `I = Y V`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.dimension();
        if v.len() != n {
            return Err(Error::dims(n, v.len()));
        }
        Ok((0..n)
            .map(|i| self.matrix.row(i).map(|(k, y)| y * v[k]).sum())
            .collect())
    }
}

pub fn build_ybus(grid: &Grid) -> Result<AdmittanceMatrix> {
    let ends = grid.branch_endpoints()?;
    let n = grid.n_buses();
    let mut trip = Vec::with_capacity(4 * grid.branches.len() + n);
    for (k, (br, &(f, t))) in grid.branches.iter().zip(&ends).enumerate() {
        if !br.in_service {
            continue;
        }
        if br.x == 0.0 {
            return Err(Error::ZeroReactance { branch: k });
        }
        let (yff, yft, ytf, ytt) = br.admittances();
        trip.push((f, f, yff));
        trip.push((f, t, yft));
        trip.push((t, f, ytf));
        trip.push((t, t, ytt));
    }
    for (i, bus) in grid.buses.iter().enumerate() {
        trip.push((i, i, Complex64::new(bus.gs, bus.bs)));
    }
    Ok(AdmittanceMatrix {
        matrix: CsrMatrix::from_triplets(n, n, &trip),
    })
}

/// Complex power injections `S_i = V_i conj((Y V)_i)`.
pub fn bus_injections(ybus: &AdmittanceMatrix, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let current = ybus.mul_vec(v)?;
    Ok(v.iter().zip(current).map(|(vi, ii)| vi * ii.conj()).collect())
}

/// Complex power and current at both ends of one branch, all p.u.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchFlow {
    pub pf: f64,
    pub qf: f64,
    pub if_re: f64,
    pub if_im: f64,
    pub pt: f64,
    pub qt: f64,
    pub it_re: f64,
    pub it_im: f64,
}

impl BranchFlow {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.pf, self.qf, self.if_re, self.if_im, self.pt, self.qt, self.it_re, self.it_im,
        ]
    }

    pub fn from_terminal(vf: Complex64, vt: Complex64, i_f: Complex64, i_t: Complex64) -> Self {
        let sf = vf * i_f.conj();
        let st = vt * i_t.conj();
        BranchFlow {
            pf: sf.re,
            qf: sf.im,
            if_re: i_f.re,
            if_im: i_f.im,
            pt: st.re,
            qt: st.im,
            it_re: i_t.re,
            it_im: i_t.im,
        }
    }
}

/// Flow record for every branch in grid order; out-of-service branches
/// carry an all-zero record.
pub fn branch_flows(grid: &Grid, v: &[Complex64]) -> Result<Vec<BranchFlow>> {
    if v.len() != grid.n_buses() {
        return Err(Error::dims(grid.n_buses(), v.len()));
    }
    let ends = grid.branch_endpoints()?;
    Ok(grid
        .branches
        .iter()
        .zip(ends)
        .map(|(br, (f, t))| {
            if !br.in_service {
                return BranchFlow::default();
            }
            let (yff, yft, ytf, ytt) = br.admittances();
            let i_f = yff * v[f] + yft * v[t];
            let i_t = ytf * v[f] + ytt * v[t];
            BranchFlow::from_terminal(v[f], v[t], i_f, i_t)
        })
        .collect())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::cases;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn ybus_two_bus_pure_reactance() {
        let y = build_ybus(&two_bus(0.1, 0.0)).unwrap();
        assert!(close(y.get(0, 0), c(0.0, -10.0), 1e-12));
        assert!(close(y.get(0, 1), c(0.0, 10.0), 1e-12));
        assert!(close(y.get(1, 0), c(0.0, 10.0), 1e-12));
        assert!(close(y.get(1, 1), c(0.0, -10.0), 1e-12));
    }

    #[test]
    fn ybus_shunt_only() {
        let mut b = bus(1, BusType::Slack);
        b.gs = 0.05;
        b.bs = 0.30;
        let grid = Grid {
            name: "one".into(),
            base_mva: 100.0,
            buses: vec![b],
            generators: vec![generator(1, 0.0, 1.0)],
            branches: vec![],
        };
        let y = build_ybus(&grid).unwrap();
        assert_eq!(y.dimension(), 1);
        assert!(close(y.get(0, 0), c(0.05, 0.30), 1e-15));
    }

    #[test]
    fn ybus_errors() {
        let mut g = two_bus(0.0, 0.0);
        assert!(matches!(build_ybus(&g), Err(Error::ZeroReactance { branch: 0 })));
        g.branches[0].in_service = false;
        assert!(build_ybus(&g).is_ok());
        g.branches[0].to = 7;
        assert!(matches!(build_ybus(&g), Err(Error::DanglingBranch { bus: 7, .. })));
    }

    #[test]
    fn injections_examples() {
        let y = build_ybus(&two_bus(0.1, 0.0)).unwrap();
        let flat = vec![c(1.0, 0.0); 2];
        let s = bus_injections(&y, &flat).unwrap();
        assert!(s.iter().all(|s| s.norm() < 1e-14));

        let v = vec![c(1.0, 0.0), Complex64::from_polar(1.0, -0.1)];
        let s = bus_injections(&y, &v).unwrap();
        assert!((s[0].re - 10.0 * 0.1f64.sin()).abs() < 1e-12);
        assert!((s[0].re - 0.9983341664682815).abs() < 1e-12);

        let mut b = bus(1, BusType::Slack);
        b.gs = 0.05;
        b.bs = 0.3;
        let g = Grid {
            name: "one".into(),
            base_mva: 100.0,
            buses: vec![b],
            generators: vec![],
            branches: vec![],
        };
        let s = bus_injections(&build_ybus(&g).unwrap(), &[c(1.0, 0.0)]).unwrap();
        assert!(close(s[0], c(0.05, -0.3), 1e-15));

        assert!(matches!(bus_injections(&y, &[c(1.0, 0.0)]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn flows_two_bus_by_hand() {
        let g = two_bus(0.1, 0.0);
        let v = vec![c(1.0, 0.0), Complex64::from_polar(1.0, -0.1)];
        let f = branch_flows(&g, &v).unwrap()[0];
        // Pf = 10 sin(0.1), Qf = Qt = 10 (1 - cos 0.1)
        let p = 10.0 * 0.1f64.sin();
        let q = 10.0 * (1.0 - 0.1f64.cos());
        assert!((f.pf - p).abs() < 1e-12);
        assert!((f.pt + p).abs() < 1e-12);
        assert!((f.qf - q).abs() < 1e-12);
        assert!((f.qt - q).abs() < 1e-12);
        assert!((f.qf - 0.0500).abs() < 1e-3);
    }

    #[test]
    fn flows_zero_without_voltage_difference() {
        let mut g = two_bus(0.1, 0.0);
        g.branches[0].r = 0.0;
        let v = vec![Complex64::from_polar(1.02, 0.3); 2];
        let f = branch_flows(&g, &v).unwrap()[0];
        assert!(f.to_array().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn out_of_service_branch_leaves_ybus_unchanged() {
        let grid = cases::load("case14").unwrap();
        let base = build_ybus(&grid).unwrap();
        let mut extra = grid.clone();
        let mut dead = extra.branches[3].clone();
        dead.in_service = false;
        dead.x = 0.0;
        extra.branches.push(dead);
        let y = build_ybus(&extra).unwrap();
        assert_eq!(base, y);
    }

    #[test]
    fn ybus_is_additive_over_branch_sets() {
        let grid = cases::load("case30").unwrap();
        let full = build_ybus(&grid).unwrap();
        let (first, second) = grid.branches.split_at(17);
        let part = |brs: &[Branch], shunts: bool| {
            let mut g = grid.clone();
            g.branches = brs.to_vec();
            if !shunts {
                for b in &mut g.buses {
                    b.gs = 0.0;
                    b.bs = 0.0;
                }
            }
            build_ybus(&g).unwrap()
        };
        let a = part(first, true);
        let b = part(second, false);
        for i in 0..grid.n_buses() {
            for k in 0..grid.n_buses() {
                assert!(close(full.get(i, k), a.get(i, k) + b.get(i, k), 1e-12));
            }
        }
    }

    #[test]
    fn symmetric_without_phase_shifters() {
        let grid = cases::load("case9").unwrap();
        let y = build_ybus(&grid).unwrap();
        for i in 0..grid.n_buses() {
            for k in 0..grid.n_buses() {
                assert_eq!(y.get(i, k), y.get(k, i));
            }
        }
    }

    #[test]
    fn line_flow_symmetric_under_endpoint_swap() {
        let mut g = two_bus(0.1, 0.0);
        g.branches[0].r = 0.02;
        g.branches[0].b = 0.04;
        g.branches[0].tau = 1.0;
        let v = vec![Complex64::from_polar(1.03, 0.05), Complex64::from_polar(0.97, -0.12)];
        let fwd = branch_flows(&g, &v).unwrap()[0];
        g.branches[0].from = 2;
        g.branches[0].to = 1;
        let rev = branch_flows(&g, &v).unwrap()[0];
        let (a, b) = (fwd.to_array(), rev.to_array());
        for j in 0..4 {
            assert!((a[j] - b[j + 4]).abs() < 1e-12);
            assert!((a[j + 4] - b[j]).abs() < 1e-12);
        }
    }
}

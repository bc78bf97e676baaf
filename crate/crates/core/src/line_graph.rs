//! Line-graph view of a grid: one vertex per in-service branch, adjacent
//! when two branches share a bus.

use crate::ac::PfSolution;
use crate::error::{Error, Result};
use crate::grid::{BusType, Generator, Grid};
use crate::sparse::CsrMatrix;
use crate::tensor::{SparseMatrix, Tensor};

pub const FEATURE_WIDTH: usize = 21;
pub const TARGET_WIDTH: usize = 8;
pub const BRANCH_FEATURES: usize = 5;
pub const BUS_FEATURES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LineGraph {
    /// Binary, symmetric, zero diagonal.
    pub adjacency: SparseMatrix,
    /// Grid branch position of each vertex.
    pub branch_index_map: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineGraphSample {
    pub grid_name: String,
    pub adjacency: SparseMatrix,
    /// `n_vertices x 21`.
    pub features: Tensor,
    /// `n_vertices x 8`; absent for inference-only samples.
    pub targets: Option<Tensor>,
    /// Branch position of each vertex in the reference grid the sample was
    /// derived from.
    pub branch_index_map: Vec<usize>,
    /// `n_buses x 8`, the per-bus feature block.
    pub bus_features: Tensor,
    /// Reference-grid position of each bus.
    pub bus_index_map: Vec<usize>,
}

impl LineGraphSample {
    pub fn n_vertices(&self) -> usize {
        self.features.rows()
    }

    /// Builds features, bus block and (optionally) targets for a grid whose
    /// branches and buses coincide with the reference layout.
    pub fn from_grid(grid: &Grid, solution: Option<&PfSolution>) -> Result<Self> {
        let lg = build_line_graph(grid)?;
        let targets = solution.map(|s| assemble_targets(grid, s)).transpose()?;
        Ok(LineGraphSample {
            grid_name: grid.name.clone(),
            adjacency: lg.adjacency,
            features: assemble_features(grid)?,
            targets,
            branch_index_map: lg.branch_index_map,
            bus_features: bus_blocks(grid)?,
            bus_index_map: (0..grid.n_buses()).collect(),
        })
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .triplets()
            .into_iter()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
            .collect()
    }
}

pub fn build_line_graph(grid: &Grid) -> Result<LineGraph> {
    let ends = grid.branch_endpoints()?;
    let vertices = grid.in_service_branches();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); grid.n_buses()];
    for (v, &k) in vertices.iter().enumerate() {
        let (f, t) = ends[k];
        incident[f].push(v);
        if t != f {
            incident[t].push(v);
        }
    }
    let mut triplets = Vec::new();
    for list in &incident {
        for &a in list {
            for &b in list {
                if a != b {
                    triplets.push((a, b, 1.0));
                }
            }
        }
    }
    // parallel branches meet at both ends; collapse to one binary edge
    let summed = CsrMatrix::from_triplets(vertices.len(), vertices.len(), &triplets);
    Ok(LineGraph {
        adjacency: summed.map(|_| 1.0),
        branch_index_map: vertices,
    })
}

/// Per-bus block `[Pd, Qd, Gs, Bs, Pg, |Vg|, non_slack, slack]`.
pub fn bus_blocks(grid: &Grid) -> Result<Tensor> {
    let gen = grid.generation_by_bus();
    let mut out = Tensor::zeros(grid.n_buses(), BUS_FEATURES);
    for (i, (b, g)) in grid.buses.iter().zip(&gen).enumerate() {
        let slack = b.bus_type == BusType::Slack;
        out.row_mut(i).copy_from_slice(&[
            b.pd,
            b.qd,
            b.gs,
            b.bs,
            g.pg,
            g.vg.unwrap_or(0.0),
            if slack { 0.0 } else { 1.0 },
            if slack { 1.0 } else { 0.0 },
        ]);
    }
    Ok(out)
}

/// `[r, x, b, tau, shift | from-bus block | to-bus block]` per vertex.
pub fn assemble_features(grid: &Grid) -> Result<Tensor> {
    let ends = grid.branch_endpoints()?;
    let buses = bus_blocks(grid)?;
    let vertices = grid.in_service_branches();
    let mut out = Tensor::zeros(vertices.len(), FEATURE_WIDTH);
    for (v, &k) in vertices.iter().enumerate() {
        let br = &grid.branches[k];
        let (f, t) = ends[k];
        let row = out.row_mut(v);
        row[..BRANCH_FEATURES].copy_from_slice(&[br.r, br.x, br.b, br.tau, br.shift]);
        row[BRANCH_FEATURES..BRANCH_FEATURES + BUS_FEATURES].copy_from_slice(buses.row(f));
        row[BRANCH_FEATURES + BUS_FEATURES..].copy_from_slice(buses.row(t));
    }
    Ok(out)
}

/// `[Pf, Qf, Re If, Im If, Pt, Qt, Re It, Im It]` per vertex.
pub fn assemble_targets(grid: &Grid, solution: &PfSolution) -> Result<Tensor> {
    if !solution.converged {
        return Err(Error::UnconvergedLabel);
    }
    if solution.branches.len() != grid.branches.len() {
        return Err(Error::dims(grid.branches.len(), solution.branches.len()));
    }
    let rows: Vec<[f64; TARGET_WIDTH]> = grid
        .in_service_branches()
        .into_iter()
        .map(|k| solution.branches[k].to_array())
        .collect();
    Ok(if rows.is_empty() {
        Tensor::zeros(0, TARGET_WIDTH)
    } else {
        Tensor::from_rows(&rows)
    })
}

/// Rebuilds the solved grid a sample was drawn from, using the reference
/// grid for ids and endpoints and the sample for every value. Each bus with
/// generation gets a single aggregated generator.
pub fn reconstruct_grid(sample: &LineGraphSample, reference: &Grid) -> Result<Grid> {
    let mut grid = Grid {
        name: sample.grid_name.clone(),
        base_mva: reference.base_mva,
        buses: Vec::with_capacity(sample.bus_index_map.len()),
        generators: Vec::new(),
        branches: Vec::with_capacity(sample.n_vertices()),
    };
    for (i, &slot) in sample.bus_index_map.iter().enumerate() {
        let mut bus = reference
            .buses
            .get(slot)
            .cloned()
            .ok_or_else(|| Error::LayoutMismatch(format!("bus slot {slot} not in {}", reference.name)))?;
        let f = sample.bus_features.row(i);
        bus.pd = f[0];
        bus.qd = f[1];
        bus.gs = f[2];
        bus.bs = f[3];
        bus.bus_type = if f[7] == 1.0 {
            BusType::Slack
        } else if f[5] != 0.0 {
            BusType::Pv
        } else {
            BusType::Pq
        };
        if f[5] != 0.0 {
            bus.vm = f[5];
            grid.generators.push(Generator {
                bus: bus.id,
                pg: f[4],
                qg: 0.0,
                qmax: 0.0,
                qmin: 0.0,
                pmax: f64::INFINITY,
                pmin: 0.0,
                vg: f[5],
                in_service: true,
            });
        }
        grid.buses.push(bus);
    }
    for (v, &k) in sample.branch_index_map.iter().enumerate() {
        let mut br = reference
            .branches
            .get(k)
            .cloned()
            .ok_or_else(|| Error::LayoutMismatch(format!("branch slot {k} not in {}", reference.name)))?;
        let f = sample.features.row(v);
        (br.r, br.x, br.b, br.tau, br.shift) = (f[0], f[1], f[2], f[3], f[4]);
        br.in_service = true;
        grid.branches.push(br);
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// `D^-1/2 (A + I) D^-1/2` with degrees counted including the self-loop.
    SelfLoops,
    /// `D^-1/2 A D^-1/2`, zero rows for isolated vertices.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: SparseMatrix,
    pub mode: NormMode,
}

pub fn normalize_adjacency(a: &SparseMatrix, mode: NormMode) -> Result<NormalizedAdjacency> {
    if a.rows() != a.cols() {
        return Err(Error::dims(a.rows(), a.cols()));
    }
    if !a.is_symmetric() {
        return Err(Error::AsymmetricInput);
    }
    let n = a.rows();
    let extra = if mode == NormMode::SelfLoops { 1.0 } else { 0.0 };
    let deg: Vec<f64> = (0..n)
        .map(|i| a.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v).sum::<f64>() + extra)
        .collect();
    let scale = |i: usize, j: usize| {
        let d = deg[i] * deg[j];
        if d > 0.0 {
            1.0 / d.sqrt()
        } else {
            0.0
        }
    };
    let mut triplets: Vec<(usize, usize, f64)> = a
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| i != j)
        .map(|(i, j, v)| (i, j, v * scale(i, j)))
        .collect();
    if mode == NormMode::SelfLoops {
        triplets.extend((0..n).map(|i| (i, i, scale(i, i))));
    }
    Ok(NormalizedAdjacency {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        mode,
    })
}

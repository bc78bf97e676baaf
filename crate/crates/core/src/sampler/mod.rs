//! Randomized dataset generation: value resampling around a reference case,
//! optional random branch outages, Newton-Raphson labelling.
//!
//! Every sample draws from its own ChaCha8 stream keyed by `(seed, index)`,
//! so the dataset does not depend on how many threads produced it.

mod io;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ac::{classify_buses, solve_nr, NrOptions, PfSolution};
use crate::case_io::components;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::line_graph::LineGraphSample;

pub use io::{read_dataset, write_dataset, FORMAT_VERSION};

/// Multiplier ranges (relative to the reference value) and absolute ranges
/// for the resampled quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub load: (f64, f64),
    pub shunt: (f64, f64),
    pub gen_p: (f64, f64),
    /// Absolute, p.u.
    pub gen_v: (f64, f64),
    pub impedance: (f64, f64),
    /// Absolute, transformers only.
    pub tau: (f64, f64),
    /// Absolute radians, transformers only.
    pub shift: (f64, f64),
}

impl Default for SampleRanges {
    fn default() -> Self {
        SampleRanges {
            load: (0.5, 1.5),
            shunt: (0.75, 1.25),
            gen_p: (0.75, 1.25),
            gen_v: (0.95, 1.05),
            impedance: (0.9, 1.1),
            tau: (0.8, 1.2),
            shift: (-0.2, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.56,
            val: 0.14,
            test: 0.30,
        }
    }
}

impl SplitRatios {
    /// `(train, val, test)` counts for `n` samples; test takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Samples per grid.
    pub n_samples: usize,
    pub perturb: bool,
    #[serde(default)]
    pub ranges: SampleRanges,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: usize,
}

fn default_retry_budget() -> usize {
    1000
}

impl SamplerConfig {
    pub fn new(seed: u64, n_samples: usize) -> Self {
        SamplerConfig {
            seed,
            n_samples,
            perturb: false,
            ranges: SampleRanges::default(),
            split: SplitRatios::default(),
            retry_budget: default_retry_budget(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let s = self.split;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if [s.train, s.val, s.test].iter().any(|r| !(0.0..=1.0).contains(r)) || (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must be in [0, 1] and sum to 1".into()));
        }
        if self.retry_budget == 0 {
            return Err(Error::Config("retry budget must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration together with the grid names.
    pub fn hash(&self, grid_names: &[&str]) -> String {
        let text = serde_json::to_string(&(self, grid_names)).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub name: String,
    pub buses: usize,
    pub branches: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub grids: Vec<GridInfo>,
    pub seed: u64,
    pub config: SamplerConfig,
    pub config_hash: String,
    pub split_counts: SplitCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<LineGraphSample>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn split(&self, which: Split) -> Vec<&LineGraphSample> {
        self.samples
            .iter()
            .zip(&self.splits)
            .filter(|(_, &s)| s == which)
            .map(|(x, _)| x)
            .collect()
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Interval for a generator's active power: from `lo x ref` up to the smaller
/// of `hi x ref` and `Pmax`. When the cap falls below the lower end the cap
/// itself is used.
pub fn gen_p_interval(reference: f64, pmax: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    let a = lo * reference;
    let b = (hi * reference).min(pmax);
    if b < a {
        (b, b)
    } else {
        (a, b)
    }
}

/// Independent uniform redraw of loads, shunts, generation, voltage
/// setpoints and branch parameters. Generators sharing a bus share one
/// voltage setpoint draw.
pub fn sample_values<R: Rng + ?Sized>(grid: &Grid, ranges: &SampleRanges, rng: &mut R) -> Grid {
    let mut g = grid.clone();
    for b in &mut g.buses {
        b.pd *= uniform(rng, ranges.load);
        b.qd *= uniform(rng, ranges.load);
        b.gs *= uniform(rng, ranges.shunt);
        b.bs *= uniform(rng, ranges.shunt);
    }
    for gen in &mut g.generators {
        gen.pg = uniform(rng, gen_p_interval(gen.pg, gen.pmax, ranges.gen_p));
    }
    let map = g.index_map();
    let mut setpoint: Vec<Option<f64>> = vec![None; g.n_buses()];
    for gen in &mut g.generators {
        let slot = &mut setpoint[map[&gen.bus]];
        let v = *slot.get_or_insert_with(|| uniform(rng, ranges.gen_v));
        gen.vg = v;
    }
    for br in &mut g.branches {
        br.r *= uniform(rng, ranges.impedance);
        br.x *= uniform(rng, ranges.impedance);
        br.b *= uniform(rng, ranges.impedance);
        if br.is_transformer() {
            br.tau = uniform(rng, ranges.tau);
            br.shift = uniform(rng, ranges.shift);
        }
    }
    g
}

/// A grid reduced to the slack's component after random outages.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub grid: Grid,
    /// Reference position of each surviving bus.
    pub bus_origin: Vec<usize>,
    /// Reference position of each surviving branch.
    pub branch_origin: Vec<usize>,
    /// Number of branches drawn for disconnection.
    pub disconnected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Accepted(Perturbed),
    Rejected { surviving_buses: usize },
}

pub const MIN_OUTAGES: usize = 5;
pub const MAX_OUTAGES: usize = 20;

/// Disconnects 5 to 20 random branches not touching the slack, then keeps
/// only the slack's component. Rejected when fewer than 10% of the buses
/// survive.
pub fn perturb_topology<R: Rng + ?Sized>(grid: &Grid, rng: &mut R) -> Result<Perturbation> {
    let slack = classify_buses(grid)?.slack;
    let slack_id = grid.buses[slack].id;
    let eligible: Vec<usize> = grid
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.in_service && b.from != slack_id && b.to != slack_id)
        .map(|(k, _)| k)
        .collect();
    let k = rng.random_range(MIN_OUTAGES..=MAX_OUTAGES).min(eligible.len());
    let mut cut = grid.clone();
    for i in sample_indices(rng, eligible.len(), k) {
        cut.branches[eligible[i]].in_service = false;
    }

    let comp = components(&cut);
    let keep: Vec<usize> = (0..cut.n_buses()).filter(|&i| comp[i] == comp[slack]).collect();
    if keep.len() * 10 < grid.n_buses() {
        return Ok(Perturbation::Rejected {
            surviving_buses: keep.len(),
        });
    }
    let kept_ids: std::collections::HashSet<usize> = keep.iter().map(|&i| cut.buses[i].id).collect();
    let branch_origin: Vec<usize> = (0..cut.branches.len())
        .filter(|&k| cut.branches[k].in_service && kept_ids.contains(&cut.branches[k].from))
        .collect();
    let reduced = Grid {
        name: grid.name.clone(),
        base_mva: grid.base_mva,
        buses: keep.iter().map(|&i| cut.buses[i].clone()).collect(),
        generators: cut.generators.iter().filter(|g| kept_ids.contains(&g.bus)).cloned().collect(),
        branches: branch_origin.iter().map(|&k| cut.branches[k].clone()).collect(),
    };
    Ok(Perturbation::Accepted(Perturbed {
        grid: reduced,
        bus_origin: keep,
        branch_origin,
        disconnected: k,
    }))
}

/// One accepted, labelled sample with the grid it was solved on.
#[derive(Debug, Clone)]
pub struct DrawnSample {
    pub grid: Grid,
    pub solution: PfSolution,
    pub sample: LineGraphSample,
    pub attempts: usize,
}

/// RNG for sample `stream` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws until a sample converges with non-negative slack generation, or
/// the retry budget runs out. Perturbed runs redraw the outages on every
/// attempt.
pub fn draw_sample(reference: &Grid, config: &SamplerConfig, stream: u64) -> Result<DrawnSample> {
    let mut rng = sample_rng(config.seed, stream);
    let options = NrOptions::default();
    for attempt in 1..=config.retry_budget {
        let (base, bus_origin, branch_origin) = if config.perturb {
            match perturb_topology(reference, &mut rng)? {
                Perturbation::Accepted(p) => (p.grid, p.bus_origin, p.branch_origin),
                Perturbation::Rejected { .. } => continue,
            }
        } else {
            (reference.clone(), (0..reference.n_buses()).collect(), (0..reference.branches.len()).collect())
        };
        let grid = sample_values(&base, &config.ranges, &mut rng);
        let solution = solve_nr(&grid, &options)?;
        if !solution.converged || solution.slack_p < 0.0 {
            continue;
        }
        let mut sample = LineGraphSample::from_grid(&grid, Some(&solution))?;
        sample.branch_index_map = sample.branch_index_map.iter().map(|&k| branch_origin[k]).collect();
        sample.bus_index_map = bus_origin;
        return Ok(DrawnSample {
            grid,
            solution,
            sample,
            attempts: attempt,
        });
    }
    Err(Error::RetryBudgetExhausted {
        sample: stream as usize,
        attempts: config.retry_budget,
    })
}

/// `n_samples` per grid; each grid's samples are split independently by a
/// seeded shuffle. Runs on the current rayon pool.
pub fn generate_dataset(grids: &[Grid], config: &SamplerConfig) -> Result<Dataset> {
    config.check()?;
    if grids.is_empty() {
        return Err(Error::Config("no grids given".into()));
    }
    let n = config.n_samples;
    let jobs: Vec<(usize, usize)> = (0..grids.len()).flat_map(|g| (0..n).map(move |i| (g, i))).collect();
    let drawn: Vec<LineGraphSample> = jobs
        .par_iter()
        .map(|&(g, i)| draw_sample(&grids[g], config, (g * n + i) as u64).map(|d| d.sample))
        .collect::<Result<_>>()?;

    let (train, val, _) = config.split.counts(n);
    let mut splits = vec![Split::Test; drawn.len()];
    let mut counts = SplitCounts::default();
    for g in 0..grids.len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut sample_rng(config.seed, u64::MAX - g as u64));
        for (rank, &i) in order.iter().enumerate() {
            let s = if rank < train {
                counts.train += 1;
                Split::Train
            } else if rank < train + val {
                counts.val += 1;
                Split::Val
            } else {
                counts.test += 1;
                Split::Test
            };
            splits[g * n + i] = s;
        }
    }

    let names: Vec<&str> = grids.iter().map(|g| g.name.as_str()).collect();
    Ok(Dataset {
        header: DatasetHeader {
            version: FORMAT_VERSION,
            grids: grids
                .iter()
                .map(|g| GridInfo {
                    name: g.name.clone(),
                    buses: g.n_buses(),
                    branches: g.branches.len(),
                })
                .collect(),
            seed: config.seed,
            config: config.clone(),
            config_hash: config.hash(&names),
            split_counts: counts,
        },
        samples: drawn,
        splits,
    })
}

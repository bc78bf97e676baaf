//! Loading and validating grid cases.

mod json;
mod matpower;

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::grid::{BusType, Grid};

pub use json::{parse_json, write_json};
pub use matpower::parse_matpower;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    MatpowerM,
    Json,
}

#[derive(Debug, Clone)]
pub struct CaseDocument {
    pub source_format: SourceFormat,
    pub grid: Grid,
    pub warnings: Vec<String>,
}

/// Reads a case from disk, picking the parser from the extension
/// (`.m` for MATPOWER, anything else JSON).
pub fn read_case(path: &std::path::Path) -> crate::Result<CaseDocument> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "m") {
        parse_matpower(&text)
    } else {
        parse_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoSlack,
    MultipleSlack,
    SlackWithoutGenerator,
    SelfLoop { branch: usize },
    ZeroReactance { branch: usize },
    DuplicateBusId { id: usize },
    DanglingBranch { branch: usize, bus: usize },
    DanglingGenerator { generator: usize, bus: usize },
    /// Buses that no in-service branch path connects to the slack.
    Disconnected { buses: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSlack => write!(f, "no slack bus"),
            Violation::MultipleSlack => write!(f, "more than one slack bus"),
            Violation::SlackWithoutGenerator => write!(f, "slack bus has no in-service generator"),
            Violation::SelfLoop { branch } => write!(f, "branch {branch} is a self-loop"),
            Violation::ZeroReactance { branch } => write!(f, "branch {branch} has x = 0"),
            Violation::DuplicateBusId { id } => write!(f, "bus id {id} is not unique"),
            Violation::DanglingBranch { branch, bus } => {
                write!(f, "branch {branch} refers to unknown bus {bus}")
            }
            Violation::DanglingGenerator { generator, bus } => {
                write!(f, "generator {generator} refers to unknown bus {bus}")
            }
            Violation::Disconnected { buses } => {
                write!(f, "{} bus(es) not connected to the slack", buses.len())
            }
        }
    }
}

pub fn validate(grid: &Grid) -> Vec<Violation> {
    let mut out = Vec::new();

    let slacks: Vec<usize> = grid
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.bus_type == BusType::Slack)
        .map(|(i, _)| i)
        .collect();
    match slacks.len() {
        0 => out.push(Violation::NoSlack),
        1 => {
            let id = grid.buses[slacks[0]].id;
            if !grid.generators.iter().any(|g| g.in_service && g.bus == id) {
                out.push(Violation::SlackWithoutGenerator);
            }
        }
        _ => out.push(Violation::MultipleSlack),
    }

    let mut seen = HashSet::new();
    for b in &grid.buses {
        if !seen.insert(b.id) {
            out.push(Violation::DuplicateBusId { id: b.id });
        }
    }

    let map: HashMap<usize, usize> = grid.index_map();
    let mut dangling = false;
    for (k, br) in grid.branches.iter().enumerate() {
        for bus in [br.from, br.to] {
            if !map.contains_key(&bus) {
                out.push(Violation::DanglingBranch { branch: k, bus });
                dangling = true;
            }
        }
        if br.from == br.to {
            out.push(Violation::SelfLoop { branch: k });
        }
        if br.x == 0.0 {
            out.push(Violation::ZeroReactance { branch: k });
        }
    }
    for (k, g) in grid.generators.iter().enumerate() {
        if !map.contains_key(&g.bus) {
            out.push(Violation::DanglingGenerator { generator: k, bus: g.bus });
        }
    }

    if slacks.len() == 1 && !dangling {
        let comp = components(grid);
        let root = comp[slacks[0]];
        let cut: Vec<usize> = grid
            .buses
            .iter()
            .enumerate()
            .filter(|&(i, _)| comp[i] != root)
            .map(|(_, b)| b.id)
            .collect();
        if !cut.is_empty() {
            out.push(Violation::Disconnected { buses: cut });
        }
    }
    out
}

/// Connected-component label per bus position over in-service branches.
/// Labels are the smallest member position of each component.
pub(crate) fn components(grid: &Grid) -> Vec<usize> {
    let n = grid.n_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let map = grid.index_map();
    for br in grid.branches.iter().filter(|b| b.in_service) {
        if let (Some(&f), Some(&t)) = (map.get(&br.from), map.get(&br.to)) {
            let (a, b) = (find(&mut parent, f), find(&mut parent, t));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

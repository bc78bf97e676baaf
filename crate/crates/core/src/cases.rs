//! Reference grids shipped with the crate.
//!
//! `case30` is the IEEE 30-bus system (`case_ieee30` in MATPOWER's naming).

use crate::case_io::{parse_json, parse_matpower};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const BUNDLED: [&str; 7] = ["case9", "case14", "case30", "case39", "case57", "case118", "case300"];

pub const MATPOWER_SOURCES: [&str; 8] = [
    "case9",
    "case14",
    "case_ieee30",
    "case39",
    "case57",
    "case89pegase",
    "case118",
    "case300",
];

fn bundled_json(name: &str) -> Option<&'static str> {
    Some(match name {
        "case9" => include_str!("../data/cases/case9.json"),
        "case14" => include_str!("../data/cases/case14.json"),
        "case30" => include_str!("../data/cases/case30.json"),
        "case39" => include_str!("../data/cases/case39.json"),
        "case57" => include_str!("../data/cases/case57.json"),
        "case118" => include_str!("../data/cases/case118.json"),
        "case300" => include_str!("../data/cases/case300.json"),
        _ => return None,
    })
}

/// Raw MATPOWER text of the shipped `.m` sources.
pub fn matpower_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "case9" => include_str!("../data/matpower/case9.m"),
        "case14" => include_str!("../data/matpower/case14.m"),
        "case_ieee30" => include_str!("../data/matpower/case_ieee30.m"),
        "case39" => include_str!("../data/matpower/case39.m"),
        "case57" => include_str!("../data/matpower/case57.m"),
        "case89pegase" => include_str!("../data/matpower/case89pegase.m"),
        "case118" => include_str!("../data/matpower/case118.m"),
        "case300" => include_str!("../data/matpower/case300.m"),
        _ => return None,
    })
}

/// Loads a bundled grid by name. `case89pegase` is read from its MATPOWER
/// source since it is not part of the JSON set.
pub fn load(name: &str) -> Result<Grid> {
    if let Some(text) = bundled_json(name) {
        return Ok(parse_json(text)?.grid);
    }
    if let Some(text) = matpower_source(name) {
        return Ok(parse_matpower(text)?.grid);
    }
    Err(Error::Config(format!("no bundled case named `{name}`")))
}

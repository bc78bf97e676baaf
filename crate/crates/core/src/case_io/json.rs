//! Canonical JSON grid schema. All electrical values are per-unit on
//! `baseMVA`, angles in radians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, BusType, Generator, Grid};

use super::{validate, CaseDocument, SourceFormat};

#[derive(Serialize, Deserialize)]
struct GridDoc {
    name: String,
    #[serde(rename = "baseMVA")]
    base_mva: f64,
    buses: Vec<BusDoc>,
    generators: Vec<GenDoc>,
    branches: Vec<BranchDoc>,
}

#[derive(Serialize, Deserialize)]
enum BusTypeDoc {
    #[serde(rename = "PQ")]
    Pq,
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "Slack")]
    Slack,
}

#[derive(Serialize, Deserialize)]
struct BusDoc {
    id: usize,
    #[serde(rename = "type")]
    bus_type: BusTypeDoc,
    #[serde(rename = "Pd")]
    pd: f64,
    #[serde(rename = "Qd")]
    qd: f64,
    #[serde(rename = "Gs")]
    gs: f64,
    #[serde(rename = "Bs")]
    bs: f64,
    #[serde(rename = "Vm")]
    vm: f64,
    #[serde(rename = "Va")]
    va: f64,
    #[serde(default)]
    base_kv: f64,
}

#[derive(Serialize, Deserialize)]
struct GenDoc {
    bus: usize,
    #[serde(rename = "Pg")]
    pg: f64,
    #[serde(rename = "Qg")]
    qg: f64,
    #[serde(rename = "Qmax", default)]
    qmax: f64,
    #[serde(rename = "Qmin", default)]
    qmin: f64,
    #[serde(rename = "Pmax")]
    pmax: f64,
    #[serde(rename = "Pmin")]
    pmin: f64,
    #[serde(rename = "Vg")]
    vg: f64,
    status: u8,
}

#[derive(Serialize, Deserialize)]
struct BranchDoc {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    b: f64,
    tau: f64,
    shift: f64,
    status: u8,
}

pub fn parse_json(text: &str) -> Result<CaseDocument> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: GridDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().to_string();
        if let Some(field) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            path = if path == "." {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
        }
        let path = if path == "." { "$".to_string() } else { format!("$.{path}") };
        Error::Schema { path, message }
    })?;

    let grid = Grid {
        name: doc.name,
        base_mva: doc.base_mva,
        buses: doc
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                bus_type: match b.bus_type {
                    BusTypeDoc::Pq => BusType::Pq,
                    BusTypeDoc::Pv => BusType::Pv,
                    BusTypeDoc::Slack => BusType::Slack,
                },
                pd: b.pd,
                qd: b.qd,
                gs: b.gs,
                bs: b.bs,
                vm: b.vm,
                va: b.va,
                base_kv: b.base_kv,
            })
            .collect(),
        generators: doc
            .generators
            .into_iter()
            .map(|g| Generator {
                bus: g.bus,
                pg: g.pg,
                qg: g.qg,
                qmax: g.qmax,
                qmin: g.qmin,
                pmax: g.pmax,
                pmin: g.pmin,
                vg: g.vg,
                in_service: g.status != 0,
            })
            .collect(),
        branches: doc
            .branches
            .into_iter()
            .map(|b| Branch {
                from: b.from,
                to: b.to,
                r: b.r,
                x: b.x,
                b: b.b,
                tau: b.tau,
                shift: b.shift,
                in_service: b.status != 0,
            })
            .collect(),
    };
    let violations = validate(&grid);
    if !violations.is_empty() {
        return Err(Error::InvalidGrid(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    Ok(CaseDocument {
        source_format: SourceFormat::Json,
        grid,
        warnings: Vec::new(),
    })
}

pub fn write_json(grid: &Grid) -> String {
    let doc = GridDoc {
        name: grid.name.clone(),
        base_mva: grid.base_mva,
        buses: grid
            .buses
            .iter()
            .map(|b| BusDoc {
                id: b.id,
                bus_type: match b.bus_type {
                    BusType::Pq => BusTypeDoc::Pq,
                    BusType::Pv => BusTypeDoc::Pv,
                    BusType::Slack => BusTypeDoc::Slack,
                },
                pd: b.pd,
                qd: b.qd,
                gs: b.gs,
                bs: b.bs,
                vm: b.vm,
                va: b.va,
                base_kv: b.base_kv,
            })
            .collect(),
        generators: grid
            .generators
            .iter()
            .map(|g| GenDoc {
                bus: g.bus,
                pg: g.pg,
                qg: g.qg,
                qmax: g.qmax,
                qmin: g.qmin,
                pmax: g.pmax,
                pmin: g.pmin,
                vg: g.vg,
                status: g.in_service as u8,
            })
            .collect(),
        branches: grid
            .branches
            .iter()
            .map(|b| BranchDoc {
                from: b.from,
                to: b.to,
                r: b.r,
                x: b.x,
                b: b.b,
                tau: b.tau,
                shift: b.shift,
                status: b.in_service as u8,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("grid documents always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::parse_matpower;
    use crate::cases;

    #[test]
    fn matpower_json_round_trip_is_identity() {
        for name in cases::MATPOWER_SOURCES {
            let m = parse_matpower(cases::matpower_source(name).unwrap()).unwrap().grid;
            let back = parse_json(&write_json(&m)).unwrap().grid;
            assert_eq!(m, back, "{name}");
        }
    }

    #[test]
    fn bundled_json_matches_matpower_source() {
        for (json_name, m_name) in [
            ("case9", "case9"),
            ("case14", "case14"),
            ("case30", "case_ieee30"),
            ("case39", "case39"),
            ("case57", "case57"),
            ("case118", "case118"),
            ("case300", "case300"),
        ] {
            let mut m = parse_matpower(cases::matpower_source(m_name).unwrap()).unwrap().grid;
            m.name = json_name.to_string();
            assert_eq!(cases::load(json_name).unwrap(), m, "{json_name}");
        }
    }

    #[test]
    fn case14_survives_conversion() {
        let m = parse_matpower(cases::matpower_source("case14").unwrap()).unwrap().grid;
        let g = parse_json(&write_json(&m)).unwrap().grid;
        assert_eq!(g.buses.len(), 14);
    }

    #[test]
    fn write_parse_write_is_stable() {
        let text = write_json(&cases::load("case39").unwrap());
        assert_eq!(write_json(&parse_json(&text).unwrap().grid), text);
    }

    #[test]
    fn missing_base_mva_reports_path() {
        let text = r#"{"name": "x", "buses": [], "generators": [], "branches": []}"#;
        match parse_json(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.baseMVA"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_error_path() {
        let mut v: serde_json::Value = serde_json::from_str(&write_json(&cases::load("case9").unwrap())).unwrap();
        v["buses"][3]["Pd"] = serde_json::Value::String("heavy".into());
        match parse_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.buses[3].Pd"),
            other => panic!("{other:?}"),
        }
        v["buses"][3].as_object_mut().unwrap().remove("Pd");
        match parse_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.buses[3].Pd"),
            other => panic!("{other:?}"),
        }
    }
}

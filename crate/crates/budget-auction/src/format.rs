//! Scenario JSON documents and graph edge lists.

use std::collections::BTreeMap;
use std::io::{self, Write};

use budget_auction_core::{ConflictGraph, Device, DeviceId, MarketError, Money, Scenario, Task, TaskId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("device {device} lists task {task} twice")]
    DuplicateInterest { device: usize, task: usize },
}

/// Rounds to cents, the precision money is written with.
pub fn round_money(x: Money) -> Money {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioDoc {
    seed: u64,
    tasks: Vec<TaskDoc>,
    devices: Vec<DeviceDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskDoc {
    id: usize,
    budget: Money,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeviceDoc {
    id: usize,
    quality: f64,
    interests: Vec<InterestDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InterestDoc {
    task: usize,
    valuation: Money,
}

/// Pretty-printed scenario document with money rounded to cents.
pub fn scenario_to_json(scenario: &Scenario) -> String {
    let doc = ScenarioDoc {
        seed: scenario.seed(),
        tasks: scenario
            .tasks()
            .iter()
            .map(|t| TaskDoc { id: t.id.0, budget: round_money(t.budget) })
            .collect(),
        devices: scenario
            .devices()
            .iter()
            .map(|d| DeviceDoc {
                id: d.id.0,
                quality: d.latent_quality,
                interests: d
                    .valuations
                    .iter()
                    .map(|(t, &v)| InterestDoc { task: t.0, valuation: round_money(v) })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("scenario documents always serialize");
    s.push('\n');
    s
}

pub fn scenario_from_json(text: &str) -> Result<Scenario, FormatError> {
    let doc: ScenarioDoc = serde_json::from_str(text)?;
    let tasks = doc
        .tasks
        .iter()
        .map(|t| Task { id: TaskId(t.id), budget: t.budget })
        .collect();
    let mut devices = Vec::with_capacity(doc.devices.len());
    for d in doc.devices {
        let mut valuations = BTreeMap::new();
        for i in &d.interests {
            if valuations.insert(TaskId(i.task), i.valuation).is_some() {
                return Err(FormatError::DuplicateInterest { device: d.id, task: i.task });
            }
        }
        devices.push(Device { id: DeviceId(d.id), valuations, latent_quality: d.quality });
    }
    Ok(Scenario::new(tasks, devices, doc.seed, None)?)
}

/// Header `vertices=<n> kappa=<k>`, then one `i j` line per edge with `i < j`.
pub fn write_edge_list<W: Write>(graph: &ConflictGraph, kappa: usize, mut out: W) -> io::Result<()> {
    writeln!(out, "vertices={} kappa={}", graph.num_vertices(), kappa)?;
    for (a, b) in graph.edges() {
        writeln!(out, "{} {}", a.0, b.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use budget_auction_core::fixtures;
    use budget_auction_core::{build_conflict_graph, generate_scenario, DistributionSpec, ScenarioConfig};

    #[test]
    fn round_trip_keeps_everything_but_sub_cent_money() {
        let s = generate_scenario(&ScenarioConfig::new(6, 40, DistributionSpec::normal()), 3).unwrap();
        let back = scenario_from_json(&scenario_to_json(&s)).unwrap();
        assert_eq!(back.seed(), s.seed());
        assert_eq!(back.num_tasks(), 6);
        for (a, b) in s.devices().iter().zip(back.devices()) {
            assert_eq!(a.latent_quality, b.latent_quality);
            assert_eq!(a.valuations.keys().collect::<Vec<_>>(), b.valuations.keys().collect::<Vec<_>>());
            for (x, y) in a.valuations.values().zip(b.valuations.values()) {
                assert!((x - y).abs() <= 0.005 + 1e-9);
            }
        }
        // Already-rounded scenarios survive byte for byte.
        assert_eq!(scenario_to_json(&back), scenario_to_json(&scenario_from_json(&scenario_to_json(&back)).unwrap()));
    }

    #[test]
    fn fixture_round_trip_is_exact() {
        let s = fixtures::example_market();
        let back = scenario_from_json(&scenario_to_json(&s)).unwrap();
        assert_eq!(back.devices(), s.devices());
        assert_eq!(back.tasks(), s.tasks());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(scenario_from_json("{"), Err(FormatError::Json(_))));
        let dup = r#"{"seed":0,"tasks":[{"id":0,"budget":5}],"devices":[{"id":0,"quality":0.5,"interests":[{"task":0,"valuation":1},{"task":0,"valuation":2}]}]}"#;
        assert!(matches!(scenario_from_json(dup), Err(FormatError::DuplicateInterest { .. })));
        let unknown = r#"{"seed":0,"tasks":[{"id":0,"budget":5}],"devices":[{"id":0,"quality":0.5,"interests":[{"task":3,"valuation":1}]}]}"#;
        assert!(matches!(scenario_from_json(unknown), Err(FormatError::Market(_))));
    }

    #[test]
    fn edge_list_of_example_market() {
        let g = build_conflict_graph(&fixtures::example_market());
        let mut buf = Vec::new();
        write_edge_list(&g, 4, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("vertices=5 kappa=4"));
        let edges: Vec<&str> = lines.collect();
        assert_eq!(edges.len(), 9);
        assert!(!edges.contains(&"0 2"));
    }
}

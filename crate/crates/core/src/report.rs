//! JSON report envelope shared by every command: schema version, crate version,
//! the configuration as given, seeds and the tolerance table in force.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>, result: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: version().to_string(),
            command: command.to_string(),
            config,
            seeds,
            tolerances: tolerance_table(),
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Every fixed numerical threshold used by the library.
pub fn tolerance_table() -> BTreeMap<String, f64> {
    use crate::{flow, focal, lax, linalg, rosochatius};
    let d = crate::ode::IntegratorOptions::default();
    [
        ("integrator.rel_tol", d.rel_tol),
        ("integrator.abs_tol", d.abs_tol),
        ("integrator.max_step", d.max_step),
        ("jacobi.off_diagonal", linalg::JACOBI_OFFDIAG_TOL),
        ("lax.kernel_rtol", lax::KERNEL_RTOL),
        ("lax.cluster_rtol", lax::CLUSTER_RTOL),
        ("lax.pole_tol", lax::POLE_TOL),
        ("lax.contact_tol", lax::CONTACT_TOL),
        ("lax.alignment_tol", lax::ALIGNMENT_TOL),
        ("lax.quadric_level", lax::QUADRIC_LEVEL),
        ("flow.event_time_tol", flow::EVENT_TIME_TOL),
        ("flow.event_merge_window", flow::EVENT_MERGE_WINDOW),
        ("focal.focal_tol", focal::FOCAL_TOL),
        ("focal.separation_tol", focal::SEPARATION_TOL),
        ("focal.umbilic_defect_tol", focal::UMBILIC_DEFECT_TOL),
        ("focal.return_radius_factor", focal::RETURN_RADIUS_FACTOR),
        ("rosochatius.barrier_factor", rosochatius::BARRIER_FACTOR),
        ("rosochatius.j_drift_tol", rosochatius::J_DRIFT_TOL),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trips() {
        let r = Report::new("demo", serde_json::json!({"axes": [3, 2, 1]}), vec![7], 1.5f64);
        let back: Report<f64> = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.schema_version, SCHEMA_VERSION);
        assert_eq!(back.seeds, vec![7]);
        assert_eq!(back.result, 1.5);
        assert_eq!(back.tolerances["focal.focal_tol"], 1e-5);
    }
}

//! Cluster identifiers and treatment-arm assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub String);

impl ClusterId {
    pub fn new(id: impl Into<String>) -> Self {
        ClusterId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClusterId {
    fn from(s: &str) -> Self {
        ClusterId(s.to_string())
    }
}

impl From<String> for ClusterId {
    fn from(s: String) -> Self {
        ClusterId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn opposite(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }

    /// Binary treatment indicator z_j.
    pub fn indicator(self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treated => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treated => "treated",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "treated" | "treatment" | "trt" | "vaccine" | "1" => Ok(Arm::Treated),
            "control" | "ctr" | "ctrl" | "0" => Ok(Arm::Control),
            other => Err(Error::Input(format!("unknown arm {other:?}"))),
        }
    }
}

/// Which trial clusters exist and the arm each was randomized to.
/// Clusters absent from the assignment are outside the trial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArmAssignment {
    arms: BTreeMap<ClusterId, Arm>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArmRow {
    cluster: String,
    arm: String,
}

impl ArmAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cluster: impl Into<ClusterId>, arm: Arm) {
        self.arms.insert(cluster.into(), arm);
    }

    pub fn arm_of(&self, cluster: &ClusterId) -> Option<Arm> {
        self.arms.get(cluster).copied()
    }

    pub fn contains(&self, cluster: &ClusterId) -> bool {
        self.arms.contains_key(cluster)
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// Clusters in identifier order.
    pub fn iter(&self) -> impl Iterator<Item = (&ClusterId, Arm)> {
        self.arms.iter().map(|(c, a)| (c, *a))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut out = ArmAssignment::new();
        for row in rdr.deserialize::<ArmRow>() {
            let row = row.map_err(|e| Error::csv(path, e))?;
            out.insert(ClusterId(row.cluster), row.arm.parse()?);
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for (cluster, arm) in self.iter() {
            wtr.serialize(ArmRow {
                cluster: cluster.0.clone(),
                arm: arm.to_string(),
            })
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

impl FromIterator<(ClusterId, Arm)> for ArmAssignment {
    fn from_iter<I: IntoIterator<Item = (ClusterId, Arm)>>(iter: I) -> Self {
        ArmAssignment {
            arms: iter.into_iter().collect(),
        }
    }
}

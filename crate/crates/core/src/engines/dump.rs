use std::fmt;
use std::str::FromStr;

use crate::textfmt::canonical;

/// Which execution stage produced a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Sw,
    Design,
    Hw,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Sw => "sw",
            Stage::Design => "design",
            Stage::Hw => "hw",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sw" => Ok(Stage::Sw),
            "design" => Ok(Stage::Design),
            "hw" => Ok(Stage::Hw),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

/// One layer's output as stored in a dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobRecord {
    pub name: String,
    values: Vec<f64>,
}

impl BlobRecord {
    /// Values are rounded to the nine significant digits a dump file holds,
    /// so a record always equals its own reparsed rendering.
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Self {
        BlobRecord { name: name.into(), values: values.into_iter().map(canonical).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Layer-by-layer outputs of one image through one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobDump {
    pub stage: Stage,
    pub image: String,
    pub records: Vec<BlobRecord>,
    pub prediction: usize,
}

impl BlobDump {
    pub fn record(&self, name: &str) -> Option<&BlobRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

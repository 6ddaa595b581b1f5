use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use vtforge_core::metrics::MetricReport;

/// Field excluded from determinism comparisons.
pub const WALL_TIME_FIELD: &str = "wall_time_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Usage,
    Input,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage | ErrorKind::Input => 1,
            ErrorKind::Internal => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorInfo {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SynthesisSummary {
    /// Instances present in at least one frame.
    pub instances: usize,
    pub frames: usize,
    /// Dropped frames by reason.
    pub drops: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoReport {
    pub video: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

impl VideoReport {
    pub fn new(video: impl Into<String>) -> Self {
        Self {
            video: video.into(),
            metrics: None,
            synthesis: None,
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub exit_status: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Effective configuration, every registered key.
    pub config: BTreeMap<&'static str, Value>,
    pub videos: Vec<VideoReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            exit_status: 0,
            seed: None,
            config: BTreeMap::new(),
            videos: Vec::new(),
            aggregate: None,
            result: None,
            error: None,
            wall_time_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// The report with the wall-time field removed, for comparing runs.
    pub fn stable_json(&self) -> String {
        stable_json(&self.to_json()).expect("own output parses")
    }
}

/// Strip the wall-time field from a serialized report.
pub fn stable_json(report: &str) -> Result<String, serde_json::Error> {
    let mut v: Value = serde_json::from_str(report)?;
    if let Value::Object(m) = &mut v {
        m.remove(WALL_TIME_FIELD);
    }
    serde_json::to_string(&v)
}

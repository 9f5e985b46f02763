//! Run configuration: the canonical record of every knob that affects a
//! command's output. Serialized into each report and hashed for the header,
//! so identical configs are recognizable across runs. Execution details
//! that cannot change results (worker count, output paths) stay out.

use serde::Serialize;
use sha2::{Digest, Sha256};
use singflow_core::FieldSpec;

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSelector {
    /// A class id as listed by chain-classes.
    Class(i64),
    /// The class containing this point.
    At([f64; 3]),
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub field: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_samples: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_boxes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassSelector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orientation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl RunConfig {
    pub fn new(command: &str, field: &FieldSpec) -> Self {
        RunConfig {
            command: command.into(),
            field: field.to_json_value(),
            grid: None,
            box_h: None,
            eps: None,
            time_samples: None,
            budget_boxes: None,
            class: None,
            orientation: None,
            window: None,
            checkpoints: None,
            seed_count: None,
            rng_seed: None,
            start: None,
            t_total: None,
            dt: None,
        }
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

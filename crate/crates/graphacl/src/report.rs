//! `metrics.json` contents.

use std::fs;
use std::path::Path;

use graphacl_core::eval::EvalReport;
use graphacl_core::metrics::GraphStats;
use graphacl_core::theory::TheoryReport;
use graphacl_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wall-clock seconds per phase; the only field allowed to differ between identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub theory_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tool_version: String,
    pub dataset: String,
    pub seed: Option<u64>,
    /// Effective training configuration after merging file and flags.
    pub config: Option<TrainConfig>,
    pub graph_stats: GraphStats,
    pub loss_curve: Vec<f64>,
    pub eval: Option<EvalReport>,
    pub theory: Option<TheoryReport>,
    pub timings: Timings,
}

impl MetricsReport {
    pub fn new(dataset: &str, graph_stats: GraphStats) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            dataset: dataset.to_string(),
            seed: None,
            config: None,
            graph_stats,
            loss_curve: Vec::new(),
            eval: None,
            theory: None,
            timings: Timings::default(),
        }
    }

    /// Refuses to emit non-finite numbers (JSON has no spelling for them).
    pub fn check_finite(&self) -> CliResult<()> {
        let value = serde_json::to_value(self).expect("report serializes");
        fn walk(v: &serde_json::Value, path: &mut String) -> Result<(), String> {
            match v {
                serde_json::Value::Null => Err(path.clone()),
                serde_json::Value::Array(xs) => xs.iter().try_for_each(|x| walk(x, path)),
                serde_json::Value::Object(m) => m.iter().try_for_each(|(k, x)| {
                    let len = path.len();
                    path.push('.');
                    path.push_str(k);
                    // absent optional sections are legitimately null
                    let r = if x.is_null() && OPTIONAL_KEYS.contains(&k.as_str()) { Ok(()) } else { walk(x, path) };
                    path.truncate(len);
                    r
                }),
                _ => Ok(()),
            }
        }
        walk(&value, &mut String::new()).map_err(|at| CliError::Data {
            path: "metrics.json".into(),
            msg: format!("non-finite value at {at}"),
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        self.check_finite()?;
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.into(), line: e.line(), msg: e.to_string() })
    }
}

const OPTIONAL_KEYS: &[&str] = &[
    "seed",
    "config",
    "eval",
    "theory",
    "bilipschitz_l",
    "theorem3_terms",
    "mean_classifier_error",
];

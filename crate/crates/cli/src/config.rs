//! TOML experiment files.
//!
//! ```toml
//! preset = "modadd_mlp_grok"   # optional base recipe
//! [task]
//! p = 31
//! [run]
//! seed = 0
//! [analysis]
//! measures = ["glue", "ntk"]
//! ```
//!
//! Tables override the preset key by key; a `[task]` table carrying `name`
//! replaces the preset task outright.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use rrd_core::dynamics::{PhaseKind, Thresholds};
use rrd_core::glue::{DichotomyScheme, GlueConfig};
use rrd_core::probes::{ProbeConfig, TransferTask};
use rrd_core::trainer::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Glue,
    Probes,
    Ntk,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Glue, Measure::Probes, Measure::Ntk];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Glue => "glue",
            Measure::Probes => "probes",
            Measure::Ntk => "ntk",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "glue" => Ok(Measure::Glue),
            "probes" | "probe" => Ok(Measure::Probes),
            "ntk" | "kernels" => Ok(Measure::Ntk),
            other => Err(CliError::Usage(format!("unknown measure {other:?}; expected glue, probes or ntk"))),
        }
    }
}

/// Comma-separated measure list, deduplicated and ordered.
pub fn parse_measures(s: &str) -> Result<Vec<Measure>, CliError> {
    let mut out =
        s.split(',').filter(|p| !p.trim().is_empty()).map(Measure::from_str).collect::<Result<Vec<_>, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("empty measure list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseChoice {
    /// Double descent for label-noise runs, grokking when test onset trails
    /// train-100, otherwise the non-grokking layout.
    #[default]
    Auto,
    Grok,
    Nogrok,
    DoubleDescent,
    Clean,
}

impl PhaseChoice {
    pub fn fixed(self) -> Option<PhaseKind> {
        match self {
            PhaseChoice::Auto => None,
            PhaseChoice::Grok => Some(PhaseKind::Grok),
            PhaseChoice::Nogrok => Some(PhaseKind::Nogrok),
            PhaseChoice::DoubleDescent => Some(PhaseKind::DoubleDescent),
            PhaseChoice::Clean => Some(PhaseKind::Clean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairwiseConfig {
    pub enabled: bool,
    pub n_samples: usize,
    /// Skip matrices above this class count.
    pub max_classes: usize,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        PairwiseConfig { enabled: true, n_samples: 50, max_classes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub measures: Vec<Measure>,
    /// Base seed for every estimator; defaults to the run seed.
    pub seed: Option<u64>,
    pub glue: GlueConfig,
    pub dichotomies: DichotomyScheme,
    pub pairwise: PairwiseConfig,
    pub probe: ProbeConfig,
    /// Transfer probe fitted on the final checkpoint.
    pub transfer: Option<TransferTask>,
    pub thresholds: Thresholds,
    pub phases: PhaseChoice,
    pub plots: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            measures: Measure::ALL.to_vec(),
            seed: None,
            glue: GlueConfig::default(),
            dichotomies: DichotomyScheme::AllPairwise,
            pairwise: PairwiseConfig::default(),
            probe: ProbeConfig::default(),
            transfer: None,
            thresholds: Thresholds::default(),
            phases: PhaseChoice::Auto,
            plots: true,
        }
    }
}

/// Parsed experiment file.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// `None` for analysis-only files.
    pub train: Option<TrainConfig>,
    pub analysis: AnalysisConfig,
    /// Cartesian grid for `rrd sweep`: dotted key to values.
    pub sweep: Vec<(String, Vec<Value>)>,
    /// Merged training table, before typing.
    pub raw_train: Option<Table>,
}

const TRAIN_KEYS: [&str; 5] = ["task", "model", "optimizer", "scale", "run"];

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn typed<T: serde::de::DeserializeOwned>(value: Value, what: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { what.to_string() } else { format!("{what}.{path}") };
        CliError::Usage(format!("config key '{at}': {}", e.into_inner()))
    })
}

/// Training config from a merged table.
pub fn train_config_from(table: &Table) -> Result<TrainConfig, CliError> {
    let cfg: TrainConfig = typed(Value::Table(table.clone()), "config")?;
    cfg.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    Ok(cfg)
}

pub fn parse_experiment(text: &str) -> Result<Experiment, CliError> {
    let mut doc: Table =
        text.parse().map_err(|e: toml::de::Error| CliError::Usage(format!("config parse error: {e}")))?;
    let preset = match doc.remove("preset") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(CliError::Usage("config key 'preset': expected a string".into())),
    };
    let analysis = match doc.remove("analysis") {
        None => AnalysisConfig::default(),
        Some(v) => typed(v, "analysis")?,
    };
    let sweep = match doc.remove("sweep") {
        None => Vec::new(),
        Some(Value::Table(t)) => t
            .into_iter()
            .map(|(k, v)| match v {
                Value::Array(values) if !values.is_empty() => Ok((k, values)),
                _ => Err(CliError::Usage(format!("config key 'sweep.{k}': expected a non-empty array"))),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(CliError::Usage("config key 'sweep': expected a table".into())),
    };
    if let Some(k) = doc.keys().find(|k| !TRAIN_KEYS.contains(&k.as_str())) {
        return Err(CliError::Usage(format!(
            "config key '{k}': unknown top-level key; expected preset, {}, analysis or sweep",
            TRAIN_KEYS.join(", ")
        )));
    }
    let raw_train = match preset {
        Some(name) => {
            let base = TrainConfig::preset(&name).map_err(|e| CliError::Usage(format!("config key 'preset': {e}")))?;
            let mut table = Table::try_from(&base).map_err(|e| CliError::Usage(e.to_string()))?;
            if doc.get("task").and_then(|t| t.get("name")).is_some() {
                table.remove("task");
            }
            merge(&mut table, &doc);
            Some(table)
        }
        None if doc.is_empty() => None,
        None => Some(doc),
    };
    let train = raw_train.as_ref().map(train_config_from).transpose()?;
    Ok(Experiment { train, analysis, sweep, raw_train })
}

pub fn load_experiment(path: &Path) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_experiment(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Set a dotted key (`scale.beta`) inside a table, creating sub-tables.
pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last =
        parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Usage(format!("bad sweep key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur =
            entry.as_table_mut().ok_or_else(|| CliError::Usage(format!("sweep key {key:?}: '{p}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_overrides() {
        let e =
            parse_experiment("preset = \"modadd_mlp_grok\"\n[task]\np = 31\n[run]\nepochs = 10\nseed = 3\n").unwrap();
        let t = e.train.unwrap();
        assert_eq!(t.run.epochs, 10);
        assert_eq!(t.run.seed, 3);
        assert!(matches!(t.task, rrd_core::trainer::TaskSpec::Modadd { p: 31, .. }));
        assert_eq!(t.optimizer.lr, 5e-4);
    }

    #[test]
    fn malformed_key_is_named() {
        let err = parse_experiment("preset = \"modadd_mlp_grok\"\n[optimizer]\nlrate = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("lrate") && msg.contains("optimizer"), "{msg}");
        let err = parse_experiment("[analysis.glue]\nn_sample = 3\n").unwrap_err().to_string();
        assert!(err.contains("n_sample") && err.contains("analysis.glue"), "{err}");
        let err = parse_experiment("bogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn analysis_only_file() {
        let e = parse_experiment("[analysis]\nmeasures = [\"ntk\"]\n").unwrap();
        assert!(e.train.is_none());
        assert_eq!(e.analysis.measures, vec![Measure::Ntk]);
    }

    #[test]
    fn measure_lists() {
        assert_eq!(parse_measures("ntk,glue,ntk").unwrap(), vec![Measure::Glue, Measure::Ntk]);
        assert!(parse_measures("glue,cka").is_err());
    }

    #[test]
    fn dotted_keys() {
        let mut t = Table::new();
        set_dotted(&mut t, "scale.beta", Value::Float(2.0)).unwrap();
        assert_eq!(t["scale"]["beta"].as_float(), Some(2.0));
    }
}

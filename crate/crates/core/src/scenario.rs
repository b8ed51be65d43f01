//! Experiment definitions.
//!
//! A scenario is a TOML file. Every table is optional and unknown keys are
//! rejected. Minimal example:
//!
//! ```toml
//! seed = 7
//! n_rounds = 15
//!
//! [data]
//! source = "synthetic"
//! n_rows = 1000
//! faulty_sensors = [2]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, generate_synthetic_replica, ingest_csv, permutation_importance, select_features, split_baseline,
    CsvOptions, MinMaxScaler, PreprocessConfig, SyntheticSpec, TimeSeriesFrame,
};
use crate::fault::{fit_weibull, CheckpointPolicy, CostMode, WeibullModel};
use crate::fl::{Aggregation, PartitionStrategy, DEFAULT_STABILITY_WINDOW};
use crate::nn::{prediction_accuracy, train_local, LabeledSet, MlpModel, TrainConfig};
use crate::scalar::Scalar;
use crate::seed;
use crate::som::SomConfig;
use crate::{Error, Result};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unknown key `{key}`: {message}")]
    UnknownKey { path: PathBuf, key: String, message: String },
    #[error("invalid scenario: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Detector {
    #[serde(rename = "som")]
    Som,
    #[serde(rename = "mlp-federated")]
    MlpFederated,
    #[default]
    #[serde(rename = "both")]
    Both,
}

impl Detector {
    pub fn runs_som(&self) -> bool {
        matches!(self, Self::Som | Self::Both)
    }

    pub fn runs_federated(&self) -> bool {
        matches!(self, Self::MlpFederated | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub has_header: bool,
    #[serde(default)]
    pub label_column: Option<String>,
    /// Separate test file; otherwise every fifth row is held out.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticSpec::default())
    }
}

/// Local optimizer settings shared by every client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalTrainingConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub early_stop_patience: usize,
}

impl Default for LocalTrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_layers: crate::nn::DEFAULT_HIDDEN.to_vec(),
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_epsilon: t.adam_epsilon,
            dropout_rate: t.dropout_rate,
            batch_size: t.batch_size,
            early_stop_patience: t.early_stop_patience,
        }
    }
}

impl LocalTrainingConfig {
    pub fn to_train_config(&self, max_epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            dropout_rate: self.dropout_rate,
            batch_size: self.batch_size,
            max_epochs,
            early_stop_patience: self.early_stop_patience,
            seed,
        }
    }

    pub fn layer_dims(&self, n_features: usize) -> Vec<usize> {
        let mut dims = vec![n_features];
        dims.extend(&self.hidden_layers);
        dims.push(1);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    #[default]
    Memory,
    /// Files under `<output_dir>/checkpoints`.
    Directory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeibullParams {
    pub lambda: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointConfig {
    /// With checkpointing off, a failed client restarts from the global
    /// model and misses the round.
    pub enabled: bool,
    pub store: StoreKind,
    pub total_time: f64,
    pub recovery_time: f64,
    pub candidate_intervals: Vec<f64>,
    pub cost_mode: CostMode,
    pub weibull: WeibullParams,
    /// Text file of positive failure times (one per line or comma
    /// separated); when given, the Weibull model is fitted from it.
    pub failure_history: Option<PathBuf>,
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            store: StoreKind::Memory,
            total_time: 100.0,
            recovery_time: 10.0,
            candidate_intervals: vec![5.0, 10.0, 20.0, 25.0, 50.0, 100.0],
            cost_mode: CostMode::Literal,
            weibull: WeibullParams { lambda: 50.0, k: 1.5 },
            failure_history: None,
        }
    }
}

impl CheckpointConfig {
    pub fn policy(&self) -> CheckpointPolicy {
        CheckpointPolicy {
            total_time: self.total_time,
            recovery_time: self.recovery_time,
            candidate_intervals: self.candidate_intervals.clone(),
            cost_mode: self.cost_mode,
        }
    }

    pub fn weibull_model(&self) -> Result<WeibullModel<f64>> {
        match &self.failure_history {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                let times = text
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| ConfigError::Invariant(format!("{}: bad failure time `{s}`", path.display())))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(fit_weibull(&times)?)
            }
            None => Ok(WeibullModel::new(self.weibull.lambda, self.weibull.k)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    pub client_ids: Vec<usize>,
    /// Probability of flipping each label of a degraded client.
    pub label_noise: f64,
    /// Factor applied to the variance of a degraded client's readings.
    pub variance_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_clients: usize,
    pub n_rounds: usize,
    pub local_epochs: usize,
    pub aggregation: Aggregation,
    /// Defaults to every client.
    pub node_selection_k: Option<usize>,
    pub dropout_rate: f64,
    pub detector: Detector,
    pub partition: PartitionStrategy,
    pub stability_window: usize,
    /// Leading share of rows treated as healthy baseline.
    pub baseline_fraction: f64,
    pub output_dir: PathBuf,
    pub data: DataSource,
    pub preprocess: PreprocessConfig,
    pub som: SomConfig,
    pub train: LocalTrainingConfig,
    pub checkpoint: CheckpointConfig,
    pub degrade: DegradeConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_clients: 10,
            n_rounds: 15,
            local_epochs: 5,
            aggregation: Aggregation::Adaptive,
            node_selection_k: None,
            dropout_rate: 0.0,
            detector: Detector::Both,
            partition: PartitionStrategy::Strided,
            stability_window: DEFAULT_STABILITY_WINDOW,
            baseline_fraction: 0.6,
            output_dir: PathBuf::from("out"),
            data: DataSource::default(),
            preprocess: PreprocessConfig::default(),
            som: SomConfig::with_grid(10, 10),
            train: LocalTrainingConfig::default(),
            checkpoint: CheckpointConfig::default(),
            degrade: DegradeConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let message = e.to_string();
            match unknown_key(e.message()) {
                Some(key) => ConfigError::UnknownKey {
                    path: path.to_path_buf(),
                    key,
                    message,
                },
                None => ConfigError::Parse {
                    path: path.to_path_buf(),
                    message,
                },
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn selection_k(&self) -> usize {
        self.node_selection_k.unwrap_or(self.n_clients)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(ConfigError::Invariant(m)));
        if self.n_clients == 0 {
            return bad("n_clients must be at least 1".into());
        }
        if self.local_epochs == 0 {
            return bad("local_epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1]", self.dropout_rate));
        }
        if self.node_selection_k == Some(0) {
            return bad("node_selection_k must be at least 1".into());
        }
        if !(self.baseline_fraction > 0.0 && self.baseline_fraction < 1.0) {
            return bad(format!("baseline_fraction {} not in (0, 1)", self.baseline_fraction));
        }
        if let Some(&id) = self.degrade.client_ids.iter().find(|&&id| id >= self.n_clients) {
            return bad(format!("degraded client {id} does not exist"));
        }
        if !(0.0..=1.0).contains(&self.degrade.label_noise) {
            return bad(format!("label_noise {} outside [0, 1]", self.degrade.label_noise));
        }
        if !self.degrade.client_ids.is_empty() && !(self.degrade.variance_multiplier > 0.0) {
            return bad("variance_multiplier must be positive".into());
        }
        match &self.data {
            DataSource::Synthetic(spec) => spec.validate()?,
            DataSource::Csv(csv) => {
                for p in std::iter::once(&csv.path).chain(csv.test_path.as_ref()) {
                    if !p.exists() {
                        return bad(format!("data file {} does not exist", p.display()));
                    }
                }
            }
        }
        if let Some(p) = &self.checkpoint.failure_history {
            if !p.exists() {
                return bad(format!("failure history {} does not exist", p.display()));
            }
        }
        self.preprocess.validate()?;
        self.som.validate()?;
        self.train.to_train_config(1, 0).validate()?;
        self.checkpoint.policy().validate()?;
        if self.checkpoint.failure_history.is_none() {
            WeibullModel::new(self.checkpoint.weibull.lambda, self.checkpoint.weibull.k)?;
        }
        Ok(())
    }

    /// Seed of an independent stream derived from the master seed.
    pub fn stream_seed(&self, stream: u64) -> u64 {
        seed::derive(&[self.seed, stream])
    }
}

/// Extracts `n_cleints` from "unknown field `n_cleints`, expected ...".
fn unknown_key(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_toml_str(&text, path)
}

/// Preprocessed training and test frames plus the baseline scaler.
#[derive(Debug, Clone)]
pub struct PreparedData<T> {
    /// Filtered and normalized training frame, time ordered.
    pub frame: TimeSeriesFrame<T>,
    pub test: TimeSeriesFrame<T>,
    /// Number of leading baseline rows of `frame`.
    pub baseline_rows: usize,
    pub scaler: Option<MinMaxScaler<T>>,
}

impl<T: Scalar> PreparedData<T> {
    pub fn baseline(&self) -> TimeSeriesFrame<T> {
        self.frame.slice_rows(0..self.baseline_rows)
    }

    pub fn evaluation(&self) -> TimeSeriesFrame<T> {
        self.frame.slice_rows(self.baseline_rows..self.frame.n_rows())
    }
}

/// Loads or generates the raw training and test frames.
pub fn load_frames<T: Scalar>(config: &ScenarioConfig) -> Result<(TimeSeriesFrame<T>, TimeSeriesFrame<T>)> {
    match &config.data {
        DataSource::Synthetic(spec) => {
            let spec = SyntheticSpec {
                seed: seed::derive(&[config.seed, seed::stream::DATA, spec.seed]),
                ..spec.clone()
            };
            Ok((generate_synthetic(&spec)?, generate_synthetic_replica(&spec, 1)?))
        }
        DataSource::Csv(src) => {
            let opts = CsvOptions {
                has_header: src.has_header,
                label_column: src.label_column.clone(),
                drop_invalid_rows: config.preprocess.drop_invalid_rows,
            };
            let frame: TimeSeriesFrame<T> = ingest_csv(&src.path, &opts)?;
            match &src.test_path {
                Some(p) => Ok((frame, ingest_csv(p, &opts)?)),
                None => {
                    let n = frame.n_rows();
                    let test: Vec<usize> = (4..n).step_by(5).collect();
                    let train: Vec<usize> = (0..n).filter(|i| i % 5 != 4).collect();
                    Ok((frame.select_rows(&train), frame.select_rows(&test)))
                }
            }
        }
    }
}

/// Filters both frames, then min-max normalizes them with the range of the
/// training frame's baseline prefix.
pub fn prepare_data<T: Scalar>(config: &ScenarioConfig) -> Result<PreparedData<T>> {
    let (raw, raw_test) = load_frames::<T>(config)?;
    let frame = config.preprocess.filter(&raw)?;
    let test = config.preprocess.filter(&raw_test)?;
    let (baseline, _) = split_baseline(&frame, config.baseline_fraction)?;
    let baseline_rows = baseline.n_rows();
    if !config.preprocess.normalize {
        return Ok(PreparedData {
            frame,
            test,
            baseline_rows,
            scaler: None,
        });
    }
    let scaler = MinMaxScaler::fit(baseline.values(), T::of(config.preprocess.epsilon))?;
    Ok(PreparedData {
        frame: scaler.transform(&frame)?,
        test: scaler.transform(&test)?,
        baseline_rows,
        scaler: Some(scaler),
    })
}

/// Sensor indices kept by permutation-importance feature selection. Without
/// a `min_importance` threshold every sensor is kept.
///
/// Importance is measured with a centrally trained classifier of the
/// configured shape on the prepared training frame.
pub fn select_sensors<T: Scalar>(config: &ScenarioConfig, data: &PreparedData<T>) -> Result<Vec<usize>> {
    let all: Vec<usize> = (0..data.frame.n_sensors()).collect();
    let Some(threshold) = config.preprocess.min_importance else {
        return Ok(all);
    };
    let set = LabeledSet::from_frame(&data.frame)?;
    let dims = config.train.layer_dims(data.frame.n_sensors());
    let model = MlpModel::with_dims(&dims, config.stream_seed(seed::stream::INIT))?;
    let train = config.train.to_train_config(config.local_epochs, config.stream_seed(seed::stream::LOCAL_EPOCH));
    let model = train_local(&model, &set, &set, &train)?.model;
    let importance = permutation_importance(
        &data.frame,
        |f| {
            LabeledSet::from_frame(f)
                .and_then(|s| prediction_accuracy(&model, &s))
                .unwrap_or(0.0)
        },
        config.stream_seed(seed::stream::SHARD),
        1,
    )?;
    log::info!("permutation importance: {importance:?}");
    Ok(select_features(&importance, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        ScenarioConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("[data]\nsource = \"synthetic\"\n").unwrap();
        assert_eq!(c.n_clients, 10);
        assert_eq!(c.n_rounds, 15);
        assert_eq!(c.selection_k(), 10);
        assert_eq!(c.data, DataSource::Synthetic(SyntheticSpec::default()));
        assert_eq!(parse("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn nested_tables_parse() {
        let c = parse(
            r#"
seed = 3
aggregation = "fedavg"
detector = "mlp-federated"
partition = "contiguous"

[data]
source = "synthetic"
n_rows = 500
faulty_sensors = [1, 3]

[checkpoint]
enabled = false
cost_mode = { mode = "overhead_rate", checkpoint_cost = 1.5 }

[degrade]
client_ids = [0, 1]
label_noise = 0.3
variance_multiplier = 4.0
"#,
        )
        .unwrap();
        assert_eq!(c.aggregation, Aggregation::Fedavg);
        assert_eq!(c.detector, Detector::MlpFederated);
        assert!(!c.checkpoint.enabled);
        assert_eq!(c.checkpoint.cost_mode, CostMode::OverheadRate { checkpoint_cost: 1.5 });
        match c.data {
            DataSource::Synthetic(s) => {
                assert_eq!(s.n_rows, 500);
                assert_eq!(s.faulty_sensors.len(), 2);
            }
            _ => panic!("expected synthetic source"),
        }
    }

    #[test]
    fn invalid_dropout_rate() {
        let e = parse("dropout_rate = 1.5").unwrap_err();
        assert!(matches!(e, Error::Config(ConfigError::Invariant(_))), "{e}");
    }

    #[test]
    fn unknown_keys_are_named() {
        match parse("n_cleints = 4").unwrap_err() {
            Error::Config(ConfigError::UnknownKey { key, message, .. }) => {
                assert_eq!(key, "n_cleints");
                assert!(message.contains("line 1"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        match parse("[data]\nsource = \"synthetic\"\nn_rowz = 3\n").unwrap_err() {
            Error::Config(ConfigError::UnknownKey { key, .. }) => assert_eq!(key, "n_rowz"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse("seed = 1\nn_rounds = = 2\n").unwrap_err() {
            Error::Config(ConfigError::Parse { message, .. }) => assert!(message.contains("line 2"), "{message}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_files_fail_validation() {
        let e = parse("[data]\nsource = \"csv\"\npath = \"/nonexistent/x.csv\"\n").unwrap_err();
        assert!(e.to_string().contains("does not exist"), "{e}");
    }

    #[test]
    fn prepared_data_uses_baseline_range() {
        let c = ScenarioConfig {
            data: DataSource::Synthetic(SyntheticSpec {
                n_rows: 200,
                ..Default::default()
            }),
            ..Default::default()
        };
        let p: PreparedData<f64> = prepare_data(&c).unwrap();
        assert_eq!(p.baseline_rows, 120);
        let base = p.baseline();
        for j in 0..base.n_sensors() {
            let col = base.values().column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((lo - 1e-10).abs() < 1e-12 && (hi - (1.0 + 1e-10)).abs() < 1e-12);
        }
        assert_eq!(p.test.n_rows(), 200);
    }

    #[test]
    fn failure_history_is_fitted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("failures.txt");
        std::fs::write(&path, "12.0, 30.5\n44.1\n51.0 70.2\n").unwrap();
        let cfg = CheckpointConfig {
            failure_history: Some(path),
            ..Default::default()
        };
        let m = cfg.weibull_model().unwrap();
        assert!(m.k() > 0.0 && m.lambda() > 12.0);
    }
}

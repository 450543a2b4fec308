//! End-to-end experiment driver behind the `evonet` binary.
//!
//! A run is described by one JSON document. Every stage reads its inputs
//! from and writes its artifacts to the output directory, so stages can be
//! run separately (`evolve`, then `finetune`, then `evaluate`) or together
//! (`full`).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_blobs, gen_rectangles, load_idx, Dataset};
use crate::error::{Error, Result};
use crate::evolution::{evolve_stack, write_history_csv, Checkpoint, EvolutionConfig};
use crate::fitness::ccr;
use crate::genome::LayerPhenotype;
use crate::io;
use crate::network::{self, activation_maximization, assemble, finetune, predict, NetworkStack, TrainConfig};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// IDX image/label files. `*_limit` keeps only the first rows.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
    Blobs {
        n_train: usize,
        n_test: usize,
        dim: usize,
        n_classes: usize,
        separation: f64,
    },
    Rectangles {
        n_train: usize,
        n_test: usize,
        #[serde(default = "default_side")]
        side: usize,
    },
}

fn default_side() -> usize {
    28
}

impl DatasetSpec {
    fn resolve(&mut self, base: &Path) {
        if let DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = self
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                *p = base.join(&*p);
            }
        }
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => vec![train_images.clone(), train_labels.clone(), test_images.clone(), test_labels.clone()],
            _ => Vec::new(),
        }
    }

    /// Training and test sets. Synthetic sets are drawn once from the
    /// experiment seed and cut into train and test parts.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut s = rng::stream(seed, &[tag::DATA]);
        match self {
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let mut train = load_idx(train_images, train_labels)?;
                let mut test = load_idx(test_images, test_labels)?;
                if let Some(n) = train_limit {
                    train = train.take(*n);
                }
                if let Some(n) = test_limit {
                    test = test.take(*n);
                }
                let classes = train.n_classes.max(test.n_classes);
                train.n_classes = classes;
                test.n_classes = classes;
                Ok((train, test))
            }
            DatasetSpec::Blobs {
                n_train,
                n_test,
                dim,
                n_classes,
                separation,
            } => {
                let all = gen_blobs(n_train + n_test, *dim, *n_classes, *separation, &mut s)?;
                Ok(cut(&all, *n_train))
            }
            DatasetSpec::Rectangles { n_train, n_test, side } => {
                let all = gen_rectangles(n_train + n_test, *side, &mut s)?;
                Ok(cut(&all, *n_train))
            }
        }
    }
}

fn cut(all: &Dataset, n_train: usize) -> (Dataset, Dataset) {
    let idx: Vec<usize> = (0..all.len()).collect();
    (all.select(&idx[..n_train]), all.select(&idx[n_train..]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualizeConfig {
    pub units_per_layer: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Deepest layer to visualize.
    pub max_depth: usize,
    /// Whether `full` runs the visualization stage.
    pub in_full: bool,
}

impl Default for VisualizeConfig {
    fn default() -> Self {
        Self {
            units_per_layer: 100,
            iterations: 10_000,
            learning_rate: 0.1,
            max_depth: 3,
            in_full: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Master seed; copied into the evolution and training sections.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub visualize: VisualizeConfig,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    /// Evolved layers read by `finetune`; defaults to `<output_dir>/layers.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers_path: Option<PathBuf>,
    /// Model read by `evaluate` and `visualize`; defaults to `<output_dir>/model.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            seed: 0,
            evolution: EvolutionConfig::default(),
            training: TrainConfig::default(),
            visualize: VisualizeConfig::default(),
            output_dir: default_out(),
            layers_path: None,
            model_path: None,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.evolution.seed = seed;
        self.training.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        self.training.validate()?;
        if self.visualize.learning_rate <= 0.0 {
            return Err(Error::Config {
                line: None,
                message: "visualize.learning_rate: must be positive".into(),
            });
        }
        for p in self.dataset.input_files() {
            if !p.is_file() {
                return Err(Error::Config {
                    line: None,
                    message: format!("dataset: {} does not exist", p.display()),
                });
            }
        }
        Ok(())
    }

    pub fn layers_file(&self) -> PathBuf {
        self.layers_path.clone().unwrap_or_else(|| self.output_dir.join("layers.json"))
    }

    pub fn model_file(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.output_dir.join("model.json"))
    }
}

/// First line of `text` mentioning `"key"`, 1-based.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Parses a config document. Relative paths are taken relative to `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    cfg.set_seed(cfg.seed);
    cfg.dataset.resolve(base);
    for p in [&mut cfg.layers_path, &mut cfg.model_path].into_iter().flatten() {
        *p = base.join(&*p);
    }
    cfg.output_dir = base.join(&cfg.output_dir);
    cfg.validate().map_err(|e| match e {
        Error::Config { line: None, message } => {
            let field = message.split(':').next().and_then(|f| f.rsplit('.').next()).unwrap_or("");
            Error::Config {
                line: line_of_key(text, field),
                message,
            }
        }
        other => other,
    })?;
    Ok(cfg)
}

/// Reads and validates an experiment config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config_str(&text, base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Finetune,
    Evaluate,
    Visualize,
    Full,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Evolve => "evolve",
            Command::Finetune => "finetune",
            Command::Evaluate => "evaluate",
            Command::Visualize => "visualize",
            Command::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Metrics {
    pub test_ccr: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HashedFile {
    path: PathBuf,
    git_blob: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    command: String,
    seed: u64,
    config: ExperimentConfig,
    inputs: Vec<HashedFile>,
    outputs: Vec<HashedFile>,
}

/// What a run produced.
#[derive(Debug, Default, Clone)]
pub struct RunSummary {
    pub layers: Option<Vec<LayerPhenotype>>,
    pub model: Option<NetworkStack>,
    pub metrics: Option<Metrics>,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    inputs: Vec<PathBuf>,
    summary: RunSummary,
    data: Option<(Dataset, Dataset)>,
}

impl Run<'_> {
    fn data(&mut self) -> Result<&(Dataset, Dataset)> {
        if self.data.is_none() {
            self.inputs.extend(self.cfg.dataset.input_files());
            self.data = Some(self.cfg.dataset.load(self.cfg.seed)?);
        }
        Ok(self.data.as_ref().expect("just loaded"))
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.cfg.output_dir.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.summary.outputs.push(path.clone());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn evolve(&mut self) -> Result<Vec<LayerPhenotype>> {
        let evo = self.cfg.evolution.clone();
        let train = self.data()?.0.clone();
        let stage1 = evolve_stack(&train, &evo)?;
        for (i, run) in stage1.runs.iter().enumerate() {
            let mut csv = Vec::new();
            write_history_csv(&run.history, &mut csv).map_err(|e| Error::io("history csv", e))?;
            self.write(&format!("history_layer{i}.csv"), &csv)?;
            self.write_json(&format!("checkpoint_layer{i}.json"), &Checkpoint::of(run, evo.seed, i))?;
        }
        if let Some(note) = &stage1.stopped_early {
            self.summary.notes.push(note.clone());
        }
        let path = self.write_json("layers.json", &io::LayersFile::from_layers(&stage1.layers))?;
        if io::load_layers(&path)? != stage1.layers {
            return Err(Error::Numeric(format!("{} does not reload to the evolved layers", path.display())));
        }
        self.summary.layers = Some(stage1.layers.clone());
        Ok(stage1.layers)
    }

    fn finetune(&mut self, layers: Option<Vec<LayerPhenotype>>) -> Result<NetworkStack> {
        let layers = match layers {
            Some(l) => l,
            None => {
                let path = self.cfg.layers_file();
                self.inputs.push(path.clone());
                io::load_layers(&path)?
            }
        };
        let seed = self.cfg.seed;
        let (train, _) = self.data()?.clone();
        let stack = assemble(&layers, train.n_classes, &mut rng::stream(seed, &[tag::HEAD_INIT]))?;
        let (tuned, history) = finetune(&stack, &train, &self.cfg.training, &mut rng::stream(seed, &[tag::FINETUNE]))?;
        let mut csv = Vec::new();
        history.write_csv(&mut csv).map_err(|e| Error::io("train history csv", e))?;
        self.write("train_history.csv", &csv)?;
        let path = self.write_json("model.json", &io::ModelFile::from_stack(&tuned))?;
        if io::load_model(&path)? != tuned {
            return Err(Error::Numeric(format!("{} does not reload to the tuned model", path.display())));
        }
        self.summary.model = Some(tuned.clone());
        Ok(tuned)
    }

    fn load_model(&mut self, model: Option<NetworkStack>) -> Result<NetworkStack> {
        match model {
            Some(m) => Ok(m),
            None => {
                let path = self.cfg.model_file();
                self.inputs.push(path.clone());
                io::load_model(&path)
            }
        }
    }

    fn evaluate(&mut self, model: Option<NetworkStack>) -> Result<Metrics> {
        let model = self.load_model(model)?;
        let (_, test) = self.data()?;
        let pred = predict(&model, test.x.view())?;
        let metrics = Metrics {
            test_ccr: ccr(&pred, &test.y)?,
            n_test: test.len(),
        };
        self.write_json("metrics.json", &metrics)?;
        self.summary.metrics = Some(metrics.clone());
        Ok(metrics)
    }

    fn visualize(&mut self, model: Option<NetworkStack>) -> Result<()> {
        let model = self.load_model(model)?;
        let vis = self.cfg.visualize.clone();
        let shape = self.data()?.0.image_shape;
        let n = model.input_dim();
        let (height, width) = shape.filter(|(h, w)| h * w == n).unwrap_or((1, n));
        let mut csv = String::from("depth,unit,activation");
        for j in 0..n {
            csv.push_str(&format!(",x{j}"));
        }
        csv.push('\n');
        for depth in 1..=vis.max_depth.min(model.depth()) {
            let units = model.layers[depth - 1].units();
            let mut pick = rng::stream(self.cfg.seed, &[tag::VISUALIZE, depth as u64]);
            let mut chosen = sample(&mut pick, units, vis.units_per_layer.min(units)).into_vec();
            chosen.sort_unstable();
            let results: Vec<Result<network::ActivationMaximum>> = chosen
                .par_iter()
                .map(|&u| {
                    let mut s = rng::stream(self.cfg.seed, &[tag::VISUALIZE, depth as u64, u as u64]);
                    activation_maximization(&model, depth, u, vis.iterations, vis.learning_rate, &mut s)
                })
                .collect();
            for (&u, r) in chosen.iter().zip(results) {
                let am = r?;
                let last = am.trace.last().copied().unwrap_or(f64::NAN);
                csv.push_str(&format!("{depth},{u},{last}"));
                for v in &am.input {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
                let img = io::pgm_bytes(width, height, am.input.as_slice().expect("contiguous"))?;
                self.write(&format!("visualize/depth{depth}_unit{u}.pgm"), &img)?;
            }
        }
        self.write("visualize/activations.csv", csv.as_bytes())?;
        Ok(())
    }

    fn manifest(&mut self, command: Command) -> Result<()> {
        let hash = |p: &PathBuf| -> Result<HashedFile> {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(HashedFile {
                path: p.clone(),
                git_blob: io::git_blob_hash(&bytes),
            })
        };
        let manifest = Manifest {
            version: io::FORMAT_VERSION,
            command: command.to_string(),
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            inputs: self.inputs.iter().map(hash).collect::<Result<_>>()?,
            outputs: self.summary.outputs.iter().map(hash).collect::<Result<_>>()?,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.cfg.output_dir.join(format!("manifest_{command}.json"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Runs `command` and records a manifest of everything read and written.
/// `config_path`, when given, is hashed into the manifest as an input.
pub fn run_pipeline(cfg: &ExperimentConfig, command: Command, config_path: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let threads = cfg.evolution.threads;
    let work = move || -> Result<RunSummary> {
        let mut run = Run {
            cfg,
            inputs: config_path.map(Path::to_path_buf).into_iter().collect(),
            summary: RunSummary::default(),
            data: None,
        };
        match command {
            Command::Evolve => {
                run.evolve()?;
            }
            Command::Finetune => {
                run.finetune(None)?;
            }
            Command::Evaluate => {
                run.evaluate(None)?;
            }
            Command::Visualize => run.visualize(None)?,
            Command::Full => {
                let layers = run.evolve()?;
                let model = run.finetune(Some(layers))?;
                run.evaluate(Some(model.clone()))?;
                if cfg.visualize.in_full {
                    run.visualize(Some(model))?;
                }
            }
        }
        run.manifest(command)?;
        Ok(run.summary)
    };
    if threads == 0 {
        return work();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    pool.install(work)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOBS: &str = r#"{"dataset": {"kind": "blobs", "n_train": 100, "n_test": 50, "dim": 4, "n_classes": 2, "separation": 10}}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = parse_config_str(BLOBS, Path::new("")).unwrap();
        assert_eq!(cfg.evolution.pop_size, 50);
        assert_eq!(cfg.evolution.crossover_prob, 0.9);
        assert_eq!(cfg.evolution.mutation_prob, 0.1);
        assert_eq!(cfg.evolution.eta, 20.0);
        assert_eq!(cfg.evolution.max_depth, 5);
        assert_eq!(cfg.evolution.eval_fraction, 0.1);
    }

    #[test]
    fn out_of_range_probability_is_line_anchored() {
        let text = "{\n  \"dataset\": {\"kind\": \"rectangles\", \"n_train\": 10, \"n_test\": 10},\n  \"evolution\": {\n    \"crossover_prob\": 1.5\n  }\n}";
        match parse_config_str(text, Path::new("")) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, Some(4), "{message}");
                assert!(message.contains("crossover_prob"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "{\n \"dataset\": {\"kind\": \"rectangles\", \"n_train\": 10, \"n_test\": 10},\n \"evolution\": {\"pop\": 3}\n}";
        assert!(matches!(parse_config_str(text, Path::new("")), Err(Error::Config { line: Some(3), .. })));
        let text = r#"{"dataset": {"kind": "rectangles", "n_train": 10, "n_test": 10, "colour": 1}}"#;
        assert!(parse_config_str(text, Path::new("")).is_err());
        assert!(parse_config_str("{", Path::new("")).is_err());
    }

    #[test]
    fn round_trips() {
        let cfg = parse_config_str(BLOBS, Path::new("/tmp")).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config_str(&text, Path::new("/elsewhere")).unwrap(), cfg);
    }

    #[test]
    fn top_level_seed_propagates() {
        let text = r#"{"seed": 42, "dataset": {"kind": "rectangles", "n_train": 10, "n_test": 10}}"#;
        let cfg = parse_config_str(text, Path::new("")).unwrap();
        assert_eq!(cfg.evolution.seed, 42);
        assert_eq!(cfg.training.seed, 42);
    }

    #[test]
    fn missing_idx_files_fail_validation() {
        let text = r#"{"dataset": {"kind": "idx", "train_images": "nope", "train_labels": "nope", "test_images": "nope", "test_labels": "nope"}}"#;
        assert!(matches!(parse_config_str(text, Path::new("/nonexistent")), Err(Error::Config { .. })));
    }
}

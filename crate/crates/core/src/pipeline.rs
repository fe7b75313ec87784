//! End-to-end experiment orchestration: scenario -> CSI -> features ->
//! constrained training -> metrics, plus the flat `key = value` experiment
//! configuration format and every on-disk artifact of a run.
//!
//! A run directory contains the shared dataset artifacts (`positions.csv`,
//! `csi.bin`, `csi.csv`, `features.csv`), one subdirectory per trained
//! recipe (`constraints.csv`, `network.ccnn`, `history.csv`, `chart.csv`,
//! `report.csv`, `report.txt`), the resolved configuration (`config.txt`),
//! and a `manifest.txt` binding all artifacts to the configuration hash.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::channel::{
    add_noise, synthesize_csi, write_csi_binary, write_csi_csv, ArrayGeometry, ChannelConfig,
    ChannelMode,
};
use crate::constraints::{
    accumulate_bottleneck_gradients, build_anchor_constraints, build_trajectory_constraints,
    referenced_indices, sample_constraints, write_constraints_csv, ConstraintSet,
    IndexedEmbeddings,
};
use crate::error::{Error, Result};
use crate::features::{extract_features, write_features_csv, FeatureSet, ScalingMode};
use crate::mat::Mat;
use crate::metrics::{default_k_list, MetricsReport, ReferenceSpace};
use crate::nn::{
    encode, encoder_forward, encoder_gradients, init_network, loss_and_gradients, optimizer_step,
    write_checkpoint, Activation, NetConfig, Network, OptState, OptimizerKind, TrainConfig,
};
use crate::rng::{streams, Rng};
use crate::scenario::{generate_placement, write_positions_csv, ScenarioConfig, UePlacement};

/// The built-in constraint recipes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipe {
    /// Unconstrained autoencoder.
    Plain,
    /// Anchor constraints only.
    Fad,
    /// Anchor constraints plus trajectory distance bounds.
    FadMrd,
}

impl Recipe {
    pub fn as_str(&self) -> &'static str {
        match self {
            Recipe::Plain => "plain",
            Recipe::Fad => "fad",
            Recipe::FadMrd => "fad_mrd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Recipe::Plain),
            "fad" => Ok(Recipe::Fad),
            "fad_mrd" | "fad-mrd" => Ok(Recipe::FadMrd),
            other => Err(Error::Config(format!("unknown recipe '{other}'"))),
        }
    }
}

/// Full experiment description; serializes to the flat config format.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub geometry: ArrayGeometry,
    pub channel: ChannelConfig,
    pub scaling: ScalingMode,
    /// Autoencoder width chain; empty derives the default from the antenna
    /// count.
    pub net_widths: Vec<usize>,
    pub net_activation: Activation,
    pub train: TrainConfig,
    pub recipes: Vec<Recipe>,
    /// MRD distance bound per unit lag; 0 uses the trajectory step length.
    pub d_max: f64,
    pub lag_max: usize,
    /// Per-constraint weight for built sets.
    pub constraint_weight: f64,
    /// Neighborhood sizes for TW/CT; empty derives 1, 2.5% and 5% of N.
    pub k_list: Vec<usize>,
    pub reference: ReferenceSpace,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            geometry: ArrayGeometry::default(),
            channel: ChannelConfig::default(),
            scaling: ScalingMode::UnitNorm,
            net_widths: Vec::new(),
            net_activation: Activation::Relu,
            train: TrainConfig::default(),
            recipes: vec![Recipe::Plain, Recipe::Fad, Recipe::FadMrd],
            d_max: 0.0,
            lag_max: 1,
            constraint_weight: 1.0,
            k_list: Vec::new(),
            reference: ReferenceSpace::TruePositions,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.geometry.validate()?;
        self.channel.validate()?;
        self.train.validate()?;
        if self.recipes.is_empty() {
            return Err(Error::Config("at least one recipe required".into()));
        }
        if self.d_max < 0.0 {
            return Err(Error::Config("constraints.d_max must be nonnegative".into()));
        }
        if self.lag_max < 1 {
            return Err(Error::Config("constraints.lag_max must be at least 1".into()));
        }
        if self.constraint_weight < 0.0 {
            return Err(Error::Config("constraints.weight must be nonnegative".into()));
        }
        if !self.net_widths.is_empty() {
            let d = self.geometry.num_antennas;
            if self.net_widths.first() != Some(&d) || self.net_widths.last() != Some(&d) {
                return Err(Error::Config(format!(
                    "net.widths must start and end at the feature dimension {d}"
                )));
            }
            self.resolved_net_config().bottleneck_index()?;
        }
        if self.recipes.contains(&Recipe::FadMrd) && self.scenario.trajectory.is_none() {
            return Err(Error::Config("fad_mrd recipe needs a trajectory".into()));
        }
        Ok(())
    }

    pub fn resolved_net_config(&self) -> NetConfig {
        if self.net_widths.is_empty() {
            let mut cfg = NetConfig::for_input_dim(self.geometry.num_antennas);
            cfg.hidden_activation = self.net_activation;
            cfg
        } else {
            NetConfig { widths: self.net_widths.clone(), hidden_activation: self.net_activation }
        }
    }

    pub fn resolved_d_max(&self) -> f64 {
        if self.d_max > 0.0 {
            self.d_max
        } else {
            self.scenario.trajectory.as_ref().map(|t| t.step_length).unwrap_or(1.0)
        }
    }

    pub fn resolved_k_list(&self) -> Vec<usize> {
        if self.k_list.is_empty() {
            default_k_list(self.scenario.num_users)
        } else {
            self.k_list.clone()
        }
    }

    /// Canonical flat text form; the configuration hash is computed on this.
    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let t = s.trajectory.clone().unwrap_or_default();
        let g = &self.geometry;
        let c = &self.channel;
        let tr = &self.train;
        let (beta1, beta2, epsilon, opt_name) = match tr.optimizer {
            OptimizerKind::Adam { beta1, beta2, epsilon } => (beta1, beta2, epsilon, "adam"),
            OptimizerKind::Sgd => (0.9, 0.999, 1e-8, "sgd"),
        };
        let mode = match c.mode {
            ChannelMode::Los => "los",
            ChannelMode::Nlos => "nlos",
        };
        let snr = if c.snr_db == f64::INFINITY { "inf".to_string() } else { c.snr_db.to_string() };
        let widths =
            self.net_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        let recipes =
            self.recipes.iter().map(|r| r.as_str().to_string()).collect::<Vec<_>>().join(",");
        let k_list = self.k_list.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "scenario.area_x_min = {}\n\
             scenario.area_x_max = {}\n\
             scenario.area_y_min = {}\n\
             scenario.area_y_max = {}\n\
             scenario.bs_x = {}\n\
             scenario.bs_y = {}\n\
             scenario.bs_z = {}\n\
             scenario.user_height = {}\n\
             scenario.num_users = {}\n\
             scenario.anchor_fraction = {}\n\
             scenario.seed = {}\n\
             scenario.trajectory.enabled = {}\n\
             scenario.trajectory.start_x = {}\n\
             scenario.trajectory.start_y = {}\n\
             scenario.trajectory.heading = {}\n\
             scenario.trajectory.step_length = {}\n\
             scenario.trajectory.num_points = {}\n\
             scenario.trajectory.turn_amplitude = {}\n\
             scenario.trajectory.turn_period = {}\n\
             geometry.num_antennas = {}\n\
             geometry.element_spacing = {}\n\
             geometry.carrier_frequency = {}\n\
             channel.mode = {}\n\
             channel.num_scatterers = {}\n\
             channel.scatter_x_min = {}\n\
             channel.scatter_x_max = {}\n\
             channel.scatter_y_min = {}\n\
             channel.scatter_y_max = {}\n\
             channel.scatterer_height = {}\n\
             channel.path_loss_exponent = {}\n\
             channel.snr_db = {}\n\
             channel.seed = {}\n\
             features.scaling = {}\n\
             net.widths = {}\n\
             net.activation = {}\n\
             train.learning_rate = {}\n\
             train.optimizer = {}\n\
             train.adam_beta1 = {}\n\
             train.adam_beta2 = {}\n\
             train.adam_epsilon = {}\n\
             train.epochs = {}\n\
             train.data_batch_size = {}\n\
             train.constraint_batch_size = {}\n\
             train.lambda_fad = {}\n\
             train.lambda_frd = {}\n\
             train.lambda_mad = {}\n\
             train.lambda_mrd = {}\n\
             train.seed = {}\n\
             constraints.d_max = {}\n\
             constraints.lag_max = {}\n\
             constraints.weight = {}\n\
             recipes = {}\n\
             metrics.k_list = {}\n\
             metrics.reference = {}\n",
            s.area_x_min,
            s.area_x_max,
            s.area_y_min,
            s.area_y_max,
            s.bs_position[0],
            s.bs_position[1],
            s.bs_position[2],
            s.user_height,
            s.num_users,
            s.anchor_fraction,
            s.seed,
            s.trajectory.is_some(),
            t.start[0],
            t.start[1],
            t.heading,
            t.step_length,
            t.num_points,
            t.turn_amplitude,
            t.turn_period,
            g.num_antennas,
            g.element_spacing,
            g.carrier_frequency_hz,
            mode,
            c.num_scatterers,
            c.scatter_x.0,
            c.scatter_x.1,
            c.scatter_y.0,
            c.scatter_y.1,
            c.scatterer_height,
            c.path_loss_exponent,
            snr,
            c.seed,
            self.scaling.as_str(),
            widths,
            self.net_activation.as_str(),
            tr.learning_rate,
            opt_name,
            beta1,
            beta2,
            epsilon,
            tr.epochs,
            tr.data_batch_size,
            tr.constraint_batch_size,
            tr.lambdas.fad,
            tr.lambdas.frd,
            tr.lambdas.mad,
            tr.lambdas.mrd,
            tr.seed,
            self.d_max,
            self.lag_max,
            self.constraint_weight,
            recipes,
            k_list,
            self.reference.as_str(),
        )
    }

    /// FNV-1a hash of the canonical text; recorded in run manifests.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }

    /// Parses the flat `key = value` format. Unset keys keep their default;
    /// unknown keys are an error.
    pub fn from_text(text: &str, source_name: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut trajectory = cfg.scenario.trajectory.clone().unwrap_or_default();
        let mut trajectory_enabled = cfg.scenario.trajectory.is_some();
        let mut adam = (0.9, 0.999, 1e-8);
        let mut optimizer_name = String::from("adam");

        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigParse {
                    file: source_name.into(),
                    line: lineno + 1,
                    msg: "expected 'key = value'".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let err = |msg: String| Error::ConfigParse {
                file: source_name.into(),
                line: lineno + 1,
                msg,
            };
            let f = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| err(format!("bad number '{v}'")))
            };
            let u = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| err(format!("bad integer '{v}'")))
            };
            let u64v = |v: &str| -> Result<u64> {
                v.parse().map_err(|_| err(format!("bad integer '{v}'")))
            };
            let b = |v: &str| -> Result<bool> {
                match v {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    _ => Err(err(format!("bad bool '{v}'"))),
                }
            };
            match key {
                "scenario.area_x_min" => cfg.scenario.area_x_min = f(value)?,
                "scenario.area_x_max" => cfg.scenario.area_x_max = f(value)?,
                "scenario.area_y_min" => cfg.scenario.area_y_min = f(value)?,
                "scenario.area_y_max" => cfg.scenario.area_y_max = f(value)?,
                "scenario.bs_x" => cfg.scenario.bs_position[0] = f(value)?,
                "scenario.bs_y" => cfg.scenario.bs_position[1] = f(value)?,
                "scenario.bs_z" => cfg.scenario.bs_position[2] = f(value)?,
                "scenario.user_height" => cfg.scenario.user_height = f(value)?,
                "scenario.num_users" => cfg.scenario.num_users = u(value)?,
                "scenario.anchor_fraction" => cfg.scenario.anchor_fraction = f(value)?,
                "scenario.seed" => cfg.scenario.seed = u64v(value)?,
                "scenario.trajectory.enabled" => trajectory_enabled = b(value)?,
                "scenario.trajectory.start_x" => trajectory.start[0] = f(value)?,
                "scenario.trajectory.start_y" => trajectory.start[1] = f(value)?,
                "scenario.trajectory.heading" => trajectory.heading = f(value)?,
                "scenario.trajectory.step_length" => trajectory.step_length = f(value)?,
                "scenario.trajectory.num_points" => trajectory.num_points = u(value)?,
                "scenario.trajectory.turn_amplitude" => trajectory.turn_amplitude = f(value)?,
                "scenario.trajectory.turn_period" => trajectory.turn_period = f(value)?,
                "geometry.num_antennas" => cfg.geometry.num_antennas = u(value)?,
                "geometry.element_spacing" => cfg.geometry.element_spacing = f(value)?,
                "geometry.carrier_frequency" => cfg.geometry.carrier_frequency_hz = f(value)?,
                "channel.mode" => {
                    cfg.channel.mode = match value {
                        "los" => ChannelMode::Los,
                        "nlos" => ChannelMode::Nlos,
                        _ => return Err(err(format!("bad channel mode '{value}'"))),
                    }
                }
                "channel.num_scatterers" => cfg.channel.num_scatterers = u(value)?,
                "channel.scatter_x_min" => cfg.channel.scatter_x.0 = f(value)?,
                "channel.scatter_x_max" => cfg.channel.scatter_x.1 = f(value)?,
                "channel.scatter_y_min" => cfg.channel.scatter_y.0 = f(value)?,
                "channel.scatter_y_max" => cfg.channel.scatter_y.1 = f(value)?,
                "channel.scatterer_height" => cfg.channel.scatterer_height = f(value)?,
                "channel.path_loss_exponent" => cfg.channel.path_loss_exponent = f(value)?,
                "channel.snr_db" => {
                    cfg.channel.snr_db =
                        if value == "inf" { f64::INFINITY } else { f(value)? }
                }
                "channel.seed" => cfg.channel.seed = u64v(value)?,
                "features.scaling" => cfg.scaling = ScalingMode::parse(value)?,
                "net.widths" => {
                    cfg.net_widths = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|w| u(w.trim()))
                            .collect::<Result<Vec<usize>>>()?
                    }
                }
                "net.activation" => cfg.net_activation = Activation::parse(value)?,
                "train.learning_rate" => cfg.train.learning_rate = f(value)?,
                "train.optimizer" => optimizer_name = value.to_string(),
                "train.adam_beta1" => adam.0 = f(value)?,
                "train.adam_beta2" => adam.1 = f(value)?,
                "train.adam_epsilon" => adam.2 = f(value)?,
                "train.epochs" => cfg.train.epochs = u(value)?,
                "train.data_batch_size" => cfg.train.data_batch_size = u(value)?,
                "train.constraint_batch_size" => cfg.train.constraint_batch_size = u(value)?,
                "train.lambda_fad" => cfg.train.lambdas.fad = f(value)?,
                "train.lambda_frd" => cfg.train.lambdas.frd = f(value)?,
                "train.lambda_mad" => cfg.train.lambdas.mad = f(value)?,
                "train.lambda_mrd" => cfg.train.lambdas.mrd = f(value)?,
                "train.seed" => cfg.train.seed = u64v(value)?,
                "constraints.d_max" => cfg.d_max = f(value)?,
                "constraints.lag_max" => cfg.lag_max = u(value)?,
                "constraints.weight" => cfg.constraint_weight = f(value)?,
                "recipes" => {
                    cfg.recipes = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| Recipe::parse(s.trim()))
                        .collect::<Result<Vec<Recipe>>>()?
                }
                "metrics.k_list" => {
                    cfg.k_list = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|k| u(k.trim()))
                            .collect::<Result<Vec<usize>>>()?
                    }
                }
                "metrics.reference" => cfg.reference = ReferenceSpace::parse(value)?,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }

        cfg.scenario.trajectory = if trajectory_enabled { Some(trajectory) } else { None };
        cfg.train.optimizer = match optimizer_name.as_str() {
            "adam" => OptimizerKind::Adam { beta1: adam.0, beta2: adam.1, epsilon: adam.2 },
            "sgd" => OptimizerKind::Sgd,
            other => return Err(Error::Config(format!("unknown optimizer '{other}'"))),
        };
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_text(&text, &path.display().to_string())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Learned chart: one 2-D representation per datapoint plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartEmbedding {
    pub coords: Mat,
    pub config_hash: u64,
    pub seed: u64,
}

/// Per-epoch mean reconstruction loss and mean weighted constraint penalty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    pub reconstruction: Vec<f64>,
    pub penalty: Vec<f64>,
}

impl LossHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,recon_loss,penalty\n");
        for (e, (r, p)) in self.reconstruction.iter().zip(&self.penalty).enumerate() {
            out.push_str(&format!("{e},{r},{p}\n"));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<LossHistory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("epoch,recon_loss,penalty") {
            return Err(Error::format(path, "unexpected history.csv header"));
        }
        let mut history = LossHistory::default();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::format(path, format!("line {}: expected 3 fields", lineno + 2)));
            }
            let bad = || Error::format(path, format!("line {}: bad number", lineno + 2));
            history.reconstruction.push(fields[1].trim().parse().map_err(|_| bad())?);
            history.penalty.push(fields[2].trim().parse().map_err(|_| bad())?);
        }
        Ok(history)
    }
}

/// Trains the autoencoder under a constraint set.
///
/// Each step samples one data batch (reconstruction gradient) and one
/// constraint batch (bottleneck gradients from a dedicated encoder pass on
/// the referenced datapoints), combines them, and applies one optimizer
/// step. An empty constraint set reduces exactly to plain training.
pub fn train_constrained_ae(
    features: &FeatureSet,
    constraints: &ConstraintSet,
    net_config: &NetConfig,
    train_config: &TrainConfig,
    config_hash: u64,
) -> Result<(Network, ChartEmbedding, LossHistory)> {
    train_config.validate()?;
    constraints.validate_indices(features.num_points())?;
    let n = features.num_points();
    if net_config.widths.first() != Some(&features.dim()) {
        return Err(Error::ShapeMismatch {
            expected: format!("network input {}", features.dim()),
            got: format!("{:?}", net_config.widths.first()),
        });
    }

    let mut net = init_network(net_config, train_config.seed)?;
    let mut opt_state = OptState::new(&net);
    let mut shuffle_rng = Rng::derive(train_config.seed, streams::DATA_BATCH);
    let mut constraint_rng = Rng::derive(train_config.seed, streams::CONSTRAINT_BATCH);

    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..train_config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_recon = 0.0;
        let mut epoch_penalty = 0.0;
        let mut steps = 0usize;

        for chunk in order.chunks(train_config.data_batch_size) {
            let batch = features.entries.gather_rows(chunk);
            let (loss, mut grads) = loss_and_gradients(&net, &batch, None)?;

            let mut penalty = 0.0;
            if !constraints.is_empty() {
                let cbatch = sample_constraints(
                    constraints,
                    train_config.constraint_batch_size,
                    &mut constraint_rng,
                );
                let refs = referenced_indices(constraints, &cbatch);
                let ref_features = features.entries.gather_rows(&refs);
                let (embeddings, enc_cache) = encoder_forward(&net, &ref_features)?;
                let indexed = IndexedEmbeddings { indices: refs, rows: embeddings };
                let (bottleneck_grads, p) = accumulate_bottleneck_gradients(
                    constraints,
                    &cbatch,
                    &indexed,
                    &train_config.lambdas,
                )?;
                penalty = p;
                let enc_grads = encoder_gradients(&net, &enc_cache, &bottleneck_grads);
                grads.add_encoder(&enc_grads);
            }

            if !loss.is_finite() || !penalty.is_finite() {
                return Err(Error::Diverged { epoch, step: steps });
            }
            optimizer_step(&mut net, &grads, &mut opt_state, train_config);
            epoch_recon += loss;
            epoch_penalty += penalty;
            steps += 1;
        }

        history.reconstruction.push(epoch_recon / steps as f64);
        history.penalty.push(epoch_penalty / steps as f64);
    }

    let coords = encode(&net, &features.entries)?;
    if !coords.is_finite() {
        return Err(Error::Pipeline("final embedding contains non-finite values".into()));
    }
    let embedding = ChartEmbedding { coords, config_hash, seed: train_config.seed };
    Ok((net, embedding, history))
}

/// Writes `chart.csv`: `id,u,v,true_x,true_y,is_anchor,traj_order`.
pub fn export_chart(
    embedding: &ChartEmbedding,
    placement: &UePlacement,
    path: &Path,
) -> Result<()> {
    if embedding.coords.rows() != placement.len() {
        return Err(Error::Pipeline(format!(
            "chart has {} rows but placement has {}",
            embedding.coords.rows(),
            placement.len()
        )));
    }
    let mut out = String::from("id,u,v,true_x,true_y,is_anchor,traj_order\n");
    for i in 0..placement.len() {
        let y = embedding.coords.row(i);
        let p = &placement.positions[i];
        let anchor = if placement.is_anchor(i) { 1 } else { 0 };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i,
            y[0],
            y[1],
            p[0],
            p[1],
            anchor,
            placement.traj_order(i)
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One parsed `chart.csv` row set.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub coords: Mat,
    pub true_positions: Mat,
    pub anchor_flags: Vec<bool>,
    pub traj_orders: Vec<i64>,
}

/// Reads a `chart.csv` written by [`export_chart`].
pub fn read_chart_csv(path: &Path) -> Result<Chart> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(f);
    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut true_pos: Vec<Vec<f64>> = Vec::new();
    let mut anchors = Vec::new();
    let mut orders = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 {
            if line.trim() != "id,u,v,true_x,true_y,is_anchor,traj_order" {
                return Err(Error::format(path, "unexpected chart.csv header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(path, format!("line {}: expected 7 fields", lineno + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad number '{s}'", lineno + 1)))
        };
        coords.push(vec![parse(fields[1])?, parse(fields[2])?]);
        true_pos.push(vec![parse(fields[3])?, parse(fields[4])?]);
        anchors.push(fields[5].trim() == "1");
        orders.push(
            fields[6]
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad traj_order", lineno + 1)))?,
        );
    }
    if coords.is_empty() {
        return Err(Error::format(path, "no chart rows"));
    }
    Ok(Chart {
        coords: Mat::from_rows(&coords),
        true_positions: Mat::from_rows(&true_pos),
        anchor_flags: anchors,
        traj_orders: orders,
    })
}

/// Builds the constraint set a recipe asks for.
pub fn build_recipe_constraints(
    recipe: Recipe,
    placement: &UePlacement,
    config: &ExperimentConfig,
) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::default();
    if matches!(recipe, Recipe::Fad | Recipe::FadMrd) {
        set.extend(build_anchor_constraints(
            &placement.anchor_indices,
            &placement.positions,
            config.constraint_weight,
        )?);
    }
    if recipe == Recipe::FadMrd {
        set.extend(build_trajectory_constraints(
            &placement.trajectory_indices,
            config.resolved_d_max(),
            config.lag_max,
            config.constraint_weight,
        )?);
    }
    Ok(set)
}

/// Everything `run` leaves on disk for one recipe.
#[derive(Clone, Debug)]
pub struct RecipeOutcome {
    pub recipe: Recipe,
    pub report: MetricsReport,
    pub history: LossHistory,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Io { .. } | e @ Error::Format { .. } => e,
        other => Error::Pipeline(format!("{name}: {other}")),
    })
}

/// Runs the full experiment: generate, synthesize, featurize, then per
/// recipe build constraints, train, evaluate, and write all artifacts under
/// `out_dir`. Fully deterministic for a given configuration.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<RecipeOutcome>> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let hash = config.hash();
    let mut manifest_files: Vec<String> = Vec::new();

    // configuration echo
    let config_path = out_dir.join("config.txt");
    std::fs::write(&config_path, config.to_text()).map_err(|e| Error::io(&config_path, e))?;
    manifest_files.push("config.txt".into());

    // scenario
    let placement = stage("generate", generate_placement(&config.scenario))?;
    write_positions_csv(&placement, &out_dir.join("positions.csv"))?;
    manifest_files.push("positions.csv".into());

    // channel
    let clean = stage(
        "synthesize",
        synthesize_csi(&placement, &config.scenario.bs_position, &config.geometry, &config.channel),
    )?;
    let csi = add_noise(&clean, config.channel.snr_db, config.channel.seed);
    write_csi_binary(&csi, &out_dir.join("csi.bin"))?;
    write_csi_csv(&csi, &out_dir.join("csi.csv"))?;
    manifest_files.push("csi.bin".into());
    manifest_files.push("csi.csv".into());

    // features
    let features = stage("featurize", extract_features(&csi, config.scaling))?;
    write_features_csv(&features, &out_dir.join("features.csv"))?;
    manifest_files.push("features.csv".into());

    let reference = reference_points(config, &placement, &features);
    let k_list = config.resolved_k_list();
    let net_config = config.resolved_net_config();

    let mut outcomes = Vec::with_capacity(config.recipes.len());
    for &recipe in &config.recipes {
        let rdir = out_dir.join(recipe.as_str());
        std::fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
        let rel = |name: &str| format!("{}/{name}", recipe.as_str());

        let set = stage("constraints", build_recipe_constraints(recipe, &placement, config))?;
        write_constraints_csv(&set, &rdir.join("constraints.csv"))?;
        manifest_files.push(rel("constraints.csv"));

        let (net, embedding, history) = stage(
            "train",
            train_constrained_ae(&features, &set, &net_config, &config.train, hash),
        )?;
        write_checkpoint(&net, &rdir.join("network.ccnn"))?;
        history.write_csv(&rdir.join("history.csv"))?;
        export_chart(&embedding, &placement, &rdir.join("chart.csv"))?;
        manifest_files.push(rel("network.ccnn"));
        manifest_files.push(rel("history.csv"));
        manifest_files.push(rel("chart.csv"));

        let report = stage(
            "evaluate",
            MetricsReport::compute(&reference, &embedding.coords, &k_list, config.reference),
        )?;
        report.write_csv(&rdir.join("report.csv"))?;
        std::fs::write(rdir.join("report.txt"), recipe_report_text(config, recipe, &report))
            .map_err(|e| Error::io(rdir.join("report.txt"), e))?;
        manifest_files.push(rel("report.csv"));
        manifest_files.push(rel("report.txt"));

        outcomes.push(RecipeOutcome { recipe, report, history });
    }

    write_manifest(out_dir, hash, &manifest_files)?;
    Ok(outcomes)
}

fn reference_points(
    config: &ExperimentConfig,
    placement: &UePlacement,
    features: &FeatureSet,
) -> Mat {
    match config.reference {
        ReferenceSpace::TruePositions => {
            Mat::from_fn(placement.len(), 2, |i, c| placement.positions[i][c])
        }
        ReferenceSpace::FeatureSpace => features.entries.clone(),
    }
}

/// Key-value run report: states the recipe, the knobs that shaped the
/// constraint term, and the metric values.
fn recipe_report_text(config: &ExperimentConfig, recipe: Recipe, report: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("recipe = {}\n", recipe.as_str()));
    s.push_str(&format!("config_hash = {:016x}\n", config.hash()));
    s.push_str(&format!("feature_scaling = {}\n", config.scaling.as_str()));
    s.push_str(&format!("lambda_fad = {}\n", config.train.lambdas.fad));
    s.push_str(&format!("lambda_frd = {}\n", config.train.lambdas.frd));
    s.push_str(&format!("lambda_mad = {}\n", config.train.lambdas.mad));
    s.push_str(&format!("lambda_mrd = {}\n", config.train.lambdas.mrd));
    s.push_str(&format!("constraint_batch_size = {}\n", config.train.constraint_batch_size));
    s.push_str(&format!("d_max = {}\n", config.resolved_d_max()));
    s.push_str(&format!("lag_max = {}\n", config.lag_max));
    s.push_str(&report.to_text());
    s
}

/// Writes `manifest.txt`: the configuration hash and the artifact list.
fn write_manifest(out_dir: &Path, hash: u64, files: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("config_hash = {hash:016x}\n"));
    for f in files {
        out.push_str(&format!("file = {f}\n"));
    }
    let path = out_dir.join("manifest.txt");
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Checks a run directory: the manifest's hash must match the recomputed
/// hash of `config.txt`, and every listed artifact must exist.
pub fn verify_run_dir(dir: &Path) -> Result<u64> {
    let manifest_path = dir.join("manifest.txt");
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut hash: Option<u64> = None;
    let mut files: Vec<PathBuf> = Vec::new();
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("config_hash = ") {
            hash = Some(
                u64::from_str_radix(v.trim(), 16)
                    .map_err(|_| Error::format(&manifest_path, "bad config_hash"))?,
            );
        } else if let Some(v) = line.strip_prefix("file = ") {
            files.push(dir.join(v.trim()));
        }
    }
    let hash = hash.ok_or_else(|| Error::format(&manifest_path, "missing config_hash"))?;
    let config = ExperimentConfig::from_file(&dir.join("config.txt"))?;
    if config.hash() != hash {
        return Err(Error::Pipeline(format!(
            "manifest hash {:016x} does not match config.txt hash {:016x}",
            hash,
            config.hash()
        )));
    }
    for f in &files {
        if !f.exists() {
            return Err(Error::Pipeline(format!("manifest lists missing file {}", f.display())));
        }
    }
    Ok(hash)
}

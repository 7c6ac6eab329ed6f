//! Flat key-value configuration with sections, resolved on top of per-preset
//! defaults. Unknown keys are hard errors; command-line overrides win over
//! file values. The manifest written by every run is itself a loadable
//! config file.

use std::path::Path;

use wpinn::net::{Activation, OptimizerKind};
use wpinn::oracle::{ExperimentPreset, PresetId};
use wpinn::train::{LossWeighting, ResidualForm, SamplerKind, TrainingConfig};
use wpinn::{Error, Result};

/// Orchestration knobs that sit outside the training loop.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub n_theta: usize,
    /// 0 = available parallelism capped by n_theta.
    pub threads: usize,
    pub quad_n: usize,
    pub reference_cells: usize,
    pub cfl: f64,
    pub times: Vec<f64>,
    pub n_x: usize,
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub preset: ExperimentPreset,
    pub training: TrainingConfig,
    pub run: RunSettings,
}

impl Resolved {
    pub fn defaults(preset_name: &str) -> Result<Self> {
        let preset = ExperimentPreset::from_id(PresetId::parse(preset_name)?);
        let training = TrainingConfig::for_preset(&preset);
        let t = preset.t_final();
        let sine = preset.id() == PresetId::SineWave;
        let run = RunSettings {
            n_theta: if sine { 15 } else { 10 },
            threads: 0,
            quad_n: 1024,
            reference_cells: 16384,
            cfl: 0.5,
            times: vec![0.0, 0.5 * t, t],
            n_x: 201,
        };
        Ok(Resolved { preset, training, run })
    }

    /// Worker count after applying the default policy.
    pub fn effective_threads(&self) -> usize {
        if self.run.threads != 0 {
            return self.run.threads;
        }
        let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        avail.min(self.run.n_theta).max(1)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (key, value) in parse_config_text(&text)? {
            self.apply_pair(&key, &value)?;
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for raw in pairs {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{raw}' is not KEY=VALUE")))?;
            self.apply_pair(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one dotted key. Unknown keys are hard errors.
    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.training;
        let r = &mut self.run;
        match key {
            "training.epochs" => t.epochs = parse_int(key, value)?,
            "training.n_max" => t.n_max = parse_int(key, value)?,
            "training.n_min" => t.n_min = parse_int(key, value)?,
            "training.lambda" => t.lambda = parse_float(key, value)?,
            "training.weighting" => t.weighting = LossWeighting::parse(value)?,
            "training.residual_form" => t.residual_form = ResidualForm::parse(value)?,
            "training.lr_theta" => t.lr_theta = parse_float(key, value)?,
            "training.lr_eta" => t.lr_eta = parse_float(key, value)?,
            "training.optimizer" => t.optimizer = OptimizerKind::parse(value)?,
            "training.reset_ratio" => t.reset_ratio = parse_float(key, value)?,
            "training.c_count" => t.c_count = parse_int(key, value)?,
            "training.abs_smoothing" => t.abs_smoothing = parse_float(key, value)?,
            "training.widths_theta" => t.widths_theta = parse_widths(value)?,
            "training.widths_eta" => t.widths_eta = parse_widths(value)?,
            "training.activation_theta" => t.activation_theta = Activation::parse(value)?,
            "training.activation_eta" => t.activation_eta = Activation::parse(value)?,
            "training.param_seed" => t.param_seed = parse_u64(key, value)?,
            "training.collocation_seed" => t.collocation_seed = parse_u64(key, value)?,
            "training.denominator_floor" => t.denominator_floor = parse_float(key, value)?,
            "sampling.sampler" => t.sampler = SamplerKind::parse(value)?,
            "sampling.interior" => t.counts.interior = parse_int(key, value)?,
            "sampling.temporal" => t.counts.temporal = parse_int(key, value)?,
            "sampling.spatial" => t.counts.spatial = parse_int(key, value)?,
            "run.n_theta" => r.n_theta = parse_int(key, value)?,
            "run.threads" => r.threads = parse_int(key, value)?,
            "run.quad_n" => r.quad_n = parse_int(key, value)?,
            "run.reference_cells" => r.reference_cells = parse_int(key, value)?,
            "run.cfl" => r.cfl = parse_float(key, value)?,
            "run.times" => r.times = parse_times(value)?,
            "run.n_x" => r.n_x = parse_int(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.run.n_theta == 0 {
            return Err(Error::Config("run.n_theta must be at least 1".into()));
        }
        if self.run.n_x < 2 {
            return Err(Error::Config("run.n_x must be at least 2".into()));
        }
        if !(self.run.cfl > 0.0 && self.run.cfl < 1.0) {
            return Err(Error::Config(format!("run.cfl must lie in (0,1), got {}", self.run.cfl)));
        }
        Ok(())
    }

    /// Render the full resolved state as a config file body.
    pub fn to_config_text(&self) -> String {
        let t = &self.training;
        let r = &self.run;
        let widths = |w: &[usize]| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-");
        let times = r.times.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "[training]\n\
             epochs = {}\nn_max = {}\nn_min = {}\nlambda = {}\nweighting = {}\n\
             residual_form = {}\nlr_theta = {}\nlr_eta = {}\noptimizer = {}\n\
             reset_ratio = {}\nc_count = {}\nabs_smoothing = {}\n\
             widths_theta = {}\nwidths_eta = {}\nactivation_theta = {}\nactivation_eta = {}\n\
             param_seed = {}\ncollocation_seed = {}\ndenominator_floor = {}\n\
             \n[sampling]\nsampler = {}\ninterior = {}\ntemporal = {}\nspatial = {}\n\
             \n[run]\nn_theta = {}\nthreads = {}\nquad_n = {}\nreference_cells = {}\ncfl = {}\n\
             times = {}\nn_x = {}\n",
            t.epochs,
            t.n_max,
            t.n_min,
            t.lambda,
            t.weighting.name(),
            t.residual_form.name(),
            t.lr_theta,
            t.lr_eta,
            t.optimizer.name(),
            t.reset_ratio,
            t.c_count,
            t.abs_smoothing,
            widths(&t.widths_theta),
            widths(&t.widths_eta),
            t.activation_theta.name(),
            t.activation_eta.name(),
            t.param_seed,
            t.collocation_seed,
            t.denominator_floor,
            t.sampler.name(),
            t.counts.interior,
            t.counts.temporal,
            t.counts.spatial,
            r.n_theta,
            r.threads,
            r.quad_n,
            r.reference_cells,
            r.cfl,
            times,
            r.n_x,
        )
    }

    /// Manifest: loadable config body prefixed by provenance comments.
    pub fn manifest(&self, command: &str, git: &str) -> String {
        format!(
            "# command: {command}\n# preset: {}\n# git: {git}\n\n{}",
            self.preset.id().name(),
            self.to_config_text()
        )
    }
}

/// Parse a config file body into dotted key-value pairs, in order.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut section: Option<String> = None;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse(format!("line {}: malformed section '{raw}'", idx + 1)))?;
            section = Some(name.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected KEY = VALUE, got '{raw}'", idx + 1)))?;
        let sec = section
            .as_ref()
            .ok_or_else(|| Error::Parse(format!("line {}: key outside any [section]", idx + 1)))?;
        pairs.push((format!("{sec}.{}", key.trim()), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_int(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|e| Error::Config(format!("{key}: bad integer '{value}': {e}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|e| Error::Config(format!("{key}: bad seed '{value}': {e}")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|e| Error::Config(format!("{key}: bad number '{value}': {e}")))
}

fn parse_widths(value: &str) -> Result<Vec<usize>> {
    value
        .split('-')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|e| Error::Config(format!("bad widths '{value}': {e}")))
        })
        .collect()
}

pub fn parse_times(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad time list '{value}': {e}")))
        })
        .collect()
}

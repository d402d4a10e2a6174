//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected; missing keys take their defaults. [`ExperimentConfig::emit`]
//! writes every key, and parsing the result gives back the same config.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use secirs::ao::AoConfig;
use secirs::neuralphase::{Activation, ConvSpec, Layout, NetArch, TrainConfig};
use secirs::{Error, Method, Result, SystemParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    Ns,
    SnrDb,
    Rs,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::Ns => "n_s",
            SweepVar::SnrDb => "snr_db",
            SweepVar::Rs => "r_s",
        }
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_s" => Ok(SweepVar::Ns),
            "snr_db" => Ok(SweepVar::SnrDb),
            "r_s" => Ok(SweepVar::Rs),
            other => Err(Error::Config(format!("unknown sweep variable {other:?}"))),
        }
    }
}

/// Network shape relative to `N_s`: conv filter counts and dense widths as
/// multiples of `N_s` (a final `N_s`-wide sigmoid layer is always added).
#[derive(Clone, Debug, PartialEq)]
pub struct NetShape {
    pub layout: Layout,
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub dense_per_element: Vec<usize>,
    pub batch_norm: bool,
}

impl NetShape {
    pub fn desk() -> Self {
        Self {
            layout: Layout::ChannelStack,
            filters: vec![16, 32],
            kernel: 2,
            dense_per_element: vec![8, 4],
            batch_norm: true,
        }
    }

    pub fn arch(&self, n_r: usize, n_t: usize, n_s: usize) -> NetArch {
        let mut dense: Vec<usize> = self.dense_per_element.iter().map(|m| m * n_s).collect();
        dense.push(n_s);
        let mut activations = vec![Activation::Relu; self.filters.len() + dense.len() - 1];
        activations.push(Activation::Sigmoid);
        NetArch {
            layout: self.layout,
            n_r,
            n_t,
            n_s,
            conv: self
                .filters
                .iter()
                .map(|&filters| ConvSpec {
                    filters,
                    kernel: self.kernel,
                })
                .collect(),
            dense,
            batch_norm: self.batch_norm,
            activations,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
    pub n_s: usize,
    /// `P_t / sigma^2` in dB.
    pub snr_db: f64,
    pub r_s: f64,
    pub sigma2: f64,
    pub sigma2_e: f64,
    pub beta_d: f64,
    pub beta_r: f64,
    /// Draw `(beta_d, beta_r)` per realization instead of using the fixed values.
    pub random_large_scale: bool,
    /// Same choice for generated training data.
    pub random_data_large_scale: bool,

    pub sweep_var: SweepVar,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub realizations: usize,
    pub mc_draws: u64,

    pub validate_configs: usize,
    pub validate_mc_draws: u64,

    pub timing_solves: usize,

    pub seed: u64,
    pub ao: AoConfig,
    pub train: TrainConfig,
    pub net: NetShape,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let reference = SystemParams::reference(48);
        Self {
            n_t: reference.n_t,
            n_r: reference.n_r,
            n_e: reference.n_e,
            n_s: reference.n_s,
            snr_db: 10.0,
            r_s: reference.r_s,
            sigma2: reference.sigma2,
            sigma2_e: reference.sigma2_e,
            beta_d: reference.beta_d,
            beta_r: reference.beta_r,
            random_large_scale: true,
            random_data_large_scale: false,
            sweep_var: SweepVar::Ns,
            grid: vec![16.0, 24.0, 32.0, 40.0, 48.0],
            methods: vec![Method::MrtNoIrs, Method::RandomPhase, Method::Ao, Method::Neural],
            realizations: 200,
            mc_draws: 1000,
            validate_configs: 20,
            validate_mc_draws: 100_000,
            timing_solves: 20,
            seed: 1,
            ao: AoConfig::default(),
            train: TrainConfig::default(),
            net: NetShape::desk(),
            output: None,
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn parse_large_scale(key: &str, value: &str) -> Result<bool> {
    match value {
        "random" => Ok(true),
        "fixed" => Ok(false),
        _ => Err(Error::Config(format!("bad value {value:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Defaults for one of the three sweeps.
    pub fn for_sweep(var: SweepVar) -> Self {
        let grid = match var {
            SweepVar::Ns => vec![16.0, 24.0, 32.0, 40.0, 48.0],
            SweepVar::SnrDb => vec![0.0, 5.0, 10.0, 15.0, 20.0],
            SweepVar::Rs => vec![2.0, 2.5, 3.0, 3.5, 4.0, 4.5],
        };
        Self {
            sweep_var: var,
            grid,
            ..Self::default()
        }
    }

    pub fn p_t(&self) -> f64 {
        self.sigma2 * 10f64.powf(self.snr_db / 10.0)
    }

    pub fn system(&self) -> SystemParams {
        SystemParams {
            n_t: self.n_t,
            n_r: self.n_r,
            n_e: self.n_e,
            n_s: self.n_s,
            p_t: self.p_t(),
            r_s: self.r_s,
            sigma2: self.sigma2,
            sigma2_e: self.sigma2_e,
            beta_d: self.beta_d,
            beta_r: self.beta_r,
        }
    }

    /// System parameters with the sweep variable set to `value`.
    pub fn at_grid(&self, value: f64) -> Result<SystemParams> {
        let mut cfg = self.clone();
        match self.sweep_var {
            SweepVar::Ns => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("N_s grid value {value} is not a count")));
                }
                cfg.n_s = value as usize;
            }
            SweepVar::SnrDb => cfg.snr_db = value,
            SweepVar::Rs => cfg.r_s = value,
        }
        let p = cfg.system();
        p.validate()?;
        Ok(p)
    }

    pub fn arch(&self, n_s: usize) -> NetArch {
        self.net.arch(self.n_r, self.n_t, n_s)
    }

    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.realizations == 0 {
            return Err(Error::Config("need at least one realization".into()));
        }
        if self.mc_draws == 0 || self.validate_mc_draws == 0 {
            return Err(Error::Config("Monte Carlo draw counts must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.methods.contains(&Method::ClosedForm) {
            return Err(Error::Config(
                "closed_form is a building block, not a sweep method".into(),
            ));
        }
        for &v in &self.grid {
            self.at_grid(v)?;
        }
        self.ao.validate()?;
        self.train.validate()?;
        self.arch(self.n_s.max(1)).validate()
    }

    pub fn emit(&self) -> String {
        let mut lines = vec![
            format!("system.n_t = {}", self.n_t),
            format!("system.n_r = {}", self.n_r),
            format!("system.n_e = {}", self.n_e),
            format!("system.n_s = {}", self.n_s),
            format!("system.snr_db = {}", self.snr_db),
            format!("system.r_s = {}", self.r_s),
            format!("system.sigma2 = {}", self.sigma2),
            format!("system.sigma2_e = {}", self.sigma2_e),
            format!("system.beta_d = {}", self.beta_d),
            format!("system.beta_r = {}", self.beta_r),
            format!(
                "system.large_scale = {}",
                if self.random_large_scale { "random" } else { "fixed" }
            ),
            format!(
                "data.large_scale = {}",
                if self.random_data_large_scale { "random" } else { "fixed" }
            ),
            format!("sweep.variable = {}", self.sweep_var.as_str()),
            format!("sweep.grid = {}", join(&self.grid)),
            format!("sweep.methods = {}", join(&self.methods)),
            format!("sweep.realizations = {}", self.realizations),
            format!("sweep.mc_draws = {}", self.mc_draws),
            format!("validate.configs = {}", self.validate_configs),
            format!("validate.mc_draws = {}", self.validate_mc_draws),
            format!("timing.solves = {}", self.timing_solves),
            format!("seeds.root = {}", self.seed),
            format!("ao.max_outer_iters = {}", self.ao.max_outer_iters),
            format!("ao.grad_steps_per_outer = {}", self.ao.grad_steps_per_outer),
            format!("ao.step_size = {}", self.ao.step_size),
            format!("ao.step_decay = {}", self.ao.step_decay),
            format!("ao.tol_objective = {}", self.ao.tol_objective),
            format!("ao.restarts = {}", self.ao.restarts),
            format!("train.train_size = {}", self.train.train_size),
            format!("train.val_size = {}", self.train.val_size),
            format!("train.max_epochs = {}", self.train.max_epochs),
            format!("train.batch_size = {}", self.train.batch_size),
            format!("train.initial_lr = {}", self.train.initial_lr),
            format!("train.plateau_decay_factor = {}", self.train.plateau_decay_factor),
            format!("train.plateau_patience = {}", self.train.plateau_patience),
            format!("train.early_stop_patience = {}", self.train.early_stop_patience),
            format!("train.seed = {}", self.train.seed),
            format!("net.layout = {}", self.net.layout),
            format!("net.filters = {}", join(&self.net.filters)),
            format!("net.kernel = {}", self.net.kernel),
            format!("net.dense_per_element = {}", join(&self.net.dense_per_element)),
            format!("net.batch_norm = {}", self.net.batch_norm),
        ];
        if let Some(p) = &self.output {
            lines.push(format!("output.path = {}", p.display()));
        }
        lines.push(String::new());
        lines.join("\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            if entries.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {}", lineno + 1, key.trim())));
            }
        }
        let mut cfg = Self::default();
        for (key, v) in &entries {
            let k = key.as_str();
            match k {
                "system.n_t" => cfg.n_t = parse_one(k, v)?,
                "system.n_r" => cfg.n_r = parse_one(k, v)?,
                "system.n_e" => cfg.n_e = parse_one(k, v)?,
                "system.n_s" => cfg.n_s = parse_one(k, v)?,
                "system.snr_db" => cfg.snr_db = parse_one(k, v)?,
                "system.r_s" => cfg.r_s = parse_one(k, v)?,
                "system.sigma2" => cfg.sigma2 = parse_one(k, v)?,
                "system.sigma2_e" => cfg.sigma2_e = parse_one(k, v)?,
                "system.beta_d" => cfg.beta_d = parse_one(k, v)?,
                "system.beta_r" => cfg.beta_r = parse_one(k, v)?,
                "system.large_scale" => cfg.random_large_scale = parse_large_scale(k, v)?,
                "data.large_scale" => cfg.random_data_large_scale = parse_large_scale(k, v)?,
                "sweep.variable" => cfg.sweep_var = v.parse()?,
                "sweep.grid" => cfg.grid = parse_list(k, v)?,
                "sweep.methods" => {
                    cfg.methods = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?
                }
                "sweep.realizations" => cfg.realizations = parse_one(k, v)?,
                "sweep.mc_draws" => cfg.mc_draws = parse_one(k, v)?,
                "validate.configs" => cfg.validate_configs = parse_one(k, v)?,
                "validate.mc_draws" => cfg.validate_mc_draws = parse_one(k, v)?,
                "timing.solves" => cfg.timing_solves = parse_one(k, v)?,
                "seeds.root" => cfg.seed = parse_one(k, v)?,
                "ao.max_outer_iters" => cfg.ao.max_outer_iters = parse_one(k, v)?,
                "ao.grad_steps_per_outer" => cfg.ao.grad_steps_per_outer = parse_one(k, v)?,
                "ao.step_size" => cfg.ao.step_size = parse_one(k, v)?,
                "ao.step_decay" => cfg.ao.step_decay = parse_one(k, v)?,
                "ao.tol_objective" => cfg.ao.tol_objective = parse_one(k, v)?,
                "ao.restarts" => cfg.ao.restarts = parse_one(k, v)?,
                "train.train_size" => cfg.train.train_size = parse_one(k, v)?,
                "train.val_size" => cfg.train.val_size = parse_one(k, v)?,
                "train.max_epochs" => cfg.train.max_epochs = parse_one(k, v)?,
                "train.batch_size" => cfg.train.batch_size = parse_one(k, v)?,
                "train.initial_lr" => cfg.train.initial_lr = parse_one(k, v)?,
                "train.plateau_decay_factor" => cfg.train.plateau_decay_factor = parse_one(k, v)?,
                "train.plateau_patience" => cfg.train.plateau_patience = parse_one(k, v)?,
                "train.early_stop_patience" => cfg.train.early_stop_patience = parse_one(k, v)?,
                "train.seed" => cfg.train.seed = parse_one(k, v)?,
                "net.layout" => cfg.net.layout = v.parse()?,
                "net.filters" => cfg.net.filters = parse_list(k, v)?,
                "net.kernel" => cfg.net.kernel = parse_one(k, v)?,
                "net.dense_per_element" => cfg.net.dense_per_element = parse_list(k, v)?,
                "net.batch_norm" => cfg.net.batch_norm = parse_one(k, v)?,
                "output.path" => cfg.output = Some(PathBuf::from(v)),
                other => return Err(Error::Config(format!("unknown key {other}"))),
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for var in [SweepVar::Ns, SweepVar::SnrDb, SweepVar::Rs] {
            let cfg = ExperimentConfig::for_sweep(var);
            assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
        }
    }

    #[test]
    fn odd_values_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.snr_db = 0.1 + 0.2;
        cfg.beta_r = 1e-300;
        cfg.grid = vec![2.0, 2.5, 1.0 / 3.0];
        cfg.methods = vec![Method::Ao];
        cfg.seed = u64::MAX;
        cfg.train = TrainConfig::reference();
        cfg.net.layout = Layout::RowStack;
        cfg.output = Some(PathBuf::from("out/run.csv"));
        cfg.random_large_scale = false;
        cfg.random_data_large_scale = true;
        assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn snr_is_converted_from_db() {
        let cfg = ExperimentConfig {
            snr_db: 20.0,
            ..Default::default()
        };
        assert!((cfg.p_t() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn comments_and_unknown_keys() {
        let cfg = ExperimentConfig::parse("# note\n\nsystem.n_s = 8\n").unwrap();
        assert_eq!(cfg.n_s, 8);
        assert!(ExperimentConfig::parse("system.n_x = 8").is_err());
        assert!(ExperimentConfig::parse("system.n_s = 8\nsystem.n_s = 9").is_err());
        assert!(ExperimentConfig::parse("system.n_s").is_err());
        assert!(ExperimentConfig::parse("sweep.methods = ao,bogus").is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let mut cfg = ExperimentConfig::default();
        cfg.grid.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.realizations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.grid = vec![16.5];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.train = TrainConfig::reference();
        assert!(cfg.validate().is_ok());
    }
}

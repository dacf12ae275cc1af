//! Plain-text key-value run configuration. Unknown keys are rejected with
//! line numbers; every run echoes the complete configuration into its
//! manifest so reruns are bit-identical.

use anyhow::{bail, Context, Result};
use sqg_spectral::params::StageParams;

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    CheckParams,
    Stage0,
    Step,
    Run,
    Verify,
    Noise,
    Galerkin,
    Calderon,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        Ok(match s {
            "check-params" => Mode::CheckParams,
            "stage0" => Mode::Stage0,
            "step" => Mode::Step,
            "run" => Mode::Run,
            "verify" => Mode::Verify,
            "noise" => Mode::Noise,
            "galerkin" => Mode::Galerkin,
            "calderon" => Mode::Calderon,
            other => bail!("unknown mode '{other}'"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::CheckParams => "check-params",
            Mode::Stage0 => "stage0",
            Mode::Step => "step",
            Mode::Run => "run",
            Mode::Verify => "verify",
            Mode::Noise => "noise",
            Mode::Galerkin => "galerkin",
            Mode::Calderon => "calderon",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: StageParams,
    pub grid_n: usize,
    pub q_max: u32,
    pub seed: u64,
    pub out_dir: String,
    pub noise_enabled: bool,
    pub noise_c: f64,
    pub noise_sigma: f64,
    pub noise_kmax: u32,
    pub noise_grid_n: usize,
    pub galerkin_ng: u32,
    pub galerkin_paths: usize,
    pub galerkin_dt: f64,
    pub galerkin_t: f64,
    pub galerkin_grid_n: usize,
    pub galerkin_checkpoints: Vec<f64>,
    pub calderon_trials: usize,
    pub calderon_grid_n: usize,
    pub calderon_band: i64,
    pub cs2: f64,
    pub cg1: f64,
    pub cg2: f64,
    pub big_k: f64,
    /// Treat the soft (asymptotic) bound checks as hard failures.
    pub hard_bounds: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Run,
            params: StageParams::default(),
            grid_n: 256,
            q_max: 1,
            seed: 7,
            out_dir: "out".into(),
            noise_enabled: true,
            noise_c: 1.0,
            noise_sigma: 0.5,
            noise_kmax: 8,
            noise_grid_n: 32,
            galerkin_ng: 32,
            galerkin_paths: 200,
            galerkin_dt: 4e-3,
            galerkin_t: 1.0,
            galerkin_grid_n: 128,
            galerkin_checkpoints: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            calderon_trials: 100,
            calderon_grid_n: 64,
            calderon_band: 10,
            cs2: 1.0,
            cg1: 1.0,
            cg2: 1.0,
            big_k: 1.5,
            hard_bounds: false,
        }
    }
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let ctx = |k: &str| format!("line {line}: bad value for '{k}'");
        match key {
            "mode" => self.mode = Mode::parse(value)?,
            "a" => self.params.a = value.parse().with_context(|| ctx(key))?,
            "b" => self.params.b = value.parse().with_context(|| ctx(key))?,
            "beta" => self.params.beta = value.parse().with_context(|| ctx(key))?,
            "alpha" => self.params.alpha = value.parse().with_context(|| ctx(key))?,
            "gamma1" => self.params.gamma1 = value.parse().with_context(|| ctx(key))?,
            "gamma2" => self.params.gamma2 = value.parse().with_context(|| ctx(key))?,
            "L" => self.params.big_l = value.parse().with_context(|| ctx(key))?,
            "C0" => self.params.c0 = value.parse().with_context(|| ctx(key))?,
            "Cbar" => self.params.cbar = value.parse().with_context(|| ctx(key))?,
            "T" => self.params.t_end = value.parse().with_context(|| ctx(key))?,
            "dt_factor" => self.params.dt_factor = value.parse().with_context(|| ctx(key))?,
            "substep_factor" => {
                self.params.substep_factor = value.parse().with_context(|| ctx(key))?
            }
            "grid_n" => self.grid_n = value.parse().with_context(|| ctx(key))?,
            "q_max" => self.q_max = value.parse().with_context(|| ctx(key))?,
            "seed" => self.seed = value.parse().with_context(|| ctx(key))?,
            "out_dir" => self.out_dir = value.to_string(),
            "noise_enabled" => self.noise_enabled = value.parse().with_context(|| ctx(key))?,
            "noise_c" => self.noise_c = value.parse().with_context(|| ctx(key))?,
            "noise_sigma" => self.noise_sigma = value.parse().with_context(|| ctx(key))?,
            "noise_kmax" => self.noise_kmax = value.parse().with_context(|| ctx(key))?,
            "noise_grid_n" => self.noise_grid_n = value.parse().with_context(|| ctx(key))?,
            "galerkin_ng" => self.galerkin_ng = value.parse().with_context(|| ctx(key))?,
            "galerkin_paths" => self.galerkin_paths = value.parse().with_context(|| ctx(key))?,
            "galerkin_dt" => self.galerkin_dt = value.parse().with_context(|| ctx(key))?,
            "galerkin_T" => self.galerkin_t = value.parse().with_context(|| ctx(key))?,
            "galerkin_grid_n" => {
                self.galerkin_grid_n = value.parse().with_context(|| ctx(key))?
            }
            "galerkin_checkpoints" => {
                self.galerkin_checkpoints = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .with_context(|| ctx(key))?
            }
            "calderon_trials" => self.calderon_trials = value.parse().with_context(|| ctx(key))?,
            "calderon_grid_n" => self.calderon_grid_n = value.parse().with_context(|| ctx(key))?,
            "calderon_band" => self.calderon_band = value.parse().with_context(|| ctx(key))?,
            "cs2" => self.cs2 = value.parse().with_context(|| ctx(key))?,
            "cg1" => self.cg1 = value.parse().with_context(|| ctx(key))?,
            "cg2" => self.cg2 = value.parse().with_context(|| ctx(key))?,
            "K" => self.big_k = value.parse().with_context(|| ctx(key))?,
            "hard_bounds" => self.hard_bounds = value.parse().with_context(|| ctx(key))?,
            other => bail!("line {line}: unknown configuration key '{other}'"),
        }
        Ok(())
    }

    pub fn from_file(path: &str) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                bail!("line {line}: expected 'key = value', got '{stripped}'");
            };
            cfg.apply(key.trim(), value.trim(), line)?;
        }
        Ok(cfg)
    }

    /// Complete echo of the configuration for the run manifest.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode.name(),
            "params": serde_json::to_value(&self.params).unwrap(),
            "grid_n": self.grid_n,
            "q_max": self.q_max,
            "seed": self.seed,
            "noise": {
                "enabled": self.noise_enabled,
                "c": self.noise_c,
                "sigma": self.noise_sigma,
                "kmax": self.noise_kmax,
                "grid_n": self.noise_grid_n,
            },
            "galerkin": {
                "n_g": self.galerkin_ng,
                "paths": self.galerkin_paths,
                "dt": self.galerkin_dt,
                "T": self.galerkin_t,
                "grid_n": self.galerkin_grid_n,
                "checkpoints": self.galerkin_checkpoints,
            },
            "calderon": {
                "trials": self.calderon_trials,
                "grid_n": self.calderon_grid_n,
                "band": self.calderon_band,
            },
            "constants": { "cs2": self.cs2, "cg1": self.cg1, "cg2": self.cg2, "K": self.big_k },
            "hard_bounds": self.hard_bounds,
            "tolerances": {
                "stage0_residual": 1e-8,
                "master_decomposition": 1e-3,
                "transport_residual": 1e-3,
                "o1_cancellation": 1e-8,
                "w_support_mass": 1e-10,
                "partition_of_unity": 1e-12,
            },
        })
    }
}

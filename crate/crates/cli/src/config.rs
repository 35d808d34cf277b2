//! Plain-text `key = value` run configuration. Unknown keys are rejected so
//! typos fail loudly.

use anyhow::{bail, Context, Result};
use twobubble_core::evolve::Boundary;
use twobubble_core::grid::GridKind;
use twobubble_core::model::ModelSpec;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub grid_kind: GridKind,
    pub grid_r_min: Option<f64>,
    pub grid_r_max: f64,
    pub grid_n: usize,
    /// nodes per bubble core at the initial scale, used when grid_r_min is
    /// not given explicitly
    pub core_pts: f64,
    /// window endpoints as kappa |t|
    pub window_kt_start: f64,
    pub window_kt_end: f64,
    pub cutoff_c: f64,
    pub cutoff_r: f64,
    pub cfl: f64,
    pub boundary: Boundary,
    pub output_stride: usize,
    pub shoot_exit_margin: f64,
    pub shoot_max_bisections: usize,
    pub shoot_check_stride: usize,
    /// shooting interval as fractions of the model envelope (NLW6) or of the
    /// barrier span (WM); None means the full canonical interval
    pub shoot_interval: Option<(f64, f64)>,
    pub seed: u64,
    pub out_dir: Option<String>,
    pub threads: usize,
    /// fault-injection fixture: corrupt a profile so verify must fail
    pub inject_profile_error: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "ym4".into(),
            grid_kind: GridKind::Hybrid,
            grid_r_min: None,
            grid_r_max: 30.0,
            grid_n: 7000,
            core_pts: 240.0,
            window_kt_start: 6.0,
            window_kt_end: 3.5,
            cutoff_c: 0.01,
            cutoff_r: 20.0,
            cfl: 0.35,
            boundary: Boundary::Frozen,
            output_stride: 4000,
            shoot_exit_margin: 1.0,
            shoot_max_bisections: 60,
            shoot_check_stride: 25,
            shoot_interval: None,
            seed: 0,
            out_dir: None,
            threads: 1,
            inject_profile_error: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut lo = None;
        let mut hi = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", ln + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let fval = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .with_context(|| format!("line {}: bad number {value:?}", ln + 1))
            };
            match key {
                "model" => cfg.model = value.to_string(),
                "grid_kind" => {
                    cfg.grid_kind = match value {
                        "uniform" => GridKind::Uniform,
                        "geometric" => GridKind::Geometric,
                        "hybrid" => GridKind::Hybrid,
                        other => bail!("line {}: unknown grid kind {other:?}", ln + 1),
                    }
                }
                "grid_r_min" => cfg.grid_r_min = Some(fval()?),
                "grid_r_max" => cfg.grid_r_max = fval()?,
                "grid_n" => cfg.grid_n = fval()? as usize,
                "core_pts" => cfg.core_pts = fval()?,
                "window_kt_start" => cfg.window_kt_start = fval()?,
                "window_kt_end" => cfg.window_kt_end = fval()?,
                "cutoff_c" => cfg.cutoff_c = fval()?,
                "cutoff_r" => cfg.cutoff_r = fval()?,
                "cfl" => cfg.cfl = fval()?,
                "boundary" => {
                    cfg.boundary = match value {
                        "frozen" => Boundary::Frozen,
                        "sommerfeld" => Boundary::Sommerfeld,
                        other => bail!("line {}: unknown boundary {other:?}", ln + 1),
                    }
                }
                "output_stride" => cfg.output_stride = fval()? as usize,
                "shoot_exit_margin" => cfg.shoot_exit_margin = fval()?,
                "shoot_max_bisections" => cfg.shoot_max_bisections = fval()? as usize,
                "shoot_check_stride" => cfg.shoot_check_stride = fval()? as usize,
                "shoot_interval_lo" => lo = Some(fval()?),
                "shoot_interval_hi" => hi = Some(fval()?),
                "seed" => cfg.seed = fval()? as u64,
                "out_dir" => cfg.out_dir = Some(value.to_string()),
                "threads" => cfg.threads = (fval()? as usize).max(1),
                "inject_profile_error" => {
                    cfg.inject_profile_error = matches!(value, "true" | "1" | "yes")
                }
                other => bail!("line {}: unknown key {other:?}", ln + 1),
            }
        }
        if let (Some(a), Some(b)) = (lo, hi) {
            cfg.shoot_interval = Some((a, b));
        } else if lo.is_some() || hi.is_some() {
            bail!("shoot_interval_lo and shoot_interval_hi must come together");
        }
        Ok(cfg)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(ModelSpec::parse(&self.model)?)
    }

    /// window endpoints in time: t = -kt/kappa
    pub fn window(&self, model: &ModelSpec) -> Result<(f64, f64)> {
        if !(self.window_kt_start > self.window_kt_end && self.window_kt_end > 0.0) {
            bail!(
                "window wants kt_start > kt_end > 0, got {} -> {}",
                self.window_kt_start,
                self.window_kt_end
            );
        }
        Ok((
            -self.window_kt_start / model.kappa,
            -self.window_kt_end / model.kappa,
        ))
    }
}

//! Experiment configuration files.
//!
//! A configuration is a flat `key = value` file split into `[defaults]`,
//! `[env]`, `[agent]` and `[run]` sections. Only `[defaults]` is mandatory;
//! every omitted key takes its default. `#` starts a comment.
//!
//! ```text
//! [defaults]
//! gamma = 0.9
//! max_episode_len = 200
//!
//! [env]
//! kind = risky_chain      # chain | risky_chain | cliff | risky_bandit | file
//! n = 8
//! slip = 0.1
//! spread = 0.5
//!
//! [agent]
//! variant = fzi-mix
//! hidden = 32
//! support = none          # or `lo, hi`
//!
//! [run]
//! seeds = 0, 1, 2, 3, 4
//! total_steps = 8000
//! output = results
//! ```
//!
//! `gamma` in `[defaults]` is shared by the environment and the agent.
//! Setting the `DERL_SEED` environment variable replaces the seed list
//! `s_0, ..., s_{k-1}` by `base, base + 1, ..., base + k - 1` (see
//! [`ExperimentConfig::apply_seed_override`]).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use derl_core::agents::{AgentConfig, RunSchedule, Variant};
use derl_core::mdp::{self, TabularMdp};
use derl_core::ops::MuSource;

use crate::error::{LabError, Result};
use crate::format::{fmt_num, parse_mdp};

/// Name of the seed override variable.
pub const SEED_ENV: &str = "DERL_SEED";

/// Which environment an experiment runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Chain { n: usize, slip: f64 },
    RiskyChain { n: usize, slip: f64, spread: f64 },
    Cliff { width: usize, height: usize, fall_penalty: f64 },
    RiskyBandit { mean: f64, spread: f64 },
    File { path: PathBuf },
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Chain { .. } => "chain",
            EnvSpec::RiskyChain { .. } => "risky_chain",
            EnvSpec::Cliff { .. } => "cliff",
            EnvSpec::RiskyBandit { .. } => "risky_bandit",
            EnvSpec::File { .. } => "file",
        }
    }

    /// Builds the MDP. Generated environments use `gamma`; the bandit has a
    /// fixed discount and file MDPs carry their own.
    pub fn build(&self, gamma: f64) -> Result<TabularMdp> {
        Ok(match self {
            EnvSpec::Chain { n, slip } => mdp::make_chain(*n, *slip, gamma)?,
            EnvSpec::RiskyChain { n, slip, spread } => mdp::make_risky_chain(*n, *slip, *spread, gamma)?,
            EnvSpec::Cliff { width, height, fall_penalty } => {
                mdp::make_cliff_grid(*width, *height, *fall_penalty, gamma)?
            }
            EnvSpec::RiskyBandit { mean, spread } => mdp::make_risky_bandit(*mean, *spread)?,
            EnvSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
                parse_mdp(&text)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub variant: Variant,
    /// Agent settings; `agent.gamma` also discounts generated environments.
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    pub schedule: RunSchedule,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".to_string(),
            env: EnvSpec::Chain { n: 8, slip: 0.1 },
            variant: Variant::FziCe,
            agent: AgentConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            schedule: RunSchedule::default(),
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn build_env(&self) -> Result<TabularMdp> {
        self.env.build(self.agent.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.seeds.is_empty() {
            return Err(LabError::Invalid("seeds must be nonempty".into()));
        }
        if self.schedule.eval_every == 0 || self.schedule.eval_episodes == 0 {
            return Err(LabError::Invalid("eval_every and eval_episodes must be positive".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(LabError::Invalid(format!("invalid run name `{}`", self.name)));
        }
        Ok(())
    }

    /// Applies `base` as the first seed and numbers the rest consecutively.
    pub fn override_seeds(&mut self, base: u64) {
        let k = self.seeds.len().max(1) as u64;
        self.seeds = (0..k).map(|i| base.wrapping_add(i)).collect();
    }

    /// Reads [`SEED_ENV`] and applies it with [`Self::override_seeds`].
    pub fn apply_seed_override(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let base = raw
                .trim()
                .parse()
                .map_err(|_| LabError::Invalid(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`")))?;
            self.override_seeds(base);
        }
        Ok(())
    }

    /// Canonical text form; loading it yields `self` again.
    pub fn dump(&self) -> String {
        let a = &self.agent;
        let mut out = String::new();
        let _ = writeln!(out, "[defaults]");
        let _ = writeln!(out, "gamma = {}", fmt_num(a.gamma));
        let _ = writeln!(out, "max_episode_len = {}", a.max_episode_len);
        let _ = writeln!(out, "\n[env]\nkind = {}", self.env.kind());
        match &self.env {
            EnvSpec::Chain { n, slip } => {
                let _ = writeln!(out, "n = {n}\nslip = {}", fmt_num(*slip));
            }
            EnvSpec::RiskyChain { n, slip, spread } => {
                let _ = writeln!(out, "n = {n}\nslip = {}\nspread = {}", fmt_num(*slip), fmt_num(*spread));
            }
            EnvSpec::Cliff { width, height, fall_penalty } => {
                let _ = writeln!(out, "width = {width}\nheight = {height}\nfall_penalty = {}", fmt_num(*fall_penalty));
            }
            EnvSpec::RiskyBandit { mean, spread } => {
                let _ = writeln!(out, "mean = {}\nspread = {}", fmt_num(*mean), fmt_num(*spread));
            }
            EnvSpec::File { path } => {
                let _ = writeln!(out, "path = {}", path.display());
            }
        }
        let _ = writeln!(out, "\n[agent]\nvariant = {}", self.variant.name());
        let support = a.support.map_or_else(|| "none".to_string(), |(lo, hi)| format!("{}, {}", fmt_num(lo), fmt_num(hi)));
        let tau = a.polyak_tau.map_or_else(|| "none".to_string(), fmt_num);
        let hidden: Vec<String> = a.hidden.iter().map(usize::to_string).collect();
        let mu = match a.mu_source {
            MuSource::Decomposed => "decomposed",
            MuSource::WholeTarget => "whole_target",
        };
        let fields: [(&str, String); 20] = [
            ("epsilon", fmt_num(a.epsilon())),
            ("mix_epsilon", fmt_num(a.mix_epsilon)),
            ("lambda", fmt_num(a.lambda)),
            ("beta", fmt_num(a.beta)),
            ("atoms", a.atoms.to_string()),
            ("support", support),
            ("quantiles", a.quantiles.to_string()),
            ("quantile_embedding", a.quantile_embedding.to_string()),
            ("huber_kappa", fmt_num(a.huber_kappa)),
            ("critic_lr", fmt_num(a.critic_lr)),
            ("actor_lr", fmt_num(a.actor_lr)),
            ("batch_size", a.batch_size.to_string()),
            ("target_period", a.target_period.to_string()),
            ("polyak_tau", tau),
            ("replay_capacity", a.replay_capacity.to_string()),
            ("learning_starts", a.learning_starts.to_string()),
            ("train_every", a.train_every.to_string()),
            ("hidden", hidden.join(", ")),
            ("explore", fmt_num(a.explore)),
            ("mu_source", mu.to_string()),
        ];
        for (k, v) in &fields {
            let _ = writeln!(out, "{k} = {v}");
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "\n[run]\nname = {}", self.name);
        let _ = writeln!(out, "seeds = {}", seeds.join(", "));
        let _ = writeln!(out, "total_steps = {}", self.schedule.total_steps);
        let _ = writeln!(out, "eval_every = {}", self.schedule.eval_every);
        let _ = writeln!(out, "eval_episodes = {}", self.schedule.eval_episodes);
        let _ = writeln!(out, "output = {}", self.output.display());
        out
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    // Relative MDP paths are resolved against the configuration file.
    if let EnvSpec::File { path: mdp_path } = &mut cfg.env {
        if mdp_path.is_relative() {
            if let Some(dir) = path.parent() {
                *mdp_path = dir.join(&*mdp_path);
            }
        }
    }
    Ok(cfg)
}

#[derive(Default)]
struct EnvKeys {
    kind: Option<(usize, String)>,
    n: Option<usize>,
    slip: Option<f64>,
    spread: Option<f64>,
    width: Option<usize>,
    height: Option<usize>,
    fall_penalty: Option<f64>,
    mean: Option<f64>,
    path: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut env = EnvKeys::default();
    let mut seen_defaults = false;
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "defaults" | "env" | "agent" | "run") {
                return Err(LabError::parse(line, format!("unknown section [{name}]")));
            }
            seen_defaults |= name == "defaults";
            section = Some(name.to_string());
            continue;
        }
        let sec = section.as_deref().ok_or_else(|| LabError::parse(line, "key outside of any section"))?;
        let (key, value) = body
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| LabError::parse(line, "expected `key = value`"))?;
        let v = Value { line, key, raw: value };
        let a = &mut cfg.agent;
        match (sec, key) {
            ("defaults", "gamma") => {
                let g = v.float()?;
                if !(g > 0.0 && g < 1.0) {
                    return Err(LabError::parse(line, format!("gamma = {g} outside (0, 1)")));
                }
                a.gamma = g;
            }
            ("defaults", "max_episode_len") => a.max_episode_len = v.positive()?,
            ("env", "kind") => env.kind = Some((line, value.to_string())),
            ("env", "n") => env.n = Some(v.uint()?),
            ("env", "slip") => env.slip = Some(v.unit()?),
            ("env", "spread") => env.spread = Some(v.float()?),
            ("env", "width") => env.width = Some(v.uint()?),
            ("env", "height") => env.height = Some(v.uint()?),
            ("env", "fall_penalty") => env.fall_penalty = Some(v.float()?),
            ("env", "mean") => env.mean = Some(v.float()?),
            ("env", "path") => env.path = Some(PathBuf::from(value)),
            ("agent", "variant") => {
                cfg.variant =
                    Variant::from_name(value).ok_or_else(|| LabError::parse(line, format!("unknown variant `{value}`")))?
            }
            ("agent", "epsilon") => {
                let e = v.float()?;
                if e != a.epsilon() {
                    a.set_epsilon(e).map_err(|err| LabError::parse(line, err.to_string()))?;
                }
            }
            ("agent", "mix_epsilon") => a.mix_epsilon = v.unit()?,
            ("agent", "lambda") => a.lambda = v.unit()?,
            ("agent", "beta") => a.beta = v.nonneg()?,
            ("agent", "atoms") => a.atoms = v.uint()?,
            ("agent", "support") => a.support = v.support()?,
            ("agent", "quantiles") => a.quantiles = v.positive()?,
            ("agent", "quantile_embedding") => a.quantile_embedding = v.positive()?,
            ("agent", "huber_kappa") => a.huber_kappa = v.float()?,
            ("agent", "critic_lr") => a.critic_lr = v.float()?,
            ("agent", "actor_lr") => a.actor_lr = v.float()?,
            ("agent", "batch_size") => a.batch_size = v.positive()?,
            ("agent", "target_period") => a.target_period = v.positive()?,
            ("agent", "polyak_tau") => a.polyak_tau = if value == "none" { None } else { Some(v.float()?) },
            ("agent", "replay_capacity") => a.replay_capacity = v.positive()?,
            ("agent", "learning_starts") => a.learning_starts = v.uint()?,
            ("agent", "train_every") => a.train_every = v.positive()?,
            ("agent", "hidden") => a.hidden = v.list(|t| t.parse::<usize>().ok().filter(|&n| n > 0))?,
            ("agent", "explore") => a.explore = v.unit()?,
            ("agent", "mu_source") => {
                a.mu_source = match value {
                    "decomposed" => MuSource::Decomposed,
                    "whole_target" => MuSource::WholeTarget,
                    _ => return Err(LabError::parse(line, format!("unknown mu_source `{value}`"))),
                }
            }
            ("run", "name") => cfg.name = value.to_string(),
            ("run", "seeds") => {
                cfg.seeds = v.list(|t| t.parse::<u64>().ok())?;
                if cfg.seeds.is_empty() {
                    return Err(LabError::parse(line, "seeds must be nonempty"));
                }
            }
            ("run", "total_steps") => cfg.schedule.total_steps = v.uint()?,
            ("run", "eval_every") => cfg.schedule.eval_every = v.positive()?,
            ("run", "eval_episodes") => cfg.schedule.eval_episodes = v.positive()?,
            ("run", "output") => cfg.output = PathBuf::from(value),
            _ => return Err(LabError::UnknownKey { line, section: sec.to_string(), key: key.to_string() }),
        }
    }
    if !seen_defaults {
        return Err(LabError::MissingSection("defaults".into()));
    }
    cfg.env = resolve_env(env)?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_env(k: EnvKeys) -> Result<EnvSpec> {
    let (line, kind) = k.kind.unwrap_or((0, "chain".to_string()));
    let stray = |names: &[(&str, bool)]| -> Result<()> {
        match names.iter().find(|(_, set)| *set) {
            Some((name, _)) => Err(LabError::parse(line, format!("key `{name}` does not apply to env kind `{kind}`"))),
            None => Ok(()),
        }
    };
    let spec = match kind.as_str() {
        "chain" => {
            stray(&[("spread", k.spread.is_some()), ("width", k.width.is_some()), ("height", k.height.is_some()), ("fall_penalty", k.fall_penalty.is_some()), ("mean", k.mean.is_some()), ("path", k.path.is_some())])?;
            EnvSpec::Chain { n: k.n.unwrap_or(8), slip: k.slip.unwrap_or(0.1) }
        }
        "risky_chain" => {
            stray(&[("width", k.width.is_some()), ("height", k.height.is_some()), ("fall_penalty", k.fall_penalty.is_some()), ("mean", k.mean.is_some()), ("path", k.path.is_some())])?;
            EnvSpec::RiskyChain { n: k.n.unwrap_or(8), slip: k.slip.unwrap_or(0.1), spread: k.spread.unwrap_or(0.5) }
        }
        "cliff" => {
            stray(&[("n", k.n.is_some()), ("slip", k.slip.is_some()), ("spread", k.spread.is_some()), ("mean", k.mean.is_some()), ("path", k.path.is_some())])?;
            EnvSpec::Cliff { width: k.width.unwrap_or(4), height: k.height.unwrap_or(3), fall_penalty: k.fall_penalty.unwrap_or(-1.0) }
        }
        "risky_bandit" => {
            stray(&[("n", k.n.is_some()), ("slip", k.slip.is_some()), ("width", k.width.is_some()), ("height", k.height.is_some()), ("fall_penalty", k.fall_penalty.is_some()), ("path", k.path.is_some())])?;
            EnvSpec::RiskyBandit { mean: k.mean.unwrap_or(1.0), spread: k.spread.unwrap_or(0.5) }
        }
        "file" => {
            stray(&[("n", k.n.is_some()), ("slip", k.slip.is_some()), ("spread", k.spread.is_some()), ("width", k.width.is_some()), ("height", k.height.is_some()), ("fall_penalty", k.fall_penalty.is_some()), ("mean", k.mean.is_some())])?;
            EnvSpec::File { path: k.path.ok_or_else(|| LabError::parse(line, "env kind `file` needs `path`"))? }
        }
        other => return Err(LabError::parse(line, format!("unknown env kind `{other}`"))),
    };
    Ok(spec)
}

struct Value<'a> {
    line: usize,
    key: &'a str,
    raw: &'a str,
}

impl Value<'_> {
    fn err(&self, what: &str) -> LabError {
        LabError::parse(self.line, format!("`{}` must be {what}, got `{}`", self.key, self.raw))
    }

    fn float(&self) -> Result<f64> {
        self.raw.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| self.err("a finite number"))
    }

    fn unit(&self) -> Result<f64> {
        self.float().ok().filter(|x| (0.0..=1.0).contains(x)).ok_or_else(|| self.err("in [0, 1]"))
    }

    fn nonneg(&self) -> Result<f64> {
        self.float().ok().filter(|&x| x >= 0.0).ok_or_else(|| self.err("nonnegative"))
    }

    fn uint(&self) -> Result<usize> {
        self.raw.parse().map_err(|_| self.err("an unsigned integer"))
    }

    fn positive(&self) -> Result<usize> {
        self.uint().ok().filter(|&n| n > 0).ok_or_else(|| self.err("a positive integer"))
    }

    fn list<T>(&self, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
        self.raw
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| item(t).ok_or_else(|| self.err("a comma-separated list")))
            .collect()
    }

    fn support(&self) -> Result<Option<(f64, f64)>> {
        if self.raw == "none" {
            return Ok(None);
        }
        match self.list(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))?.as_slice() {
            [lo, hi] if lo < hi => Ok(Some((*lo, *hi))),
            _ => Err(self.err("`none` or `lo, hi` with lo < hi")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_keys_must_match_kind() {
        let err = parse_config("[defaults]\n[env]\nkind = chain\nwidth = 3\n").unwrap_err();
        assert!(err.to_string().contains("width"));
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(matches!(parse_config("[defaults]\n[extra]\n"), Err(LabError::Parse { line: 2, .. })));
    }

    #[test]
    fn seed_override_numbers_consecutively() {
        let mut cfg = ExperimentConfig { seeds: vec![4, 9, 1], ..Default::default() };
        cfg.override_seeds(100);
        assert_eq!(cfg.seeds, vec![100, 101, 102]);
    }

    #[test]
    fn file_env_resolves_relative_to_config() {
        let dir = std::env::temp_dir().join(format!("derl-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("m.mdp"), "1 states 1 actions 0.5 gamma\nP 0 0 : 1\nR 0 0 : 1\n").unwrap();
        std::fs::write(dir.join("c.cfg"), "[defaults]\n[env]\nkind = file\npath = m.mdp\n").unwrap();
        let cfg = load_config(&dir.join("c.cfg")).unwrap();
        let env = cfg.build_env().unwrap();
        assert_eq!(env.gamma(), 0.5);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

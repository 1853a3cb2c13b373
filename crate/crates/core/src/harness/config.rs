//! Experiment configuration: a flat JSON object with dotted section keys.
//! Nested objects are accepted and flattened; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::ensemble::{InitialLaw, RunConfig};
use crate::eps::{ForcingQuadrature, SchemeKind};
use crate::error::{Error, Result};
use crate::limit::DiffusionMode;
use crate::noise::{FourierMode, NoiseKind, NoiseModel, Profile};
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n_particles: usize,
    pub horizon: f64,
    pub alpha: f64,
    pub seed: u64,
    pub h0: f64,
    pub eps_grid: Vec<f64>,
    pub replicas: usize,
    pub samples_per_replica: usize,
    pub scheme: SchemeKind,
    pub forcing: ForcingQuadrature,

    pub potential_kind: String,
    pub lambda: f64,
    pub kappa: f64,

    pub noise_kind: String,
    pub gamma: f64,
    pub sigma: f64,
    pub clip: bool,
    pub profile: Option<Profile>,
    pub modes: Vec<FourierMode>,

    pub init: InitialLaw,

    pub diffusion_modes: Vec<DiffusionMode>,
    pub limit_h: Option<f64>,
    pub explicit: Option<Vec<f64>>,
    /// Fast-time horizon of the Green-Kubo estimator, in units of `1/gamma`.
    pub gk_horizon: f64,
    pub gk_reps: usize,

    pub out_dir: String,
    pub format: OutputFormat,
    /// Emit per-step trajectories of replica 0.
    pub trajectory: bool,
    pub dump_every: usize,

    pub self_test: bool,
    pub bm_interval: f64,
}

/// Every key the parser accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "run.d",
    "run.N",
    "run.T",
    "run.alpha",
    "run.seed",
    "run.h0",
    "run.eps_grid",
    "run.replicas",
    "run.samples_per_replica",
    "run.scheme",
    "run.forcing",
    "potential.kind",
    "potential.lambda",
    "potential.kappa",
    "noise.kind",
    "noise.gamma",
    "noise.sigma",
    "noise.clip",
    "noise.g",
    "noise.modes",
    "init.kind",
    "init.mean",
    "init.std",
    "init.velocity",
    "init.separation",
    "limit.modes",
    "limit.h",
    "limit.explicit",
    "limit.gk_horizon",
    "limit.gk_reps",
    "output.dir",
    "output.format",
    "output.trajectory",
    "output.dump_every",
    "converge.self_test",
    "diagnose.bm_interval",
];

/// Flatten nested objects into dotted keys. Arrays are leaves.
pub fn flatten(v: &Value) -> Result<BTreeMap<String, Value>> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::usage("configuration must be a JSON object"))?;
    let mut out = BTreeMap::new();
    flatten_into("", obj, &mut out)?;
    Ok(out)
}

fn flatten_into(
    prefix: &str,
    obj: &Map<String, Value>,
    out: &mut BTreeMap<String, Value>,
) -> Result<()> {
    for (k, v) in obj {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Object(inner) => flatten_into(&key, inner, out)?,
            other => {
                if out.insert(key.clone(), other.clone()).is_some() {
                    return Err(Error::usage(format!("duplicate configuration key '{key}'")));
                }
            }
        }
    }
    Ok(())
}

struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn need(&mut self, key: &str) -> Result<Value> {
        self.take(key)
            .ok_or_else(|| Error::usage(format!("missing required key '{key}'")))
    }

    fn f64_of(key: &str, v: &Value) -> Result<f64> {
        v.as_f64()
            .ok_or_else(|| Error::usage(format!("'{key}' must be a number")))
    }

    fn num(&mut self, key: &str) -> Result<f64> {
        let v = self.need(key)?;
        Self::f64_of(key, &v)
    }

    fn num_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some(v) => Self::f64_of(key, &v),
            None => Ok(default),
        }
    }

    fn uint_of(key: &str, v: &Value) -> Result<u64> {
        v.as_u64()
            .ok_or_else(|| Error::usage(format!("'{key}' must be a non-negative integer")))
    }

    fn uint(&mut self, key: &str) -> Result<u64> {
        let v = self.need(key)?;
        Self::uint_of(key, &v)
    }

    fn uint_or(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            Some(v) => Self::uint_of(key, &v),
            None => Ok(default),
        }
    }

    fn string(&mut self, key: &str) -> Result<String> {
        let v = self.need(key)?;
        v.as_str()
            .map(str::to_owned)
            .ok_or_else(|| Error::usage(format!("'{key}' must be a string")))
    }

    fn string_or(&mut self, key: &str, default: &str) -> Result<String> {
        match self.take(key) {
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(Error::usage(format!("'{key}' must be a string"))),
            None => Ok(default.to_owned()),
        }
    }

    fn flag_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            Some(Value::Bool(b)) => Ok(b),
            Some(_) => Err(Error::usage(format!("'{key}' must be true or false"))),
            None => Ok(default),
        }
    }

    fn numbers(key: &str, v: &Value) -> Result<Vec<f64>> {
        v.as_array()
            .ok_or_else(|| Error::usage(format!("'{key}' must be an array of numbers")))?
            .iter()
            .map(|x| Self::f64_of(key, x))
            .collect()
    }
}

fn parse_scheme(s: &str) -> Result<SchemeKind> {
    match s {
        "exponential" => Ok(SchemeKind::Exponential),
        "euler" => Ok(SchemeKind::Euler),
        other => Err(Error::usage(format!("unknown scheme '{other}'"))),
    }
}

fn parse_forcing(s: &str) -> Result<ForcingQuadrature> {
    match s {
        "step-average" => Ok(ForcingQuadrature::StepAverage),
        "left-endpoint" => Ok(ForcingQuadrature::LeftEndpoint),
        other => Err(Error::usage(format!(
            "unknown forcing quadrature '{other}'"
        ))),
    }
}

fn parse_profile(s: &str) -> Result<Profile> {
    match s {
        "one" => Ok(Profile::One),
        "cos" => Ok(Profile::Cos),
        "clip" => Ok(Profile::Clip),
        "tanh" => Ok(Profile::Tanh),
        other => Err(Error::usage(format!("unknown separable profile '{other}'"))),
    }
}

fn parse_mode(v: &Value) -> Result<FourierMode> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::usage("each entry of 'noise.modes' must be an object"))?;
    for k in obj.keys() {
        if !matches!(k.as_str(), "omega" | "a" | "b") {
            return Err(Error::usage(format!("unknown key '{k}' in 'noise.modes'")));
        }
    }
    let get = |k: &str| {
        obj.get(k)
            .ok_or_else(|| Error::usage(format!("'noise.modes' entry lacks '{k}'")))
    };
    Ok(FourierMode {
        omega: Keys::numbers("noise.modes.omega", get("omega")?)?,
        a: Keys::f64_of("noise.modes.a", get("a")?)?,
        b: Keys::f64_of("noise.modes.b", get("b")?)?,
    })
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::usage(format!("malformed configuration: {e}")))?;
        Self::from_value(&v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Usage(m) => Error::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let flat = flatten(v)?;
        let unknown: Vec<&str> = flat
            .keys()
            .map(String::as_str)
            .filter(|key| !KNOWN_KEYS.contains(key))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::usage(format!(
                "unrecognized configuration key(s): {}",
                unknown.join(", ")
            )));
        }
        let mut k = Keys(flat);
        let eps_grid = {
            let v = k.need("run.eps_grid")?;
            Keys::numbers("run.eps_grid", &v)?
        };
        let dim = k.uint("run.d")? as usize;
        let init_kind = k.string_or("init.kind", "gaussian")?;
        let init = match init_kind.as_str() {
            "gaussian" => InitialLaw::Gaussian {
                mean: k.num_or("init.mean", 0.0)?,
                std: k.num_or("init.std", 1.0)?,
                velocity: k.num_or("init.velocity", 0.0)?,
            },
            "two-cluster" => InitialLaw::TwoCluster {
                separation: k.num("init.separation")?,
                std: k.num_or("init.std", 0.1)?,
                velocity: k.num_or("init.velocity", 0.0)?,
            },
            other => return Err(Error::usage(format!("unknown initial law '{other}'"))),
        };
        let modes_v = k.need("limit.modes")?;
        let diffusion_modes = modes_v
            .as_array()
            .ok_or_else(|| Error::usage("'limit.modes' must be an array of strings"))?
            .iter()
            .map(|m| {
                m.as_str()
                    .ok_or_else(|| Error::usage("'limit.modes' must be an array of strings"))
                    .and_then(DiffusionMode::parse)
            })
            .collect::<Result<Vec<_>>>()?;
        let noise_kind = k.string("noise.kind")?;
        let profile = match k.take("noise.g") {
            Some(Value::String(s)) => Some(parse_profile(&s)?),
            Some(_) => return Err(Error::usage("'noise.g' must be a string")),
            None => None,
        };
        let modes = match k.take("noise.modes") {
            Some(Value::Array(a)) => a.iter().map(parse_mode).collect::<Result<Vec<_>>>()?,
            Some(_) => return Err(Error::usage("'noise.modes' must be an array")),
            None => Vec::new(),
        };
        let explicit = match k.take("limit.explicit") {
            Some(v) => Some(Keys::numbers("limit.explicit", &v)?),
            None => None,
        };
        let format = match k.string("output.format")?.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(Error::usage(format!("unknown output format '{other}'"))),
        };
        let cfg = ExperimentConfig {
            dim,
            n_particles: k.uint("run.N")? as usize,
            horizon: k.num("run.T")?,
            alpha: k.num("run.alpha")?,
            seed: k.uint("run.seed")?,
            h0: k.num("run.h0")?,
            eps_grid,
            replicas: k.uint("run.replicas")? as usize,
            samples_per_replica: k.uint("run.samples_per_replica")? as usize,
            scheme: parse_scheme(&k.string_or("run.scheme", "exponential")?)?,
            forcing: parse_forcing(&k.string_or("run.forcing", "step-average")?)?,
            potential_kind: k.string("potential.kind")?,
            lambda: k.num("potential.lambda")?,
            kappa: k.num("potential.kappa")?,
            noise_kind,
            gamma: k.num("noise.gamma")?,
            sigma: k.num("noise.sigma")?,
            clip: k.flag_or("noise.clip", false)?,
            profile,
            modes,
            init,
            diffusion_modes,
            limit_h: match k.take("limit.h") {
                Some(v) => Some(Keys::f64_of("limit.h", &v)?),
                None => None,
            },
            explicit,
            gk_horizon: k.num_or("limit.gk_horizon", 100.0)?,
            gk_reps: k.uint_or("limit.gk_reps", 256)? as usize,
            out_dir: k.string("output.dir")?,
            format,
            trajectory: k.flag_or("output.trajectory", false)?,
            dump_every: k.uint_or("output.dump_every", 10)? as usize,
            self_test: k.flag_or("converge.self_test", false)?,
            bm_interval: k.num_or("diagnose.bm_interval", 0.5)?,
        };
        if !k.0.is_empty() {
            let names: Vec<&str> = k.0.keys().map(String::as_str).collect();
            return Err(Error::usage(format!(
                "unrecognized configuration key(s): {}",
                names.join(", ")
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::usage("'run.eps_grid' must not be empty"));
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::usage("'run.eps_grid' must be strictly decreasing"));
        }
        for &e in &self.eps_grid {
            self.run_config(e).validate()?;
        }
        if self.samples_per_replica > self.n_particles {
            return Err(Error::usage("'run.samples_per_replica' exceeds 'run.N'"));
        }
        if self.diffusion_modes.is_empty() {
            return Err(Error::usage("'limit.modes' must name at least one mode"));
        }
        if self.diffusion_modes.contains(&DiffusionMode::Explicit) && self.explicit.is_none() {
            return Err(Error::usage(
                "explicit diffusion mode needs 'limit.explicit'",
            ));
        }
        if let Some(m) = &self.explicit {
            if m.len() != self.dim * self.dim {
                return Err(Error::usage("'limit.explicit' must hold d*d entries"));
            }
        }
        if self.dump_every == 0 {
            return Err(Error::usage("'output.dump_every' must be >= 1"));
        }
        if !(self.bm_interval > 0.0) {
            return Err(Error::usage("'diagnose.bm_interval' must be positive"));
        }
        if self.gk_reps < 2 {
            return Err(Error::usage("'limit.gk_reps' must be >= 2"));
        }
        self.noise_model()?;
        self.potential()?;
        Ok(())
    }

    pub fn run_config(&self, eps: f64) -> RunConfig {
        RunConfig {
            dim: self.dim,
            n_particles: self.n_particles,
            eps,
            alpha: self.alpha,
            horizon: self.horizon,
            h0: self.h0,
            seed: self.seed,
            replicas: self.replicas,
            samples_per_replica: self.samples_per_replica,
            init: self.init,
        }
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        match self.potential_kind.as_str() {
            "quadratic" => {
                if self.kappa != 0.0 {
                    return Err(Error::usage("quadratic potential requires kappa = 0"));
                }
                PotentialSpec::quadratic(self.lambda)
            }
            "curie-weiss" => PotentialSpec::curie_weiss(self.lambda, self.kappa),
            other => Err(Error::usage(format!(
                "unknown potential kind '{other}' (custom potentials are library-only)"
            ))),
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let kind = match self.noise_kind.as_str() {
            "scalar-ou" => NoiseKind::ScalarOu,
            "separable" => NoiseKind::Separable(
                self.profile
                    .ok_or_else(|| Error::usage("separable noise needs 'noise.g'"))?,
            ),
            "fourier-field" => NoiseKind::FourierField(self.modes.clone()),
            other => return Err(Error::usage(format!("unknown noise kind '{other}'"))),
        };
        if self.profile.is_some() && self.noise_kind != "separable" {
            return Err(Error::usage("'noise.g' applies to separable noise only"));
        }
        if !self.modes.is_empty() && self.noise_kind != "fourier-field" {
            return Err(Error::usage(
                "'noise.modes' applies to fourier-field noise only",
            ));
        }
        Ok(NoiseModel::new(kind, self.dim, self.gamma, self.sigma)?.clipped(self.clip))
    }

    /// Green-Kubo horizon in fast time.
    pub fn gk_horizon_fast(&self) -> f64 {
        self.gk_horizon / self.gamma
    }

    /// Every recognized key with its effective value.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_owned(), v);
        };
        put("run.d", json!(self.dim));
        put("run.N", json!(self.n_particles));
        put("run.T", json!(self.horizon));
        put("run.alpha", json!(self.alpha));
        put("run.seed", json!(self.seed));
        put("run.h0", json!(self.h0));
        put("run.eps_grid", json!(self.eps_grid));
        put("run.replicas", json!(self.replicas));
        put("run.samples_per_replica", json!(self.samples_per_replica));
        put("run.scheme", json!(self.scheme.as_str()));
        put("run.forcing", json!(self.forcing.as_str()));
        put("potential.kind", json!(self.potential_kind));
        put("potential.lambda", json!(self.lambda));
        put("potential.kappa", json!(self.kappa));
        put("noise.kind", json!(self.noise_kind));
        put("noise.gamma", json!(self.gamma));
        put("noise.sigma", json!(self.sigma));
        put("noise.clip", json!(self.clip));
        if let Some(p) = self.profile {
            put("noise.g", json!(p.as_str()));
        }
        if !self.modes.is_empty() {
            put(
                "noise.modes",
                Value::Array(
                    self.modes
                        .iter()
                        .map(|m| json!({"omega": m.omega, "a": m.a, "b": m.b}))
                        .collect(),
                ),
            );
        }
        match &self.init {
            InitialLaw::Gaussian {
                mean,
                std,
                velocity,
            } => {
                put("init.kind", json!("gaussian"));
                put("init.mean", json!(mean));
                put("init.std", json!(std));
                put("init.velocity", json!(velocity));
            }
            InitialLaw::TwoCluster {
                separation,
                std,
                velocity,
            } => {
                put("init.kind", json!("two-cluster"));
                put("init.separation", json!(separation));
                put("init.std", json!(std));
                put("init.velocity", json!(velocity));
            }
        }
        put(
            "limit.modes",
            json!(self
                .diffusion_modes
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()),
        );
        if let Some(h) = self.limit_h {
            put("limit.h", json!(h));
        }
        if let Some(e) = &self.explicit {
            put("limit.explicit", json!(e));
        }
        put("limit.gk_horizon", json!(self.gk_horizon));
        put("limit.gk_reps", json!(self.gk_reps));
        put("output.dir", json!(self.out_dir));
        put("output.format", json!(self.format.as_str()));
        put("output.trajectory", json!(self.trajectory));
        put("output.dump_every", json!(self.dump_every));
        put("converge.self_test", json!(self.self_test));
        put("diagnose.bm_interval", json!(self.bm_interval));
        m
    }

    /// Sorted flat JSON object on one line.
    pub fn to_json_string(&self) -> String {
        let map: Map<String, Value> = self.to_flat().into_iter().collect();
        serde_json::to_string(&Value::Object(map)).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BENCH: &str = r#"{
        "run.d": 1, "run.N": 256, "run.T": 5.0, "run.alpha": 1.0, "run.seed": 20240601,
        "run.h0": 0.05, "run.eps_grid": [0.2, 0.1, 0.05, 0.025],
        "run.replicas": 200, "run.samples_per_replica": 8,
        "potential.kind": "quadratic", "potential.lambda": 1.0, "potential.kappa": 0.0,
        "noise.kind": "scalar-ou", "noise.gamma": 1.0, "noise.sigma": 1.0,
        "limit.modes": ["paper", "green-kubo"],
        "output.dir": "out", "output.format": "csv"
    }"#;

    #[test]
    fn parses_benchmark_and_defaults() {
        let c = ExperimentConfig::from_json_str(BENCH).unwrap();
        assert_eq!(c.eps_grid, vec![0.2, 0.1, 0.05, 0.025]);
        assert_eq!(c.scheme, SchemeKind::Exponential);
        assert_eq!(c.init, InitialLaw::default());
        assert_eq!(c.gk_reps, 256);
    }

    #[test]
    fn nested_and_flat_are_equivalent() {
        let nested = r#"{
            "run": {"d": 1, "N": 256, "T": 5.0, "alpha": 1.0, "seed": 20240601, "h0": 0.05,
                    "eps_grid": [0.2, 0.1, 0.05, 0.025], "replicas": 200, "samples_per_replica": 8},
            "potential": {"kind": "quadratic", "lambda": 1.0, "kappa": 0.0},
            "noise": {"kind": "scalar-ou", "gamma": 1.0, "sigma": 1.0},
            "limit": {"modes": ["paper", "green-kubo"]},
            "output": {"dir": "out", "format": "csv"}
        }"#;
        assert_eq!(
            ExperimentConfig::from_json_str(nested).unwrap(),
            ExperimentConfig::from_json_str(BENCH).unwrap()
        );
    }

    #[test]
    fn unknown_and_missing_keys_fail() {
        let typo = BENCH.replace("\"noise.gamma\"", "\"noise.gama\"");
        let e = ExperimentConfig::from_json_str(&typo).unwrap_err();
        assert!(e.to_string().contains("noise.gama"), "{e}");
        let extra = BENCH.replace("\"output.dir\"", "\"output.colour\": 1, \"output.dir\"");
        let e = ExperimentConfig::from_json_str(&extra).unwrap_err();
        assert!(e.to_string().contains("output.colour"));
        let rising = BENCH.replace("[0.2, 0.1, 0.05, 0.025]", "[0.1, 0.2]");
        assert!(ExperimentConfig::from_json_str(&rising).is_err());
        assert!(ExperimentConfig::from_json_str("[1, 2]").is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let c = ExperimentConfig::from_json_str(BENCH).unwrap();
        let again = ExperimentConfig::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_json_string(), again.to_json_string());
    }

    proptest! {
        #[test]
        fn round_trip_over_parameters(
            lambda in 0.0f64..5.0,
            kappa in -3.0f64..3.0,
            gamma in 0.1f64..10.0,
            sigma in 0.0f64..3.0,
            h0 in 0.001f64..0.2,
            seed in any::<u64>(),
            two_cluster in any::<bool>(),
            sep in 0.1f64..10.0,
            clip in any::<bool>(),
            euler in any::<bool>(),
        ) {
            let mut c = ExperimentConfig::from_json_str(BENCH).unwrap();
            c.potential_kind = "curie-weiss".into();
            c.lambda = lambda;
            c.kappa = kappa;
            c.gamma = gamma;
            c.sigma = sigma;
            c.h0 = h0;
            c.seed = seed;
            c.clip = clip;
            if euler {
                c.scheme = SchemeKind::Euler;
            }
            if two_cluster {
                c.init = InitialLaw::TwoCluster { separation: sep, std: 0.2, velocity: -1.0 };
            }
            let text = c.to_json_string();
            let back = ExperimentConfig::from_json_str(&text).unwrap();
            prop_assert_eq!(&c, &back);
            prop_assert_eq!(text, back.to_json_string());
        }
    }
}

//! Flat `key = value` configuration with dotted keys.
//!
//! ```text
//! # forced pendulum on the golden torus
//! system.name = pendulum
//! system.epsilon = 0.01
//! freq.omega = 0.6180339887498949
//! torus.trunc = 32
//! ```
//!
//! Lists are comma separated; matrices separate rows with `;`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::CliError;
use crate::cohomology::Frequencies;
use crate::geometry::{standard_symplectic, ConstantStructure, StructureCase};
use crate::newton::NewtonConfig;
use crate::system::{DomainBox, ForcedRotors};

/// Every recognized key with its default (empty for "no default").
const KEYS: &[(&str, &str)] = &[
    ("system.name", "pendulum"),
    ("system.epsilon", "0"),
    ("system.twist", ""),
    ("system.y_halfwidth", "0.5"),
    ("structure.case", "canonical"),
    ("structure.metric", ""),
    ("freq.omega", "0.6180339887498949"),
    ("freq.alpha", "1"),
    ("freq.gamma", "0.1"),
    ("freq.tau", "1.2"),
    ("torus.trunc", "32"),
    ("torus.init", "rotator"),
    ("torus.input", ""),
    ("grid.shape", ""),
    ("newton.max_iters", "20"),
    ("newton.stop_tol", "1e-11"),
    ("newton.rho0", "0.1"),
    ("newton.a1", "2"),
    ("newton.a2", "2"),
    ("continue.epsilons", ""),
    ("certify.rho", ""),
    ("certify.box_radius", "50"),
    ("certify.inflation", "1.05"),
    ("certify.lattice_budget", "262144"),
    ("validate.t_final", "20"),
    ("validate.samples", "16"),
    ("validate.checkpoints", "20"),
    ("validate.tol", "1e-12"),
    ("validate.threshold", "1e-7"),
    ("output.dir", "runs"),
];

/// Raw key/value pairs after merging the file and `--set` overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| config_err(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{spec}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .expect("known key")
        })
    }

    /// Every key with its effective value, for the run manifest.
    pub fn effective(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|(k, _)| (*k, self.get(k).to_string()))
            .collect()
    }

    fn f64(&self, key: &str) -> Result<f64, CliError> {
        let s = self.get(key);
        s.parse()
            .map_err(|_| config_err(format!("{key}: `{s}` is not a number")))
    }

    fn usize(&self, key: &str) -> Result<usize, CliError> {
        let s = self.get(key);
        s.parse()
            .map_err(|_| config_err(format!("{key}: `{s}` is not a nonnegative integer")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let s = self.get(key);
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| config_err(format!("{key}: bad list entry `{}`", t.trim())))
            })
            .collect()
    }

    fn matrix(&self, key: &str) -> Result<Option<DMatrix<f64>>, CliError> {
        let s = self.get(key);
        if s.is_empty() {
            return Ok(None);
        }
        let rows: Vec<Vec<f64>> = s
            .split(';')
            .map(|r| {
                r.split(',')
                    .map(|t| {
                        t.trim()
                            .parse()
                            .map_err(|_| config_err(format!("{key}: bad entry `{}`", t.trim())))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let c = rows[0].len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(config_err(format!("{key}: rows have different lengths")));
        }
        Ok(Some(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])))
    }
}

/// Typed configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub system_name: String,
    pub epsilon: f64,
    pub twist: DMatrix<f64>,
    pub y_halfwidth: f64,
    pub structure: ConstantStructure,
    pub freqs: Frequencies,
    pub trunc: Vec<usize>,
    pub shape: Vec<usize>,
    /// `None` starts from the rotator graph `y = twist^{-1} omega`.
    pub init: Option<PathBuf>,
    /// Torus to certify or validate; defaults to the initial torus.
    pub input: Option<PathBuf>,
    pub newton: NewtonConfig,
    pub epsilons: Vec<f64>,
    pub certify_rho: f64,
    pub box_radius: usize,
    pub inflation: f64,
    pub lattice_budget: usize,
    pub t_final: f64,
    pub samples: usize,
    pub checkpoints: usize,
    pub integrator_tol: f64,
    pub threshold: f64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let omega: Vec<f64> = raw.list("freq.omega")?;
        let alpha: Vec<f64> = raw.list("freq.alpha")?;
        let n = omega.len();
        if n == 0 || alpha.is_empty() {
            return Err(config_err("freq.omega and freq.alpha must be nonempty"));
        }
        let freqs = Frequencies::new(omega, alpha, raw.f64("freq.gamma")?, raw.f64("freq.tau")?)
            .map_err(|e| config_err(e.to_string()))?;
        let system_name = raw.get("system.name").to_string();
        let epsilon = match system_name.as_str() {
            "rotator" => 0.0,
            "pendulum" | "forced_rotors" => raw.f64("system.epsilon")?,
            other => return Err(config_err(format!("unknown system `{other}`"))),
        };
        if system_name != "forced_rotors" && n != 1 {
            return Err(config_err(format!(
                "{system_name} has one degree of freedom, freq.omega has {n}"
            )));
        }
        let twist = raw
            .matrix("system.twist")?
            .unwrap_or_else(|| DMatrix::identity(n, n));
        if twist.shape() != (n, n) {
            return Err(config_err(format!("system.twist must be {n}x{n}")));
        }
        let case = StructureCase::parse(raw.get("structure.case")).ok_or_else(|| {
            config_err(format!(
                "unknown structure.case `{}`",
                raw.get("structure.case")
            ))
        })?;
        let structure = match (case, raw.matrix("structure.metric")?) {
            (StructureCase::Canonical, None) => ConstantStructure::canonical(n),
            (_, Some(g)) => ConstantStructure::new(case, standard_symplectic(n), g)
                .map_err(|e| config_err(e.to_string()))?,
            (_, None) => return Err(config_err("structure.metric is required for this case")),
        };

        let d = n + freqs.alpha().len();
        let trunc: Vec<usize> = raw.list("torus.trunc")?;
        let trunc = match trunc.len() {
            1 => vec![trunc[0]; d],
            l if l == d => trunc,
            l => {
                return Err(config_err(format!(
                    "torus.trunc has {l} entries, expected 1 or {d}"
                )))
            }
        };
        let shape: Vec<usize> = raw.list("grid.shape")?;
        let shape = if shape.is_empty() {
            crate::newton::default_shape(&trunc)
        } else {
            shape
        };
        crate::fourier::check_shape(&shape, &trunc).map_err(|e| config_err(e.to_string()))?;

        let path = |key: &str| {
            let s = raw.get(key);
            (!s.is_empty() && s != "rotator").then(|| PathBuf::from(s))
        };
        let newton = NewtonConfig {
            max_iters: raw.usize("newton.max_iters")?,
            stop_tol: raw.f64("newton.stop_tol")?,
            rho0: raw.f64("newton.rho0")?,
            a1: raw.f64("newton.a1")?,
            a2: raw.f64("newton.a2")?,
            shape: Some(shape.clone()),
        };
        newton.validate().map_err(|e| config_err(e.to_string()))?;
        let certify_rho = if raw.get("certify.rho").is_empty() {
            newton.rho0
        } else {
            raw.f64("certify.rho")?
        };
        let cfg = Self {
            system_name,
            epsilon,
            twist,
            y_halfwidth: raw.f64("system.y_halfwidth")?,
            structure,
            freqs,
            trunc,
            shape,
            init: path("torus.init"),
            input: path("torus.input"),
            newton,
            epsilons: raw.list("continue.epsilons")?,
            certify_rho,
            box_radius: raw.usize("certify.box_radius")?,
            inflation: raw.f64("certify.inflation")?,
            lattice_budget: raw.usize("certify.lattice_budget")?,
            t_final: raw.f64("validate.t_final")?,
            samples: raw.usize("validate.samples")?,
            checkpoints: raw.usize("validate.checkpoints")?,
            integrator_tol: raw.f64("validate.tol")?,
            threshold: raw.f64("validate.threshold")?,
            output_dir: PathBuf::from(raw.get("output.dir")),
            raw,
        };
        if !(cfg.y_halfwidth > 0.0) {
            return Err(config_err("system.y_halfwidth must be positive"));
        }
        if let Some(p) = cfg
            .init
            .iter()
            .chain(cfg.input.iter())
            .find(|p| !p.is_dir())
        {
            return Err(config_err(format!(
                "torus directory {} does not exist",
                p.display()
            )));
        }
        Ok(cfg)
    }

    /// Actions of the unperturbed torus, `twist^{-1} omega`.
    pub fn rotator_actions(&self) -> Result<Vec<f64>, CliError> {
        let inv = self
            .twist
            .clone()
            .try_inverse()
            .ok_or_else(|| config_err("system.twist is singular"))?;
        let w = nalgebra::DVector::from_column_slice(self.freqs.omega());
        Ok((inv * w).as_slice().to_vec())
    }

    pub fn system(&self, epsilon: f64) -> Result<ForcedRotors, CliError> {
        let n = self.freqs.omega().len();
        let y0 = self.rotator_actions()?;
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        lo.extend(y0.iter().map(|y| y - self.y_halfwidth));
        hi.extend(y0.iter().map(|y| y + self.y_halfwidth));
        let domain = DomainBox::new(lo, hi).map_err(|e| config_err(e.to_string()))?;
        ForcedRotors::new(
            epsilon,
            self.freqs.alpha().len(),
            self.twist.clone(),
            self.structure.clone(),
            domain,
        )
        .map_err(|e| config_err(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let mut raw = RawConfig::parse(
            "# header\nsystem.epsilon = 0.02  # inline\nfreq.omega = 0.5\ntorus.trunc = 8, 4\n",
        )
        .unwrap();
        raw.apply_override("freq.gamma=0.01").unwrap();
        raw.apply_override("freq.omega=0.6180339887498949").unwrap();
        let cfg = RunConfig::from_raw(raw).unwrap();
        assert_eq!(cfg.epsilon, 0.02);
        assert_eq!(cfg.trunc, vec![8, 4]);
        assert_eq!(cfg.shape, vec![32, 16]);
        assert_eq!(cfg.freqs.gamma(), 0.01);
    }

    #[test]
    fn rejects_unknown_keys_and_aliasing_grids() {
        assert!(RawConfig::parse("system.epsilonn = 1").is_err());
        let mut raw = RawConfig::default();
        raw.set("grid.shape", "10,10").unwrap();
        assert!(RunConfig::from_raw(raw).is_err());
    }

    #[test]
    fn matrices_parse_row_by_row() {
        let mut raw = RawConfig::default();
        raw.set("system.name", "forced_rotors").unwrap();
        raw.set("freq.omega", "0.6180339887498949, 0.4142135623730951")
            .unwrap();
        raw.set("freq.tau", "2.5").unwrap();
        raw.set("system.twist", "1, 0.2; 0.2, 1.5").unwrap();
        let cfg = RunConfig::from_raw(raw).unwrap();
        assert_eq!(cfg.twist[(0, 1)], 0.2);
        assert_eq!(cfg.twist[(1, 1)], 1.5);
    }
}

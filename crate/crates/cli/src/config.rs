//! Flat `key = value` configuration. Defaults, then the file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use exitduel::equilibrium::{BeliefSettings, TypeDistribution};
use exitduel::primitives::Primitives;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every recognised key with its default. An empty value means "unset".
const DEFAULTS: &[(&str, &str)] = &[
    ("mu", "-0.5"),
    ("b", "1"),
    ("r", "1"),
    ("beta", "0.5"),
    ("x_cap", "1000"),
    ("m0", "2"),
    ("theta_lo", "0.5"),
    ("theta_hi", "1.5"),
    ("family", "uniform"),
    ("cdf_points", ""),
    ("dt", "0.001"),
    ("horizon", "8"),
    ("paths", "10000"),
    ("seed", "1"),
    ("eps_ladder", "0.08,0.04,0.02,0.01,0.005"),
    ("conv_tol", "0.02"),
    ("x0", "2.72"),
    ("theta", "0.6,1.0,1.4"),
    ("theta2", ""),
    ("significance", "3"),
    ("deviations", "default"),
    ("x_grid", ""),
    ("a_grid", ""),
    ("nx", "12"),
    ("na", "12"),
    ("mode", ""),
    ("x_fixed", "0.1"),
    ("ode_dt", "0.0001"),
    ("type_points", "100"),
    ("limit_theta", "1.0"),
    ("half_widths", "0.25,0.1,0.05"),
    ("out", "out"),
];

/// Keys that only decide where files go, so they stay out of the hash.
const UNHASHED: &[&str] = &["out"];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn defaults() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        match self.values.get_mut(&key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(CliError::Usage(format!("unknown configuration key `{key}`"))),
        }
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Usage(format!("cannot parse `{key}` from `{raw}`")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Usage(format!("cannot parse `{key}` entry `{s}`")))
            })
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// First 16 hex digits of SHA-256 over the sorted effective config and the command.
    pub fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(format!("command={command}\n"));
        for (k, v) in &self.values {
            if !UNHASHED.contains(&k.as_str()) {
                h.update(format!("{k}={v}\n"));
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn primitives(&self) -> Result<Primitives, CliError> {
        Primitives::capped_power_gbm(
            self.get("mu")?,
            self.get("b")?,
            self.get("r")?,
            self.get("beta")?,
            self.get("x_cap")?,
            self.get("m0")?,
        )
        .map_err(CliError::from)
    }

    /// `family = uniform` uses `theta_lo`/`theta_hi`; `family = tabulated`
    /// reads `cdf_points` as `y:F(y)` pairs.
    pub fn distribution(&self) -> Result<TypeDistribution, CliError> {
        match self.raw("family") {
            "uniform" => Ok(TypeDistribution::uniform(self.get("theta_lo")?, self.get("theta_hi")?)?),
            "tabulated" => {
                let mut ys = Vec::new();
                let mut cdf = Vec::new();
                for pair in self
                    .raw("cdf_points")
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                {
                    let parsed = pair
                        .split_once(':')
                        .and_then(|(y, f)| Some((y.trim().parse::<f64>().ok()?, f.trim().parse::<f64>().ok()?)));
                    let (y, f) =
                        parsed.ok_or_else(|| CliError::Usage(format!("bad cdf point `{pair}`, expected y:F")))?;
                    ys.push(y);
                    cdf.push(f);
                }
                Ok(TypeDistribution::tabulated(ys, cdf)?)
            }
            other => Err(CliError::Usage(format!("unknown type family `{other}`"))),
        }
    }

    pub fn belief(&self) -> Result<BeliefSettings, CliError> {
        let settings = BeliefSettings {
            eps_ladder: self.list("eps_ladder")?,
            conv_tol: self.get("conv_tol")?,
        };
        settings.validate()?;
        Ok(settings)
    }
}

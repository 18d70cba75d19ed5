use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::baselines::{check_fractionated_propriety, CmcVariant, DpeOptions};
use crate::error::{Error, Result};
use crate::laplace::LaplaceKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaDesign {
    /// One positive outcome among `n`.
    #[default]
    SingleSuccess,
    /// Half the outcomes positive; the first half of the parts hold only
    /// positives and the rest only negatives.
    HalfSplit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogisticDesign {
    /// Intercept plus binary predictors, grouped into binomial cells.
    #[default]
    Grouped,
    /// Standard normal predictors and coefficients, one trial per row.
    Gaussian,
}

fn beta_uniform() -> [f64; 2] {
    [1.0, 1.0]
}

fn prior_scale() -> f64 {
    2.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    BetaBernoulli {
        n: usize,
        #[serde(default)]
        design: BetaDesign,
        #[serde(default = "beta_uniform")]
        prior: [f64; 2],
        /// Prior used by the fractionated methods as given. When absent the
        /// prior is fractionated for the number of parts.
        #[serde(default)]
        fractionated_prior: Option<[f64; 2]>,
    },
    /// Normal data with known diagonal covariance and a flat prior on the mean.
    MvnKnownSigma { d: usize, n: usize },
    /// Normal data with the uninformative normal-inverse-Wishart prior.
    MvnNiw { d: usize, n: usize },
    Logistic {
        #[serde(default)]
        design: LogisticDesign,
        p: usize,
        n: usize,
        #[serde(default = "prior_scale")]
        prior_scale: f64,
    },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::BetaBernoulli { .. } => "beta_bernoulli",
            ModelConfig::MvnKnownSigma { .. } => "mvn_known_sigma",
            ModelConfig::MvnNiw { .. } => "mvn_niw",
            ModelConfig::Logistic { .. } => "logistic",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            ModelConfig::BetaBernoulli { n, .. }
            | ModelConfig::MvnKnownSigma { n, .. }
            | ModelConfig::MvnNiw { n, .. }
            | ModelConfig::Logistic { n, .. } => n,
        }
    }

    /// Whether the truth has a closed form (everything but logistic regression).
    pub fn conjugate(&self) -> bool {
        !matches!(self, ModelConfig::Logistic { .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    #[default]
    Random,
    Block,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    #[serde(default)]
    pub types: Vec<u8>,
    /// Draws per Laplace approximation.
    #[serde(default)]
    pub count: usize,
}

impl LaplaceConfig {
    pub fn kinds(&self) -> Result<Vec<LaplaceKind>> {
        let mut tags = self.types.clone();
        tags.sort_unstable();
        tags.dedup();
        tags.into_iter().map(LaplaceKind::from_tag).collect()
    }
}

fn truth_draws() -> usize {
    10_000
}

fn reference_factor() -> usize {
    10
}

fn quantile_draws() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    /// Truth draws used to score densities.
    #[serde(default = "truth_draws")]
    pub draws: usize,
    /// Draws used by the vanilla estimator; defaults to the per-part draw count.
    #[serde(default)]
    pub vanilla_draws: Option<usize>,
    /// Reference chain length as a multiple of the per-part draw count.
    #[serde(default = "reference_factor")]
    pub reference_factor: usize,
    /// Exact draws behind truth quantiles without a closed form.
    #[serde(default = "quantile_draws")]
    pub quantile_draws: usize,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            draws: truth_draws(),
            vanilla_draws: None,
            reference_factor: reference_factor(),
            quantile_draws: quantile_draws(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Part counts to run; each run keeps the data fixed.
    #[serde(default)]
    pub parts: Vec<usize>,
    /// Per-part draw counts to run.
    #[serde(default)]
    pub draws_per_part: Vec<usize>,
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::Vanilla,
        Method::Naive,
        Method::Mie(1),
        Method::Mie(2),
        Method::Mie(3),
        Method::Cmc(CmcVariant::Cmc1),
        Method::Cmc(CmcVariant::Cmc2),
        Method::Ndpe,
        Method::Sdpe,
    ]
}

fn default_true() -> bool {
    true
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub model: ModelConfig,
    /// Number of parts `M`.
    pub parts: usize,
    #[serde(default)]
    pub partition: PartitionKind,
    pub draws_per_part: usize,
    /// Gibbs iterations discarded per chain (logistic only); defaults to
    /// `draws_per_part`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub laplace: LaplaceConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    /// Seed of the simulated data set; defaults to `seed`.
    #[serde(default)]
    pub data_seed: Option<u64>,
    #[serde(default)]
    pub truth: TruthConfig,
    /// Fixed KDE bandwidths per target; Silverman's rule otherwise.
    #[serde(default)]
    pub kde_bandwidth: BTreeMap<String, Vec<f64>>,
    /// Targets scored by KL divergence; all when absent.
    #[serde(default)]
    pub kl_targets: Option<Vec<String>>,
    #[serde(default)]
    pub dpe: DpeOptions,
    #[serde(default)]
    pub chunk_size: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Emit plot-data files.
    #[serde(default = "default_true")]
    pub plots: bool,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.draws_per_part)
    }

    pub fn vanilla_draws(&self) -> usize {
        self.truth.vanilla_draws.unwrap_or(self.draws_per_part)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn uses_fractionated(&self) -> bool {
        self.methods.iter().any(|m| m.fractionated())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.id.is_empty() {
            return bad("scenario id is empty".into());
        }
        if self.parts == 0 {
            return bad("number of parts must be positive".into());
        }
        if self.draws_per_part < 2 {
            return bad("need at least two draws per part".into());
        }
        if self.truth.draws < 2 {
            return bad("need at least two truth draws".into());
        }
        let n = self.model.n();
        if n < self.parts {
            return bad(format!("{n} observations cannot fill {} parts", self.parts));
        }
        match self.model {
            ModelConfig::BetaBernoulli { design, prior, fractionated_prior, .. } => {
                let ok = |p: [f64; 2]| p[0] > 0.0 && p[1] > 0.0 && p.iter().all(|v| v.is_finite());
                if !ok(prior) || fractionated_prior.is_some_and(|p| !ok(p)) {
                    return bad("beta prior parameters must be positive".into());
                }
                if design == BetaDesign::HalfSplit && self.parts > 1 && n / 2 < self.parts.div_ceil(2) {
                    return bad("too few outcomes for the half-split design".into());
                }
            }
            ModelConfig::MvnKnownSigma { d, .. } | ModelConfig::MvnNiw { d, .. } if d == 0 => {
                return bad("dimension must be positive".into());
            }
            ModelConfig::MvnNiw { d, n } => {
                // Every local posterior needs n_j > d - 1 under the uninformative prior.
                if n / self.parts < d {
                    return bad(format!("parts of {} observations are too small for d = {d}", n / self.parts));
                }
                if self.uses_fractionated() && !check_fractionated_propriety(d, n, self.parts) {
                    return Err(Error::Propriety(format!(
                        "fractionated NIW posteriors need floor(n/M) > 2d, got n = {n}, M = {}, d = {d}",
                        self.parts
                    )));
                }
            }
            ModelConfig::Logistic { p, prior_scale, design, .. } => {
                if p == 0 || !(prior_scale > 0.0) {
                    return bad("logistic model needs p > 0 and a positive prior scale".into());
                }
                if design == LogisticDesign::Grouped && !(2..=16).contains(&p) {
                    return bad("grouped design supports 2 to 16 coefficients".into());
                }
            }
            _ => {}
        }
        let kinds = self.laplace.kinds()?;
        for m in &self.methods {
            if let Method::Lemie { types: Some(t), .. } = m {
                if let Some(k) = t.iter().find(|k| !kinds.contains(k)) {
                    return bad(format!("method {m} uses Laplace type {} which is not configured", k.tag()));
                }
            }
        }
        if let Some(s) = &self.sweep {
            if s.parts.contains(&0) || s.draws_per_part.iter().any(|&n| n < 2) {
                return bad("sweep grid has an invalid entry".into());
            }
        }
        Ok(())
    }

    /// One config per sweep grid point (itself when there is no sweep).
    pub fn expand_sweep(&self) -> Result<Vec<ScenarioConfig>> {
        let sweep = self.sweep.clone().unwrap_or_default();
        let parts = if sweep.parts.is_empty() { vec![self.parts] } else { sweep.parts };
        let draws = if sweep.draws_per_part.is_empty() {
            vec![self.draws_per_part]
        } else {
            sweep.draws_per_part
        };
        let mut out = Vec::new();
        for &m in &parts {
            for &n in &draws {
                let mut c = self.clone();
                c.parts = m;
                c.draws_per_part = n;
                c.sweep = None;
                c.validate()?;
                out.push(c);
            }
        }
        Ok(out)
    }
}

/// An estimator named in a config.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Method {
    /// Direct draws from the true posterior.
    Vanilla,
    Naive,
    Mie(u8),
    /// `types: None` uses every configured Laplace type.
    Lemie { variant: u8, types: Option<Vec<LaplaceKind>> },
    Cmc(CmcVariant),
    Ndpe,
    Sdpe,
}

impl Method {
    /// Uses local posteriors under the fractionated prior.
    pub fn fractionated(&self) -> bool {
        matches!(self, Method::Cmc(_) | Method::Ndpe | Method::Sdpe)
    }

    /// Goes through the pooled-draw protocol.
    pub fn uses_protocol(&self) -> bool {
        matches!(self, Method::Mie(_) | Method::Lemie { .. })
    }

    /// Laplace types included, resolved against the configured ones.
    pub fn laplace_kinds(&self, configured: &[LaplaceKind]) -> Vec<LaplaceKind> {
        match self {
            Method::Lemie { types: Some(t), .. } => t.clone(),
            Method::Lemie { types: None, .. } => configured.to_vec(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Vanilla => f.write_str("vanilla"),
            Method::Naive => f.write_str("naive"),
            Method::Mie(v) => write!(f, "mie{v}"),
            Method::Lemie { variant, types: None } => write!(f, "lemie{variant}"),
            Method::Lemie { variant, types: Some(t) } => {
                write!(f, "lemie{variant}_t")?;
                for k in t {
                    write!(f, "{}", k.tag())?;
                }
                Ok(())
            }
            Method::Cmc(CmcVariant::Cmc1) => f.write_str("cmc1"),
            Method::Cmc(CmcVariant::Cmc2) => f.write_str("cmc2"),
            Method::Ndpe => f.write_str("ndpe"),
            Method::Sdpe => f.write_str("sdpe"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method {s:?}"));
        let variant = |v: &str| match v {
            "1" => Ok(1u8),
            "2" => Ok(2),
            "3" => Ok(3),
            _ => Err(bad()),
        };
        Ok(match s {
            "vanilla" => Method::Vanilla,
            "naive" => Method::Naive,
            "cmc1" => Method::Cmc(CmcVariant::Cmc1),
            "cmc2" => Method::Cmc(CmcVariant::Cmc2),
            "ndpe" => Method::Ndpe,
            "sdpe" => Method::Sdpe,
            _ => {
                if let Some(rest) = s.strip_prefix("lemie") {
                    match rest.split_once("_t") {
                        None => Method::Lemie { variant: variant(rest)?, types: None },
                        Some((v, digits)) => {
                            let mut tags: Vec<u8> = digits
                                .chars()
                                .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(bad))
                                .collect::<Result<_>>()?;
                            let n = tags.len();
                            tags.sort_unstable();
                            tags.dedup();
                            if tags.is_empty() || tags.len() != n {
                                return Err(bad());
                            }
                            let types = tags
                                .into_iter()
                                .map(|t| LaplaceKind::from_tag(t).map_err(|_| bad()))
                                .collect::<Result<_>>()?;
                            Method::Lemie { variant: variant(v)?, types: Some(types) }
                        }
                    }
                } else if let Some(rest) = s.strip_prefix("mie") {
                    Method::Mie(variant(rest)?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every LEMIE variant `v` over each non-empty subset of `kinds`.
pub fn lemie_variants(variant: u8, kinds: &[LaplaceKind]) -> Vec<Method> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << kinds.len()) {
        let types: Vec<LaplaceKind> = kinds
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, k)| *k)
            .collect();
        out.push(Method::Lemie { variant, types: Some(types) });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_roundtrip() {
        for s in ["vanilla", "naive", "mie1", "mie3", "lemie2", "lemie2_t1", "lemie3_t123", "cmc1", "cmc2", "ndpe", "sdpe"] {
            let m: Method = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        for s in ["mie4", "lemie2_t", "lemie2_t11", "lemie1_t4", "cmc3", ""] {
            assert!(s.parse::<Method>().is_err(), "{s}");
        }
    }

    #[test]
    fn lemie_subsets() {
        let v = lemie_variants(2, &LaplaceKind::ALL);
        assert_eq!(v.len(), 7);
        assert_eq!(v[0].to_string(), "lemie2_t1");
        assert_eq!(v[6].to_string(), "lemie2_t123");
    }

    #[test]
    fn niw_propriety_is_a_config_check() {
        let text = r#"{"id":"x","model":{"kind":"mvn_niw","d":8,"n":1000},"parts":64,"draws_per_part":100,"methods":["cmc1"]}"#;
        assert!(matches!(ScenarioConfig::from_json(text), Err(Error::Propriety(_))));
        let ok = r#"{"id":"x","model":{"kind":"mvn_niw","d":8,"n":1000},"parts":64,"draws_per_part":100,"methods":["mie2"]}"#;
        assert!(ScenarioConfig::from_json(ok).is_ok());
    }
}

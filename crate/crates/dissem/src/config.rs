//! Run configuration: the line-oriented `key = value` manifest format, the
//! adversary/placement spec mini-languages, and protocol construction.
//!
//! Every CLI flag overrides its file key. All randomness flows from the
//! single `seed` field; there is no wall-clock seeding.

use std::collections::BTreeMap;

use crate::adversary::{Adversary, FreeEdge, GeneratedTrace, IdleCutter, ObliviousTrace};
use crate::engine::{self, Placement};
use crate::graph::{DynamicGraphTrace, Family, GeneratorSpec};
use crate::protocol::{
    oblivious_params, Flooding, MultiSource, ObliviousMultiSource, ObliviousOverrides, Protocol,
    SingleSource,
};
use crate::rng::{subseed, STREAM_ADVERSARY};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// flooding | single-source | multi-source | oblivious-multi
    pub protocol: String,
    /// oblivious:<trace-file|family> | freeedge | idlecut[:<sigma>]
    pub adversary: String,
    /// single:<node> | uniform:<s> | file:<path>
    pub placement: String,
    pub n: u32,
    pub k: u32,
    /// Edge-stability parameter, used by generated traces and idlecut.
    pub sigma: u64,
    /// Defaults to `engine::default_horizon(n, k)`.
    pub horizon: Option<u64>,
    pub seed: u64,
    /// Alphas for the competitive-residual report.
    pub alphas: Vec<f64>,
    pub overrides: ObliviousOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: "single-source".into(),
            adversary: "oblivious:random-churn".into(),
            placement: "single:0".into(),
            n: 8,
            k: 1,
            sigma: 3,
            horizon: None,
            seed: 1,
            alphas: vec![1.0],
            overrides: ObliviousOverrides::default(),
        }
    }
}

/// Parse a `key = value` manifest. `#` comments and blank lines are ignored.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for `{key}`: {value}")))
}

impl RunConfig {
    /// Apply one manifest key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "protocol" => self.protocol = value.into(),
            "adversary" => self.adversary = value.into(),
            "placement" => self.placement = value.into(),
            "n" => self.n = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "horizon" => self.horizon = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "alpha" => {
                self.alphas = value
                    .split(',')
                    .map(|s| parse_num("alpha", s.trim()))
                    .collect::<Result<_>>()?;
            }
            "c_f" => self.overrides.c_f = parse_num(key, value)?,
            "c_gamma" => self.overrides.c_gamma = parse_num(key, value)?,
            "c_ell" => self.overrides.c_ell = parse_num(key, value)?,
            "f_override" => self.overrides.f = Some(parse_num(key, value)?),
            "ell_override" => self.overrides.ell = Some(parse_num(key, value)?),
            "s_threshold_override" => self.overrides.s_threshold = Some(parse_num(key, value)?),
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_manifest(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_manifest(text)? {
            self.apply(&key, &value)?;
        }
        Ok(())
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
            .unwrap_or_else(|| engine::default_horizon(self.n, self.k))
    }

    pub fn placement(&self) -> Result<Placement> {
        let (kind, rest) = split_spec(&self.placement);
        match kind {
            "single" => {
                let node = parse_num("placement node", required(rest, "single:<node>")?)?;
                if node >= self.n {
                    return Err(Error::Config(format!(
                        "placement node {node} out of range for n={}",
                        self.n
                    )));
                }
                Ok(Placement::single(node, self.k))
            }
            "uniform" => {
                let s: u32 = parse_num("placement s", required(rest, "uniform:<s>")?)?;
                if s > self.n {
                    return Err(Error::Config(format!("uniform s={s} exceeds n={}", self.n)));
                }
                Placement::uniform(s, self.k)
            }
            "file" => {
                let path = required(rest, "file:<path>")?;
                Placement::parse(&std::fs::read_to_string(path)?)
            }
            other => Err(Error::Config(format!("unknown placement kind `{other}`"))),
        }
    }

    pub fn adversary(&self) -> Result<Box<dyn Adversary>> {
        let (kind, rest) = split_spec(&self.adversary);
        match kind {
            "freeedge" => Ok(Box::new(FreeEdge::new(self.n, self.k, self.seed))),
            "idlecut" => {
                let sigma = match rest {
                    Some(s) => parse_num("idlecut sigma", s)?,
                    None => self.sigma,
                };
                Ok(Box::new(IdleCutter::new(self.n, sigma, self.seed)))
            }
            "oblivious" => {
                let what = required(rest, "oblivious:<trace-file|family>")?;
                if let Some(family) = family_by_name(what) {
                    let spec = GeneratorSpec::new(
                        family,
                        self.n,
                        self.sigma,
                        subseed(self.seed, STREAM_ADVERSARY),
                    );
                    return Ok(Box::new(GeneratedTrace::new(&spec)?));
                }
                let trace = DynamicGraphTrace::parse(&std::fs::read_to_string(what)?)?;
                if trace.n() != self.n {
                    return Err(Error::Config(format!(
                        "trace has n={} but config says n={}",
                        trace.n(),
                        self.n
                    )));
                }
                Ok(Box::new(ObliviousTrace::new(trace)))
            }
            other => Err(Error::Config(format!("unknown adversary kind `{other}`"))),
        }
    }

    pub fn protocol(&self, placement: &Placement) -> Result<Box<dyn Protocol>> {
        let single_owner_sources = || {
            placement.sources().ok_or_else(|| {
                Error::Config(format!(
                    "protocol `{}` needs exactly one initial holder per token",
                    self.protocol
                ))
            })
        };
        match self.protocol.as_str() {
            "flooding" => Ok(Box::new(Flooding::new(self.n, placement))),
            "single-source" => {
                let sources = single_owner_sources()?;
                if sources.len() != 1 && placement.k() > 0 {
                    return Err(Error::Config(format!(
                        "single-source needs one source, placement has {}",
                        sources.len()
                    )));
                }
                let source = sources.first().map(|&(x, _)| x).unwrap_or(0);
                Ok(Box::new(SingleSource::new(self.n, placement.k(), source)))
            }
            "multi-source" => Ok(Box::new(MultiSource::new(self.n, &single_owner_sources()?))),
            "oblivious-multi" => {
                let params = oblivious_params(self.n, placement.k().max(1), &self.overrides);
                Ok(Box::new(ObliviousMultiSource::new(
                    self.n,
                    placement.k(),
                    &single_owner_sources()?,
                    params,
                    self.seed,
                )))
            }
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }

    /// Build everything and run, returning the report and the event log if
    /// requested.
    pub fn execute(&self, want_event_log: bool) -> Result<(engine::ExecutionReport, String)> {
        let placement = self.placement()?;
        let mut protocol = self.protocol(&placement)?;
        let mut adversary = self.adversary()?;
        let mut log = String::new();
        let report = engine::run(engine::RunSetup {
            protocol: protocol.as_mut(),
            adversary: adversary.as_mut(),
            n: self.n,
            placement: &placement,
            horizon: self.horizon(),
            seed: self.seed,
            sigma: self.sigma,
            event_log: want_event_log.then_some(&mut log),
        })?;
        Ok((report, log))
    }
}

pub fn family_by_name(name: &str) -> Option<Family> {
    match name {
        "static" => Some(Family::Static),
        "random-churn" => Some(Family::RandomChurn),
        "path-rewire" => Some(Family::PathRewire),
        _ => None,
    }
}

fn split_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((kind, rest)) => (kind, Some(rest)),
        None => (spec, None),
    }
}

fn required<'a>(rest: Option<&'a str>, shape: &str) -> Result<&'a str> {
    rest.filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("expected `{shape}`")))
}

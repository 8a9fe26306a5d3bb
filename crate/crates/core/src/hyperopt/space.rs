use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Log,
    Uni,
    Int,
    Cat,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Log => "log",
            Self::Uni => "uni",
            Self::Int => "int",
            Self::Cat => "cat",
        })
    }
}

/// A parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Label(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Int(v) => Some(*v as f64),
            Self::Float(v) => Some(*v),
            Self::Label(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Int(v) => write!(f, "{v}"),
            Self::Float(v) => write!(f, "{v}"),
            Self::Label(s) => f.write_str(s),
        }
    }
}

/// Parameter assignment keyed by parameter name.
pub type Config = BTreeMap<String, Value>;

/// Numeric bounds or category labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Bounds([f64; 2]),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    /// Configuration key.
    pub name: String,
    /// Display symbol.
    #[serde(default)]
    pub symbol: String,
    pub kind: ParamKind,
    pub range: Domain,
    /// Sub-range used for the initial random trials.
    pub initial: Domain,
    /// Display text for the initial and full ranges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<[String; 2]>,
}

impl Param {
    fn bounds(d: &Domain) -> Option<(f64, f64)> {
        match d {
            Domain::Bounds([a, b]) => Some((*a, *b)),
            Domain::Labels(_) => None,
        }
    }

    pub fn labels(&self) -> &[String] {
        match &self.range {
            Domain::Labels(l) => l,
            Domain::Bounds(_) => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("parameter {}: {m}", self.name)));
        match self.kind {
            ParamKind::Cat => {
                let (Domain::Labels(l), Domain::Labels(i)) = (&self.range, &self.initial) else {
                    return bad("categorical needs label lists");
                };
                if l.len() < 2 {
                    return bad("categorical needs at least two labels");
                }
                if i.is_empty() || i.iter().any(|x| !l.contains(x)) {
                    return bad("initial labels must be a non-empty subset of the labels");
                }
            }
            kind => {
                let (Some((lo, hi)), Some((ilo, ihi))) = (Self::bounds(&self.range), Self::bounds(&self.initial)) else {
                    return bad("numeric parameter needs bounds");
                };
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad("range must satisfy lo < hi");
                }
                if !(lo <= ilo && ilo <= ihi && ihi <= hi) {
                    return bad("initial range must lie inside the range");
                }
                if kind == ParamKind::Log && lo <= 0.0 {
                    return bad("log range must be positive");
                }
                if kind == ParamKind::Int && [lo, hi, ilo, ihi].iter().any(|v| v.fract() != 0.0) {
                    return bad("integer bounds must be integral");
                }
            }
        }
        Ok(())
    }

    /// Maps a value into `[0, 1]`.
    pub fn normalize(&self, v: &Value) -> Result<f64> {
        let out = || Error::OutOfRange { name: self.name.clone(), value: v.to_string() };
        if self.kind == ParamKind::Cat {
            let Value::Label(s) = v else { return Err(out()) };
            let l = self.labels();
            let i = l.iter().position(|x| x == s).ok_or_else(out)?;
            return Ok(i as f64 / (l.len() - 1) as f64);
        }
        let (lo, hi) = Self::bounds(&self.range).ok_or_else(out)?;
        let x = v.as_f64().ok_or_else(out)?;
        if !(lo..=hi).contains(&x) || (self.kind == ParamKind::Int && x.fract() != 0.0) {
            return Err(out());
        }
        Ok(match self.kind {
            ParamKind::Log => (x.ln() - lo.ln()) / (hi.ln() - lo.ln()),
            _ => (x - lo) / (hi - lo),
        })
    }

    /// Inverse of `normalize`, clamping to the range and rounding integers
    /// and categories.
    pub fn denormalize(&self, u: f64) -> Value {
        let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
        match self.kind {
            ParamKind::Cat => {
                let l = self.labels();
                let i = (u * (l.len() - 1) as f64).round() as usize;
                Value::Label(l[i.min(l.len() - 1)].clone())
            }
            ParamKind::Log => {
                let (lo, hi) = Self::bounds(&self.range).expect("validated");
                Value::Float((lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi))
            }
            ParamKind::Uni => {
                let (lo, hi) = Self::bounds(&self.range).expect("validated");
                Value::Float((lo + u * (hi - lo)).clamp(lo, hi))
            }
            ParamKind::Int => {
                let (lo, hi) = Self::bounds(&self.range).expect("validated");
                Value::Int((lo + u * (hi - lo)).round().clamp(lo, hi) as i64)
            }
        }
    }

    fn sample_in<R: Rng + ?Sized>(&self, d: &Domain, rng: &mut R) -> Value {
        match (self.kind, d) {
            (ParamKind::Cat, Domain::Labels(l)) => Value::Label(l[rng.random_range(0..l.len())].clone()),
            (ParamKind::Log, Domain::Bounds([lo, hi])) => {
                if lo == hi {
                    Value::Float(*lo)
                } else {
                    Value::Float(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi))
                }
            }
            (ParamKind::Uni, Domain::Bounds([lo, hi])) => {
                Value::Float(if lo == hi { *lo } else { rng.random_range(*lo..=*hi) })
            }
            (ParamKind::Int, Domain::Bounds([lo, hi])) => Value::Int(rng.random_range(*lo as i64..=*hi as i64)),
            _ => unreachable!("validated parameter"),
        }
    }

    /// Table-style text for the initial and full ranges.
    pub fn range_text(&self) -> [String; 2] {
        if let Some(d) = &self.display {
            return d.clone();
        }
        let fmt = |d: &Domain| match d {
            Domain::Labels(l) if l.len() == 1 => l[0].clone(),
            Domain::Labels(l) => format!("{{{}}}", l.join(", ")),
            Domain::Bounds([a, b]) if a == b => format!("{a}"),
            Domain::Bounds([a, b]) => format!("{a}–{b}"),
        };
        [fmt(&self.initial), fmt(&self.range)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<Param>,
}

impl SearchSpace {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        let s = Self { params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Config("empty search space".into()));
        }
        for (i, p) in self.params.iter().enumerate() {
            p.validate()?;
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Config(format!("duplicate parameter {}", p.name)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn normalize(&self, config: &Config) -> Result<Vec<f64>> {
        self.params
            .iter()
            .map(|p| {
                let v = config.get(&p.name).ok_or_else(|| Error::Config(format!("missing parameter {}", p.name)))?;
                p.normalize(v)
            })
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Config {
        self.params.iter().zip(u).map(|(p, &x)| (p.name.clone(), p.denormalize(x))).collect()
    }

    pub fn contains(&self, config: &Config) -> bool {
        config.len() == self.params.len() && self.normalize(config).is_ok()
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        self.params.iter().map(|p| (p.name.clone(), p.sample_in(&p.initial, rng))).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        self.params.iter().map(|p| (p.name.clone(), p.sample_in(&p.range, rng))).collect()
    }

    /// `(symbol, type, initial, range)` rows in table layout.
    pub fn table_rows(&self) -> Vec<[String; 4]> {
        self.params
            .iter()
            .map(|p| {
                let [i, r] = p.range_text();
                [p.symbol.clone(), p.kind.to_string(), i, r]
            })
            .collect()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "disk" => Ok(super::presets::disk()),
            "r2d2u" | "r2d2-u" => Ok(super::presets::r2d2u()),
            "lafe" => Ok(super::presets::lafe()),
            _ => Err(Error::Config(format!("unknown preset {name:?} (expected disk, r2d2u or lafe)"))),
        }
    }
}

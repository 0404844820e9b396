//! Text formats for instances, classes and oracle specifications.
//!
//! Instance and class files are TOML. Preference tables are stored as the
//! strict upper triangle of each prompt's matrix in row-major order, so a
//! prompt with `k` actions has `k (k - 1) / 2` entries.
//!
//! ```toml
//! eta = 1.0
//!
//! [[prompt]]
//! weight = 1.0
//! reference = [0.5, 0.25, 0.25]
//! preference = [0.75, 0.25, 0.75]   # optional: (0,1) (0,2) (1,2)
//! ```
//!
//! A class file lists finite members or declares a linear Bradley-Terry class:
//!
//! ```toml
//! truth = 0                          # optional
//! [[member]]
//! preference = [[0.75, 0.25, 0.75]]  # one triangle per prompt
//! ```
//!
//! ```toml
//! [linear]
//! bound = 5.0
//! features = [[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]]   # [prompt][action][coordinate]
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::game::{ActionSpace, GameConfig, Policy, PreferenceFunction, PromptSpace};
use crate::oracles::{bt_oracle, cyclic_oracle, RewardTable};
use crate::prefclass::{FiniteClass, LinearBTClass};

/// Writes `v` with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn toml_err(e: toml::de::Error) -> Error {
    Error::Parse(e.message().to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrompt {
    weight: f64,
    reference: Vec<f64>,
    preference: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    eta: f64,
    prompt: Vec<RawPrompt>,
}

/// A game definition with an optional preference table.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub cfg: GameConfig,
    pub preference: Option<PreferenceFunction>,
}

impl Instance {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawInstance = toml::from_str(text).map_err(toml_err)?;
        if raw.prompt.is_empty() {
            return Err(Error::Parse("instance declares no prompts".into()));
        }
        let weights: Vec<f64> = raw.prompt.iter().map(|p| p.weight).collect();
        let actions = ActionSpace::new(raw.prompt.iter().map(|p| p.reference.len()).collect())?;
        let pi0 = Policy::new(raw.prompt.iter().map(|p| p.reference.clone()).collect())?;
        let cfg = GameConfig::new(PromptSpace::new(weights)?, actions.clone(), pi0, raw.eta)?;
        let given = raw.prompt.iter().filter(|p| p.preference.is_some()).count();
        let preference = match given {
            0 => None,
            n if n == raw.prompt.len() => Some(PreferenceFunction::from_upper(
                &actions,
                raw.prompt.into_iter().map(|p| p.preference.unwrap_or_default()).collect(),
            )?),
            _ => return Err(Error::Parse("either every prompt or no prompt must carry a preference table".into())),
        };
        Ok(Self { cfg, preference })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "eta = {}", fmt_f64(self.cfg.eta()));
        for x in 0..self.cfg.num_prompts() {
            let _ = writeln!(s, "\n[[prompt]]");
            let _ = writeln!(s, "weight = {}", fmt_f64(self.cfg.d0()[x]));
            let _ = writeln!(s, "reference = {}", fmt_list(self.cfg.pi0().row(x)));
            if let Some(p) = &self.preference {
                let _ = writeln!(s, "preference = {}", fmt_list(&p.upper(x)));
            }
        }
        s
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMember {
    preference: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    bound: f64,
    features: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    truth: Option<usize>,
    member: Option<Vec<RawMember>>,
    linear: Option<RawLinear>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassFile {
    Finite(FiniteClass),
    Linear(LinearBTClass),
}

impl ClassFile {
    /// Parses a class file whose tables must fit `actions`.
    pub fn parse(text: &str, actions: &ActionSpace) -> Result<Self> {
        let raw: RawClass = toml::from_str(text).map_err(toml_err)?;
        match (raw.member, raw.linear) {
            (Some(members), None) => {
                if members.is_empty() {
                    return Err(Error::Parse("class declares no members".into()));
                }
                let tables = members
                    .into_iter()
                    .enumerate()
                    .map(|(i, m)| {
                        PreferenceFunction::from_upper(actions, m.preference).map_err(|e| Error::Parse(format!("member {i}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let class = FiniteClass::new(tables)?;
                Ok(ClassFile::Finite(match raw.truth {
                    Some(t) => class.with_truth(t)?,
                    None => class,
                }))
            }
            (None, Some(lin)) => {
                if raw.truth.is_some() {
                    return Err(Error::Parse("`truth` applies to finite classes only".into()));
                }
                let dim = lin.features.first().and_then(|r| r.first()).map_or(0, Vec::len);
                let class = LinearBTClass::new(dim, lin.features, lin.bound)?;
                if class.actions() != *actions {
                    return Err(Error::Structure("linear class features do not match the instance actions".into()));
                }
                Ok(ClassFile::Linear(class))
            }
            _ => Err(Error::Parse("class file needs exactly one of [[member]] or [linear]".into())),
        }
    }

    pub fn load(path: &Path, actions: &ActionSpace) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, actions).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn finite(&self) -> Result<&FiniteClass> {
        match self {
            ClassFile::Finite(c) => Ok(c),
            ClassFile::Linear(_) => Err(Error::Config("this algorithm needs a finite class".into())),
        }
    }
}

pub fn finite_class_to_toml(class: &FiniteClass) -> String {
    let mut s = String::new();
    if let Some(t) = class.truth {
        let _ = writeln!(s, "truth = {t}");
    }
    for p in class.members() {
        let rows: Vec<String> = (0..p.counts().len()).map(|x| fmt_list(&p.upper(x))).collect();
        let _ = writeln!(s, "\n[[member]]\npreference = [{}]", rows.join(", "));
    }
    s
}

pub fn linear_class_to_toml(class: &LinearBTClass) -> String {
    let prompts: Vec<String> = class
        .features()
        .iter()
        .map(|row| {
            let acts: Vec<String> = row.iter().map(|phi| fmt_list(phi)).collect();
            format!("[{}]", acts.join(", "))
        })
        .collect();
    format!("[linear]\nbound = {}\nfeatures = [{}]\n", fmt_f64(class.bound()), prompts.join(", "))
}

/// Where the environment's preferences come from.
///
/// Grammar: `instance` | `cyclic:W` | `bt:R;R;...` with one comma-separated
/// reward row per prompt | `class:INDEX` | `table:PATH`.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    /// The table embedded in the instance file.
    Instance,
    Cyclic(f64),
    BradleyTerry(Vec<Vec<f64>>),
    /// A member of the experiment's finite class.
    ClassMember(usize),
    /// An instance-format file holding the table.
    Table(String),
}

fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("not a finite number: {s:?}")));
    }
    Ok(v)
}

impl OracleSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "instance" {
            return Ok(OracleSpec::Instance);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unknown oracle {s:?}; expected instance, cyclic:W, bt:R;R, class:I or table:PATH")))?;
        match kind {
            "cyclic" => Ok(OracleSpec::Cyclic(parse_f64(arg)?)),
            "bt" => {
                let rows = arg
                    .split(';')
                    .map(|row| row.split(',').map(parse_f64).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok(OracleSpec::BradleyTerry(rows))
            }
            "class" => arg
                .trim()
                .parse()
                .map(OracleSpec::ClassMember)
                .map_err(|_| Error::Parse(format!("bad class index {arg:?}"))),
            "table" if !arg.is_empty() => Ok(OracleSpec::Table(arg.to_string())),
            _ => Err(Error::Parse(format!("unknown oracle {s:?}"))),
        }
    }

    /// Builds the table; relative paths are taken from `base`.
    pub fn resolve(&self, instance: &Instance, class: Option<&FiniteClass>, base: &Path) -> Result<PreferenceFunction> {
        let actions = instance.cfg.actions();
        let p = match self {
            OracleSpec::Instance => instance
                .preference
                .clone()
                .ok_or_else(|| Error::Config("oracle `instance` but the instance has no preference table".into()))?,
            OracleSpec::Cyclic(w) => {
                let k = actions.counts()[0];
                if actions.counts().iter().any(|&c| c != k) {
                    return Err(Error::Config("cyclic oracle needs the same action count at every prompt".into()));
                }
                cyclic_oracle(actions.num_prompts(), k, *w)?
            }
            OracleSpec::BradleyTerry(rows) => bt_oracle(&RewardTable::new(rows.clone())?),
            OracleSpec::ClassMember(i) => {
                let c = class.ok_or_else(|| Error::Config("oracle `class:I` needs a finite class".into()))?;
                if *i >= c.len() {
                    return Err(Error::Config(format!("class has {} members, index {i} out of range", c.len())));
                }
                c.get(*i).clone()
            }
            OracleSpec::Table(path) => Instance::load(&base.join(path))?
                .preference
                .ok_or_else(|| Error::Config(format!("{path} has no preference table")))?,
        };
        if p.counts() != actions.counts() {
            return Err(Error::Structure("oracle table does not match the instance actions".into()));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RPS: &str = "eta = 1.0\n[[prompt]]\nweight = 1.0\nreference = [0.25, 0.25, 0.5]\npreference = [0.75, 0.25, 0.75]\n";

    #[test]
    fn instance_round_trip() {
        let inst = Instance::parse(RPS).unwrap();
        assert_eq!(inst.cfg.num_actions(0), 3);
        assert_eq!(inst.preference.as_ref().unwrap().value(0, 2, 1), 0.25);
        let text = inst.to_toml();
        assert_eq!(Instance::parse(&text).unwrap(), inst);
        assert_eq!(Instance::parse(&text).unwrap().to_toml(), text);
    }

    #[test]
    fn awkward_floats_round_trip() {
        let a = ActionSpace::uniform(2, 2).unwrap();
        let pi0 = Policy::new(vec![vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let cfg = GameConfig::new(PromptSpace::new(vec![0.7, 0.3]).unwrap(), a.clone(), pi0, 0.1 + 0.2).unwrap();
        let p = PreferenceFunction::from_upper(&a, vec![vec![1.0 / 7.0], vec![5e-324]]).unwrap();
        let inst = Instance { cfg, preference: Some(p) };
        assert_eq!(Instance::parse(&inst.to_toml()).unwrap(), inst);
    }

    #[test]
    fn strict_instance_parsing() {
        assert!(Instance::parse(&format!("{RPS}color = 1\n")).is_err());
        assert!(Instance::parse("eta = 1.0\n").is_err());
        assert!(Instance::parse("eta = 0.0\n[[prompt]]\nweight = 1.0\nreference = [0.5, 0.5]\n").is_err());
        assert!(Instance::parse("eta = 1.0\n[[prompt]]\nweight = 1.0\nreference = [0.5, 0.5]\npreference = [0.1, 0.2]\n").is_err());
        assert!(Instance::parse("eta = 1.0\n[[prompt]]\nweight = 1.0\nreference = [1.0, 0.0]\n").is_err());
        let mixed = "eta = 1.0\n[[prompt]]\nweight = 1.0\nreference = [0.5, 0.5]\npreference = [0.1]\n[[prompt]]\nweight = 1.0\nreference = [0.5, 0.5]\n";
        assert!(Instance::parse(mixed).is_err());
    }

    #[test]
    fn class_files() {
        let a = ActionSpace::uniform(1, 3).unwrap();
        let text = "truth = 1\n[[member]]\npreference = [[0.5, 0.5, 0.5]]\n[[member]]\npreference = [[0.75, 0.25, 0.75]]\n";
        let ClassFile::Finite(c) = ClassFile::parse(text, &a).unwrap() else { panic!() };
        assert_eq!(c.len(), 2);
        assert_eq!(c.truth, Some(1));
        let again = ClassFile::parse(&finite_class_to_toml(&c), &a).unwrap();
        assert_eq!(again, ClassFile::Finite(c));
        let lin = "[linear]\nbound = 5.0\nfeatures = [[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]]\n";
        let ClassFile::Linear(l) = ClassFile::parse(lin, &a).unwrap() else { panic!() };
        assert_eq!(l.dim(), 2);
        assert_eq!(ClassFile::parse(&linear_class_to_toml(&l), &a).unwrap(), ClassFile::Linear(l));
        assert!(ClassFile::parse("truth = 0\n", &a).is_err());
        assert!(ClassFile::parse(&format!("{text}{lin}"), &a).is_err());
        assert!(ClassFile::parse("[[member]]\npreference = [[0.5, 0.5]]\n", &a).is_err());
    }

    #[test]
    fn oracle_specs() {
        assert_eq!(OracleSpec::parse("instance").unwrap(), OracleSpec::Instance);
        assert_eq!(OracleSpec::parse("cyclic:0.75").unwrap(), OracleSpec::Cyclic(0.75));
        assert_eq!(
            OracleSpec::parse("bt:1,0,-1;0,0,0").unwrap(),
            OracleSpec::BradleyTerry(vec![vec![1.0, 0.0, -1.0], vec![0.0; 3]])
        );
        assert_eq!(OracleSpec::parse("class:3").unwrap(), OracleSpec::ClassMember(3));
        assert_eq!(OracleSpec::parse("table:x.toml").unwrap(), OracleSpec::Table("x.toml".into()));
        for bad in ["", "cyclic", "cyclic:x", "bt:1,,2", "class:-1", "table:", "foo:1", "cyclic:inf"] {
            assert!(OracleSpec::parse(bad).is_err(), "{bad}");
        }
        let inst = Instance::parse(RPS).unwrap();
        let base = Path::new(".");
        let p = OracleSpec::parse("cyclic:0.75").unwrap().resolve(&inst, None, base).unwrap();
        assert_eq!(&p, inst.preference.as_ref().unwrap());
        assert!(OracleSpec::parse("bt:1,0").unwrap().resolve(&inst, None, base).is_err());
        assert!(OracleSpec::parse("class:0").unwrap().resolve(&inst, None, base).is_err());
    }
}

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::game::ActionSpace;

/// One labeled comparison: `y` is true when `a1` was preferred to `a2` at prompt `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Record {
    pub x: usize,
    pub a1: usize,
    pub a2: usize,
    pub y: bool,
}

/// Labeled comparisons plus the provenance needed to regenerate them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceDataset {
    pub records: Vec<Record>,
    pub seed: u64,
    pub rng: String,
    pub behavior: [String; 2],
}

const MAGIC: &str = "# prefgame-dataset";
const COLUMNS: &str = "x,a1,a2,y";

fn check_token(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.chars().any(|c| c.is_whitespace() || c == '=' || c == ',') {
        return Err(Error::InvalidParameter(format!(
            "{name} must be a non-empty token without whitespace, '=' or ',': {value:?}"
        )));
    }
    Ok(())
}

impl PreferenceDataset {
    pub fn new(records: Vec<Record>, seed: u64, rng: &str, behavior: [&str; 2]) -> Result<Self> {
        check_token("rng", rng)?;
        check_token("behavior", behavior[0])?;
        check_token("behavior", behavior[1])?;
        Ok(Self {
            records,
            seed,
            rng: rng.to_string(),
            behavior: [behavior[0].to_string(), behavior[1].to_string()],
        })
    }

    /// Dataset without records, e.g. the history before the first online batch.
    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            seed: 0,
            rng: crate::rng::RNG_ALGORITHM.to_string(),
            behavior: ["none".into(), "none".into()],
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends the records of `other`, keeping this dataset's metadata.
    pub fn extend(&mut self, other: &PreferenceDataset) {
        self.records.extend_from_slice(&other.records);
    }

    /// Errors if any record indexes outside `actions`.
    pub fn validate(&self, actions: &ActionSpace) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.x >= actions.num_prompts() {
                return Err(Error::Structure(format!("record {i}: prompt {} out of range", r.x)));
            }
            let k = actions.num_actions(r.x);
            if r.a1 >= k || r.a2 >= k {
                return Err(Error::Structure(format!(
                    "record {i}: action pair ({}, {}) out of range for prompt {}",
                    r.a1, r.a2, r.x
                )));
            }
        }
        Ok(())
    }

    /// Per-cell comparison and win counts.
    pub fn tally(&self, actions: &ActionSpace) -> Result<Tally> {
        self.validate(actions)?;
        let mut t = Tally::zeros(actions);
        for r in &self.records {
            t.add(r.x, r.a1, r.a2, r.y);
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(16 * self.records.len() + 128);
        let _ = writeln!(
            s,
            "{MAGIC} seed={} rng={} behavior1={} behavior2={}",
            self.seed, self.rng, self.behavior[0], self.behavior[1]
        );
        let _ = writeln!(s, "{COLUMNS}");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.x, r.a1, r.a2, u8::from(r.y));
        }
        s
    }

    /// Strict inverse of [`to_text`](Self::to_text).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Parse(format!("line 1: expected header starting with {MAGIC:?}")))?;
        let mut seed = None;
        let mut rng = None;
        let mut b1 = None;
        let mut b2 = None;
        for field in rest.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line 1: malformed header field {field:?}")))?;
            let slot = match k {
                "seed" => {
                    if seed.is_some() {
                        return Err(Error::Parse("line 1: duplicate seed".into()));
                    }
                    seed = Some(
                        v.parse::<u64>()
                            .map_err(|e| Error::Parse(format!("line 1: bad seed {v:?}: {e}")))?,
                    );
                    continue;
                }
                "rng" => &mut rng,
                "behavior1" => &mut b1,
                "behavior2" => &mut b2,
                _ => return Err(Error::Parse(format!("line 1: unknown header key {k:?}"))),
            };
            if slot.is_some() {
                return Err(Error::Parse(format!("line 1: duplicate key {k:?}")));
            }
            *slot = Some(v.to_string());
        }
        let missing = |n: &str| Error::Parse(format!("line 1: missing {n}"));
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let rng = rng.ok_or_else(|| missing("rng"))?;
        let b1 = b1.ok_or_else(|| missing("behavior1"))?;
        let b2 = b2.ok_or_else(|| missing("behavior2"))?;
        match lines.next() {
            Some((_, COLUMNS)) => {}
            _ => return Err(Error::Parse(format!("line 2: expected column line {COLUMNS:?}"))),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let mut parts = line.split(',');
            let mut field = |name: &str| -> Result<usize> {
                let s = parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {n}: missing field {name}")))?;
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
                    return Err(Error::Parse(format!("line {n}: field {name} is not a decimal integer: {s:?}")));
                }
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {n}: field {name}: {e}")))
            };
            let x = field("x")?;
            let a1 = field("a1")?;
            let a2 = field("a2")?;
            let y = match field("y")? {
                0 => false,
                1 => true,
                v => return Err(Error::Parse(format!("line {n}: label must be 0 or 1, got {v}"))),
            };
            if parts.next().is_some() {
                return Err(Error::Parse(format!("line {n}: too many fields")));
            }
            records.push(Record { x, a1, a2, y });
        }
        Self::new(records, seed, &rng, [&b1, &b2]).map_err(|e| Error::Parse(format!("line 1: {e}")))
    }
}

/// Aggregated counts: `n[x][a*k+b]` comparisons of `(a, b)` in that order and `wins` with `y = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    counts: Vec<usize>,
    pub n: Vec<Vec<f64>>,
    pub wins: Vec<Vec<f64>>,
}

impl Tally {
    pub fn zeros(actions: &ActionSpace) -> Self {
        let n: Vec<Vec<f64>> = actions.counts().iter().map(|&k| vec![0.0; k * k]).collect();
        Self {
            counts: actions.counts().to_vec(),
            wins: n.clone(),
            n,
        }
    }

    pub fn add(&mut self, x: usize, a1: usize, a2: usize, y: bool) {
        let k = self.counts[x];
        self.n[x][a1 * k + a2] += 1.0;
        if y {
            self.wins[x][a1 * k + a2] += 1.0;
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
        }
        for (a, b) in self.wins.iter_mut().zip(&other.wins) {
            a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.n.iter().flatten().sum()
    }
}

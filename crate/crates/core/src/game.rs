//! Prompts, actions, policies, preference tables and the KL-regularized game.
//!
//! The game value of a policy pair is
//! `E_x[ P(x, p1, p2) - KL(p1 | pi0) / eta + KL(p2 | pi0) / eta ]`
//! with natural logarithms throughout.

use crate::error::{Error, Result};

/// Tolerance for probability vectors on input; rows within it are renormalized.
pub const SIMPLEX_TOL: f64 = 1e-12;

fn normalize(row: &mut [f64]) -> std::result::Result<(), String> {
    if row.is_empty() {
        return Err("empty distribution".into());
    }
    let mut sum = 0.0;
    for &p in row.iter() {
        if !p.is_finite() {
            return Err(format!("non-finite entry {p}"));
        }
        if p < 0.0 {
            return Err(format!("negative entry {p}"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("entries sum to {sum:.17}"));
    }
    // rows already on the simplex up to rounding are kept bit-for-bit, so
    // written values parse back unchanged
    if (sum - 1.0).abs() > 8.0 * f64::EPSILON * row.len() as f64 {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

/// Finite prompt set with its sampling distribution `d0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpace {
    d0: Vec<f64>,
}

impl PromptSpace {
    pub fn new(mut d0: Vec<f64>) -> Result<Self> {
        normalize(&mut d0).map_err(|r| Error::InvalidParameter(format!("prompt distribution: {r}")))?;
        Ok(Self { d0 })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("at least one prompt is required".into()));
        }
        Ok(Self {
            d0: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.d0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d0.is_empty()
    }

    pub fn d0(&self) -> &[f64] {
        &self.d0
    }
}

/// Number of actions available at each prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    counts: Vec<usize>,
}

impl ActionSpace {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter("at least one prompt is required".into()));
        }
        if let Some(x) = counts.iter().position(|&k| k < 2) {
            return Err(Error::InvalidParameter(format!(
                "prompt {x} has {} actions; at least 2 are required",
                counts[x]
            )));
        }
        Ok(Self { counts })
    }

    pub fn uniform(n_prompts: usize, n_actions: usize) -> Result<Self> {
        Self::new(vec![n_actions; n_prompts])
    }

    pub fn num_prompts(&self) -> usize {
        self.counts.len()
    }

    pub fn num_actions(&self, x: usize) -> usize {
        self.counts[x]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn max_actions(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Per-prompt distribution over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl Policy {
    /// Validates every row and renormalizes rows that sum to one within [`SIMPLEX_TOL`].
    pub fn new(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Structure("policy has no prompts".into()));
        }
        for (x, row) in rows.iter_mut().enumerate() {
            normalize(row).map_err(|reason| Error::InvalidDistribution { prompt: x, reason })?;
        }
        Ok(Self { rows })
    }

    /// Wraps rows produced by exact normalization inside the crate.
    pub(crate) fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        debug_assert!(rows
            .iter()
            .all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
        Self { rows }
    }

    pub fn uniform(actions: &ActionSpace) -> Self {
        Self {
            rows: actions
                .counts()
                .iter()
                .map(|&k| vec![1.0 / k as f64; k])
                .collect(),
        }
    }

    /// Point mass on `choice[x]` at each prompt.
    pub fn deterministic(actions: &ActionSpace, choice: &[usize]) -> Result<Self> {
        if choice.len() != actions.num_prompts() {
            return Err(Error::Structure(format!(
                "{} choices for {} prompts",
                choice.len(),
                actions.num_prompts()
            )));
        }
        let mut rows = Vec::with_capacity(choice.len());
        for (x, &c) in choice.iter().enumerate() {
            let k = actions.num_actions(x);
            if c >= k {
                return Err(Error::Structure(format!("action {c} out of range at prompt {x}")));
            }
            let mut row = vec![0.0; k];
            row[c] = 1.0;
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn num_prompts(&self) -> usize {
        self.rows.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    /// Largest absolute entrywise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }

    /// Per-prompt convex combination `(1 - w) * self + w * other`.
    pub fn mix(&self, other: &Policy, w: f64) -> Policy {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut r: Vec<f64> = a.iter().zip(b).map(|(u, v)| (1.0 - w) * u + w * v).collect();
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|p| *p /= s);
                r
            })
            .collect();
        Policy { rows }
    }
}

/// Anything that assigns a payoff `M(x, a, b)` to player one for the action pair `(a, b)`.
pub trait Payoff {
    fn num_prompts(&self) -> usize;
    fn num_actions(&self, x: usize) -> usize;
    /// Row-major `k x k` matrix for prompt `x`.
    fn matrix(&self, x: usize) -> &[f64];

    fn value(&self, x: usize, a: usize, b: usize) -> f64 {
        self.matrix(x)[a * self.num_actions(x) + b]
    }
}

/// Skew-symmetric preference table: `P(x,a,b) = 1 - P(x,b,a)` and `P(x,a,a) = 1/2`.
///
/// Only the strict upper triangle is accepted on construction; the rest is
/// derived, so the symmetry cannot be violated.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceFunction {
    counts: Vec<usize>,
    dense: Vec<Vec<f64>>,
}

impl PreferenceFunction {
    /// `upper[x]` lists `P(x,a,b)` for `a < b` in row-major order.
    pub fn from_upper(actions: &ActionSpace, upper: Vec<Vec<f64>>) -> Result<Self> {
        if upper.len() != actions.num_prompts() {
            return Err(Error::Structure(format!(
                "preference table has {} prompts, expected {}",
                upper.len(),
                actions.num_prompts()
            )));
        }
        let mut dense = Vec::with_capacity(upper.len());
        for (x, tri) in upper.iter().enumerate() {
            let k = actions.num_actions(x);
            if tri.len() != k * (k - 1) / 2 {
                return Err(Error::Structure(format!(
                    "prompt {x}: {} upper-triangle entries for {k} actions",
                    tri.len()
                )));
            }
            let mut m = vec![0.5; k * k];
            let mut it = tri.iter();
            for a in 0..k {
                for b in a + 1..k {
                    let p = *it.next().expect("length checked");
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidParameter(format!(
                            "preference {p} at ({x},{a},{b}) outside [0,1]"
                        )));
                    }
                    m[a * k + b] = p;
                    m[b * k + a] = 1.0 - p;
                }
            }
            dense.push(m);
        }
        Ok(Self {
            counts: actions.counts().to_vec(),
            dense,
        })
    }

    /// Builds the table from `f(x, a, b)` evaluated for `a < b`.
    pub fn from_fn(actions: &ActionSpace, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let upper = (0..actions.num_prompts())
            .map(|x| {
                let k = actions.num_actions(x);
                let mut tri = Vec::with_capacity(k * (k - 1) / 2);
                for a in 0..k {
                    for b in a + 1..k {
                        tri.push(f(x, a, b));
                    }
                }
                tri
            })
            .collect();
        Self::from_upper(actions, upper)
    }

    /// The table with every entry equal to 1/2.
    pub fn indifferent(actions: &ActionSpace) -> Self {
        Self::from_fn(actions, |_, _, _| 0.5).expect("constant table is valid")
    }

    /// `P(x, a, b)`.
    pub fn value(&self, x: usize, a: usize, b: usize) -> f64 {
        self.dense[x][a * self.counts[x] + b]
    }

    pub fn upper(&self, x: usize) -> Vec<f64> {
        let k = self.counts[x];
        let m = &self.dense[x];
        let mut tri = Vec::with_capacity(k * (k - 1) / 2);
        for a in 0..k {
            for b in a + 1..k {
                tri.push(m[a * k + b]);
            }
        }
        tri
    }

    pub fn actions(&self) -> ActionSpace {
        ActionSpace {
            counts: self.counts.clone(),
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Largest absolute difference over all triples; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &PreferenceFunction) -> f64 {
        if self.counts != other.counts {
            return f64::INFINITY;
        }
        self.dense
            .iter()
            .zip(&other.dense)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_payoff(&self) -> PayoffTable {
        PayoffTable {
            counts: self.counts.clone(),
            dense: self.dense.clone(),
        }
    }
}

impl Payoff for PreferenceFunction {
    fn num_prompts(&self) -> usize {
        self.counts.len()
    }

    fn num_actions(&self, x: usize) -> usize {
        self.counts[x]
    }

    fn matrix(&self, x: usize) -> &[f64] {
        &self.dense[x]
    }
}

/// General payoff table with no symmetry, e.g. a preference table minus a bonus.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTable {
    counts: Vec<usize>,
    dense: Vec<Vec<f64>>,
}

impl PayoffTable {
    pub fn new(actions: &ActionSpace, dense: Vec<Vec<f64>>) -> Result<Self> {
        if dense.len() != actions.num_prompts() {
            return Err(Error::Structure("payoff table prompt count mismatch".into()));
        }
        for (x, m) in dense.iter().enumerate() {
            let k = actions.num_actions(x);
            if m.len() != k * k {
                return Err(Error::Structure(format!("prompt {x}: payoff matrix is not {k}x{k}")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("prompt {x}: non-finite payoff")));
            }
        }
        Ok(Self {
            counts: actions.counts().to_vec(),
            dense,
        })
    }

    /// Entrywise `base - scale * penalty`.
    pub fn penalized(base: &impl Payoff, penalty: &impl Payoff, scale: f64) -> Result<Self> {
        if base.num_prompts() != penalty.num_prompts() {
            return Err(Error::Structure("payoff prompt count mismatch".into()));
        }
        let mut counts = Vec::new();
        let mut dense = Vec::new();
        for x in 0..base.num_prompts() {
            if base.num_actions(x) != penalty.num_actions(x) {
                return Err(Error::Structure(format!("prompt {x}: action count mismatch")));
            }
            counts.push(base.num_actions(x));
            dense.push(
                base.matrix(x)
                    .iter()
                    .zip(penalty.matrix(x))
                    .map(|(b, g)| b - scale * g)
                    .collect(),
            );
        }
        Ok(Self { counts, dense })
    }

    pub fn actions(&self) -> ActionSpace {
        ActionSpace {
            counts: self.counts.clone(),
        }
    }
}

impl Payoff for PayoffTable {
    fn num_prompts(&self) -> usize {
        self.counts.len()
    }

    fn num_actions(&self, x: usize) -> usize {
        self.counts[x]
    }

    fn matrix(&self, x: usize) -> &[f64] {
        &self.dense[x]
    }
}

/// `s(a) = sum_b M(x,a,b) q(b)`: player one's payoff per action against `q`.
pub fn row_scores(m: &impl Payoff, x: usize, q: &[f64]) -> Vec<f64> {
    let k = m.num_actions(x);
    let mat = m.matrix(x);
    (0..k)
        .map(|a| mat[a * k..(a + 1) * k].iter().zip(q).map(|(v, p)| v * p).sum())
        .collect()
}

/// `t(b) = sum_a p(a) M(x,a,b)`: player one's payoff per opposing action when it plays `p`.
pub fn column_scores(m: &impl Payoff, x: usize, p: &[f64]) -> Vec<f64> {
    let k = m.num_actions(x);
    let mat = m.matrix(x);
    let mut t = vec![0.0; k];
    for (a, &pa) in p.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (tb, v) in t.iter_mut().zip(&mat[a * k..(a + 1) * k]) {
            *tb += pa * v;
        }
    }
    t
}

pub(crate) fn bilinear(m: &impl Payoff, x: usize, p: &[f64], q: &[f64]) -> f64 {
    row_scores(m, x, q).iter().zip(p).map(|(s, w)| s * w).sum()
}

fn check_payoff_shape(m: &impl Payoff, shape: &[usize]) -> Result<()> {
    if m.num_prompts() != shape.len() || (0..shape.len()).any(|x| m.num_actions(x) != shape[x]) {
        return Err(Error::Structure(format!(
            "payoff shape {:?} does not match policy shape {:?}",
            (0..m.num_prompts()).map(|x| m.num_actions(x)).collect::<Vec<_>>(),
            shape
        )));
    }
    Ok(())
}

/// `P(x, p1, p2) = sum_{a,b} p1(a|x) p2(b|x) P(x,a,b)`.
pub fn expected_preference(m: &impl Payoff, x: usize, p1: &Policy, p2: &Policy) -> Result<f64> {
    let shape = p1.shape();
    if p2.shape() != shape {
        return Err(Error::Structure("policies have different shapes".into()));
    }
    check_payoff_shape(m, &shape)?;
    if x >= shape.len() {
        return Err(Error::Structure(format!("prompt {x} out of range")));
    }
    Ok(bilinear(m, x, p1.row(x), p2.row(x)))
}

/// KL divergence between two rows; `0 ln 0 = 0`.
pub fn kl_row(p: &[f64], q: &[f64], prompt: usize) -> Result<f64> {
    let mut kl = 0.0;
    for (a, (&pa, &qa)) in p.iter().zip(q).enumerate() {
        if pa > 0.0 {
            if qa <= 0.0 {
                return Err(Error::SupportViolation { prompt, action: a });
            }
            kl += pa * (pa / qa).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// `E_{x ~ d0} KL(p(.|x) | q(.|x))`.
pub fn expected_kl(d0: &[f64], p: &Policy, q: &Policy) -> Result<f64> {
    if p.shape() != q.shape() || p.num_prompts() != d0.len() {
        return Err(Error::Structure("policy shapes differ".into()));
    }
    let mut total = 0.0;
    for (x, &w) in d0.iter().enumerate() {
        total += w * kl_row(p.row(x), q.row(x), x)?;
    }
    Ok(total)
}

/// Prompt distribution, reference policy and KL coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    prompts: PromptSpace,
    actions: ActionSpace,
    pi0: Policy,
    eta: f64,
}

impl GameConfig {
    /// The reference policy must put positive mass on every declared action.
    pub fn new(prompts: PromptSpace, actions: ActionSpace, pi0: Policy, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        if prompts.len() != actions.num_prompts() {
            return Err(Error::Structure(format!(
                "{} prompt weights for {} prompts",
                prompts.len(),
                actions.num_prompts()
            )));
        }
        if pi0.shape() != actions.counts() {
            return Err(Error::Structure("reference policy shape does not match actions".into()));
        }
        for (x, row) in pi0.rows().iter().enumerate() {
            if let Some(a) = row.iter().position(|&p| p <= 0.0) {
                return Err(Error::SupportViolation { prompt: x, action: a });
            }
        }
        Ok(Self {
            prompts,
            actions,
            pi0,
            eta,
        })
    }

    /// Uniform prompts and uniform reference policy.
    pub fn uniform(n_prompts: usize, n_actions: usize, eta: f64) -> Result<Self> {
        let actions = ActionSpace::uniform(n_prompts, n_actions)?;
        let pi0 = Policy::uniform(&actions);
        Self::new(PromptSpace::uniform(n_prompts)?, actions, pi0, eta)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.prompts.clone(), self.actions.clone(), self.pi0.clone(), eta)
    }

    pub fn prompts(&self) -> &PromptSpace {
        &self.prompts
    }

    pub fn d0(&self) -> &[f64] {
        self.prompts.d0()
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn pi0(&self) -> &Policy {
        &self.pi0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn num_prompts(&self) -> usize {
        self.actions.num_prompts()
    }

    pub fn num_actions(&self, x: usize) -> usize {
        self.actions.num_actions(x)
    }

    /// Checks a policy's shape and that it puts no mass outside the reference support.
    pub fn check_policy(&self, p: &Policy) -> Result<()> {
        if p.shape() != self.actions.counts() {
            return Err(Error::Structure(format!(
                "policy shape {:?} does not match actions {:?}",
                p.shape(),
                self.actions.counts()
            )));
        }
        for (x, (row, r0)) in p.rows().iter().zip(self.pi0.rows()).enumerate() {
            if let Some(a) = row.iter().zip(r0).position(|(&u, &v)| u > 0.0 && v <= 0.0) {
                return Err(Error::SupportViolation { prompt: x, action: a });
            }
        }
        Ok(())
    }

    pub fn check_payoff(&self, m: &impl Payoff) -> Result<()> {
        check_payoff_shape(m, self.actions.counts())
    }

    /// `E_x KL(p | pi0)`.
    pub fn kl_to_reference(&self, p: &Policy) -> Result<f64> {
        self.check_policy(p)?;
        expected_kl(self.d0(), p, &self.pi0)
    }
}

/// Which player a best response is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    /// Maximizes `score - KL/eta`.
    Max,
    /// Minimizes `score + KL/eta`.
    Min,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// `pi(a) ∝ reference(a) exp(coef * score(a))`, normalized in log space.
pub(crate) fn tilt(reference: &[f64], score: &[f64], coef: f64) -> Vec<f64> {
    let logits: Vec<f64> = reference
        .iter()
        .zip(score)
        .map(|(&r, &s)| if r > 0.0 { r.ln() + coef * s } else { f64::NEG_INFINITY })
        .collect();
    let z = log_sum_exp(&logits);
    logits.iter().map(|l| (l - z).exp()).collect()
}

/// Exact optimizer of `±<pi, score> - KL(pi | pi0(.|x)) / eta` at prompt `x`.
pub fn gibbs_best_response(cfg: &GameConfig, x: usize, score: &[f64], sign: Sign) -> Vec<f64> {
    let coef = match sign {
        Sign::Max => cfg.eta,
        Sign::Min => -cfg.eta,
    };
    tilt(cfg.pi0.row(x), score, coef)
}

/// Best response of player one to `p2`.
pub fn best_response_max(cfg: &GameConfig, m: &impl Payoff, p2: &Policy) -> Policy {
    Policy::from_rows(
        (0..cfg.num_prompts())
            .map(|x| gibbs_best_response(cfg, x, &row_scores(m, x, p2.row(x)), Sign::Max))
            .collect(),
    )
}

/// Best response of player two to `p1`.
pub fn best_response_min(cfg: &GameConfig, m: &impl Payoff, p1: &Policy) -> Policy {
    Policy::from_rows(
        (0..cfg.num_prompts())
            .map(|x| gibbs_best_response(cfg, x, &column_scores(m, x, p1.row(x)), Sign::Min))
            .collect(),
    )
}

/// The regularized game value `J(p1, p2)` under payoff `m`.
pub fn game_value(cfg: &GameConfig, m: &impl Payoff, p1: &Policy, p2: &Policy) -> Result<f64> {
    cfg.check_payoff(m)?;
    cfg.check_policy(p1)?;
    cfg.check_policy(p2)?;
    let mut total = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        let kl1 = kl_row(p1.row(x), cfg.pi0.row(x), x)?;
        let kl2 = kl_row(p2.row(x), cfg.pi0.row(x), x)?;
        total += w * (bilinear(m, x, p1.row(x), p2.row(x)) - kl1 / cfg.eta + kl2 / cfg.eta);
    }
    Ok(total)
}

/// Best-response value from the log-partition function, without forming the response.
///
/// `Sign::Max` gives `max_p1 J(p1, fixed)`; `Sign::Min` gives `min_p2 J(fixed, p2)`.
pub fn best_response_value(cfg: &GameConfig, m: &impl Payoff, fixed: &Policy, sign: Sign) -> Result<f64> {
    cfg.check_payoff(m)?;
    cfg.check_policy(fixed)?;
    let eta = cfg.eta;
    let mut total = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        let r0 = cfg.pi0.row(x);
        let kl = kl_row(fixed.row(x), r0, x)?;
        let logits = |s: Vec<f64>, c: f64| -> Vec<f64> { r0.iter().zip(&s).map(|(p, v)| p.ln() + c * v).collect() };
        total += w * match sign {
            Sign::Max => log_sum_exp(&logits(row_scores(m, x, fixed.row(x)), eta)) / eta + kl / eta,
            Sign::Min => -log_sum_exp(&logits(column_scores(m, x, fixed.row(x)), -eta)) / eta - kl / eta,
        };
    }
    Ok(total)
}

/// `J(†, p2) - J(p1, †)`, clamped at zero against rounding.
pub fn duality_gap(cfg: &GameConfig, m: &impl Payoff, p1: &Policy, p2: &Policy) -> Result<f64> {
    let br1 = best_response_max(cfg, m, p2);
    let br2 = best_response_min(cfg, m, p1);
    let upper = game_value(cfg, m, &br1, p2)?;
    let lower = game_value(cfg, m, p1, &br2)?;
    Ok((upper - lower).max(0.0))
}

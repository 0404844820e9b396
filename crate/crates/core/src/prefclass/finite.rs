use crate::error::{Error, Result};
use crate::game::{bilinear, ActionSpace, GameConfig, Payoff, PayoffTable, Policy, PreferenceFunction};
use crate::oracles::{PreferenceDataset, Tally};

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` before taking logs.
pub const LIKELIHOOD_CLIP: f64 = 1e-12;

/// Explicit finite list of preference tables sharing one action space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteClass {
    members: Vec<PreferenceFunction>,
    /// Index of the ground truth when known; diagnostic only.
    pub truth: Option<usize>,
}

impl FiniteClass {
    pub fn new(members: Vec<PreferenceFunction>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidParameter("preference class must be nonempty".into()))?;
        if let Some(i) = members.iter().position(|m| m.counts() != first.counts()) {
            return Err(Error::Structure(format!("class member {i} has a different action space")));
        }
        Ok(Self { members, truth: None })
    }

    pub fn with_truth(mut self, index: usize) -> Result<Self> {
        if index >= self.members.len() {
            return Err(Error::InvalidParameter(format!("truth index {index} out of range")));
        }
        self.truth = Some(index);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[PreferenceFunction] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &PreferenceFunction {
        &self.members[i]
    }

    pub fn actions(&self) -> ActionSpace {
        self.members[0].actions()
    }

    /// Sub-class made of the given member indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<FiniteClass> {
        let members = indices.iter().map(|&i| self.members[i].clone()).collect();
        let mut c = FiniteClass::new(members)?;
        c.truth = self.truth.and_then(|t| indices.iter().position(|&i| i == t));
        Ok(c)
    }

    fn tally(&self, d: &PreferenceDataset) -> Result<Tally> {
        d.tally(&self.actions())
    }

    /// Index of the maximum-likelihood member; ties go to the lowest index.
    pub fn mle(&self, d: &PreferenceDataset) -> Result<usize> {
        Ok(self.mle_tally(&self.tally(d)?))
    }

    pub fn mle_tally(&self, t: &Tally) -> usize {
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for (i, m) in self.members.iter().enumerate() {
            let ll = log_likelihood_tally(m, t);
            if ll > best_ll {
                best = i;
                best_ll = ll;
            }
        }
        best
    }

    /// Members within squared in-sample distance `beta^2 / 2` of member `p_hat`.
    pub fn version_space(&self, p_hat: usize, d: &PreferenceDataset, beta: f64) -> Result<Vec<usize>> {
        Ok(self.version_space_tally(p_hat, &self.tally(d)?, beta))
    }

    pub fn version_space_tally(&self, p_hat: usize, t: &Tally, beta: f64) -> Vec<usize> {
        let radius = beta * beta / 2.0;
        let centre = &self.members[p_hat];
        (0..self.members.len())
            .filter(|&i| i == p_hat || sq_distance_tally(&self.members[i], centre, t) <= radius)
            .collect()
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(LIKELIHOOD_CLIP, 1.0 - LIKELIHOOD_CLIP)
}

/// Clipped log-likelihood from aggregated counts.
pub fn log_likelihood_tally(p: &PreferenceFunction, t: &Tally) -> f64 {
    let mut ll = 0.0;
    for x in 0..t.n.len() {
        let k = t.counts()[x];
        for a in 0..k {
            for b in 0..k {
                let n = t.n[x][a * k + b];
                if n == 0.0 {
                    continue;
                }
                let w = t.wins[x][a * k + b];
                let q = clip(p.value(x, a, b));
                ll += w * q.ln() + (n - w) * (1.0 - q).ln();
            }
        }
    }
    ll
}

/// `sum_i y_i ln P(x_i,a1_i,a2_i) + (1 - y_i) ln P(x_i,a2_i,a1_i)` with clipping.
pub fn log_likelihood(p: &PreferenceFunction, d: &PreferenceDataset) -> Result<f64> {
    Ok(log_likelihood_tally(p, &d.tally(&p.actions())?))
}

/// Record-by-record log-likelihood without clipping; `-inf` on a zero-probability label.
pub fn log_likelihood_unclipped(p: &PreferenceFunction, d: &PreferenceDataset) -> Result<f64> {
    d.validate(&p.actions())?;
    Ok(d.records
        .iter()
        .map(|r| {
            if r.y {
                p.value(r.x, r.a1, r.a2).ln()
            } else {
                p.value(r.x, r.a2, r.a1).ln()
            }
        })
        .sum())
}

pub fn sq_distance_tally(p: &PreferenceFunction, q: &PreferenceFunction, t: &Tally) -> f64 {
    let mut s = 0.0;
    for x in 0..t.n.len() {
        let (mp, mq) = (p.matrix(x), q.matrix(x));
        for ((n, u), v) in t.n[x].iter().zip(mp).zip(mq) {
            if *n > 0.0 {
                s += n * (u - v) * (u - v);
            }
        }
    }
    s
}

/// `E_{x ~ d0, a1 ~ p1, a2 ~ p2}[(P - Q)(x, a1, a2)^2]`.
pub fn expected_sq_distance(cfg: &GameConfig, p: &PreferenceFunction, q: &PreferenceFunction, p1: &Policy, p2: &Policy) -> f64 {
    let mut total = 0.0;
    for (x, &w) in cfg.d0().iter().enumerate() {
        let k = cfg.num_actions(x);
        let (mp, mq) = (p.matrix(x), q.matrix(x));
        for (a, &u) in p1.row(x).iter().enumerate() {
            for (b, &v) in p2.row(x).iter().enumerate() {
                let d = mp[a * k + b] - mq[a * k + b];
                total += w * u * v * d * d;
            }
        }
    }
    total
}

/// `sum_i (P - Q)(x_i, a1_i, a2_i)^2`.
pub fn sq_distance(p: &PreferenceFunction, q: &PreferenceFunction, d: &PreferenceDataset) -> Result<f64> {
    if p.counts() != q.counts() {
        return Err(Error::Structure("tables have different action spaces".into()));
    }
    Ok(sq_distance_tally(p, q, &d.tally(&p.actions())?))
}

/// Supremum over the class of `|P - P_hat|(x,a1,a2) / sqrt(lambda + sq_distance(P, P_hat, D))`.
pub fn pointwise_bonus(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    d: &PreferenceDataset,
    lambda: f64,
    x: usize,
    a1: usize,
    a2: usize,
) -> Result<f64> {
    check_lambda(lambda)?;
    let t = d.tally(&class.actions())?;
    let k = class.actions().num_actions(x);
    if a1 >= k || a2 >= k {
        return Err(Error::Structure("action out of range".into()));
    }
    Ok(class
        .members()
        .iter()
        .map(|m| (m.value(x, a1, a2) - p_hat.value(x, a1, a2)).abs() / (lambda + sq_distance_tally(m, p_hat, &t)).sqrt())
        .fold(0.0, f64::max))
}

/// The pointwise bonus for every `(x, a1, a2)` as a payoff table (symmetric, zero diagonal).
pub fn pointwise_bonus_table(class: &FiniteClass, p_hat: &PreferenceFunction, t: &Tally, lambda: f64) -> Result<PayoffTable> {
    check_lambda(lambda)?;
    let actions = class.actions();
    let scale: Vec<f64> = class
        .members()
        .iter()
        .map(|m| 1.0 / (lambda + sq_distance_tally(m, p_hat, t)).sqrt())
        .collect();
    let dense = (0..actions.num_prompts())
        .map(|x| {
            let h = p_hat.matrix(x);
            let mut g = vec![0.0f64; h.len()];
            for (m, s) in class.members().iter().zip(&scale) {
                for ((gi, u), v) in g.iter_mut().zip(m.matrix(x)).zip(h) {
                    *gi = gi.max((u - v).abs() * s);
                }
            }
            g
        })
        .collect();
    PayoffTable::new(&actions, dense)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Policy-pair uncertainty against an estimate, with per-member in-sample terms cached.
///
/// For member `P` the ratio is `|E_x[P - P_hat](p1, p2)| / sqrt(lambda + sq_distance(P, P_hat, history) / m)`.
#[derive(Debug, Clone)]
pub struct PairBonus<'a> {
    pub class: &'a FiniteClass,
    pub p_hat: &'a PreferenceFunction,
    scale: Vec<f64>,
}

impl<'a> PairBonus<'a> {
    pub fn new(class: &'a FiniteClass, p_hat: &'a PreferenceFunction, history: &Tally, lambda: f64, m: usize) -> Result<Self> {
        check_lambda(lambda)?;
        if m == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        let scale = class
            .members()
            .iter()
            .map(|p| 1.0 / (lambda + sq_distance_tally(p, p_hat, history) / m as f64).sqrt())
            .collect();
        Ok(Self { class, p_hat, scale })
    }

    /// `1 / sqrt(lambda + sq_distance / m)` for each member.
    pub fn scales(&self) -> &[f64] {
        &self.scale
    }

    /// `E_x[P_i - P_hat](p1, p2)` computed exactly over `d0`.
    pub fn signed_gap(&self, cfg: &GameConfig, i: usize, p1: &Policy, p2: &Policy) -> f64 {
        let p = self.class.get(i);
        cfg.d0()
            .iter()
            .enumerate()
            .map(|(x, w)| w * (bilinear(p, x, p1.row(x), p2.row(x)) - bilinear(self.p_hat, x, p1.row(x), p2.row(x))))
            .sum()
    }

    /// Value of the supremum and the first member attaining it.
    pub fn argmax(&self, cfg: &GameConfig, p1: &Policy, p2: &Policy) -> (f64, usize) {
        let mut best = (0.0, 0);
        for i in 0..self.class.len() {
            let v = self.signed_gap(cfg, i, p1, p2).abs() * self.scale[i];
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn value(&self, cfg: &GameConfig, p1: &Policy, p2: &Policy) -> f64 {
        self.argmax(cfg, p1, p2).0
    }
}

/// Supremum over the class of `|E_x[P - P_hat](p1, p2)| / sqrt(lambda + sq_distance(P, P_hat, history) / m)`.
#[allow(clippy::too_many_arguments)]
pub fn pair_bonus_empirical(
    class: &FiniteClass,
    p_hat: &PreferenceFunction,
    history: &PreferenceDataset,
    lambda: f64,
    m: usize,
    cfg: &GameConfig,
    p1: &Policy,
    p2: &Policy,
) -> Result<f64> {
    cfg.check_policy(p1)?;
    cfg.check_policy(p2)?;
    let t = history.tally(&class.actions())?;
    Ok(PairBonus::new(class, p_hat, &t, lambda, m)?.value(cfg, p1, p2))
}

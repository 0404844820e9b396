use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{ActionSpace, GameConfig, Policy, PreferenceFunction};
use crate::oracles::{sigmoid, PreferenceDataset};

/// Slack allowed on `|phi(x,a)| <= 1` for features read from text.
const FEATURE_NORM_SLACK: f64 = 1e-12;

/// Bradley-Terry preferences with linear reward `r(x,a) = <theta, phi(x,a)>`, `|theta| <= B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBTClass {
    dim: usize,
    features: Vec<Vec<Vec<f64>>>,
    bound: f64,
    /// Current estimate; zero until fitted.
    pub theta_hat: Vec<f64>,
}

impl LinearBTClass {
    /// `features[x][a]` is `phi(x, a)`; every vector must have length `dim` and norm at most 1.
    pub fn new(dim: usize, features: Vec<Vec<Vec<f64>>>, bound: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("feature dimension must be positive".into()));
        }
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("parameter bound must be nonnegative, got {bound}")));
        }
        ActionSpace::new(features.iter().map(Vec::len).collect())?;
        for (x, row) in features.iter().enumerate() {
            for (a, phi) in row.iter().enumerate() {
                if phi.len() != dim {
                    return Err(Error::Structure(format!("feature ({x},{a}) has length {}, expected {dim}", phi.len())));
                }
                if phi.iter().any(|v| !v.is_finite()) || norm(phi) > 1.0 + FEATURE_NORM_SLACK {
                    return Err(Error::InvalidParameter(format!("feature ({x},{a}) must be finite with norm at most 1")));
                }
            }
        }
        Ok(Self {
            dim,
            features,
            bound,
            theta_hat: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn features(&self) -> &[Vec<Vec<f64>>] {
        &self.features
    }

    pub fn actions(&self) -> ActionSpace {
        ActionSpace::new(self.features.iter().map(Vec::len).collect()).expect("validated")
    }

    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        &self.features[x][a]
    }

    /// `phi(x, a) - phi(x, b)`.
    pub fn diff(&self, x: usize, a: usize, b: usize) -> Vec<f64> {
        self.features[x][a].iter().zip(&self.features[x][b]).map(|(u, v)| u - v).collect()
    }

    /// The preference table `sigmoid(<theta, phi(x,a) - phi(x,b)>)`.
    pub fn preference(&self, theta: &[f64]) -> PreferenceFunction {
        PreferenceFunction::from_fn(&self.actions(), |x, a, b| sigmoid(dot(theta, &self.diff(x, a, b))))
            .expect("sigmoid values lie in [0, 1]")
    }

    /// `E_x E_{a ~ p}[phi(x, a)]` under `d0`.
    pub fn mean_feature(&self, d0: &[f64], p: &Policy) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (x, &w) in d0.iter().enumerate() {
            for (a, &pa) in p.row(x).iter().enumerate() {
                for (vi, f) in v.iter_mut().zip(&self.features[x][a]) {
                    *vi += w * pa * f;
                }
            }
        }
        v
    }

    /// Maximum-likelihood estimate over the parameter ball; also stored in `theta_hat`.
    pub fn fit(&mut self, d: &PreferenceDataset) -> Result<Vec<f64>> {
        let actions = self.actions();
        let t = d.tally(&actions)?;
        let mut obs = Vec::new();
        for x in 0..actions.num_prompts() {
            let k = actions.num_actions(x);
            for a in 0..k {
                for b in 0..k {
                    let n = t.n[x][a * k + b];
                    if n > 0.0 {
                        obs.push(WeightedComparison {
                            diff: self.diff(x, a, b),
                            weight: n,
                            wins: t.wins[x][a * k + b],
                        });
                    }
                }
            }
        }
        let fit = fit_logistic(&obs, self.dim, self.bound, &FitOptions::default())?;
        self.theta_hat = fit.theta.clone();
        Ok(fit.theta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `weight` comparisons with feature difference `diff`, of which `wins` favoured the first action.
///
/// Weights and wins may be fractional, which turns the likelihood into a
/// population cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedComparison {
    pub diff: Vec<f64>,
    pub weight: f64,
    pub wins: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Norm of the projected-gradient step scaled by the step size inverse.
    pub grad_norm: f64,
}

/// `sum_i wins_i ln sigmoid(<theta, diff_i>) + (weight_i - wins_i) ln sigmoid(-<theta, diff_i>)`.
pub fn logistic_log_likelihood(obs: &[WeightedComparison], theta: &[f64]) -> f64 {
    obs.iter()
        .map(|o| {
            let z = dot(theta, &o.diff);
            o.wins * log_sigmoid(z) + (o.weight - o.wins) * log_sigmoid(-z)
        })
        .sum()
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn project(theta: &mut [f64], bound: f64) {
    let n = norm(theta);
    if n > bound {
        theta.iter_mut().for_each(|v| *v *= bound / n);
    }
}

/// Projected gradient ascent on the weighted logistic likelihood over `|theta| <= bound`.
///
/// The step is `1/L` with `L = lambda_max(sum_i weight_i diff_i diff_i^T) / 4`,
/// the Lipschitz constant of the gradient. Iteration stops when the
/// gradient mapping has norm at most `tol`.
pub fn fit_logistic(obs: &[WeightedComparison], dim: usize, bound: f64, opts: &FitOptions) -> Result<LogisticFit> {
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for o in obs {
        let v = DVector::from_column_slice(&o.diff);
        h += o.weight * &v * v.transpose();
    }
    let lip = 0.25 * h.symmetric_eigenvalues().max();
    let mut theta = vec![0.0; dim];
    if lip <= 0.0 {
        return Ok(LogisticFit {
            log_likelihood: logistic_log_likelihood(obs, &theta),
            theta,
            iterations: 0,
            grad_norm: 0.0,
        });
    }
    let step = 1.0 / lip;
    let mut grad_norm = f64::INFINITY;
    for it in 0..opts.max_iter {
        let mut grad = vec![0.0; dim];
        for o in obs {
            let r = o.wins - o.weight * sigmoid(dot(&theta, &o.diff));
            for (g, d) in grad.iter_mut().zip(&o.diff) {
                *g += r * d;
            }
        }
        let mut next: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
        project(&mut next, bound);
        grad_norm = next.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() * lip;
        theta = next;
        if grad_norm <= opts.tol {
            return Ok(LogisticFit {
                log_likelihood: logistic_log_likelihood(obs, &theta),
                theta,
                iterations: it + 1,
                grad_norm,
            });
        }
    }
    Err(Error::LinearFit {
        iterations: opts.max_iter,
        grad_norm,
        theta,
    })
}

/// Ridge-regularized design matrix of compared feature differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub sigma: DMatrix<f64>,
    pub lambda: f64,
}

impl Covariance {
    /// `lambda (1 + e^B)^2 I`.
    pub fn initial(dim: usize, lambda: f64, bound: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let s = lambda * (1.0 + bound.exp()).powi(2);
        Ok(Self {
            sigma: DMatrix::identity(dim, dim) * s,
            lambda,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.sigma.clone().symmetric_eigenvalues().min()
    }
}

/// Adds `E_{x ~ d0, a1 ~ p1, a2 ~ p2}[(phi(x,a1) - phi(x,a2))(phi(x,a1) - phi(x,a2))^T]`.
pub fn covariance_update(cov: &Covariance, class: &LinearBTClass, cfg: &GameConfig, p1: &Policy, p2: &Policy) -> Result<Covariance> {
    cfg.check_policy(p1)?;
    cfg.check_policy(p2)?;
    if class.actions() != *cfg.actions() {
        return Err(Error::Structure("feature map and game have different action spaces".into()));
    }
    let d = class.dim();
    if cov.sigma.nrows() != d {
        return Err(Error::Structure("covariance dimension mismatch".into()));
    }
    let mut add = DMatrix::<f64>::zeros(d, d);
    for (x, &w) in cfg.d0().iter().enumerate() {
        for (a, &pa) in p1.row(x).iter().enumerate() {
            for (b, &pb) in p2.row(x).iter().enumerate() {
                let mass = w * pa * pb;
                if mass == 0.0 {
                    continue;
                }
                let v = DVector::from_vec(class.diff(x, a, b));
                add += mass * &v * v.transpose();
            }
        }
    }
    let sigma = &cov.sigma + add;
    Ok(Covariance {
        sigma: (&sigma + sigma.transpose()) * 0.5,
        lambda: cov.lambda,
    })
}

/// `(1 + e^B) * |E_x[phi(x, p1) - phi(x, p2)]|` in the norm induced by the inverse covariance.
pub fn linear_bt_bonus(cov: &Covariance, class: &LinearBTClass, cfg: &GameConfig, p1: &Policy, p2: &Policy) -> Result<f64> {
    cfg.check_policy(p1)?;
    cfg.check_policy(p2)?;
    let m1 = class.mean_feature(cfg.d0(), p1);
    let m2 = class.mean_feature(cfg.d0(), p2);
    let v = DVector::from_iterator(class.dim(), m1.iter().zip(&m2).map(|(a, b)| a - b));
    let chol = cov.sigma.clone().cholesky().ok_or(Error::Singular)?;
    let q = v.dot(&chol.solve(&v)).max(0.0);
    Ok((1.0 + class.bound().exp()) * q.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::collect;

    fn two_action(phi: [f64; 2], bound: f64) -> LinearBTClass {
        LinearBTClass::new(1, vec![vec![vec![phi[0]], vec![phi[1]]]], bound).unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(LinearBTClass::new(1, vec![vec![vec![1.5], vec![0.0]]], 1.0).is_err());
        assert!(LinearBTClass::new(2, vec![vec![vec![0.5], vec![0.0]]], 1.0).is_err());
        assert!(LinearBTClass::new(1, vec![vec![vec![0.5], vec![0.0]]], -1.0).is_err());
        assert!(LinearBTClass::new(1, vec![vec![vec![0.5]]], 1.0).is_err());
    }

    #[test]
    fn preference_table() {
        let c = two_action([0.5, -0.5], 5.0);
        let p = c.preference(&[2.0]);
        assert!((p.value(0, 0, 1) - sigmoid(2.0)).abs() < 1e-15);
    }

    #[test]
    fn fit_matches_closed_form_on_one_pair() {
        // One comparison type: the MLE solves sigmoid(theta) = wins / n.
        let obs = [WeightedComparison { diff: vec![1.0], weight: 100.0, wins: 70.0 }];
        let fit = fit_logistic(&obs, 1, 5.0, &FitOptions::default()).unwrap();
        let expected = (0.7f64 / 0.3).ln();
        assert!((fit.theta[0] - expected).abs() < 1e-8);
    }

    #[test]
    fn fit_respects_the_bound() {
        let obs = [WeightedComparison { diff: vec![1.0, 0.0], weight: 10.0, wins: 10.0 }];
        let fit = fit_logistic(&obs, 2, 0.5, &FitOptions::default()).unwrap();
        assert!((fit.theta[0] - 0.5).abs() < 1e-12);
        assert!(fit.theta[1].abs() < 1e-12);
        let fit = fit_logistic(&[], 2, 0.5, &FitOptions::default()).unwrap();
        assert_eq!(fit.theta, vec![0.0, 0.0]);
    }

    #[test]
    fn fit_reports_non_convergence() {
        let obs = [WeightedComparison { diff: vec![1.0], weight: 100.0, wins: 70.0 }];
        let err = fit_logistic(&obs, 1, 5.0, &FitOptions { tol: 1e-8, max_iter: 1 }).unwrap_err();
        assert!(matches!(err, Error::LinearFit { iterations: 1, .. }));
    }

    #[test]
    fn fit_recovers_parameter_from_data() {
        let cfg = GameConfig::uniform(1, 2, 1.0).unwrap();
        let mut c = two_action([0.5, -0.5], 5.0);
        let truth = c.preference(&[1.0]);
        let u = Policy::uniform(cfg.actions());
        let mut inside = 0;
        for seed in 0..40 {
            let d = collect(&cfg, &u, &u, &truth, 10_000, seed, ["u", "u"]).unwrap();
            let theta = c.fit(&d).unwrap();
            if (0.9..=1.1).contains(&theta[0]) {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.95 * 40.0);
    }

    #[test]
    fn covariance_examples() {
        let cfg = GameConfig::uniform(1, 2, 1.0).unwrap();
        let c = two_action([0.5, -0.5], 0.0);
        let cov = Covariance::initial(1, 1.0, 0.0).unwrap();
        assert!((cov.sigma[(0, 0)] - 4.0).abs() < 1e-15);
        let first = Policy::deterministic(cfg.actions(), &[0]).unwrap();
        let second = Policy::deterministic(cfg.actions(), &[1]).unwrap();
        let same = covariance_update(&cov, &c, &cfg, &first, &first).unwrap();
        assert_eq!(same.sigma, cov.sigma);
        let moved = covariance_update(&cov, &c, &cfg, &first, &second).unwrap();
        assert!((moved.sigma[(0, 0)] - 5.0).abs() < 1e-15);

        // d = 1, sigma = 4, feature gap 1, B = 0 -> 2 * (1 / 2)
        let b = linear_bt_bonus(&cov, &c, &cfg, &first, &second).unwrap();
        assert!((b - 1.0).abs() < 1e-15);
        assert_eq!(linear_bt_bonus(&cov, &c, &cfg, &first, &first).unwrap(), 0.0);

        let cov = Covariance::initial(3, 0.3, 2.0).unwrap();
        assert!(cov.min_eigenvalue() >= 0.3 * (1.0 + 2f64.exp()).powi(2) * (1.0 - 1e-12));
    }
}

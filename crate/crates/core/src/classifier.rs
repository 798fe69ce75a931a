//! L2-regularized binary logistic regression.
//!
//! The objective is summed over examples rather than averaged, and the bias
//! is left out of the penalty:
//!
//! ```text
//! L(w, b) = (lambda / 2) |w|^2 + sum_i log(1 + exp(-y_i (w.x_i + b))),  y_i in {-1, +1}
//! ```
//!
//! [`train`] runs a damped Newton iteration with Armijo backtracking from a
//! fixed starting point, so identical inputs give bitwise-identical models.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("no training examples")]
    Empty,
    #[error("training set has a single class")]
    SingleClass,
    #[error("invalid training spec: {0}")]
    InvalidSpec(String),
    #[error("optimizer produced a non-finite iterate")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: Array1::zeros(d),
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: ArrayView1<'_, f64>) -> Result<f64, ClassifierError> {
        if x.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.weights.dot(&x) + self.bias)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSpec {
    pub lambda: f64,
    /// Stop once the gradient's infinity norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl TrainSpec {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ClassifierError::InvalidSpec(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(ClassifierError::InvalidSpec(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(ClassifierError::InvalidSpec(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

/// A trained model plus the optimizer's exit state.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: LinearModel,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function; the result can round to 0 or 1 for large `|z|`.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_shapes(
    model: &LinearModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
) -> Result<(), ClassifierError> {
    if x.nrows() != y.len() {
        return Err(ClassifierError::LabelCount {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(ClassifierError::Empty);
    }
    if x.ncols() != model.dim() {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.dim(),
            found: x.ncols(),
        });
    }
    Ok(())
}

fn signed(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

pub fn loss(
    model: &LinearModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    lambda: f64,
) -> Result<f64, ClassifierError> {
    check_shapes(model, x, y)?;
    let margins = x.dot(&model.weights) + model.bias;
    Ok(objective(&margins, &model.weights, y, lambda))
}

fn objective(margins: &Array1<f64>, weights: &Array1<f64>, y: &[bool], lambda: f64) -> f64 {
    let data: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| softplus(-signed(l) * m))
        .sum();
    0.5 * lambda * weights.dot(weights) + data
}

/// Exact gradient of [`loss`]: `(d/dw, d/db)`.
pub fn gradient(
    model: &LinearModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    lambda: f64,
) -> Result<(Array1<f64>, f64), ClassifierError> {
    check_shapes(model, x, y)?;
    let margins = x.dot(&model.weights) + model.bias;
    let residual = residuals(&margins, y);
    let gw = x.t().dot(&residual) + lambda * &model.weights;
    Ok((gw, residual.sum()))
}

/// `sigma(m_i) - y_i`, computed from the matching tail so the label flip is
/// an exact sign change.
fn residuals(margins: &Array1<f64>, y: &[bool]) -> Array1<f64> {
    margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| if l { -sigmoid(-m) } else { sigmoid(m) })
        .collect()
}

/// `P(y = 1 | x)`, kept strictly inside `(0, 1)`.
pub fn predict_proba(model: &LinearModel, x: ArrayView1<'_, f64>) -> Result<f64, ClassifierError> {
    let m = model.margin(x)?;
    Ok(sigmoid(m).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// `P(y = 0 | x) = 1 - P(y = 1 | x)`, accurate when the positive class saturates.
pub fn predict_complement(
    model: &LinearModel,
    x: ArrayView1<'_, f64>,
) -> Result<f64, ClassifierError> {
    let m = model.margin(x)?;
    Ok(sigmoid(-m).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Dense Cholesky solve of `a x = b`; `None` when `a` is not positive definite.
fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        l[[j, j]] = diag;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / diag;
        }
    }
    let mut z = b.clone();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[[i, k]] * z[k];
        }
        z[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[[k, i]] * z[k];
        }
        z[i] /= l[[i, i]];
    }
    Some(z)
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Fits the model by damped Newton iteration from zero (or `init`).
///
/// Returns a [`Fit`] whose `converged` flag is false when `max_iterations`
/// ran out (e.g. separable data with `lambda = 0`); the model is then the
/// lowest-loss iterate reached.
pub fn train(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    spec: &TrainSpec,
    init: Option<&LinearModel>,
) -> Result<Fit, ClassifierError> {
    spec.validate()?;
    let d = x.ncols();
    let start = init.cloned().unwrap_or_else(|| LinearModel::zeros(d));
    check_shapes(&start, x, y)?;
    let positives = y.iter().filter(|&&l| l).count();
    if positives == 0 || positives == y.len() {
        return Err(ClassifierError::SingleClass);
    }

    let n = x.nrows();
    let mut xa = Array2::<f64>::ones((n, d + 1));
    xa.slice_mut(s![.., ..d]).assign(&x);

    // theta = [w; b]
    let mut theta = Array1::<f64>::zeros(d + 1);
    theta.slice_mut(s![..d]).assign(&start.weights);
    theta[d] = start.bias;

    let eval = |theta: &Array1<f64>| -> (Array1<f64>, f64) {
        let margins = xa.dot(theta);
        let w = theta.slice(s![..d]).to_owned();
        let value = objective(&margins, &w, y, spec.lambda);
        (margins, value)
    };

    let (mut margins, mut value) = eval(&theta);
    if !value.is_finite() {
        return Err(ClassifierError::NonFinite);
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut gnorm;
    let grad_at = |theta: &Array1<f64>, margins: &Array1<f64>| -> Array1<f64> {
        let mut grad = xa.t().dot(&residuals(margins, y));
        for j in 0..d {
            grad[j] += spec.lambda * theta[j];
        }
        grad
    };
    let inf_norm = |g: &Array1<f64>| g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    loop {
        let grad = grad_at(&theta, &margins);
        gnorm = inf_norm(&grad);
        if gnorm <= spec.tolerance {
            converged = true;
            break;
        }
        if iterations == spec.max_iterations {
            break;
        }
        iterations += 1;

        let curvature: Array1<f64> = margins
            .iter()
            .map(|&m| {
                let p = sigmoid(m);
                p * (1.0 - p)
            })
            .collect();
        let weighted = &xa * &curvature.view().insert_axis(Axis(1));
        let mut hessian = xa.t().dot(&weighted);
        for j in 0..d {
            hessian[[j, j]] += spec.lambda;
        }
        let scale = hessian
            .diag()
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(1e-300);
        let mut damping = 0.0;
        let step = loop {
            let mut h = hessian.clone();
            for j in 0..=d {
                h[[j, j]] += damping;
            }
            if let Some(step) = cholesky_solve(&h, &grad) {
                if step.iter().all(|v| v.is_finite()) {
                    break Some(step);
                }
            }
            damping = if damping == 0.0 {
                scale * 1e-12
            } else {
                damping * 10.0
            };
            if damping > scale * 1e6 {
                break None;
            }
        };
        // fall back to steepest descent when the Hessian is numerically singular
        let step = step.unwrap_or_else(|| &grad / scale);

        let slope = grad.dot(&step);
        let noise = 64.0 * f64::EPSILON * value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &theta - &(t * &step);
            let (m, v) = eval(&candidate);
            if v.is_finite() {
                if v < value && v <= value - ARMIJO * t * slope {
                    accepted = Some((candidate, m, v));
                    break;
                }
                // below the objective's rounding noise only the gradient can tell progress
                if (v - value).abs() <= noise && inf_norm(&grad_at(&candidate, &m)) < gnorm {
                    accepted = Some((candidate, m, v));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((candidate, m, v)) => {
                theta = candidate;
                margins = m;
                value = v;
            }
            // no representable decrease left along the Newton direction
            None => break,
        }
    }

    let model = LinearModel {
        weights: theta.slice(s![..d]).to_owned(),
        bias: theta[d],
    };
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    Ok(Fit {
        model,
        converged,
        iterations,
        gradient_norm: gnorm,
    })
}

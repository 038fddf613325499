//! Link functions for the generalized linear model class.
//!
//! A link is a monotone map `f: [-1, 1] -> [-1, 1]` together with its
//! first two derivatives, an inverse on its range, and certified
//! regularity constants: `kappa <= |f'(z)| <= K` and `|f''(z)| <= M`
//! on the whole interval. Two links ship built in — `identity` and
//! `logistic` — and [`LinkSpec::custom`] admits user-defined links with
//! declared constants (which [`LinkSpec::certify_bounds`] checks on a
//! dense grid).

use std::fmt;
use std::sync::Arc;

use crate::error::CoreError;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A link function with evaluable derivatives, an inverse, and
/// certified bound constants. Immutable after construction; cheap to
/// clone and safe to share across threads.
#[derive(Clone)]
pub struct LinkSpec {
    name: String,
    eval: ScalarFn,
    deriv: ScalarFn,
    deriv2: ScalarFn,
    /// Closed-form inverse when available; otherwise bisection is used.
    inverse: Option<ScalarFn>,
    kappa: f64,
    big_k: f64,
    big_m: f64,
}

/// Empirical extrema measured on a dense grid over `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifiedBounds {
    /// Minimum of `|f'|` over the grid.
    pub kappa: f64,
    /// Maximum of `|f'|` over the grid.
    pub big_k: f64,
    /// Maximum of `|f''|` over the grid.
    pub big_m: f64,
}

impl fmt::Debug for LinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkSpec")
            .field("name", &self.name)
            .field("kappa", &self.kappa)
            .field("big_k", &self.big_k)
            .field("big_m", &self.big_m)
            .finish()
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LinkSpec {
    /// The identity link `f(z) = z` with its true bounds
    /// `kappa = K = 1`, `M = 0`.
    pub fn identity() -> Self {
        Self::identity_with_big_m(0.0)
    }

    /// Identity link with an explicitly declared curvature bound.
    ///
    /// `M = 0` is the true bound; passing `1.0` reproduces the looser
    /// constant used in the linear-approximation literature, which only
    /// enlarges the bonus scale.
    pub fn identity_with_big_m(big_m: f64) -> Self {
        LinkSpec {
            name: "identity".into(),
            eval: Arc::new(|z| z),
            deriv: Arc::new(|_| 1.0),
            deriv2: Arc::new(|_| 0.0),
            inverse: Some(Arc::new(|y| y)),
            kappa: 1.0,
            big_k: 1.0,
            big_m,
        }
    }

    /// The logistic link `f(z) = 1 / (1 + e^{-z})` restricted to
    /// `[-1, 1]`. Its derivative extrema on the interval sit at the
    /// endpoints (`kappa`, `M`) and at zero (`K = 1/4`).
    pub fn logistic() -> Self {
        let kappa = logistic(1.0) * (1.0 - logistic(1.0));
        let big_m = kappa * (1.0 - 2.0 * logistic(1.0)).abs();
        LinkSpec {
            name: "logistic".into(),
            eval: Arc::new(logistic),
            deriv: Arc::new(|z| {
                let p = logistic(z);
                p * (1.0 - p)
            }),
            deriv2: Arc::new(|z| {
                let p = logistic(z);
                p * (1.0 - p) * (1.0 - 2.0 * p)
            }),
            inverse: Some(Arc::new(|y| (y / (1.0 - y)).ln())),
            kappa,
            big_k: 0.25,
            big_m,
        }
    }

    /// A user-defined link with declared constants. The declarations
    /// are trusted until [`LinkSpec::certify_bounds`] is run.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: Option<ScalarFn>,
        kappa: f64,
        big_k: f64,
        big_m: f64,
    ) -> Self {
        LinkSpec {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            deriv2: Arc::new(deriv2),
            inverse,
            kappa,
            big_k,
            big_m,
        }
    }

    /// Looks up a built-in link by its config name.
    pub fn by_name(name: &str) -> Result<Self, CoreError> {
        match name {
            "identity" => Ok(Self::identity()),
            "logistic" => Ok(Self::logistic()),
            other => Err(CoreError::InputDomain(format!(
                "unknown link '{other}' (expected \"identity\" or \"logistic\")"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Lower bound on `|f'|` over `[-1, 1]`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Upper bound on `|f'|` over `[-1, 1]`.
    pub fn big_k(&self) -> f64 {
        self.big_k
    }

    /// Upper bound on `|f''|` over `[-1, 1]`.
    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    /// Evaluates the link, clamping inputs beyond `±1` (the link is only
    /// defined on `[-1, 1]`; valid inner products land there and the
    /// clamp guards floating-point drift).
    pub fn eval(&self, z: f64) -> Result<f64, CoreError> {
        if !z.is_finite() {
            return Err(CoreError::InputDomain(format!(
                "link input must be finite, got {z}"
            )));
        }
        Ok(self.eval_clamped(z))
    }

    /// Non-failing evaluation for hot loops. Callers guarantee a finite
    /// argument; the `[-1, 1]` clamp still applies.
    #[inline]
    pub fn eval_clamped(&self, z: f64) -> f64 {
        debug_assert!(z.is_finite());
        (self.eval)(z.clamp(-1.0, 1.0))
    }

    /// First derivative at `z` (clamped to the domain).
    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        (self.deriv)(z.clamp(-1.0, 1.0))
    }

    /// Second derivative at `z` (clamped to the domain).
    pub fn deriv2(&self, z: f64) -> f64 {
        (self.deriv2)(z.clamp(-1.0, 1.0))
    }

    /// The closed interval `eval([-1, 1])`.
    pub fn range(&self) -> (f64, f64) {
        let a = self.eval_clamped(-1.0);
        let b = self.eval_clamped(1.0);
        (a.min(b), a.max(b))
    }

    /// Inverts the link on its range: returns `z` with `eval(z) = y` to
    /// within `1e-10`. Uses the closed form when available, otherwise
    /// bisection (the link is monotone).
    pub fn inverse(&self, y: f64) -> Result<f64, CoreError> {
        if !y.is_finite() {
            return Err(CoreError::InputDomain(format!(
                "inverse input must be finite, got {y}"
            )));
        }
        let (lo, hi) = self.range();
        // tolerate round-off at the endpoints of the range
        if y < lo - 1e-12 || y > hi + 1e-12 {
            return Err(CoreError::Range(format!(
                "{y} outside link range [{lo}, {hi}]"
            )));
        }
        let y = y.clamp(lo, hi);
        if let Some(inv) = &self.inverse {
            return Ok(inv(y).clamp(-1.0, 1.0));
        }
        Ok(bisect_inverse(|z| self.eval_clamped(z), y))
    }

    /// Measures derivative extrema on a uniform grid and validates the
    /// declared constants against them: the declared `kappa` must lower
    /// bound the measured minimum of `|f'|`, and the declared `K`, `M`
    /// must upper bound the measured maxima. Also checks that `eval` is
    /// monotone on the grid and maps into `[-1, 1]`.
    pub fn certify_bounds(&self, grid_points: usize) -> Result<CertifiedBounds, CoreError> {
        if grid_points < 1000 {
            return Err(CoreError::InputDomain(format!(
                "certification grid needs at least 1000 points, got {grid_points}"
            )));
        }
        let mut min_d = f64::INFINITY;
        let mut max_d: f64 = 0.0;
        let mut max_d2: f64 = 0.0;
        let mut prev_val = None;
        let mut direction = 0.0_f64;
        let step = 2.0 / (grid_points - 1) as f64;
        for i in 0..grid_points {
            let z = -1.0 + step * i as f64;
            let v = self.eval_clamped(z);
            if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(CoreError::AssumptionViolation(format!(
                    "link '{}' leaves [-1, 1]: f({z}) = {v}",
                    self.name
                )));
            }
            if let Some(prev) = prev_val {
                let delta: f64 = v - prev;
                if direction == 0.0 {
                    direction = delta.signum();
                } else if delta * direction < 0.0 {
                    return Err(CoreError::AssumptionViolation(format!(
                        "link '{}' is not monotone near z = {z}",
                        self.name
                    )));
                }
            }
            prev_val = Some(v);
            let d = self.deriv(z).abs();
            let d2 = self.deriv2(z).abs();
            min_d = min_d.min(d);
            max_d = max_d.max(d);
            max_d2 = max_d2.max(d2);
        }
        if self.kappa > min_d + 1e-12 {
            return Err(CoreError::AssumptionViolation(format!(
                "link '{}': declared kappa {} exceeds measured min |f'| = {min_d}",
                self.name, self.kappa
            )));
        }
        if max_d > self.big_k + 1e-12 {
            return Err(CoreError::AssumptionViolation(format!(
                "link '{}': measured max |f'| = {max_d} exceeds declared K {}",
                self.name, self.big_k
            )));
        }
        if max_d2 > self.big_m + 1e-12 {
            return Err(CoreError::AssumptionViolation(format!(
                "link '{}': measured max |f''| = {max_d2} exceeds declared M {}",
                self.name, self.big_m
            )));
        }
        Ok(CertifiedBounds {
            kappa: min_d,
            big_k: max_d,
            big_m: max_d2,
        })
    }
}

/// Bisection on `[-1, 1]` for a monotone map. Interval width shrinks
/// below 1e-14, comfortably inside the 1e-10 contract.
fn bisect_inverse(f: impl Fn(f64) -> f64, y: f64) -> f64 {
    let increasing = f(1.0) >= f(-1.0);
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    for _ in 0..200 {
        if hi - lo < 1e-14 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        let go_right = if increasing { v < y } else { v > y };
        if go_right {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

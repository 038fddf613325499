//! Norm-ball constrained GLM least squares and the covariance /
//! Mahalanobis-bonus machinery behind the optimism bonus.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::linalg;
use crate::links::LinkSpec;

/// Solver knobs, all config-exposed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOpts {
    /// Projected-gradient iteration cap per fit.
    pub max_iters: usize,
    /// Stop when the parameter moves less than this between iterations.
    pub tolerance: f64,
    /// Rank-one updates between full re-inversions of the covariance.
    pub refresh_period: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            max_iters: 500,
            tolerance: 1e-8,
            refresh_period: 1000,
        }
    }
}

/// A fitted parameter vector confined to the ball of radius
/// `ball_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmParams {
    theta: Array1<f64>,
    ball_radius: f64,
}

impl GlmParams {
    pub fn new(theta: Array1<f64>, ball_radius: f64) -> Self {
        let norm = linalg::norm2(theta.as_slice().unwrap());
        assert!(
            norm <= ball_radius + 1e-12,
            "parameter norm {norm} exceeds ball radius {ball_radius}"
        );
        GlmParams { theta, ball_radius }
    }

    pub fn zeros(dim: usize, ball_radius: f64) -> Self {
        GlmParams {
            theta: Array1::zeros(dim),
            ball_radius,
        }
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }
}

/// Result of one constrained fit. Non-convergence is reported, never
/// fatal: the best iterate found is still returned.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: GlmParams,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Squared-loss objective `sum_t (y_t - f(<x_t, theta>))^2`.
pub fn glm_objective(
    covariates: ArrayView2<'_, f64>,
    targets: &[f64],
    link: &LinkSpec,
    theta: &[f64],
) -> f64 {
    covariates
        .rows()
        .into_iter()
        .zip(targets)
        .map(|(row, y)| {
            let z = linalg::dot(row.as_slice().unwrap(), theta);
            let r = y - link.eval_clamped(z);
            r * r
        })
        .sum()
}

/// Projected gradient descent for
/// `argmin_{||theta|| <= B} sum_t (y_t - f(<x_t, theta>))^2`,
/// with step size `1 / (2 n K^2)` and Euclidean projection onto the
/// ball. Warm-starting from the previous episode's estimate keeps the
/// per-episode cost low; starting from zero realizes the minimal-norm
/// tie-break for underdetermined identity-link problems.
pub fn fit_constrained_glm(
    covariates: ArrayView2<'_, f64>,
    targets: &[f64],
    link: &LinkSpec,
    ball_radius: f64,
    opts: &SolverOpts,
    warm_start: Option<&GlmParams>,
) -> FitOutcome {
    let n = covariates.nrows();
    let dim = covariates.ncols();
    debug_assert_eq!(targets.len(), n);
    if n == 0 {
        return FitOutcome {
            params: GlmParams::zeros(dim, ball_radius),
            converged: true,
            iterations: 0,
            objective: 0.0,
        };
    }
    let mut theta: Vec<f64> = match warm_start {
        Some(p) => p.theta().to_vec(),
        None => vec![0.0; dim],
    };
    project_to_ball(&mut theta, ball_radius);

    let step = 1.0 / (2.0 * n as f64 * link.big_k() * link.big_k());
    let mut grad = vec![0.0; dim];
    let mut proposal = vec![0.0; dim];
    let mut best_theta = theta.clone();
    let mut best_obj = glm_objective(covariates, targets, link, &theta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut obj = 0.0;
        for (row, y) in covariates.rows().into_iter().zip(targets) {
            let x = row.as_slice().unwrap();
            let z = linalg::dot(x, theta.as_slice());
            let fz = link.eval_clamped(z);
            let resid = fz - y;
            obj += resid * resid;
            let scale = 2.0 * resid * link.deriv(z);
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += scale * xi;
            }
        }
        if obj < best_obj {
            best_obj = obj;
            best_theta.copy_from_slice(&theta);
        }
        for i in 0..dim {
            proposal[i] = theta[i] - step * grad[i];
        }
        project_to_ball(&mut proposal, ball_radius);
        let movement_sq: f64 = proposal
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        theta.copy_from_slice(&proposal);
        if movement_sq.sqrt() <= opts.tolerance {
            converged = true;
            break;
        }
    }
    // settle on whichever iterate achieved the lowest loss
    let final_obj = glm_objective(covariates, targets, link, &theta);
    if final_obj < best_obj {
        best_obj = final_obj;
        best_theta.copy_from_slice(&theta);
    }
    FitOutcome {
        params: GlmParams::new(Array1::from_vec(best_theta), ball_radius),
        converged,
        iterations,
        objective: best_obj,
    }
}

fn project_to_ball(theta: &mut [f64], radius: f64) {
    let norm = linalg::norm2(theta);
    if norm > radius {
        let scale = radius / norm;
        theta.iter_mut().for_each(|t| *t *= scale);
    }
}

/// The regularized second-moment matrix `Lambda = I + sum x x^T` and
/// its inverse, maintained by rank-one Sherman--Morrison updates with a
/// periodic full re-inversion to cap floating-point drift.
#[derive(Debug)]
pub struct CovarianceState {
    lambda: Array2<f64>,
    lambda_inv: Array2<f64>,
    count: usize,
    refresh_period: usize,
    since_refresh: usize,
    drift_events: AtomicU64,
}

impl Clone for CovarianceState {
    fn clone(&self) -> Self {
        CovarianceState {
            lambda: self.lambda.clone(),
            lambda_inv: self.lambda_inv.clone(),
            count: self.count,
            refresh_period: self.refresh_period,
            since_refresh: self.since_refresh,
            drift_events: AtomicU64::new(self.drift_events.load(Ordering::Relaxed)),
        }
    }
}

impl CovarianceState {
    /// Fresh state `Lambda = I` in the given dimension.
    pub fn new(dim: usize, refresh_period: usize) -> Self {
        CovarianceState {
            lambda: Array2::eye(dim),
            lambda_inv: Array2::eye(dim),
            count: 0,
            refresh_period: refresh_period.max(1),
            since_refresh: 0,
            drift_events: AtomicU64::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn lambda(&self) -> &Array2<f64> {
        &self.lambda
    }

    pub fn lambda_inv(&self) -> &Array2<f64> {
        &self.lambda_inv
    }

    /// Times a numerically negative quadratic form was clamped to zero.
    pub fn drift_events(&self) -> u64 {
        self.drift_events.load(Ordering::Relaxed)
    }

    /// Absorbs one covariate: `Lambda += x x^T`, with the inverse
    /// updated by the Sherman--Morrison identity.
    pub fn update(&mut self, x: &[f64]) -> Result<(), CoreError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InputDomain(
                "covariance update requires finite covariates".into(),
            ));
        }
        debug_assert!(linalg::norm2(x) <= 1.0 + 1e-9);
        linalg::add_scaled_outer(&mut self.lambda, 1.0, x);
        let dim = self.dim();
        // v = Lambda_inv x
        let mut v = vec![0.0; dim];
        for (i, vi) in v.iter_mut().enumerate() {
            let row = self.lambda_inv.row(i);
            let mut acc = 0.0;
            for j in 0..dim {
                acc += row[j] * x[j];
            }
            *vi = acc;
        }
        let denom = 1.0 + linalg::dot(x, &v);
        linalg::add_scaled_outer(&mut self.lambda_inv, -1.0 / denom, &v);
        self.count += 1;
        self.since_refresh += 1;
        if self.since_refresh >= self.refresh_period {
            self.refresh();
        }
        Ok(())
    }

    /// Recomputes the inverse from scratch.
    pub fn refresh(&mut self) {
        self.lambda_inv =
            linalg::spd_inverse(&self.lambda).expect("Lambda = I + sum xx^T is positive definite");
        self.since_refresh = 0;
    }

    /// `sqrt(phi^T Lambda^{-1} phi)`, in `[0, 1]` because the smallest
    /// eigenvalue of `Lambda` is at least one and `||phi|| <= 1`.
    pub fn mahalanobis_bonus(&self, phi: &[f64]) -> f64 {
        self.bonus_sq(phi).sqrt().min(1.0)
    }

    /// The squared bonus `phi^T Lambda^{-1} phi`, clamped at zero (a
    /// negative value can only be round-off; it is counted as a drift
    /// event).
    pub fn bonus_sq(&self, phi: &[f64]) -> f64 {
        let q = linalg::quad_form(&self.lambda_inv, phi);
        if q < 0.0 {
            self.drift_events.fetch_add(1, Ordering::Relaxed);
            return 0.0;
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_ball_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let norm = linalg::norm2(&v);
            if norm <= 1.0 && norm > 1e-6 {
                return v;
            }
        }
    }

    #[test]
    fn single_sample_fit_is_exact() {
        let covariates = array![[1.0, 0.0]];
        let fit = fit_constrained_glm(
            covariates.view(),
            &[0.5],
            &LinkSpec::identity(),
            1.0,
            &SolverOpts::default(),
            None,
        );
        assert_abs_diff_eq!(fit.params.theta()[0], 0.5, epsilon = 1e-9);
        // minimal-norm completion: untouched coordinate stays zero
        assert_eq!(fit.params.theta()[1], 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn empty_data_returns_zero_vector() {
        let covariates = Array2::<f64>::zeros((0, 3));
        let fit = fit_constrained_glm(
            covariates.view(),
            &[],
            &LinkSpec::identity(),
            1.0,
            &SolverOpts::default(),
            None,
        );
        assert_eq!(fit.params.theta().to_vec(), vec![0.0; 3]);
        assert!(fit.converged);
    }

    #[test]
    fn boundary_optimum_found_for_isotropic_design() {
        // equal counts of (e1, 1) and (e2, 1): the isotropic design
        // makes the radial projection (1/sqrt(2), 1/sqrt(2)) of the
        // unconstrained optimum (1, 1) the constrained optimum
        let covariates = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let targets = [1.0, 1.0, 1.0, 1.0];
        let link = LinkSpec::identity();

        // grid search over the unit disk as the reference
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let n = 400;
        for i in 0..=n {
            for j in 0..=n {
                let cand = [
                    -1.0 + 2.0 * i as f64 / n as f64,
                    -1.0 + 2.0 * j as f64 / n as f64,
                ];
                if cand[0] * cand[0] + cand[1] * cand[1] > 1.0 {
                    continue;
                }
                let obj = glm_objective(covariates.view(), &targets, &link, &cand);
                if obj < best.0 {
                    best = (obj, cand);
                }
            }
        }
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(best.1[0], r, epsilon = 0.01);
        assert_abs_diff_eq!(best.1[1], r, epsilon = 0.01);

        let opts = SolverOpts {
            max_iters: 20_000,
            ..SolverOpts::default()
        };
        let fit = fit_constrained_glm(covariates.view(), &targets, &link, 1.0, &opts, None);
        assert_abs_diff_eq!(fit.params.theta()[0], r, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.params.theta()[1], r, epsilon = 1e-6);
        assert!(fit.objective <= best.0 + 1e-9);
    }

    #[test]
    fn fit_beats_projected_least_squares_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = 5 + (rng.random::<f64>() * 40.0) as usize;
            let dim = 1 + (rng.random::<f64>() * 4.0) as usize;
            let mut flat = Vec::with_capacity(n * dim);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                flat.extend(unit_ball_vec(dim, &mut rng));
                targets.push(rng.random::<f64>() * 2.0 - 0.5);
            }
            let covariates = Array2::from_shape_vec((n, dim), flat).unwrap();
            let opts = SolverOpts {
                max_iters: 50_000,
                ..SolverOpts::default()
            };
            let fit = fit_constrained_glm(
                covariates.view(),
                &targets,
                &LinkSpec::identity(),
                1.0,
                &opts,
                None,
            );
            let oracle = projected_ls_oracle(&covariates, &targets, 1.0);
            let oracle_obj =
                glm_objective(covariates.view(), &targets, &LinkSpec::identity(), &oracle);
            assert!(
                fit.objective <= oracle_obj + 1e-6,
                "fit {} vs oracle {}",
                fit.objective,
                oracle_obj
            );
        }
    }

    /// Unconstrained ridge-free least squares (tiny ridge for numerical
    /// rank-deficiency) followed by radial projection onto the ball.
    fn projected_ls_oracle(covariates: &Array2<f64>, targets: &[f64], radius: f64) -> Vec<f64> {
        let dim = covariates.ncols();
        let mut gram = Array2::<f64>::eye(dim) * 1e-10;
        let mut rhs = vec![0.0; dim];
        for (row, y) in covariates.rows().into_iter().zip(targets) {
            let x = row.as_slice().unwrap();
            linalg::add_scaled_outer(&mut gram, 1.0, x);
            for (r, xi) in rhs.iter_mut().zip(x) {
                *r += y * xi;
            }
        }
        let mut theta = linalg::spd_solve(&gram, &rhs).unwrap().to_vec();
        let norm = linalg::norm2(&theta);
        if norm > radius {
            theta.iter_mut().for_each(|t| *t *= radius / norm);
        }
        theta
    }

    #[test]
    fn logistic_fit_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let dim = 3;
        let mut flat = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            flat.extend(unit_ball_vec(dim, &mut rng));
            targets.push(0.3 + 0.4 * rng.random::<f64>());
        }
        let covariates = Array2::from_shape_vec((n, dim), flat).unwrap();
        let link = LinkSpec::logistic();
        let opts = SolverOpts {
            max_iters: 20_000,
            ..SolverOpts::default()
        };
        let fit = fit_constrained_glm(covariates.view(), &targets, &link, 1.0, &opts, None);
        for _ in 0..10_000 {
            let candidate = unit_ball_vec(dim, &mut rng);
            let obj = glm_objective(covariates.view(), &targets, &link, &candidate);
            assert!(fit.objective <= obj + 1e-12);
        }
    }

    #[test]
    fn covariance_basis_update_is_diagonal() {
        let mut cov = CovarianceState::new(2, 1000);
        cov.update(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(cov.lambda()[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cov.lambda()[[1, 1]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cov.lambda_inv()[[0, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cov.lambda_inv()[[1, 1]], 1.0, epsilon = 1e-15);
        assert_eq!(cov.count(), 1);
    }

    #[test]
    fn sherman_morrison_matches_adjugate_inverse() {
        // 2x2 closed-form inverse as the independent oracle
        let x = [0.6, 0.8];
        let mut cov = CovarianceState::new(2, 1000);
        cov.update(&x).unwrap();
        let m = [
            [1.0 + x[0] * x[0], x[0] * x[1]],
            [x[0] * x[1], 1.0 + x[1] * x[1]],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let expected = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(cov.lambda_inv()[[i, j]], expected[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn thousand_updates_stay_consistent_without_refresh() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 4;
        let mut cov = CovarianceState::new(dim, usize::MAX);
        for _ in 0..1000 {
            cov.update(&unit_ball_vec(dim, &mut rng)).unwrap();
        }
        let gap = linalg::product_identity_gap(cov.lambda(), cov.lambda_inv());
        assert!(gap <= 1e-8, "Frobenius gap {gap}");
    }

    #[test]
    fn update_rejects_non_finite() {
        let mut cov = CovarianceState::new(2, 1000);
        assert!(matches!(
            cov.update(&[f64::NAN, 0.0]),
            Err(CoreError::InputDomain(_))
        ));
    }

    #[test]
    fn bonus_identity_and_diagonal_cases() {
        let cov = CovarianceState::new(3, 1000);
        assert_abs_diff_eq!(cov.mahalanobis_bonus(&[1.0, 0.0, 0.0]), 1.0, epsilon = 1e-15);

        let mut cov = CovarianceState::new(2, 1000);
        for _ in 0..3 {
            cov.update(&[1.0, 0.0]).unwrap(); // Lambda = diag(4, 1)
        }
        assert_abs_diff_eq!(cov.mahalanobis_bonus(&[1.0, 0.0]), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn bonus_matches_linear_solve_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let dim = 5;
        let mut cov = CovarianceState::new(dim, 1000);
        for _ in 0..50 {
            cov.update(&unit_ball_vec(dim, &mut rng)).unwrap();
        }
        for _ in 0..20 {
            let phi = unit_ball_vec(dim, &mut rng);
            let z = linalg::spd_solve(cov.lambda(), &phi).unwrap();
            let oracle = linalg::dot(&phi, z.as_slice().unwrap()).sqrt();
            assert_abs_diff_eq!(cov.mahalanobis_bonus(&phi), oracle, epsilon = 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bonus_never_increases_as_data_accumulates(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 3;
            let phi = unit_ball_vec(dim, &mut rng);
            let mut cov = CovarianceState::new(dim, 1000);
            let mut prev = cov.mahalanobis_bonus(&phi);
            prop_assert!(prev <= 1.0);
            for _ in 0..40 {
                cov.update(&unit_ball_vec(dim, &mut rng)).unwrap();
                let next = cov.mahalanobis_bonus(&phi);
                prop_assert!(next <= prev + 1e-12);
                prop_assert!((0.0..=1.0).contains(&next));
                prev = next;
            }
        }
    }
}

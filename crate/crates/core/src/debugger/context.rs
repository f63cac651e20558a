use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every threshold and setting the checks consult.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckContext {
    pub buffer_size: usize,
    pub period: usize,
    pub max_fit_iterations: usize,
    pub window: usize,
    pub min_loss_decay: f64,
    pub fluct_smoothness_min: f64,
    pub corr_min: f64,
    pub div_low_bound: f64,
    pub van_high_bound: f64,
    pub update_log_ratio_low: f64,
    pub update_log_ratio_high: f64,
    pub dead_value_eps: f64,
    pub dead_layer_ratio: f64,
    pub weight_extreme_ratio: f64,
    pub sat_rho_min: f64,
    pub sat_layer_ratio: f64,
    pub sat_bins: usize,
    pub act_std_min: f64,
    pub act_std_max: f64,
    pub shannon_min: f64,
    pub grad_rel_err_max: f64,
    pub overfit_mae: f64,
    pub zero_loss_eps: f64,
    pub zero_loss_smoothness: f64,
    pub cka_augm_min: f64,
    pub cka_mode_min: f64,
    pub mode_loss_rel_max: f64,
    pub post_epochs: usize,
    pub regression_bias_cv: f64,
    pub forbearance_periods: usize,
    pub alpha: f64,
    pub initial_loss_rel_tol: f64,
    pub failed_on: bool,
    pub max_sampled_neurons: usize,
    pub dependency_tol: f64,
    pub input_dependency_iterations: usize,
    pub gradient_burn_in: usize,
    pub gradient_samples_per_tensor: usize,
    pub gradient_step: f64,
    /// Rows per class in the stratified batch.
    pub per_class: usize,
    /// Rows in the single batch of a regression program.
    pub regression_batch: usize,
    pub sum_ratio_low: f64,
    pub sum_ratio_high: f64,
    /// Slow updates are only reported while the monitored loss is above this
    /// fraction of its first hook value.
    pub converged_loss_fraction: f64,
    /// Smallest relative fall of the epoch-start loss, first window against
    /// last, that counts as learning the labels.
    pub corrupted_min_drop: f64,
    /// Held-out share of the dataset used as the validation sample after fitting.
    pub validation_fraction: f64,
    pub parallel: bool,
}

impl Default for CheckContext {
    fn default() -> Self {
        CheckContext {
            buffer_size: 10,
            period: 10,
            max_fit_iterations: 200,
            window: 5,
            min_loss_decay: 0.05,
            fluct_smoothness_min: 0.5,
            corr_min: 0.5,
            div_low_bound: 2.0,
            van_high_bound: 0.5,
            update_log_ratio_low: -4.0,
            update_log_ratio_high: -1.0,
            dead_value_eps: 1e-5,
            dead_layer_ratio: 0.5,
            weight_extreme_ratio: 0.95,
            sat_rho_min: 0.95,
            sat_layer_ratio: 0.5,
            sat_bins: 10,
            act_std_min: 0.5,
            act_std_max: 2.0,
            shannon_min: 0.5,
            grad_rel_err_max: 1e-2,
            overfit_mae: 1e-3,
            zero_loss_eps: 1e-5,
            zero_loss_smoothness: 0.95,
            cka_augm_min: 0.8,
            cka_mode_min: 0.75,
            mode_loss_rel_max: 0.5,
            post_epochs: 50,
            regression_bias_cv: 0.001,
            forbearance_periods: 2,
            alpha: 0.05,
            initial_loss_rel_tol: 0.1,
            failed_on: false,
            max_sampled_neurons: 64,
            dependency_tol: 1e-8,
            input_dependency_iterations: 20,
            gradient_burn_in: 10,
            gradient_samples_per_tensor: 8,
            gradient_step: 1e-6,
            per_class: 4,
            regression_batch: 32,
            sum_ratio_low: 1.8,
            sum_ratio_high: 2.2,
            converged_loss_fraction: 0.01,
            corrupted_min_drop: 0.75,
            validation_fraction: 0.2,
            parallel: true,
        }
    }
}

impl CheckContext {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("buffer_size", self.buffer_size),
            ("period", self.period),
            ("max_fit_iterations", self.max_fit_iterations),
            ("window", self.window),
            ("sat_bins", self.sat_bins),
            ("forbearance_periods", self.forbearance_periods),
            ("max_sampled_neurons", self.max_sampled_neurons),
            ("per_class", self.per_class),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window < 2 {
            return Err(Error::Config("window must be at least 2".into()));
        }
        if self.regression_batch < 2 {
            return Err(Error::Config("regression_batch must be at least 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.update_log_ratio_low >= self.update_log_ratio_high {
            return Err(Error::Config("update_log_ratio_low must be below update_log_ratio_high".into()));
        }
        if self.act_std_min >= self.act_std_max {
            return Err(Error::Config("act_std_min must be below act_std_max".into()));
        }
        if !(self.gradient_step > 0.0) {
            return Err(Error::Config("gradient_step must be positive".into()));
        }
        if !(self.converged_loss_fraction > 0.0 && self.converged_loss_fraction < 1.0) {
            return Err(Error::Config("converged_loss_fraction must lie in (0, 1)".into()));
        }
        if !(self.corrupted_min_drop > 0.0 && self.corrupted_min_drop < 1.0) {
            return Err(Error::Config("corrupted_min_drop must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let ctx: CheckContext = serde_json::from_str(r#"{"period": 5, "failed_on": true}"#).unwrap();
        assert_eq!(ctx.period, 5);
        assert!(ctx.failed_on);
        assert_eq!(ctx.buffer_size, 10);
        assert_eq!(ctx.max_fit_iterations, 200);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(serde_json::from_str::<CheckContext>(r#"{"perod": 5}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(CheckContext::default().validate().is_ok());
        let bad = CheckContext { period: 0, ..CheckContext::default() };
        assert!(bad.validate().is_err());
        let bad = CheckContext { alpha: 1.5, ..CheckContext::default() };
        assert!(bad.validate().is_err());
    }
}

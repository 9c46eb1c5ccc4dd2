//! Learnable per-category center prior: a separable Gaussian over
//! stride-normalized offsets from the box center, parameterized by
//! (mu, sigma) per axis.

use crate::diffcore::{DiffArray, DiffResult, Gradients, Parameter, Tape};

/// Sigma stays at or above this after every update; clamping (rather than
/// reparameterizing) keeps saturation observable in logs.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// No spatial prior: weight 1 for every in-box location.
    None,
    /// Standard prior with frozen parameters.
    Fixed,
    /// One learnable (mu, sigma) pair broadcast to all categories.
    Shared,
    /// Per-category learnable parameters.
    #[default]
    Category,
}

/// Center-prior parameters. `mu` and `sigma` have shape `(rows, 2)` where
/// rows is the category count (or 1 in shared mode); they learn only in
/// shared/category modes.
#[derive(Debug, Clone)]
pub struct CenterPrior {
    pub mode: PriorMode,
    pub mu: Parameter,
    pub sigma: Parameter,
    categories: usize,
}

impl CenterPrior {
    pub fn new(mode: PriorMode, categories: usize) -> Self {
        CenterPrior::with_init(mode, categories, 0.0, 1.0)
    }

    /// Alternate initialization (the standard one is mu = 0, sigma = 1).
    /// Initial sigma is floored like every later update.
    pub fn with_init(mode: PriorMode, categories: usize, mu0: f64, sigma0: f64) -> Self {
        let sigma0 = sigma0.max(SIGMA_FLOOR);
        let rows = match mode {
            PriorMode::Shared => 1,
            _ => categories.max(1),
        };
        let learnable = matches!(mode, PriorMode::Shared | PriorMode::Category);
        CenterPrior {
            mode,
            mu: Parameter::new("prior.mu", vec![rows, 2], vec![mu0; rows * 2], learnable),
            sigma: Parameter::new(
                "prior.sigma",
                vec![rows, 2],
                vec![sigma0; rows * 2],
                learnable,
            ),
            categories: categories.max(1),
        }
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    /// Row of the parameter matrices used for `category`.
    pub fn row_for(&self, category: usize) -> usize {
        match self.mode {
            PriorMode::Shared => 0,
            _ => category,
        }
    }

    /// Binds the parameters onto a record for one loss evaluation. Frozen
    /// and prior-free modes bind constants, so no gradient can form.
    pub fn bind(&self, tape: &Tape) -> DiffResult<BoundPrior> {
        let (mu, sigma) = if matches!(self.mode, PriorMode::Shared | PriorMode::Category) {
            (self.mu.bind(tape)?, self.sigma.bind(tape)?)
        } else {
            (self.mu.as_constant(), self.sigma.as_constant())
        };
        Ok(BoundPrior {
            mode: self.mode,
            mu,
            sigma,
        })
    }

    /// Folds gradients from one backward pass into the parameters.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &BoundPrior) {
        self.mu.accumulate(grads, &bound.mu);
        self.sigma.accumulate(grads, &bound.sigma);
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        [&mut self.mu, &mut self.sigma].into_iter()
    }

    /// Enforces the positivity floor; call after every optimizer step.
    pub fn clamp_sigma(&mut self) {
        for v in &mut self.sigma.values {
            if *v < SIGMA_FLOOR {
                *v = SIGMA_FLOOR;
            }
        }
    }

    /// (mu_x, mu_y) per category row.
    pub fn mu_rows(&self) -> Vec<(f64, f64)> {
        self.mu.values.chunks(2).map(|c| (c[0], c[1])).collect()
    }

    pub fn sigma_rows(&self) -> Vec<(f64, f64)> {
        self.sigma.values.chunks(2).map(|c| (c[0], c[1])).collect()
    }
}

/// Prior parameters bound to one computation record.
#[derive(Debug, Clone)]
pub struct BoundPrior {
    pub mode: PriorMode,
    pub mu: DiffArray,
    pub sigma: DiffArray,
}

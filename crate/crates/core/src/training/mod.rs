//! Losses, the joint adversarial objective, Adam, the two update regimes and
//! the early-stopped training loop.

mod fit;
mod losses;
mod optim;
mod step;

pub use fit::{fit, DevMetrics, EarlyStopper, EpochLog, FitState, StopDecision};
pub use losses::{adv_loss, hinge_loss, nll_loss};
pub use optim::{Adam, BETA1, BETA2, EPSILON};
pub use step::{joint_loss, train_step, LossParts, StepStats, TrainConfig, TrainState, UpdateRegime};

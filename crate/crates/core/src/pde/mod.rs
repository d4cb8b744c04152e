//! The assemble/solve/observe abstraction for linear PDEs.

mod steady;
mod time;

pub use steady::{
    parameter_hash, FactorCache, LhsAssembly, LhsFn, ObserverFn, RhsFn, SteadyStateLinearPde,
};
pub use time::{
    interpolation_weights, TimeDependentLinearPde, TimeForm, TimeFormFn, TimeScheme, TimeSolution,
    BLOW_UP_THRESHOLD,
};

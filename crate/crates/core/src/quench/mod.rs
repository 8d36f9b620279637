//! Quench statistics over random initial states.
//!
//! A quench prepares `|Ψ⟩` from an ensemble, evolves it and records
//! `O_Ψ(t) = ⟨Ψ|O(t)|Ψ⟩`. Over random product states the variance of that
//! value is `Σ_l p_l (d+1)^{−l}`, which is what this module estimates and
//! predicts.

mod ensemble;
mod region;
pub mod rng;
mod shots;
mod stats;
mod variance;

pub use ensemble::{
    sample_haar_state, sample_initial_state, verify_2design, EnsembleKind, EnsembleSpec, LocalState,
    SiteEnsemble, TwoDesignReport, TWO_DESIGN_TOL,
};
pub use region::{
    mc_region_variance, recover_all_regions, recover_region_distribution, region_variance_exact,
    region_variances_all, MAX_REGION_SITES,
};
pub use shots::{shot_noise_expectation, ShotEstimate, ShotPlan, ShotSampler};
pub use stats::{QuenchSamples, DEFAULT_BOOTSTRAP_RESAMPLES};
pub use variance::{
    exact_variance, exact_variance_doubled, expectation, mc_variance, mc_variance_measured,
    perturbed_state, variance_over_states, MeasurementModel, PrepErrorModel, EXPECTATION_IMAG_TOL,
};

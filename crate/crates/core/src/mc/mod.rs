//! Data-generating processes, identified-set oracles, the Monte Carlo
//! harness, rate experiments and the divergence diagnostic.

mod dgp;
mod harness;
mod oracle;
mod rates;

pub use dgp::{median_bands, missing_probability, replication_seed, simulate, DgpSpec, GridSpec, TailSide};
pub use harness::{
    assess_region, estimate_region, estimate_region_for, quantiles, run_mc, run_mc_with, write_distance_table, write_endpoint_table,
    write_manifest, write_projection_table, write_replications_csv, FailureRecord, KernelCritical, McDesign, McReport, McRow,
    OracleSummary, RegionAssessment, ReplicationRecord, LOWER_LEVELS, UPPER_LEVELS,
};
pub use oracle::{oracle_set, IdentifiedSetOracle};
pub use rates::{divergence_diagnostic, fit_rate, rate_experiment, spearman, DivergenceReport, RateRegressor, RateReport};

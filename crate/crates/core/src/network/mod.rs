//! Architecture descriptions, graph construction and cost accounting.

mod build;
mod config;
mod cost;

pub use build::{
    build_network, build_unit, BuildOptions, Initializer, Model, UnitHandle, BN_EPSILON, BN_MOMENTUM, ELU_ALPHA,
    IMAGE_FEED, TARGET_FEED,
};
pub use config::{
    config_by_name, depth_config, table2_config, Head, NetworkConfig, ResidualUnitConfig, StageConfig, StemConfig,
    CONFIG_SCHEMA_VERSION, DEPTH_SERIES, TABLE2_NAMES,
};
pub use cost::{count_flops, count_parameters, CostReport, LayerCost};

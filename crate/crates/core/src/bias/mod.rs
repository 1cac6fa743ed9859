//! Feature extraction and bias score tables.

mod io;
mod key;
mod table;

pub use io::{parse_tables, read_tables, sidecar_json, sidecar_path, tables_to_tsv, write_tables};
pub use key::{extract_features, unit_features, units, FeatureKey, NarrativeOrder, Unit};
pub use table::{
    build_tables, count_features, marginal_relation_freq, score, BiasTable, BiasTables,
};

//! Keyword graph built from article cross-references, clustered top-down with
//! modularity belief propagation (MODBP).

mod graph;
pub mod hierarchy;
pub mod metrics;
pub mod modbp;
pub mod structure;
pub mod synth;

pub use graph::{build_graph, BuildStats, GraphError, KeywordGraph};
pub use hierarchy::{build_hierarchy, summarize_communities, CommunityNode, CommunityTree, HierarchyParams, StructureTest};
pub use metrics::{modularity, nmi};
pub use modbp::{default_beta, modbp_partition, Modbp, ModbpParams, Partition};
pub use structure::{detect_structure, select_q, NullTest, Selection, StructureParams};

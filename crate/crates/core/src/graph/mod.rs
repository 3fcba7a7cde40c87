//! Layer graphs for the U-Net family, from the original network down to
//! Micro-Net, generated from one [`ArchitectureSpec`].

mod arch;
pub mod audit;
mod fire;
mod layer;
mod network;
mod summary;

pub use arch::{ArchitectureSpec, BlockKind, SkipMode, Upsample, Variant, WidthRule};
pub use fire::{build_fire_module, ConvLayer, FireLayers, FireModuleSpec};
pub use layer::{build_architecture, count_params, ConvNode, FireNode, LayerGraph, Node, ParamSpec, Role, SkipEdge};
pub use network::{ForwardCache, GradWrt, Network};
pub use summary::{render_csv, render_text, summarize, SummaryRow, SUMMARY_CSV_HEADER};

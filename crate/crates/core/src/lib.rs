//! Simulated frame-based tagged-pointer memory-safety runtime.
//!
//! Pointers carry a tag in their spare upper bits that locates the
//! per-object header either arithmetically (small-framed objects, which fit
//! in one slot) or through a shadow table keyed by the object's wrapper frame
//! (large-framed objects). An independent oracle tracks intended referents so
//! every monitor verdict can be checked.

pub mod frame;
pub mod heap;
pub mod monitor;
pub mod oracle;
pub mod shadow;
pub mod trace;
pub mod types;

pub use frame::{AddressWord, FrameTag, TagConfig, TaggedWord, WrapperFrame};
pub use heap::{HeapConfig, Placement, SimHeap};
pub use monitor::{Monitor, MonitorPolicy, Outcome, Verdict, ViolationPolicy};
pub use oracle::{Classification, ReferentMap};
pub use shadow::ShadowTable;
pub use types::{TypeId, TypeRegistry};

//! Live triage pipeline: poll a source, keep posts matching the keyword
//! query, score them, sort them into tabs by region and serve the result
//! to analysts over HTTP.

pub mod api;
pub mod bucket;
pub mod config;
pub mod query;
pub mod region;
pub mod service;
pub mod source;
pub mod store;

pub use bucket::{classify_and_bucket, tab_rule, Bucket, Tab, TabAssignment};
pub use config::{ConfigError, MonitorConfig};
pub use query::{parse_keyword_query, Query, QueryError};
pub use region::{match_region, AliasTable, RegionAlias};
pub use service::{spawn_poller, Monitor, PipelineStatus};
pub use source::{poll_once, Cursor, PostSource, ReplaySource, SourceDescriptor, SourceError};
pub use store::Store;

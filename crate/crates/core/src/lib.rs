//! Turning a research paper into a blog post draft with an LLM: document
//! ingestion, outlining, prompt construction, the provider gateway, the
//! section-by-section drafting state machine, session persistence and
//! editing analytics.

pub mod analytics;
pub mod clock;
pub mod doc;
pub mod draft;
pub mod exec;
pub mod gateway;
pub mod outline;
pub mod prompt;
pub mod store;

pub use exec::ExecMode;

//! Command-line front end: project scaffolding, in-process runs, headless
//! gate resolution, ad-hoc scoring and the HTTP service.

pub mod cli;
pub mod scaffold;
pub mod style;
pub mod terminal;
pub mod view;

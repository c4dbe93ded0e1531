//! Cryptographic access control for partitioned columnar tables.
//!
//! A data owner encrypts a table ([`backend::encrypt_table_partition`]),
//! instantiates view families over it ([`backend::add_family_partition`]),
//! and mints keys for concrete views ([`backend::view_gen`]). Holders of a
//! view key set decrypt exactly the rows and columns the view selects
//! ([`backend::reveal_view_partition`]). [`orchestrator`] runs these
//! operations over whole tables in a storage root.

pub mod backend;
pub mod crypto;
pub mod error;
pub mod oracle;
pub mod orchestrator;
pub mod planner;
pub mod table;

pub use crypto::SymKey;
pub use error::{Error, Result};

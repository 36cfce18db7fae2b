//! Context entities, their two JSON encodings, and schema validation.
//!
//! The broker stores entities in the normalized form (every attribute carries
//! a semantic type, a value and a metadata map). Clients may also speak the
//! compact `keyValues` form, where each attribute is a bare name/value pair
//! and the semantic type is inferred on the way in.

mod entity;
mod schema;

pub use entity::{
    infer_type, is_entity_id, normalize, normalize_attrs, render, render_attrs, Attribute,
    ContextEntity, Metadata, Representation,
};
pub use schema::{AttributeSpec, SchemaDef, SchemaRegistry, ValidationReport, Violation};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed entity: {0}")]
    MalformedEntity(String),
    #[error("malformed attribute `{name}`: {reason}")]
    MalformedAttribute { name: String, reason: String },
    #[error("schema for `{expected}` cannot validate entity of type `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid schema definition: {0}")]
    InvalidSchema(String),
    #[error("schema registry i/o: {0}")]
    Io(String),
}

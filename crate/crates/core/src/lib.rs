pub mod annotation;
pub mod config;
pub mod corpus;
pub mod generation;
pub mod http;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod retrieval;
pub mod text;

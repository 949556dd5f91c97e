pub mod annotation;
pub mod codegen;
pub mod linalg;
pub mod propagation;
pub mod spec_model;
pub mod stability;
pub mod checker;
pub mod pipeline;

pub mod citation;
pub mod cli;
pub mod features;
pub mod moo;
pub mod pipeline;
pub mod quality;
pub mod engine;
pub mod sim;

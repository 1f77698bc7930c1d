//! Command line front end and HTTP session service for iotbridge.

pub mod commands;
pub mod service;
pub mod settings;

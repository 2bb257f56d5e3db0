//! Tactic volatility prediction and decision toolkit.
//!
//! The crate is organized around a single pipeline: collect or synthesize a
//! trace of tactic executions ([`datagen`]), turn it into supervised
//! one-step-ahead forecasting data ([`trace`]), fit a predictor (an evolved
//! recurrent network via [`neuroevolution`] and [`rnn`], or a classical
//! baseline from [`baselines`]), drive the utility-threshold adaptation loop
//! with it ([`decision`]), and score both the forecasts and the decisions
//! ([`metrics`]).

pub mod baselines;
pub mod datagen;
pub mod decision;
pub mod metrics;
pub mod neuroevolution;
pub mod rnn;
pub mod trace;

//! Within-household contact networks estimated from egocentric diary data.
//!
//! Each household member is at home on the diary day with an age-specific
//! probability, and two members who are both home are in contact with a
//! probability that depends on their age categories. Respondents report only
//! their own contacts, so the at-home states are latent. The crate fits this
//! model by maximum likelihood, bootstraps its uncertainty, tests stratum
//! effects, and turns fitted parameters into exact distributions over complete
//! household networks.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod data_model;
pub mod error;
pub mod estimation;
pub mod ingest;
pub mod likelihood;
pub mod model_selection;
pub mod network;
pub mod optim;
pub mod simulation;

pub use data_model::{
    bin_age, AgeBins, AgeCategory, ContactCounts, DiaryDay, HouseholdComposition, ParameterVector,
    RespondentRecord, Stratum,
};
pub use error::{Error, Result};

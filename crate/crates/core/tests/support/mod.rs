#![allow(dead_code)]

pub mod bandit;
pub mod gradcheck;

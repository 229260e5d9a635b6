#![allow(dead_code)]

pub mod association;
pub mod km;
pub mod missingness;
pub mod tree;

#![allow(dead_code)]

pub mod lp;
pub mod m6;

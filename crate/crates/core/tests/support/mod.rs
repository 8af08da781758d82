#![allow(dead_code)]

pub mod fd;
pub mod oracle;

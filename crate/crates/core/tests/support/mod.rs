#![allow(dead_code)]

pub mod decimation_oracle;
pub mod knn_oracle;
pub mod walks;

pub mod critique;
pub mod dataset;
pub mod dsl;
pub mod error;
pub mod parallel;
pub mod scorer;
pub mod search;
pub mod synth;
pub mod table;
pub mod text;
pub mod trainer;
pub mod updates;

pub mod localization;
pub mod moments;
pub mod qv;
pub mod sites;
pub mod verify;
pub mod xi;

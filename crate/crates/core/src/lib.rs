pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod pose_error;
pub mod recon;
pub mod registration;
pub mod restoration;
pub mod servo;
pub mod sim2real;
pub mod simcam;

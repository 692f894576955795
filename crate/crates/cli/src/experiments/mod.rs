pub mod bounds;
pub mod disk;
pub mod ncf;
pub mod phantom;
pub mod prob_map;
pub mod snr;

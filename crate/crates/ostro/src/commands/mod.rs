pub mod action;
pub mod derive;
pub mod simulate;
pub mod unified;
pub mod verify;

//! Linear network error-correcting codes: construction of codes meeting the
//! network Singleton bound, verification of their decodability, and decoders
//! for transmissions with injected edge errors.

pub mod cli;
pub mod code;
pub mod decode;
pub mod field;
pub mod graph;

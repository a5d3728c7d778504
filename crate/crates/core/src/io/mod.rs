//! File formats: OpenDX grids, CSV tables and the ROM container.

pub mod dx;
pub mod float_text;
pub mod rom_file;
pub mod tables;

pub use dx::{read_dx, write_dx, DxGrid};
pub use rom_file::{RomArchive, RomHeader, ROM_MAGIC, ROM_SCHEMA_VERSION};
pub use tables::{format_float, write_greedy_log, write_rom_trace, write_singular_values, write_trace};

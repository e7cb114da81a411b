pub mod common;
pub mod compare_cmd;
pub mod control_cmd;
pub mod dispatch_cmd;
pub mod regions_cmd;
pub mod scenario_cmd;
pub mod simulate;
pub mod solar_cmd;
pub mod validate_cmd;

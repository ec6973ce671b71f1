//! Synthetic operational data: weather, office schedules, setpoint
//! excitation and the thermostat-controlled reference building.

pub mod dataset;
pub mod prbs;
pub mod scenario;
pub mod schedule;
pub mod thermostat;
pub mod weather;

pub use dataset::OperationalDataset;
pub use prbs::make_prbs_setpoints;
pub use scenario::{generate_scenario, PrbsConfig, ScenarioConfig};
pub use schedule::{make_gain_profile, make_setpoint_schedule, ScheduleConfig, SetpointSeries};
pub use thermostat::{replay_dataset, run_true_model, ThermostatConfig, TrueModelRun};
pub use weather::{ingest_weather, synthetic_weather, ClimatePreset, SiteLocation, WeatherFormat, WeatherSeries, WindowOrientation};

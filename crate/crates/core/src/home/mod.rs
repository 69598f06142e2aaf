//! Digital model of the home: kind catalog, device registry and typed values.

pub mod catalog;
pub mod registry;
pub mod value;

pub use catalog::{ActionDef, Catalog, CatalogError, DeviceKind, EventType};
pub use registry::{
    event_from_json, state_from_json, ActionOutcome, Availability, DeviceDescriptor, DeviceId, DeviceRecord, DeviceState, HomeError, HomeEvent, Reading,
    Registry, RegistryDelta, SimTime, StateChange, LOCATION_PROPERTY,
};
pub use value::{Domain, TimeOfDay, Value};

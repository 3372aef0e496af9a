//! MEC services hosted on a platform and the radio scenario feeding them.

mod location;
mod radio;
mod rnis;

pub use location::{
    Callback, CircleSpec, CircleSubscription, LocationError, LocationNotification, LocationService, Trigger,
    UserLocation, ZoneEvent, CIRCLE_PATH, USERS_PATH,
};
pub use radio::{cqi_model, CellChange, Gnb, Point, RadioEnvironment, UeState};
pub use rnis::{L2Measurement, MeasFilter, RnisService, L2_MEAS_PATH};

pub const LOCATION_SERVICE: &str = "LocationService";
pub const RNI_SERVICE: &str = "RNIService";
pub const KNOWN_SERVICES: [&str; 2] = [LOCATION_SERVICE, RNI_SERVICE];

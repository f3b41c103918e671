//! Exploration provenance engine: captures the complete state of a visualization host as
//! viewpoints, chains them into scenarios, and compares them with a weighted preference distance
//! and a classical MDS projection.

/// Fieldless enum with fixed lowercase spellings, `Display` and `FromStr`.
macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " `{}`"), other)),
                }
            }
        }
    };
}

pub mod area;
pub mod assignment;
pub mod clock;
pub mod diff;
pub mod error;
pub mod host;
pub mod projection;
pub mod scenario;
pub mod schema;
pub mod testkit;
pub mod value;
pub mod viewpoint;
pub mod weight;
pub mod xml;

pub use assignment::{AssignmentKey, Assignments};
pub use error::{Error, Result};
pub use diff::DiffReport;
pub use host::ApplicationState;
pub use projection::{DistanceMatrix, Layout2D};
pub use scenario::{Player, Scenario};
pub use schema::{PreferenceSchema, ScopeLevel};
pub use value::{PreferenceKind, Value};
pub use viewpoint::Viewpoint;
pub use weight::Weight;

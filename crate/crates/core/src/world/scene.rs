//! JSON scene files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::seed;

use super::{Item, Location, Shape, WorldError, WorldState, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub id: u32,
    pub category: u32,
    pub shape: Shape,
    pub pose: Pose2,
    #[serde(default = "in_bin")]
    pub location: Location,
}

fn in_bin() -> Location {
    Location::InBin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub seed: u64,
    #[serde(default)]
    pub workspace: Workspace,
    pub items: Vec<ItemRecord>,
}

impl SceneFile {
    pub fn from_world(world: &WorldState, seed_value: u64) -> Self {
        Self {
            seed: seed_value,
            workspace: world.workspace,
            items: world
                .items()
                .iter()
                .map(|i| ItemRecord {
                    id: i.id,
                    category: i.category,
                    shape: i.shape.clone(),
                    pose: i.pose,
                    location: i.location,
                })
                .collect(),
        }
    }

    /// Builds the world; its random stream derives from the scene seed.
    pub fn to_world(&self) -> Result<WorldState, WorldError> {
        let items = self
            .items
            .iter()
            .map(|r| Item {
                id: r.id,
                category: r.category,
                shape: r.shape.clone(),
                pose: r.pose,
                location: r.location,
            })
            .collect();
        WorldState::new(
            self.workspace,
            items,
            seed::split(self.seed, seed::stream::WORLD),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json(&s).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scene, ScenarioParams, ShapeKind};

    #[test]
    fn json_round_trip_is_lossless() {
        let p = ScenarioParams {
            shape: ShapeKind::Mixed,
            ..Default::default()
        };
        let w = generate_scene(60, &p, Workspace::default(), 77).unwrap();
        let f = SceneFile::from_world(&w, 77);
        let back = SceneFile::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_world().unwrap(), w);
    }

    #[test]
    fn location_defaults_to_bin_and_unknown_fields_fail() {
        let s = r#"{"seed":1,"items":[{"id":1,"category":1,
            "shape":{"kind":"disk","radius":3.0},
            "pose":{"position":{"x":50.0,"y":50.0},"theta":0.0}}]}"#;
        let f = SceneFile::from_json(s).unwrap();
        assert_eq!(f.items[0].location, Location::InBin);
        assert!(f.to_world().is_ok());
        let bad = s.replace("\"seed\":1", "\"seed\":1,\"extra\":2");
        assert!(SceneFile::from_json(&bad).is_err());
    }
}

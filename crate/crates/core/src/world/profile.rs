use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locomotion {
    Ground,
    Flying,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Normal,
    HeavyCapable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Size {
    Small,
    Large,
}

/// Physical capabilities of one simulated robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    pub color: String,
    pub locomotion: Locomotion,
    pub strength: Strength,
    pub size: Size,
    /// Meters per second.
    pub speed: f64,
    /// Meters.
    pub reach_radius: f64,
}

impl AgentProfile {
    pub fn can_fly(&self) -> bool {
        self.locomotion == Locomotion::Flying
    }

    pub fn can_lift_heavy(&self) -> bool {
        self.strength == Strength::HeavyCapable
    }

    pub fn is_small(&self) -> bool {
        self.size == Size::Small
    }

    /// Short trait list used in scene descriptions.
    pub fn traits(&self) -> String {
        let size = match self.size {
            Size::Small => "small",
            Size::Large => "large",
        };
        let mut parts = vec![self.color.clone(), size.to_string()];
        match self.locomotion {
            Locomotion::Flying => parts.push("can fly".into()),
            Locomotion::Ground => parts.push("drives on the ground".into()),
        }
        if self.can_lift_heavy() {
            parts.push("can lift heavy objects".into());
        }
        parts.join(", ")
    }
}

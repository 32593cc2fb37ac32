use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 16;
pub const ROOT: usize = 0;

const SKELETON_JSON: &str = include_str!("../../data/skeleton.json");

/// Joint names in canonical order plus the bone tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSpec {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
}

#[derive(Deserialize)]
struct SkeletonFile {
    joints: Vec<JointEntry>,
}

#[derive(Deserialize)]
struct JointEntry {
    name: String,
    parent: Option<String>,
}

impl SkeletonSpec {
    /// The shipped 16-joint skeleton, parsed once.
    pub fn canonical() -> &'static SkeletonSpec {
        static SPEC: OnceLock<SkeletonSpec> = OnceLock::new();
        SPEC.get_or_init(|| Self::from_json(SKELETON_JSON).expect("shipped skeleton.json is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SkeletonFile = serde_json::from_str(text)?;
        let names: Vec<String> = file.joints.iter().map(|j| j.name.clone()).collect();
        let index = |n: &str| names.iter().position(|x| x == n);
        let mut parents = Vec::with_capacity(names.len());
        for j in &file.joints {
            let p = match &j.parent {
                None => None,
                Some(p) => Some(index(p).ok_or_else(|| {
                    Error::Config(format!("joint {} has unknown parent {p}", j.name))
                })?),
            };
            parents.push(p);
        }
        let spec = Self { names, parents };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::Config(format!("skeleton needs exactly one root, found {roots}")));
        }
        for (i, name) in self.names.iter().enumerate() {
            if self.names[..i].contains(name) {
                return Err(Error::Config(format!("duplicate joint name {name}")));
            }
            // Walking up from any joint must reach the root within n steps.
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.parents[cur] {
                cur = p;
                steps += 1;
                if steps > self.names.len() {
                    return Err(Error::Config(format!("cycle through joint {name}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, joint: usize) -> &str {
        &self.names[joint]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn root(&self) -> usize {
        self.parents.iter().position(Option::is_none).expect("validated")
    }

    /// `(parent, child)` pairs in child order.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
            .collect()
    }

    pub fn side(&self, joint: usize) -> Side {
        let n = &self.names[joint];
        if n.starts_with('L') {
            Side::Left
        } else if n.starts_with('R') {
            Side::Right
        } else {
            Side::Center
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Center,
}

/// The 15 Human3.6M action categories, in table-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionLabel {
    Directions,
    Discussion,
    Eating,
    Greeting,
    Phoning,
    Photo,
    Posing,
    Purchases,
    Sitting,
    SittingDown,
    Smoking,
    Waiting,
    WalkDog,
    Walking,
    WalkTogether,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 15] = [
        ActionLabel::Directions,
        ActionLabel::Discussion,
        ActionLabel::Eating,
        ActionLabel::Greeting,
        ActionLabel::Phoning,
        ActionLabel::Photo,
        ActionLabel::Posing,
        ActionLabel::Purchases,
        ActionLabel::Sitting,
        ActionLabel::SittingDown,
        ActionLabel::Smoking,
        ActionLabel::Waiting,
        ActionLabel::WalkDog,
        ActionLabel::Walking,
        ActionLabel::WalkTogether,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionLabel::Directions => "Directions",
            ActionLabel::Discussion => "Discussion",
            ActionLabel::Eating => "Eating",
            ActionLabel::Greeting => "Greeting",
            ActionLabel::Phoning => "Phoning",
            ActionLabel::Photo => "Photo",
            ActionLabel::Posing => "Posing",
            ActionLabel::Purchases => "Purchases",
            ActionLabel::Sitting => "Sitting",
            ActionLabel::SittingDown => "SittingDown",
            ActionLabel::Smoking => "Smoking",
            ActionLabel::Waiting => "Waiting",
            ActionLabel::WalkDog => "WalkDog",
            ActionLabel::Walking => "Walking",
            ActionLabel::WalkTogether => "WalkTogether",
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ActionLabel::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action name {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_skeleton_shape() {
        let s = SkeletonSpec::canonical();
        assert_eq!(s.len(), NUM_JOINTS);
        assert_eq!(s.root(), ROOT);
        assert_eq!(s.name(ROOT), "Hip");
        assert_eq!(s.bones().len(), NUM_JOINTS - 1);
    }

    #[test]
    fn rejects_two_roots() {
        let j = r#"{"joints":[{"name":"A","parent":null},{"name":"B","parent":null}]}"#;
        assert!(SkeletonSpec::from_json(j).is_err());
    }

    #[test]
    fn rejects_cycle() {
        let j = r#"{"joints":[{"name":"R","parent":null},{"name":"A","parent":"B"},{"name":"B","parent":"A"}]}"#;
        assert!(SkeletonSpec::from_json(j).is_err());
    }

    #[test]
    fn action_names_round_trip() {
        for a in ActionLabel::ALL {
            assert_eq!(a.name().parse::<ActionLabel>().unwrap(), a);
        }
        assert!("Dancing".parse::<ActionLabel>().is_err());
    }

    #[test]
    fn sides() {
        let s = SkeletonSpec::canonical();
        assert_eq!(s.side(s.index_of("LWrist").unwrap()), Side::Left);
        assert_eq!(s.side(s.index_of("RFoot").unwrap()), Side::Right);
        assert_eq!(s.side(s.index_of("Spine").unwrap()), Side::Center);
    }
}

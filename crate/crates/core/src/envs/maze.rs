use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle with lower-left corner `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn x_max(&self) -> f64 {
        self.x + self.width
    }

    pub fn y_max(&self) -> f64 {
        self.y + self.height
    }

    /// Strict interior test; points on the boundary are outside.
    pub fn contains_open(&self, p: [f64; 2]) -> bool {
        p[0] > self.x && p[0] < self.x_max() && p[1] > self.y && p[1] < self.y_max()
    }

    pub fn contains_closed(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] <= self.x_max() && p[1] >= self.y && p[1] <= self.y_max()
    }

    fn inside(&self, outer: &Rect) -> bool {
        self.x >= outer.x && self.y >= outer.y && self.x_max() <= outer.x_max() && self.y_max() <= outer.y_max()
    }

    fn overlaps_open(&self, other: &Rect) -> bool {
        self.x < other.x_max() && other.x < self.x_max() && self.y < other.y_max() && other.y < self.y_max()
    }
}

/// Geometry of a point-mass maze.
///
/// File format (TOML):
///
/// ```toml
/// name = "point1"
/// bounds = { x = 0.0, y = 0.0, width = 20.0, height = 10.0 }
/// start_region = { x = 1.0, y = 4.0, width = 1.0, height = 2.0 }
/// goal_center = [18.0, 5.0]
/// goal_radius = 2.0
///
/// [[walls]]
/// x = 11.0
/// y = 2.0
/// width = 0.5
/// height = 6.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeLayout {
    pub name: String,
    pub bounds: Rect,
    #[serde(default)]
    pub walls: Vec<Rect>,
    pub start_region: Rect,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
}

const BUILTIN: [&str; 4] = [
    include_str!("../../layouts/point1.toml"),
    include_str!("../../layouts/point2.toml"),
    include_str!("../../layouts/point3.toml"),
    include_str!("../../layouts/point4.toml"),
];

impl MazeLayout {
    pub fn parse(text: &str) -> Result<Self> {
        let layout: MazeLayout = toml::from_str(text).map_err(|e| Error::Layout(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Shipped layouts `1..=4`.
    pub fn builtin(index: usize) -> Result<Self> {
        let text = index
            .checked_sub(1)
            .and_then(|i| BUILTIN.get(i))
            .ok_or_else(|| Error::Layout(format!("no builtin layout {index}")))?;
        Self::parse(text)
    }

    /// Resolves `builtin:N` or a file path.
    pub fn resolve(source: &str) -> Result<Self> {
        match source.strip_prefix("builtin:") {
            Some(n) => {
                let idx = n.parse().map_err(|_| Error::Layout(format!("bad builtin index `{n}`")))?;
                Self::builtin(idx)
            }
            None => Self::load(Path::new(source)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |r: &Rect| r.width > 0.0 && r.height > 0.0;
        if !positive(&self.bounds) || !positive(&self.start_region) {
            return Err(Error::Layout(format!("{}: empty bounds or start region", self.name)));
        }
        if let Some(i) = self.walls.iter().position(|w| !positive(w)) {
            return Err(Error::Layout(format!("{}: wall {i} has non-positive size", self.name)));
        }
        if !self.start_region.inside(&self.bounds) {
            return Err(Error::Layout(format!("{}: start region leaves the bounds", self.name)));
        }
        if let Some(i) = self.walls.iter().position(|w| w.overlaps_open(&self.start_region)) {
            return Err(Error::Layout(format!("{}: wall {i} overlaps the start region", self.name)));
        }
        if !self.bounds.contains_closed(self.goal_center) {
            return Err(Error::Layout(format!("{}: goal outside bounds", self.name)));
        }
        if let Some(i) = self.walls.iter().position(|w| w.contains_closed(self.goal_center)) {
            return Err(Error::Layout(format!("{}: goal inside wall {i}", self.name)));
        }
        if !(self.goal_radius > 0.0) {
            return Err(Error::Layout(format!("{}: goal radius must be positive", self.name)));
        }
        Ok(())
    }

    pub fn in_wall(&self, p: [f64; 2]) -> bool {
        self.walls.iter().any(|w| w.contains_open(p))
    }

    pub fn goal_distance(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.goal_center[0];
        let dy = p[1] - self.goal_center[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Largest distance between two points of the bounding box.
    pub fn diameter(&self) -> f64 {
        self.bounds.width.hypot(self.bounds.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for i in 1..=4 {
            let l = MazeLayout::builtin(i).unwrap();
            assert_eq!(l.goal_radius, 2.0);
            assert!(!l.walls.is_empty());
        }
        assert!(MazeLayout::builtin(0).is_err());
        assert!(MazeLayout::builtin(5).is_err());
    }

    #[test]
    fn rejects_goal_in_wall() {
        let text = BUILTIN[0].replace("goal_center = [18.0, 5.0]", "goal_center = [11.2, 5.0]");
        let err = MazeLayout::parse(&text).unwrap_err();
        assert!(err.to_string().contains("goal inside wall"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{}\ncolour = \"red\"\n", BUILTIN[1]);
        assert!(MazeLayout::parse(&text).is_err());
    }
}

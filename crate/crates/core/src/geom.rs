//! Planar geometry helpers.

use crate::error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;

/// Axis-aligned rectangle in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(Error::InvalidField(format!(
                "domain must have positive area, got [{}, {}] x [{}, {}]",
                min.x, max.x, min.y, max.y
            )));
        }
        Ok(Rect { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    /// Inclusive containment check.
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Project a point onto the rectangle.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_rejects_empty() {
        assert!(Rect::new(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0)).is_err());
        assert!(Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, -1.0)).is_err());
    }

    #[test]
    fn clamp_projects_inside() {
        let r = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 3.0)).unwrap();
        assert_eq!(r.clamp(Vec2::new(-1.0, 5.0)), Vec2::new(0.0, 3.0));
        assert!(r.contains(r.clamp(Vec2::new(9.0, 9.0))));
    }
}

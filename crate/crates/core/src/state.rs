use crate::Vec3;

/// Position and its first `k` time derivatives at one end of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryState {
    derivs: Vec<Vec3>,
}

impl BoundaryState {
    /// `derivs[i]` is the `i`-th derivative; must hold at least the position.
    pub fn from_derivatives(derivs: Vec<Vec3>) -> Self {
        assert!(!derivs.is_empty(), "boundary state needs a position");
        Self { derivs }
    }

    /// Full second-order state.
    pub fn new(position: Vec3, velocity: Vec3, acceleration: Vec3) -> Self {
        Self {
            derivs: vec![position, velocity, acceleration],
        }
    }

    pub fn at_rest(position: Vec3) -> Self {
        Self::new(position, Vec3::zeros(), Vec3::zeros())
    }

    /// Highest derivative order carried, `k`.
    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }

    pub fn derivatives(&self) -> &[Vec3] {
        &self.derivs
    }

    /// `i`-th derivative, zero beyond the carried order.
    pub fn derivative(&self, i: usize) -> Vec3 {
        self.derivs.get(i).copied().unwrap_or_else(Vec3::zeros)
    }

    pub fn position(&self) -> Vec3 {
        self.derivs[0]
    }

    pub fn velocity(&self) -> Vec3 {
        self.derivative(1)
    }

    pub fn acceleration(&self) -> Vec3 {
        self.derivative(2)
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        let mut derivs = self.derivs.clone();
        derivs[0] += offset;
        Self { derivs }
    }
}

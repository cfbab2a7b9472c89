use rand::Rng;

/// A named trainable array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::filled(name, shape, 0.0)
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![v; n],
            grad: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Glorot/Xavier uniform initialisation in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(
    name: impl Into<String>,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Param {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut p = Param::zeros(name, shape);
    for v in &mut p.value {
        *v = rng.random_range(-limit..limit);
    }
    p
}

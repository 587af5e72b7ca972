use crate::rng::StreamRng;

/// A named-by-position tensor with its gradient accumulator. Non-trainable
/// params hold state that is checkpointed but not optimized (running
/// statistics, power-iteration vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(shape: &[usize], value: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "param shape");
        Self {
            shape: shape.to_vec(),
            grad: vec![0.0; value.len()],
            value,
            trainable: true,
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self::new(shape, vec![v; shape.iter().product()])
    }

    pub fn normal(shape: &[usize], std: f64, rng: &mut StreamRng) -> Self {
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(|_| std * rng.normal()).collect())
    }

    pub fn buffer(shape: &[usize], value: Vec<f64>) -> Self {
        let mut p = Self::new(shape, value);
        p.trainable = false;
        p.grad = Vec::new();
        p
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

/// Visitor over every parameter and buffer of a network, with dotted names.
pub trait Module {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, p| p.zero_grad());
    }

    fn named_params(&mut self) -> Vec<(String, Param)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, p| out.push((name.to_string(), p.clone())));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

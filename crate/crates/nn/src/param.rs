use risce_core::RngStream;

use crate::element::Element;
use crate::tensor::Tensor;

/// Named trainable tensor with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Element> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Weight drawn from `uniform(−a, a)`, `a = sqrt(6 / fan_in)`.
    pub fn uniform_init(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Self {
        let a = (6.0 / fan_in as f64).sqrt();
        let value = Tensor::from_fn(shape, |_| T::lit((2.0 * rng.uniform() - 1.0) * a));
        Self::new(name, value)
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }

    pub fn cast<U: Element>(&self) -> Parameter<U> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

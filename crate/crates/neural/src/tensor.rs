use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::ops::Op;
use crate::{NeuralError, Result, Scalar};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

pub(crate) struct Node<T: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: RefCell<Vec<T>>,
    pub(crate) grad: RefCell<Option<Vec<T>>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Option<Op<T>>,
    pub(crate) parents: Vec<Tensor<T>>,
}

/// Handle to a node of the computation graph.
///
/// Cloning is cheap and yields another handle to the same node. Leaves made
/// with [`Tensor::parameter`] accumulate gradients across backward calls
/// until [`Tensor::zero_grad`] is called.
pub struct Tensor<T: Scalar> {
    pub(crate) node: Rc<Node<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let n: usize = shape.iter().product();
    if n != len {
        return Err(NeuralError::ShapeMismatch(format!(
            "shape {shape:?} holds {n} values, got {len}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op: None,
                parents: Vec::new(),
            }),
        }
    }

    /// Constant input; gradients never flow into it.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self::leaf(shape, data, false))
    }

    /// Trainable leaf.
    pub fn parameter(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self::leaf(shape, data, true))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::leaf(shape, vec![T::zero(); n], false)
    }

    pub fn scalar(v: T) -> Self {
        Self::leaf(Vec::new(), vec![v], false)
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<T>, op: Op<T>, parents: Vec<Tensor<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(|p| p.node.requires_grad);
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op: Some(op),
                parents,
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn values(&self) -> Ref<'_, Vec<T>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        self.node.data.borrow()[0]
    }

    /// Overwrites the values of a leaf in place (optimizer updates,
    /// checkpoint restore).
    pub fn set_values(&self, values: Vec<T>) -> Result<()> {
        if self.node.op.is_some() {
            return Err(NeuralError::DomainError("cannot overwrite a computed tensor".into()));
        }
        check_len(&self.node.shape, values.len())?;
        *self.node.data.borrow_mut() = values;
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.borrow().clone()
    }

    /// Gradient, or zeros when nothing has flowed into this leaf.
    pub fn grad_or_zeros(&self) -> Vec<T> {
        self.grad().unwrap_or_else(|| vec![T::zero(); self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::leaf(self.node.shape.clone(), self.to_vec(), false)
    }

    /// Reverse-mode sweep from a scalar loss. Leaf gradients are added to
    /// whatever they already hold.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(NeuralError::NonScalarLoss(self.node.shape.clone()));
        }
        if !self.node.requires_grad {
            return Ok(());
        }

        let mut seen = std::collections::HashSet::new();
        let mut order = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.node.requires_grad || !seen.insert(t.node.id) {
                continue;
            }
            stack.extend(t.node.parents.iter().cloned());
            order.push(t);
        }
        // Parents always have smaller ids than their children.
        order.sort_by(|a, b| b.node.id.cmp(&a.node.id));

        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.node.id, vec![T::one()]);
        for t in order {
            let Some(g) = pending.remove(&t.node.id) else {
                continue;
            };
            let Some(op) = &t.node.op else {
                let mut slot = t.node.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a = *a + v),
                    None => *slot = Some(g),
                }
                continue;
            };
            let parent_grads = op.backward(&t, &g);
            for (p, pg) in t.node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !p.node.requires_grad {
                    continue;
                }
                match pending.get_mut(&p.node.id) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &v)| *a = *a + v),
                    None => {
                        pending.insert(p.node.id, pg);
                    }
                }
            }
        }
        Ok(())
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug)]
pub struct Parameter<T: Scalar> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::parameter(shape, data)?,
        })
    }
}

//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape of nodes created by operator methods; each node
//! stores its value, its parents, and a backward closure producing parent
//! cotangents from its own. [`Graph::backward`] walks the tape in reverse
//! from a scalar root and accumulates gradients for every leaf created with
//! [`Graph::input`].
//!
//! Binary elementwise operators broadcast shapes numpy-style (right-aligned,
//! size-1 axes stretch); the corresponding gradient is reduced back over the
//! broadcast axes. Shape misuse inside graph construction is a programming
//! error and panics; fallible validation belongs to the callers assembling
//! networks from user data.

mod nn;
mod domain;

use std::cell::RefCell;

/// Dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Scalar extraction; panics unless the tensor has exactly one element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Same data, new shape (element count must match).
    pub fn reshaped(&self, shape: &[usize]) -> Tensor {
        Tensor::new(shape, self.data.clone())
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// Gradients of a scalar root with respect to every leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient tensor for `v`, if it received any (leaves only; interior
    /// node gradients are dropped once consumed).
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Reverse-mode tape.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    /// Registers a leaf tensor (parameter or fixed input).
    pub fn input(&self, value: Tensor) -> Var {
        self.push(value, vec![], None)
    }

    /// Current value of a node (cloned).
    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    /// Shape of a node's value without cloning the data.
    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape.clone()
    }

    pub(crate) fn push(
        &self,
        value: Tensor,
        parents: Vec<Var>,
        backward: Option<BackwardFn>,
    ) -> Var {
        assert!(
            value.data.iter().all(|v| v.is_finite()),
            "non-finite value entered the graph"
        );
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            backward,
        });
        Var(nodes.len() - 1)
    }

    pub(crate) fn with_values<R>(&self, vars: &[Var], f: impl FnOnce(&[&Tensor]) -> R) -> R {
        let nodes = self.nodes.borrow();
        let refs: Vec<&Tensor> = vars.iter().map(|v| &nodes[v.0].value).collect();
        f(&refs)
    }

    /// Reverse pass from a scalar root. Leaf gradients are retained; interior
    /// gradients are freed as soon as they have been propagated.
    pub fn backward(&self, root: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[root.0].value.numel(),
            1,
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(&nodes[root.0].value.shape, 1.0));

        for id in (0..=root.0).rev() {
            let node = &nodes[id];
            if node.backward.is_none() {
                continue; // leaf: keep its gradient for retrieval
            }
            let Some(g) = grads[id].take() else { continue };
            let back = node.backward.as_ref().unwrap();
            let parent_values: Vec<&Tensor> = node.parents.iter().map(|p| &nodes[p.0].value).collect();
            let parent_grads = back(&g, &parent_values, &node.value);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                debug_assert_eq!(pg.shape, nodes[p.0].value.shape);
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { grads }
    }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers
// ---------------------------------------------------------------------------

/// Right-aligned broadcast of two shapes; panics on incompatibility.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "cannot broadcast {a:?} with {b:?}"
        );
        out[i] = da.max(db);
    }
    out
}

/// Row-major strides, with zero stride on broadcast (size-1) axes.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

fn binary_broadcast(
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(&a.shape, data);
    }
    let out_shape = broadcast_shape(&a.shape, &b.shape);
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let n: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for _ in 0..n {
        data.push(f(a.data[ia], b.data[ib]));
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
        }
    }
    Tensor::new(&out_shape, data)
}

/// Reduces `grad` (shaped like the broadcast output) back to `target_shape`
/// by summing over stretched axes.
fn unbroadcast(grad: &Tensor, target_shape: &[usize]) -> Tensor {
    if grad.shape == target_shape {
        return grad.clone();
    }
    let mut out = Tensor::zeros(target_shape);
    let strides = broadcast_strides(target_shape, &grad.shape);
    let mut idx = vec![0usize; grad.shape.len()];
    let mut it = 0usize;
    for &g in &grad.data {
        out.data[it] += g;
        for d in (0..grad.shape.len()).rev() {
            idx[d] += 1;
            it += strides[d];
            if idx[d] < grad.shape[d] {
                break;
            }
            idx[d] = 0;
            it -= strides[d] * grad.shape[d];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Elementwise and reduction operators
// ---------------------------------------------------------------------------

impl Graph {
    fn unary(
        &self,
        x: Var,
        f: impl Fn(f64) -> f64,
        dfdx: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let value = self.with_values(&[x], |vals| {
            Tensor::new(&vals[0].shape, vals[0].data.iter().map(|&v| f(v)).collect())
        });
        self.push(
            value,
            vec![x],
            Some(Box::new(move |g, parents, out| {
                let x = parents[0];
                let data = g
                    .data
                    .iter()
                    .zip(x.data.iter().zip(&out.data))
                    .map(|(&gi, (&xi, &yi))| gi * dfdx(xi, yi))
                    .collect();
                vec![Tensor::new(&x.shape, data)]
            })),
        )
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        // (grad, a_val, b_val) -> (da, db) per element in broadcast space
        dfd: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
    ) -> Var {
        let value = self.with_values(&[a, b], |v| binary_broadcast(v[0], v[1], f));
        self.push(
            value,
            vec![a, b],
            Some(Box::new(move |g, parents, _| {
                let (av, bv) = (parents[0], parents[1]);
                let ga = binary_broadcast(av, bv, |x, y| dfd(1.0, x, y).0);
                let gb = binary_broadcast(av, bv, |x, y| dfd(1.0, x, y).1);
                let ga = binary_broadcast(g, &ga, |gi, d| gi * d);
                let gb = binary_broadcast(g, &gb, |gi, d| gi * d);
                vec![unbroadcast(&ga, &av.shape), unbroadcast(&gb, &bv.shape)]
            })),
        )
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, |_, _, _| (1.0, 1.0))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, |_, _, _| (1.0, -1.0))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, |_, x, y| (y, x))
    }

    pub fn neg(&self, x: Var) -> Var {
        self.unary(x, |v| -v, |_, _| -1.0)
    }

    /// Elementwise `scale * x + shift` with constants.
    pub fn affine(&self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, move |v| scale * v + shift, move |_, _| scale)
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), |_, y| y)
    }

    pub fn abs(&self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn softplus(&self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.max(0.0) + (-v.abs()).exp().ln_1p(),
            |x, _| 1.0 / (1.0 + (-x).exp()),
        )
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), |_, y| y * (1.0 - y))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self, x: Var) -> Var {
        self.unary(
            x,
            |v| v / (1.0 + (-v).exp()),
            |x, _| {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn sum_all(&self, x: Var) -> Var {
        let value = self.with_values(&[x], |v| Tensor::scalar(v[0].data.iter().sum()));
        self.push(
            value,
            vec![x],
            Some(Box::new(|g, parents, _| {
                vec![Tensor::full(&parents[0].shape, g.item())]
            })),
        )
    }

    pub fn mean_all(&self, x: Var) -> Var {
        let value = self.with_values(&[x], |v| {
            Tensor::scalar(v[0].data.iter().sum::<f64>() / v[0].numel() as f64)
        });
        self.push(
            value,
            vec![x],
            Some(Box::new(|g, parents, _| {
                let n = parents[0].numel() as f64;
                vec![Tensor::full(&parents[0].shape, g.item() / n)]
            })),
        )
    }

    /// View with a new shape; element count must be preserved.
    pub fn reshape(&self, x: Var, shape: &[usize]) -> Var {
        let shape_vec = shape.to_vec();
        let value = self.with_values(&[x], |v| v[0].reshaped(shape));
        self.push(
            value,
            vec![x],
            Some(Box::new(move |g, parents, _| {
                vec![g.reshaped(&parents[0].shape)]
            })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_mul_chain_backward() {
        let g = Graph::new();
        let x = g.input(Tensor::new(&[2], vec![2.0, 3.0]));
        let y = g.input(Tensor::new(&[2], vec![5.0, -1.0]));
        let p = g.mul(x, y);
        let s = g.sum_all(p); // s = 2*5 + 3*(-1) = 7
        assert_eq!(g.value(s).item(), 7.0);
        let grads = g.backward(s);
        assert_eq!(grads.get(x).unwrap().data(), &[5.0, -1.0]);
        assert_eq!(grads.get(y).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn same_var_used_twice_accumulates() {
        let g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let sq = g.mul(x, x);
        let grads = g.backward(sq);
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn broadcasting_forward_and_backward() {
        let g = Graph::new();
        // [2,3] + [3] -> [2,3]
        let a = g.input(Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]));
        let b = g.input(Tensor::new(&[3], vec![10., 20., 30.]));
        let s = g.add(a, b);
        assert_eq!(g.value(s).data(), &[11., 22., 33., 14., 25., 36.]);
        let total = g.sum_all(s);
        let grads = g.backward(total);
        assert_eq!(grads.get(a).unwrap().data(), &[1.0; 6]);
        // b's gradient sums over the stretched axis
        assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn scalar_broadcast_mul() {
        let g = Graph::new();
        let a = g.input(Tensor::new(&[2, 2], vec![1., 2., 3., 4.]));
        let s = g.input(Tensor::scalar(0.5));
        let out = g.mul(a, s);
        assert_eq!(g.value(out).data(), &[0.5, 1.0, 1.5, 2.0]);
        let grads = g.backward(g.sum_all(out));
        assert_eq!(grads.get(s).unwrap().item(), 10.0);
    }

    #[test]
    fn unary_gradients_match_finite_differences() {
        let g = Graph::new();
        let xs = vec![-1.5, -0.3, 0.0, 0.7, 2.0];
        let ops: Vec<(&str, Box<dyn Fn(&Graph, Var) -> Var>)> = vec![
            ("exp", Box::new(|g: &Graph, v| g.exp(v))),
            ("softplus", Box::new(|g: &Graph, v| g.softplus(v))),
            ("sigmoid", Box::new(|g: &Graph, v| g.sigmoid(v))),
            ("silu", Box::new(|g: &Graph, v| g.silu(v))),
        ];
        for (name, op) in &ops {
            let x = g.input(Tensor::new(&[xs.len()], xs.clone()));
            let y = op(&g, x);
            let loss = g.sum_all(y);
            let grads = g.backward(loss);
            let analytic = grads.get(x).unwrap().data().to_vec();
            for (i, &xi) in xs.iter().enumerate() {
                let eps = 1e-6;
                let g2 = Graph::new();
                let mut plus = xs.clone();
                plus[i] = xi + eps;
                let vp = g2.value(op(&g2, g2.input(Tensor::new(&[xs.len()], plus))));
                let mut minus = xs.clone();
                minus[i] = xi - eps;
                let vm = g2.value(op(&g2, g2.input(Tensor::new(&[xs.len()], minus))));
                let fd = (vp.data().iter().sum::<f64>() - vm.data().iter().sum::<f64>())
                    / (2.0 * eps);
                assert!(
                    (analytic[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                    "{name}[{i}]: {} vs {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    #[should_panic(expected = "cannot broadcast")]
    fn incompatible_shapes_panic() {
        let g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[4]));
        g.add(a, b);
    }
}

//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation on [`Var`] values as a node with a list
//! of `(parent, local partial)` edges. [`Tape::gradient`] sweeps the nodes in
//! reverse and accumulates adjoints. Values created with
//! [`Scalar::constant`] carry no tape and never produce nodes, so frozen
//! parameters cost nothing.

use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::Scalar;

#[derive(Default)]
struct Graph {
    // ends[i] is one past the last edge of node i.
    ends: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

/// Operation record for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    graph: RefCell<Graph>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.graph.borrow();
        f.debug_struct("Tape")
            .field("nodes", &g.ends.len())
            .field("edges", &g.edges.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.graph.borrow().ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all recorded nodes, keeping the allocations.
    pub fn clear(&mut self) {
        let g = self.graph.get_mut();
        g.ends.clear();
        g.edges.clear();
    }

    /// A new independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(core::iter::empty());
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, edges: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        let mut g = self.graph.borrow_mut();
        g.edges.extend(edges);
        let idx = g.ends.len() as u32;
        let end = g.edges.len() as u32;
        g.ends.push(end);
        idx
    }

    /// Adjoints of every recorded node with respect to `output`.
    pub fn gradient(&self, output: Var<'_>) -> Adjoints {
        let g = self.graph.borrow();
        let mut adj = alloc::vec![0.0; g.ends.len()];
        if let Some(t) = output.tape {
            assert!(core::ptr::eq(t, self), "output recorded on a different tape");
            adj[output.idx as usize] = 1.0;
        }
        for i in (0..g.ends.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { g.ends[i - 1] as usize };
            for &(p, w) in &g.edges[start..g.ends[i] as usize] {
                adj[p as usize] += a * w;
            }
        }
        Adjoints { adj }
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    /// Derivative of the swept output with respect to `v` (zero for constants).
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adj[v.idx as usize],
            None => 0.0,
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }
}

/// A value that may be recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var({} @{})", self.val, self.idx),
            None => write!(f, "Var({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            None => Self::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push([(self.idx, d)]),
                val,
            },
        }
    }

    #[inline]
    fn binary(a: Self, b: Self, val: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Self::constant(val),
            (Some(t), None) => Var {
                tape: Some(t),
                idx: t.push([(a.idx, da)]),
                val,
            },
            (None, Some(t)) => Var {
                tape: Some(t),
                idx: t.push([(b.idx, db)]),
                val,
            },
            (Some(t), Some(u)) => {
                debug_assert!(core::ptr::eq(t, u), "mixing tapes");
                Var {
                    tape: Some(t),
                    idx: t.push([(a.idx, da), (b.idx, db)]),
                    val,
                }
            }
        }
    }
}

impl Scalar for Var<'_> {
    #[inline]
    fn constant(v: f64) -> Self {
        Var {
            tape: None,
            idx: u32::MAX,
            val: v,
        }
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = libm::exp(self.val);
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(libm::log(self.val), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.val);
        self.unary(s, 0.5 / s)
    }

    fn softplus(self) -> Self {
        let x = self.val;
        let sig = if x >= 0.0 {
            1.0 / (1.0 + libm::exp(-x))
        } else {
            let e = libm::exp(x);
            e / (1.0 + e)
        };
        self.unary(crate::softplus(x), sig)
    }

    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().map(|x| x.val).sum();
        match xs.iter().find_map(|x| x.tape) {
            None => Self::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(xs.iter().filter(|x| x.tape.is_some()).map(|x| (x.idx, 1.0))),
                val,
            },
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a.iter().zip(b).map(|(x, y)| x.val * y.val).sum();
        match a.iter().chain(b).find_map(|x| x.tape) {
            None => Self::constant(val),
            Some(t) => {
                let edges = a.iter().zip(b).flat_map(|(x, y)| {
                    let ex = x.tape.map(|_| (x.idx, y.val));
                    let ey = y.tape.map(|_| (y.idx, x.val));
                    ex.into_iter().chain(ey)
                });
                Var {
                    tape: Some(t),
                    idx: t.push(edges),
                    val,
                }
            }
        }
    }

    fn sq_dist(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x.val - y.val) * (x.val - y.val))
            .sum();
        match a.iter().chain(b).find_map(|x| x.tape) {
            None => Self::constant(val),
            Some(t) => {
                let edges = a.iter().zip(b).flat_map(|(x, y)| {
                    let d = 2.0 * (x.val - y.val);
                    let ex = x.tape.map(|_| (x.idx, d));
                    let ey = y.tape.map(|_| (y.idx, -d));
                    ex.into_iter().chain(ey)
                });
                Var {
                    tape: Some(t),
                    idx: t.push(edges),
                    val,
                }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        Var::binary(self, rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> AddAssign for Var<'t> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<'t> SubAssign for Var<'t> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<'t> MulAssign for Var<'t> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

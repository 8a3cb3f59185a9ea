use alloc::vec::Vec;

use super::{Node, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Neighbors;
use crate::matrix::{gemm_a_bt_acc, gemm_at_b_acc, Matrix};
use crate::sparse::SparseAdjacency;

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("operands share a shape")
}

/// Closed-form KL divergence between diagonal Gaussians, one value per row:
/// `Σ_k ln(σ2/σ1) + (σ1² + (μ1 − μ2)²) / (2σ2²) − ½`.
///
/// Sigmas below `floor` are raised to it; the second return value counts
/// how many entries were raised.
pub fn gaussian_kl_rows(
    mu1: &Matrix,
    sigma1: &Matrix,
    mu2: &Matrix,
    sigma2: &Matrix,
    floor: f64,
) -> Result<(Vec<f64>, usize)> {
    for other in [sigma1, mu2, sigma2] {
        if other.shape() != mu1.shape() {
            return Err(mismatch("gaussian_kl", mu1, other));
        }
    }
    let mut clamps = 0;
    let mut out = Vec::with_capacity(mu1.rows());
    for r in 0..mu1.rows() {
        let mut acc = 0.0;
        for c in 0..mu1.cols() {
            let (s1, s2) = (sigma1.get(r, c), sigma2.get(r, c));
            clamps += usize::from(s1 < floor) + usize::from(s2 < floor);
            let (s1, s2) = (s1.max(floor), s2.max(floor));
            let diff = mu1.get(r, c) - mu2.get(r, c);
            acc += libm::log(s2 / s1) + (s1 * s1 + diff * diff) / (2.0 * s2 * s2) - 0.5;
        }
        out.push(acc);
    }
    Ok((out, clamps))
}

impl<'a> Tape<'a> {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.record(value, Op::MatMul(a, b)))
    }

    /// Sparse-dense product. The sparse operand is a constant.
    pub fn spmm(&mut self, adj: &'a SparseAdjacency, b: Var) -> Result<Var> {
        self.check(b)?;
        let value = adj.mul_dense(self.value(b))?;
        Ok(self.record(value, Op::Spmm(adj, b)))
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op<'a>,
    ) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(name, va, vb));
        }
        let value = zip_map(va, vb, f);
        Ok(self.record(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Scales row `i` of `a` by `col[i]`, where `col` is `N x 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        self.check(a)?;
        self.check(col)?;
        let (va, vc) = (self.value(a), self.value(col));
        if vc.shape() != (va.rows(), 1) {
            return Err(mismatch("mul_col", va, vc));
        }
        let mut value = va.clone();
        for r in 0..va.rows() {
            let s = vc.get(r, 0);
            value.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.record(value, Op::MulCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| x * s);
        Ok(self.record(value, Op::Scale(a, s)))
    }

    /// Adds the `1 x d` row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check(a)?;
        self.check(bias)?;
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.shape() != (1, va.cols()) {
            return Err(mismatch("add_bias", va, vb));
        }
        let mut value = va.clone();
        for r in 0..va.rows() {
            for (x, &b) in value.row_mut(r).iter_mut().zip(vb.row(0)) {
                *x += b;
            }
        }
        Ok(self.record(value, Op::AddBias(a, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        Ok(self.record(value, Op::Relu(a)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(libm::exp);
        Ok(self.record(value, Op::Exp(a)))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(libm::sqrt);
        Ok(self.record(value, Op::Sqrt(a)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(|x| x * x);
        Ok(self.record(value, Op::Square(a)))
    }

    /// `max(a, floor)` elementwise; no gradient flows through clamped entries.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.check(a)?;
        let clamped = self.value(a).as_slice().iter().filter(|&&x| x < floor).count();
        self.clamp_events += clamped;
        let value = self.value(a).map(|x| x.max(floor));
        Ok(self.record(value, Op::ClampMin(a, floor)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(mismatch("concat_cols", va, vb));
        }
        let mut value = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for r in 0..va.rows() {
            let row = value.row_mut(r);
            row[..va.cols()].copy_from_slice(va.row(r));
            row[va.cols()..].copy_from_slice(vb.row(r));
        }
        Ok(self.record(value, Op::Concat(a, b)))
    }

    /// Columns `[start, end)` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.check(a)?;
        let va = self.value(a);
        if start > end || end > va.cols() {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: va.shape(),
                right: (start, end),
            });
        }
        let mut value = Matrix::zeros(va.rows(), end - start);
        for r in 0..va.rows() {
            value.row_mut(r).copy_from_slice(&va.row(r)[start..end]);
        }
        Ok(self.record(value, Op::Slice { src: a, start }))
    }

    /// Splits `a` into columns `[0, at)` and `[at, cols)`.
    pub fn split_cols(&mut self, a: Var, at: usize) -> Result<(Var, Var)> {
        self.check(a)?;
        let cols = self.value(a).cols();
        Ok((self.slice_cols(a, 0, at)?, self.slice_cols(a, at, cols)?))
    }

    /// Row-wise softmax, shifted by the row maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = libm::exp(*x - max);
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        Ok(self.record(value, Op::SoftmaxRows(a)))
    }

    /// `N x d` to `N x 1` row sums.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let va = self.value(a);
        let sums: Vec<f64> = (0..va.rows()).map(|r| va.row(r).iter().sum()).collect();
        Ok(self.record(Matrix::column(&sums), Op::RowSum(a)))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let total: f64 = self.value(a).as_slice().iter().sum();
        Ok(self.record(Matrix::filled(1, 1, total), Op::Sum(a)))
    }

    /// Row `v` of the result is the mean of rows `nbrs.of(v)` of `h`; zero
    /// for nodes without neighbors.
    pub fn segment_mean(&mut self, h: Var, nbrs: &'a Neighbors) -> Result<Var> {
        self.check(h)?;
        let vh = self.value(h);
        check_segments(vh, nbrs)?;
        let value = segment_mean_values(vh, nbrs);
        Ok(self.record(value, Op::SegmentMean(h, nbrs)))
    }

    /// Population standard deviation over the same segments as
    /// [`Tape::segment_mean`]; zero for nodes with fewer than two neighbors.
    pub fn segment_std(&mut self, h: Var, nbrs: &'a Neighbors) -> Result<Var> {
        self.check(h)?;
        let vh = self.value(h);
        check_segments(vh, nbrs)?;
        let mean = segment_mean_values(vh, nbrs);
        let mut value = Matrix::zeros(nbrs.len(), vh.cols());
        for v in 0..nbrs.len() {
            let list = nbrs.of(v);
            if list.is_empty() {
                continue;
            }
            let inv = 1.0 / list.len() as f64;
            let out = value.row_mut(v);
            for &u in list {
                for ((o, &x), &m) in out.iter_mut().zip(vh.row(u)).zip(mean.row(v)) {
                    *o += (x - m) * (x - m);
                }
            }
            out.iter_mut().for_each(|o| *o = libm::sqrt(*o * inv));
        }
        Ok(self.record(value, Op::SegmentStd { src: h, nbrs, mean }))
    }

    pub fn segment_mean_std(&mut self, h: Var, nbrs: &'a Neighbors) -> Result<(Var, Var)> {
        Ok((self.segment_mean(h, nbrs)?, self.segment_std(h, nbrs)?))
    }

    /// Row-wise KL divergence `KL(N(mu1, sigma1) || N(mu2, sigma2))` between
    /// diagonal Gaussians, as an `N x 1` tensor. See [`gaussian_kl_rows`].
    pub fn gaussian_kl(
        &mut self,
        mu1: Var,
        sigma1: Var,
        mu2: Var,
        sigma2: Var,
        floor: f64,
    ) -> Result<Var> {
        for v in [mu1, sigma1, mu2, sigma2] {
            self.check(v)?;
        }
        let (rows, clamps) = gaussian_kl_rows(
            self.value(mu1),
            self.value(sigma1),
            self.value(mu2),
            self.value(sigma2),
            floor,
        )?;
        self.clamp_events += clamps;
        Ok(self.record(
            Matrix::column(&rows),
            Op::GaussianKl {
                args: [mu1, sigma1, mu2, sigma2],
                floor,
            },
        ))
    }

    pub(super) fn propagate(&mut self, id: usize, g: &Matrix) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let val = |v: Var| &nodes[v.0].value;
        let out = &nodes[id].value;
        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    gemm_a_bt_acc(g, val(*b), ga);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gemm_at_b_acc(val(*a), g, gb);
                }
            }
            Op::Spmm(adj, b) => {
                if let Some(gb) = slot(nodes, grads, *b) {
                    adj.mul_transpose_acc(g, gb);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, &x), &y) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(vb.as_slice()) {
                        *o += x * y;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((o, &x), &y) in gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                        *o += x * y;
                    }
                }
            }
            Op::MulCol(a, col) => {
                let (va, vc) = (val(*a), val(*col));
                if let Some(ga) = slot(nodes, grads, *a) {
                    for r in 0..g.rows() {
                        let s = vc.get(r, 0);
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += s * x;
                        }
                    }
                }
                if let Some(gc) = slot(nodes, grads, *col) {
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(va.row(r)).map(|(x, y)| x * y).sum();
                        gc.as_mut_slice()[r] += dot;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for (o, &x) in ga.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *o += s * x;
                    }
                }
            }
            Op::AddBias(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for r in 0..g.rows() {
                        for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, &x), &pre) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                        if pre > 0.0 {
                            *o += x;
                        }
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, &x), &y) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(out.as_slice()) {
                        *o += x * y;
                    }
                }
            }
            Op::Sqrt(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, &x), &y) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(out.as_slice()) {
                        if y > 0.0 {
                            *o += x / (2.0 * y);
                        }
                    }
                }
            }
            Op::Square(a) => {
                let va = val(*a);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, &x), &pre) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                        *o += 2.0 * pre * x;
                    }
                }
            }
            Op::ClampMin(a, floor) => {
                let va = val(*a);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((o, &x), &pre) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                        if pre >= *floor {
                            *o += x;
                        }
                    }
                }
            }
            Op::Concat(a, b) => {
                let split = val(*a).cols();
                if let Some(ga) = slot(nodes, grads, *a) {
                    for r in 0..g.rows() {
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(&g.row(r)[..split]) {
                            *o += x;
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for r in 0..g.rows() {
                        for (o, &x) in gb.row_mut(r).iter_mut().zip(&g.row(r)[split..]) {
                            *o += x;
                        }
                    }
                }
            }
            Op::Slice { src, start } => {
                let start = *start;
                if let Some(gs) = slot(nodes, grads, *src) {
                    for r in 0..g.rows() {
                        let dst = &mut gs.row_mut(r)[start..start + g.cols()];
                        for (o, &x) in dst.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for r in 0..g.rows() {
                        let y = out.row(r);
                        let gr = g.row(r);
                        let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                        for ((o, &gy), &yy) in ga.row_mut(r).iter_mut().zip(gr).zip(y) {
                            *o += yy * (gy - dot);
                        }
                    }
                }
            }
            Op::RowSum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for r in 0..g.rows() {
                        let gr = g.get(r, 0);
                        ga.row_mut(r).iter_mut().for_each(|o| *o += gr);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let gs = g.get(0, 0);
                    ga.as_mut_slice().iter_mut().for_each(|o| *o += gs);
                }
            }
            Op::SegmentMean(h, nbrs) => {
                if let Some(gh) = slot(nodes, grads, *h) {
                    for v in 0..nbrs.len() {
                        let list = nbrs.of(v);
                        if list.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        for &u in list {
                            for (o, &x) in gh.row_mut(u).iter_mut().zip(g.row(v)) {
                                *o += x * inv;
                            }
                        }
                    }
                }
            }
            Op::SegmentStd { src, nbrs, mean } => {
                let vh = val(*src);
                if let Some(gh) = slot(nodes, grads, *src) {
                    for v in 0..nbrs.len() {
                        let list = nbrs.of(v);
                        if list.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        for &u in list {
                            let row = gh.row_mut(u);
                            for c in 0..row.len() {
                                let sigma = out.get(v, c);
                                if sigma > 0.0 {
                                    row[c] += g.get(v, c) * (vh.get(u, c) - mean.get(v, c)) * inv
                                        / sigma;
                                }
                            }
                        }
                    }
                }
            }
            Op::GaussianKl { args, floor } => {
                let [m1, s1, m2, s2] = *args;
                let (vm1, vs1, vm2, vs2) = (val(m1), val(s1), val(m2), val(s2));
                let cols = vm1.cols();
                let n = vm1.rows();
                // (d/dmu1, d/dsigma1, d/dmu2, d/dsigma2), each N x d
                let mut parts = [
                    Matrix::zeros(n, cols),
                    Matrix::zeros(n, cols),
                    Matrix::zeros(n, cols),
                    Matrix::zeros(n, cols),
                ];
                for r in 0..n {
                    let gr = g.get(r, 0);
                    for c in 0..cols {
                        let raw1 = vs1.get(r, c);
                        let raw2 = vs2.get(r, c);
                        let (a, b) = (raw1.max(*floor), raw2.max(*floor));
                        let diff = vm1.get(r, c) - vm2.get(r, c);
                        let b2 = b * b;
                        parts[0].set(r, c, gr * diff / b2);
                        parts[2].set(r, c, -gr * diff / b2);
                        if raw1 >= *floor {
                            parts[1].set(r, c, gr * (-1.0 / a + a / b2));
                        }
                        if raw2 >= *floor {
                            parts[3].set(r, c, gr * (1.0 / b - (a * a + diff * diff) / (b2 * b)));
                        }
                    }
                }
                for (v, part) in args.iter().zip(&parts) {
                    if let Some(gv) = slot(nodes, grads, *v) {
                        gv.add_assign(part);
                    }
                }
            }
        }
    }
}

fn check_segments(h: &Matrix, nbrs: &Neighbors) -> Result<()> {
    let bad = (0..nbrs.len()).any(|v| nbrs.of(v).iter().any(|&u| u >= h.rows()));
    if bad {
        return Err(Error::ShapeMismatch {
            op: "segment",
            left: h.shape(),
            right: (nbrs.len(), 0),
        });
    }
    Ok(())
}

fn segment_mean_values(h: &Matrix, nbrs: &Neighbors) -> Matrix {
    let mut out = Matrix::zeros(nbrs.len(), h.cols());
    for v in 0..nbrs.len() {
        let list = nbrs.of(v);
        if list.is_empty() {
            continue;
        }
        let row = out.row_mut(v);
        for &u in list {
            for (o, &x) in row.iter_mut().zip(h.row(u)) {
                *o += x;
            }
        }
        let inv = list.len() as f64;
        row.iter_mut().for_each(|o| *o /= inv);
    }
    out
}

/// Gradient accumulator for `v`, created on first use; `None` when `v` does
/// not depend on a parameter.
fn slot<'g>(nodes: &[Node<'_>], grads: &'g mut [Option<Matrix>], v: Var) -> Option<&'g mut Matrix> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let (r, c) = node.value.shape();
    Some(grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c)))
}

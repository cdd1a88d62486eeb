use nalgebra::DMatrix;
use rand::Rng;

use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, m: &mut DMatrix<f64>) {
        if self == Activation::Tanh {
            m.apply(|v| *v = v.tanh());
        }
    }

    /// Multiplies `dy` by the derivative, expressed through the output `y`.
    fn backprop(self, y: &DMatrix<f64>, dy: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Identity => dy.clone(),
            Activation::Tanh => dy.zip_map(y, |g, t| g * (1.0 - t * t)),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn add_row_bias(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        row += b.row(0);
    }
}

fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, c| m.column(c).sum())
}

fn check_cols(what: &str, m: &DMatrix<f64>, cols: usize) -> Result<()> {
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch(format!("{what}: expected {cols} columns, got {}", m.ncols())));
    }
    Ok(())
}

/// Fully connected layer `y = act(x W + b)`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    w: ParamId,
    b: ParamId,
    act: Activation,
    input: usize,
    output: usize,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Dense {
    pub fn new(ps: &mut ParamStore, name: &str, input: usize, output: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let w = ps.add_glorot(format!("{name}.weight"), input, output, rng);
        let b = ps.add_zeros(format!("{name}.bias"), 1, output);
        Self { w, b, act, input, output }
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }

    pub fn forward(&self, ps: &ParamStore, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DenseCache)> {
        check_cols("dense input", x, self.input)?;
        let mut y = x * ps.get(self.w);
        add_row_bias(&mut y, ps.get(self.b));
        self.act.apply(&mut y);
        Ok((y.clone(), DenseCache { x: x.clone(), y }))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, ps: &ParamStore, cache: &DenseCache, dy: &DMatrix<f64>, grads: &mut Grads) -> DMatrix<f64> {
        let dpre = self.act.backprop(&cache.y, dy);
        *grads.get_mut(self.w) += cache.x.transpose() * &dpre;
        *grads.get_mut(self.b) += column_sums(&dpre);
        dpre * ps.get(self.w).transpose()
    }
}

/// LSTM cell with gate blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    input: usize,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: DMatrix<f64>,
    h: DMatrix<f64>,
    c: DMatrix<f64>,
    i: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    o: DMatrix<f64>,
    tanh_c: DMatrix<f64>,
}

impl LstmCell {
    pub fn new(ps: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let wx = ps.add_glorot(format!("{name}.weight_ih"), input, 4 * hidden, rng);
        let wh = ps.add_glorot(format!("{name}.weight_hh"), hidden, 4 * hidden, rng);
        let b = ps.add_zeros(format!("{name}.bias"), 1, 4 * hidden);
        Self { wx, wh, b, input, hidden }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> [ParamId; 3] {
        [self.wx, self.wh, self.b]
    }

    /// One step for `N` independent rows. Returns `(h', c', cache)`.
    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &DMatrix<f64>,
        h: &DMatrix<f64>,
        c: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, LstmCache)> {
        check_cols("lstm input", x, self.input)?;
        check_cols("lstm hidden", h, self.hidden)?;
        check_cols("lstm cell", c, self.hidden)?;
        if h.nrows() != x.nrows() || c.nrows() != x.nrows() {
            return Err(Error::DimensionMismatch("lstm state rows differ from input rows".into()));
        }
        let hd = self.hidden;
        let mut z = x * ps.get(self.wx) + h * ps.get(self.wh);
        add_row_bias(&mut z, ps.get(self.b));
        let block = |k: usize| z.columns(k * hd, hd).into_owned();
        let i = block(0).map(sigmoid);
        let f = block(1).map(sigmoid);
        let g = block(2).map(f64::tanh);
        let o = block(3).map(sigmoid);
        let c_new = f.component_mul(c) + i.component_mul(&g);
        let tanh_c = c_new.map(f64::tanh);
        let h_new = o.component_mul(&tanh_c);
        let cache = LstmCache { x: x.clone(), h: h.clone(), c: c.clone(), i, f, g, o, tanh_c };
        Ok((h_new, c_new, cache))
    }

    /// Returns gradients w.r.t. `(x, h, c)`.
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &LstmCache,
        dh_new: &DMatrix<f64>,
        dc_new: Option<&DMatrix<f64>>,
        grads: &mut Grads,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let LstmCache { x, h, c, i, f, g, o, tanh_c } = cache;
        let d_o = dh_new.component_mul(tanh_c);
        let mut dc = dh_new.component_mul(o).zip_map(tanh_c, |v, t| v * (1.0 - t * t));
        if let Some(extra) = dc_new {
            dc += extra;
        }
        let di = dc.component_mul(g);
        let dg = dc.component_mul(i);
        let df = dc.component_mul(c);
        let dc_prev = dc.component_mul(f);

        let hd = self.hidden;
        let mut dz = DMatrix::zeros(x.nrows(), 4 * hd);
        dz.columns_mut(0, hd).copy_from(&di.zip_map(i, |d, s| d * s * (1.0 - s)));
        dz.columns_mut(hd, hd).copy_from(&df.zip_map(f, |d, s| d * s * (1.0 - s)));
        dz.columns_mut(2 * hd, hd).copy_from(&dg.zip_map(g, |d, t| d * (1.0 - t * t)));
        dz.columns_mut(3 * hd, hd).copy_from(&d_o.zip_map(o, |d, s| d * s * (1.0 - s)));

        *grads.get_mut(self.wx) += x.transpose() * &dz;
        *grads.get_mut(self.wh) += h.transpose() * &dz;
        *grads.get_mut(self.b) += column_sums(&dz);
        let dx = &dz * ps.get(self.wx).transpose();
        let dh = &dz * ps.get(self.wh).transpose();
        (dx, dh, dc_prev)
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the row sums of `A + I`.
pub fn normalized_adjacency(a: &AdjacencyMatrix) -> DMatrix<f64> {
    let d = a.d();
    let m: DMatrix<f64> = DMatrix::from_fn(d, d, |i, j| if i == j || a.get(i, j) { 1.0 } else { 0.0 });
    let inv_sqrt: Vec<f64> = (0..d).map(|i| 1.0 / m.row(i).sum().sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| m[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

/// Single graph-convolution layer `act(Â X W + b)`.
#[derive(Debug, Clone, Copy)]
pub struct Gcn {
    w: ParamId,
    b: ParamId,
    act: Activation,
    input: usize,
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    adj: DMatrix<f64>,
    ax: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Gcn {
    pub fn new(ps: &mut ParamStore, name: &str, input: usize, output: usize, act: Activation, rng: &mut impl Rng) -> Self {
        let w = ps.add_glorot(format!("{name}.weight"), input, output, rng);
        let b = ps.add_zeros(format!("{name}.bias"), 1, output);
        Self { w, b, act, input }
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn forward(&self, ps: &ParamStore, feats: &DMatrix<f64>, adj: &DMatrix<f64>) -> Result<(DMatrix<f64>, GcnCache)> {
        check_cols("gcn features", feats, self.input)?;
        if adj.nrows() != feats.nrows() || adj.ncols() != feats.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "gcn adjacency is {}x{}, features have {} rows",
                adj.nrows(),
                adj.ncols(),
                feats.nrows()
            )));
        }
        let ax = adj * feats;
        let mut y = &ax * ps.get(self.w);
        add_row_bias(&mut y, ps.get(self.b));
        self.act.apply(&mut y);
        Ok((y.clone(), GcnCache { adj: adj.clone(), ax, y }))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &GcnCache, dy: &DMatrix<f64>, grads: &mut Grads) -> DMatrix<f64> {
        let dpre = self.act.backprop(&cache.y, dy);
        *grads.get_mut(self.w) += cache.ax.transpose() * &dpre;
        *grads.get_mut(self.b) += column_sums(&dpre);
        cache.adj.transpose() * (dpre * ps.get(self.w).transpose())
    }
}

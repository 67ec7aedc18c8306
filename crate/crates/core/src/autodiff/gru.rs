use rand::Rng;

use super::graph::{Graph, ParamId, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Parameter handles of one GRU cell.
///
/// Gates are stacked in the order reset, update, candidate:
/// `w_ih: 3h x in`, `w_hh: 3h x h`, `bias: 3h`. The reset gate multiplies the
/// recurrent product, `n = tanh(W_n x + r ∘ (U_n h) + b_n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound_in = 1.0 / (input_dim as f64).sqrt();
        let bound_h = 1.0 / (hidden_dim as f64).sqrt();
        let w_ih = store.insert(
            format!("{prefix}.w_ih"),
            Tensor::uniform(&[3 * hidden_dim, input_dim], bound_in, rng),
        )?;
        let w_hh = store.insert(
            format!("{prefix}.w_hh"),
            Tensor::uniform(&[3 * hidden_dim, hidden_dim], bound_h, rng),
        )?;
        let bias = store.insert(
            format!("{prefix}.bias"),
            Tensor::uniform(&[3 * hidden_dim], bound_h, rng),
        )?;
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            input_dim,
            hidden_dim,
        })
    }

    /// Resolves an already registered cell by name prefix.
    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .ok_or_else(|| Error::Contract(format!("missing parameter {prefix}.{s}")))
        };
        let w_ih = get("w_ih")?;
        let w_hh = get("w_hh")?;
        let bias = get("bias")?;
        let shape = store.get(w_ih).shape();
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            input_dim: shape[1],
            hidden_dim: shape[0] / 3,
        })
    }

    /// One step for a batch: `x: B x in`, `h: B x hidden` → `B x hidden`.
    pub fn step<'p>(&self, g: &mut Graph<'p>, store: &'p ParamStore, x: Var, h: Var) -> Result<Var> {
        let d = self.hidden_dim;
        let (xv, hv) = (g.value(x), g.value(h));
        if xv.cols() != self.input_dim || hv.cols() != d {
            return Err(Error::dim("gru_cell", xv.shape(), hv.shape()));
        }
        let w_ih = g.param(self.w_ih, store.get(self.w_ih));
        let w_hh = g.param(self.w_hh, store.get(self.w_hh));
        let bias = g.param(self.bias, store.get(self.bias));

        let gx = g.matmul_t(x, w_ih)?;
        let gx = g.add(gx, bias)?;
        let gh = g.matmul_t(h, w_hh)?;

        let (xr, xu, xn) = (g.slice_cols(gx, 0, d)?, g.slice_cols(gx, d, d)?, g.slice_cols(gx, 2 * d, d)?);
        let (hr, hu, hn) = (g.slice_cols(gh, 0, d)?, g.slice_cols(gh, d, d)?, g.slice_cols(gh, 2 * d, d)?);

        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let u = g.add(xu, hu)?;
        let u = g.sigmoid(u);
        let rn = g.mul(r, hn)?;
        let n = g.add(xn, rn)?;
        let n = g.tanh(n);

        let keep = g.mul(u, h)?;
        let one_minus_u = g.one_minus(u);
        let fresh = g.mul(one_minus_u, n)?;
        g.add(fresh, keep)
    }
}

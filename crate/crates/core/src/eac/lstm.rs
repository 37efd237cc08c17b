use crate::error::{Error, Result};
use crate::numkit::{xavier_init, Graph, ParamId, ParamStore, Rng, Tensor, Var};

/// One-layer bidirectional LSTM whose output is the final forward state
/// stacked on the final backward state (`2H x 1`).
///
/// Gate layout inside the `4H` pre-activation: input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    fwd: (ParamId, ParamId),
    bwd: (ParamId, ParamId),
    pub input: usize,
    pub hidden: usize,
}

impl BiLstm {
    /// Creates `{prefix}.fwd.w`, `{prefix}.fwd.b` and the `bwd` pair. Forget
    /// gate biases start at 1.
    pub fn init(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        for dir in ["fwd", "bwd"] {
            store.insert(format!("{prefix}.{dir}.w"), xavier_init(rng, 4 * hidden, input + hidden));
            let mut b = Tensor::zeros(&[4 * hidden, 1]);
            for k in hidden..2 * hidden {
                b.data_mut()[k] = 1.0;
            }
            store.insert(format!("{prefix}.{dir}.b"), b);
        }
        Self::bind(store, prefix).expect("just inserted")
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        let id = |n: &str| {
            store
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {prefix}.{n}")))
        };
        let fwd = (id("fwd.w")?, id("fwd.b")?);
        let bwd = (id("bwd.w")?, id("bwd.b")?);
        let w = store.tensor(fwd.0);
        let hidden = w.rows() / 4;
        let input = w.cols() - hidden;
        Ok(Self { fwd, bwd, input, hidden })
    }

    fn run(&self, g: &mut Graph<'_>, (w, b): (ParamId, ParamId), inputs: impl Iterator<Item = Var>) -> Result<Var> {
        let h0 = g.column(vec![0.0; self.hidden]);
        let mut h = h0;
        let mut c = g.column(vec![0.0; self.hidden]);
        let hd = self.hidden;
        for x in inputs {
            let xh = g.vstack(&[x, h])?;
            let z = g.affine(w, b, xh)?;
            let zi = g.slice_rows(z, 0, hd)?;
            let zf = g.slice_rows(z, hd, hd)?;
            let zg = g.slice_rows(z, 2 * hd, hd)?;
            let zo = g.slice_rows(z, 3 * hd, hd)?;
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let cand = g.tanh(zg);
            let o = g.sigmoid(zo);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            c = g.add(keep, write)?;
            let tc = g.tanh(c);
            h = g.mul(o, tc)?;
        }
        Ok(h)
    }

    pub fn final_states(&self, g: &mut Graph<'_>, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("BiLSTM over an empty sequence".into()));
        }
        let f = self.run(g, self.fwd, inputs.iter().copied())?;
        let b = self.run(g, self.bwd, inputs.iter().rev().copied())?;
        g.vstack(&[f, b])
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_unrolled_recurrence() {
        let mut rng = Rng::new(21);
        let mut store = ParamStore::new();
        let lstm = BiLstm::init(&mut store, "enc", 3, 4, &mut rng);
        // perturb biases so every gate term is exercised
        for name in ["enc.fwd.b", "enc.bwd.b"] {
            for v in store.get_mut(name).unwrap().data_mut() {
                *v += rng.uniform(-0.5, 0.5);
            }
        }
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let mut g = Graph::new(&store);
        let vars: Vec<Var> = xs.iter().map(|x| g.column(x.clone())).collect();
        let out = lstm.final_states(&mut g, &vars).unwrap();
        let got = g.to_vec(out);
        let want = oracle::bidirectional(&store, "enc", &xs);
        assert_eq!(got.len(), 8);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn single_step_sees_same_input_both_ways() {
        let mut store = ParamStore::new();
        let lstm = BiLstm::init(&mut store, "x", 2, 3, &mut Rng::new(0));
        let mut g = Graph::new(&store);
        let v = g.column(vec![0.3, -0.7]);
        let out = lstm.final_states(&mut g, &[v]).unwrap();
        assert_eq!(g.shape(out), (6, 1));
        assert!(g.value(out).is_finite());
        assert!(lstm.final_states(&mut g, &[]).is_err());
    }
}

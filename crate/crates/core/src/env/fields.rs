//! Edge and plaquette fields on the torus.

use crate::lattice::{Dir, Torus};

/// Values indexed by oriented edge `(x, k)`, stored as `x * 2d + k`.
fn oriented_len(torus: &Torus) -> usize {
    torus.num_sites() * torus.num_dirs()
}

/// Symmetric part of the jump rates: one nonnegative conductance per edge.
///
/// Stored for every oriented edge so that a one-sided perturbation can be
/// represented (and caught by validation); [`ConductanceField::from_edges`]
/// produces a field symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceField {
    values: Vec<f64>,
}

impl ConductanceField {
    /// Builds `s_k(x)` from one value per unoriented edge, `edges[x * d + i]`
    /// being the conductance of `{x, x + e_i}`.
    pub fn from_edges(torus: &Torus, edges: &[f64]) -> Self {
        let d = torus.dim();
        assert_eq!(edges.len(), torus.num_sites() * d, "edge array length");
        let mut values = vec![0.0; oriented_len(torus)];
        for x in 0..torus.num_sites() {
            for i in 0..d {
                let v = edges[x * d + i];
                let up = Dir::positive(i);
                values[x * 2 * d + up.index()] = v;
                let y = torus.neighbor(x, up);
                values[y * 2 * d + up.opposite().index()] = v;
            }
        }
        ConductanceField { values }
    }

    /// Raw oriented values; no symmetry is imposed.
    pub fn from_oriented(torus: &Torus, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), oriented_len(torus), "oriented array length");
        ConductanceField { values }
    }

    pub fn constant(torus: &Torus, value: f64) -> Self {
        ConductanceField {
            values: vec![value; oriented_len(torus)],
        }
    }

    #[inline]
    pub fn get(&self, dirs: usize, site: usize, k: Dir) -> f64 {
        self.values[site * dirs + k.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// One value per unoriented edge, `[x * d + i] = s_{e_i}(x)`.
    pub fn edge_values(&self, torus: &Torus) -> Vec<f64> {
        let d = torus.dim();
        let mut out = Vec::with_capacity(torus.num_sites() * d);
        for x in 0..torus.num_sites() {
            for i in 0..d {
                out.push(self.values[x * 2 * d + Dir::positive(i).index()]);
            }
        }
        out
    }
}

/// Antisymmetric edge field `b_k(x)`; the non-reversible part of the rates.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    values: Vec<f64>,
}

impl FlowField {
    pub fn zero(torus: &Torus) -> Self {
        FlowField {
            values: vec![0.0; oriented_len(torus)],
        }
    }

    /// Builds `b` from `b_{e_i}(x)` values, imposing `b_{−k}(x+k) = −b_k(x)`.
    pub fn from_edges(torus: &Torus, edges: &[f64]) -> Self {
        let d = torus.dim();
        assert_eq!(edges.len(), torus.num_sites() * d, "edge array length");
        let mut values = vec![0.0; oriented_len(torus)];
        for x in 0..torus.num_sites() {
            for i in 0..d {
                let v = edges[x * d + i];
                let up = Dir::positive(i);
                values[x * 2 * d + up.index()] = v;
                let y = torus.neighbor(x, up);
                values[y * 2 * d + up.opposite().index()] = -v;
            }
        }
        FlowField { values }
    }

    pub fn from_oriented(torus: &Torus, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), oriented_len(torus), "oriented array length");
        FlowField { values }
    }

    #[inline]
    pub fn get(&self, dirs: usize, site: usize, k: Dir) -> f64 {
        self.values[site * dirs + k.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn edge_values(&self, torus: &Torus) -> Vec<f64> {
        let d = torus.dim();
        let mut out = Vec::with_capacity(torus.num_sites() * d);
        for x in 0..torus.num_sites() {
            for i in 0..d {
                out.push(self.values[x * 2 * d + Dir::positive(i).index()]);
            }
        }
        out
    }

    /// Component `b_{e_i}` as a scalar lattice function.
    pub fn axis_component(&self, torus: &Torus, axis: usize) -> Vec<f64> {
        let dirs = torus.num_dirs();
        (0..torus.num_sites())
            .map(|x| self.get(dirs, x, Dir::positive(axis)))
            .collect()
    }
}

/// Stream tensor stored on canonical plaquettes.
///
/// Only `h_{e_i,e_j}(x)` with `i < j` is stored (`values[x * P + plane]`);
/// every other entry `h_{k,l}(x)` is derived from the antisymmetries
/// `h_{k,l}(x) = −h_{l,k}(x) = −h_{−k,l}(x+k) = −h_{k,−l}(x+l)`, which
/// therefore hold by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamTensor {
    planes: usize,
    values: Vec<f64>,
}

impl StreamTensor {
    pub fn zero(torus: &Torus) -> Self {
        StreamTensor {
            planes: torus.num_planes(),
            values: vec![0.0; torus.num_sites() * torus.num_planes()],
        }
    }

    /// `values[x * P + plane]` with planes ordered as [`Torus::planes`].
    pub fn from_canonical(torus: &Torus, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            torus.num_sites() * torus.num_planes(),
            "plaquette array length"
        );
        StreamTensor {
            planes: torus.num_planes(),
            values,
        }
    }

    /// Builds a tensor from a closure giving `h_{e_i,e_j}(x)` for `i < j`.
    pub fn from_fn(torus: &Torus, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(torus.num_sites() * torus.num_planes());
        for x in 0..torus.num_sites() {
            for (i, j) in torus.planes() {
                values.push(f(x, i, j));
            }
        }
        Self::from_canonical(torus, values)
    }

    pub fn canonical(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn canonical_at(&self, torus: &Torus, site: usize, i: usize, j: usize) -> f64 {
        self.values[site * self.planes + torus.plane_index(i, j)]
    }

    /// `h_{k,l}(x)` for arbitrary `k, l ∈ N`.
    pub fn get(&self, torus: &Torus, site: usize, k: Dir, l: Dir) -> f64 {
        let (i, j) = (k.axis(), l.axis());
        if i == j {
            return 0.0;
        }
        let mut y = site;
        if !k.is_positive() {
            y = torus.shift(y, i, -1);
        }
        if !l.is_positive() {
            y = torus.shift(y, j, -1);
        }
        let orient = (k.sign() * l.sign()) as f64;
        if i < j {
            orient * self.canonical_at(torus, y, i, j)
        } else {
            -orient * self.canonical_at(torus, y, j, i)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest violation of the three antisymmetries over all `(x, k, l)`,
    /// evaluated through the derived accessor.
    pub fn symmetry_residual(&self, torus: &Torus) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..torus.num_sites() {
            for k in torus.dirs() {
                for l in torus.dirs() {
                    let h = self.get(torus, x, k, l);
                    let swap = self.get(torus, x, l, k);
                    let flip_k = self.get(torus, torus.neighbor(x, k), k.opposite(), l);
                    let flip_l = self.get(torus, torus.neighbor(x, l), k, l.opposite());
                    worst = worst
                        .max((h + swap).abs())
                        .max((h + flip_k).abs())
                        .max((h + flip_l).abs());
                }
            }
        }
        worst
    }

    /// Applies `f` to every stored value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        StreamTensor {
            planes: self.planes,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `b_k(x) = Σ_l h_{k,l}(x)`.
///
/// Terms are summed in the fixed direction order, so `b_{−k}(x+k)` is the
/// exact negation of `b_k(x)`.
pub fn curl(torus: &Torus, h: &StreamTensor) -> FlowField {
    let dirs = torus.num_dirs();
    let mut values = vec![0.0; torus.num_sites() * dirs];
    for x in 0..torus.num_sites() {
        for k in torus.dirs() {
            let mut acc = 0.0;
            for l in torus.dirs() {
                acc += h.get(torus, x, k, l);
            }
            values[x * dirs + k.index()] = acc;
        }
    }
    FlowField { values }
}

/// General nonnegative jump rates `p_k(x)`, not necessarily bistochastic.
#[derive(Clone, Debug, PartialEq)]
pub struct RateField {
    values: Vec<f64>,
}

impl RateField {
    pub fn from_oriented(torus: &Torus, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), oriented_len(torus), "oriented array length");
        RateField { values }
    }

    /// Builds rates from `f(x, k)`.
    pub fn from_fn(torus: &Torus, mut f: impl FnMut(usize, Dir) -> f64) -> Self {
        let mut values = Vec::with_capacity(oriented_len(torus));
        for x in 0..torus.num_sites() {
            for k in torus.dirs() {
                values.push(f(x, k));
            }
        }
        RateField { values }
    }

    #[inline]
    pub fn get(&self, dirs: usize, site: usize, k: Dir) -> f64 {
        self.values[site * dirs + k.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn total_out(&self, dirs: usize, site: usize) -> f64 {
        self.values[site * dirs..(site + 1) * dirs].iter().sum()
    }

    /// `Σ_k p_{−k}(x+k)`: total rate flowing into `x`.
    pub fn total_in(&self, torus: &Torus, site: usize) -> f64 {
        let dirs = torus.num_dirs();
        torus
            .dirs()
            .map(|k| self.get(dirs, torus.neighbor(site, k), k.opposite()))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(t: &Torus) -> StreamTensor {
        StreamTensor::from_fn(t, |x, _, _| if t.parity(x) == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn zero_tensor_has_zero_curl() {
        let t = Torus::new(3, 4).unwrap();
        let b = curl(&t, &StreamTensor::zero(&t));
        assert!(b.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_tensor_has_zero_curl() {
        let t = Torus::new(2, 5).unwrap();
        let h = StreamTensor::from_fn(&t, |_, _, _| 0.7);
        // forced companion h_{e1,-e2} = -a
        assert_eq!(h.get(&t, 3, Dir::positive(0), Dir::negative(1)), -0.7);
        let b = curl(&t, &h);
        assert!(b.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_curl_by_hand() {
        // b_{e1}(x) = 2(-1)^{x1+x2}, b_{e2}(x) = -2(-1)^{x1+x2}
        let t = Torus::new(2, 2).unwrap();
        let b = curl(&t, &checkerboard(&t));
        for x in 0..t.num_sites() {
            let c = if t.parity(x) == 0 { 1.0 } else { -1.0 };
            assert_eq!(b.get(4, x, Dir::positive(0)), 2.0 * c);
            assert_eq!(b.get(4, x, Dir::positive(1)), -2.0 * c);
        }
    }

    #[test]
    fn derived_entries_satisfy_tensor_identities() {
        let t = Torus::new(3, 3).unwrap();
        let mut n = 0.0;
        let h = StreamTensor::from_fn(&t, |_, _, _| {
            n += 1.0;
            (n * 0.37f64).sin()
        });
        assert_eq!(h.symmetry_residual(&t), 0.0);
        for x in 0..t.num_sites() {
            for k in t.dirs() {
                assert_eq!(h.get(&t, x, k, k), 0.0);
                assert_eq!(h.get(&t, x, k, k.opposite()), 0.0);
            }
        }
    }

    #[test]
    fn curl_is_exactly_antisymmetric() {
        let t = Torus::new(2, 4).unwrap();
        let mut n = 0.0;
        let h = StreamTensor::from_fn(&t, |_, _, _| {
            n += 1.0;
            (n * 1.3f64).cos() * 3.1
        });
        let b = curl(&t, &h);
        for x in 0..t.num_sites() {
            for k in t.dirs() {
                let y = t.neighbor(x, k);
                assert_eq!(b.get(4, y, k.opposite()), -b.get(4, x, k));
            }
        }
    }

    #[test]
    fn conductance_from_edges_is_symmetric() {
        let t = Torus::new(2, 3).unwrap();
        let edges: Vec<f64> = (0..18).map(|i| 1.0 + i as f64).collect();
        let s = ConductanceField::from_edges(&t, &edges);
        for x in 0..t.num_sites() {
            for k in t.dirs() {
                assert_eq!(s.get(4, t.neighbor(x, k), k.opposite()), s.get(4, x, k));
            }
        }
        assert_eq!(s.edge_values(&t), edges);
    }
}

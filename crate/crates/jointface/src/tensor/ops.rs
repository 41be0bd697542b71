//! Differentiable primitives on [`Tensor`].

use std::rc::Rc;

use crate::error::{Error, Result};

use super::{from_op, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::ShapeMismatch {
            op,
            expected: sa,
            got: sb,
        });
    }
    Ok(())
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        from_op("add", &[self, other], data, self.shape(), move |go| {
            a.accum_grad(go);
            b.accum_grad(go);
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        from_op("sub", &[self, other], data, self.shape(), move |go| {
            a.accum_grad(go);
            let neg: Vec<f64> = go.iter().map(|g| -g).collect();
            b.accum_grad(&neg);
        })
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        from_op("mul", &[self, other], data, self.shape(), move |go| {
            // Snapshot first: a and b may alias the same tensor.
            let da: Vec<f64> = go.iter().zip(b.data().iter()).map(|(g, v)| g * v).collect();
            let db: Vec<f64> = go.iter().zip(a.data().iter()).map(|(g, v)| g * v).collect();
            a.accum_grad(&da);
            b.accum_grad(&db);
        })
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v * factor).collect();
        let a = self.clone();
        from_op("scale", &[self], data, self.shape(), move |go| {
            let da: Vec<f64> = go.iter().map(|g| g * factor).collect();
            a.accum_grad(&da);
        })
    }

    pub fn relu(&self) -> Result<Tensor> {
        // Subgradient at 0 is defined as 0: strictly positive inputs pass.
        let data = self.data().iter().map(|v| v.max(0.0)).collect();
        let a = self.clone();
        from_op("relu", &[self], data, self.shape(), move |go| {
            let da: Vec<f64> = go
                .iter()
                .zip(a.data().iter())
                .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                .collect();
            a.accum_grad(&da);
        })
    }

    pub fn sum(&self) -> Result<Tensor> {
        let total: f64 = self.data().iter().sum();
        let a = self.clone();
        let n = self.len();
        from_op("sum", &[self], vec![total], vec![1], move |go| {
            a.accum_grad(&vec![go[0]; n]);
        })
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.len().max(1) as f64;
        self.sum()?.scale(1.0 / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                expected: self.shape(),
                got: shape.to_vec(),
            });
        }
        let a = self.clone();
        from_op("reshape", &[self], self.to_vec(), shape.to_vec(), move |go| {
            a.accum_grad(go);
        })
    }

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: sa,
                got: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        {
            let ad = self.data();
            let bd = other.data();
            for i in 0..m {
                for p in 0..k {
                    let aip = ad[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &bd[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
        }
        let (a, b) = (self.clone(), other.clone());
        from_op("matmul", &[self, other], out, vec![m, n], move |go| {
            let mut da = vec![0.0; m * k];
            let mut db = vec![0.0; k * n];
            {
                let ad = a.data();
                let bd = b.data();
                // dA = go · Bᵀ
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        let grow = &go[i * n..(i + 1) * n];
                        let brow = &bd[p * n..(p + 1) * n];
                        for j in 0..n {
                            acc += grow[j] * brow[j];
                        }
                        da[i * k + p] = acc;
                    }
                }
                // dB = Aᵀ · go
                for p in 0..k {
                    for i in 0..m {
                        let aip = ad[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let grow = &go[i * n..(i + 1) * n];
                        let brow = &mut db[p * n..(p + 1) * n];
                        for j in 0..n {
                            brow[j] += aip * grow[j];
                        }
                    }
                }
            }
            a.accum_grad(&da);
            b.accum_grad(&db);
        })
    }

    /// Adds a `[d]` bias row to every row of an `[n,d]` matrix.
    pub fn add_row_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (s, sb) = (self.shape(), bias.shape());
        if s.len() != 2 || sb.len() != 1 || sb[0] != s[1] {
            return Err(Error::ShapeMismatch {
                op: "add_row_bias",
                expected: s,
                got: sb,
            });
        }
        let (n, d) = (s[0], s[1]);
        let data = {
            let xd = self.data();
            let bd = bias.data();
            let mut out = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    out[i * d + j] = xd[i * d + j] + bd[j];
                }
            }
            out
        };
        let (a, b) = (self.clone(), bias.clone());
        from_op("add_row_bias", &[self, bias], data, s, move |go| {
            a.accum_grad(go);
            let mut db = vec![0.0; d];
            for i in 0..n {
                for j in 0..d {
                    db[j] += go[i * d + j];
                }
            }
            b.accum_grad(&db);
        })
    }

    /// Gather by flat index: `out[i] = self[map[i]]`. The backward pass
    /// scatter-adds, so repeated indices accumulate.
    pub fn index_select_flat(&self, map: Rc<Vec<usize>>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != map.len() {
            return Err(Error::ShapeMismatch {
                op: "index_select_flat",
                expected: vec![numel],
                got: vec![map.len()],
            });
        }
        let n = self.len();
        if let Some(&bad) = map.iter().find(|&&i| i >= n) {
            return Err(Error::ShapeMismatch {
                op: "index_select_flat",
                expected: vec![n],
                got: vec![bad],
            });
        }
        let data = {
            let xd = self.data();
            map.iter().map(|&i| xd[i]).collect()
        };
        let a = self.clone();
        let bmap = Rc::clone(&map);
        from_op("index_select_flat", &[self], data, shape.to_vec(), move |go| {
            let mut dx = vec![0.0; n];
            for (g, &i) in go.iter().zip(bmap.iter()) {
                dx[i] += g;
            }
            a.accum_grad(&dx);
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::tape;

    #[test]
    fn reshape_round_trips_gradient() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2])
            .unwrap()
            .with_grad();
        let y = x.reshape(&[4]).unwrap();
        let loss = y.mul(&y).unwrap().sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn index_select_accumulates_repeats() {
        let x = Tensor::from_vec(vec![10.0, 20.0], &[2]).unwrap().with_grad();
        let map = Rc::new(vec![1usize, 1, 0]);
        let y = x.index_select_flat(map, &[3]).unwrap();
        assert_eq!(y.to_vec(), vec![20.0, 20.0, 10.0]);
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn mul_by_self_uses_both_paths() {
        let x = Tensor::from_vec(vec![3.0], &[1]).unwrap().with_grad();
        let y = x.mul(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
        assert_eq!(tape::len(), 0);
    }

    #[test]
    fn add_row_bias_broadcasts() {
        let x = Tensor::from_vec(vec![0.0, 1.0, 2.0, 3.0], &[2, 2]).unwrap();
        let b = Tensor::from_vec(vec![10.0, 20.0], &[2]).unwrap().with_grad();
        let y = x.add_row_bias(&b).unwrap();
        assert_eq!(y.to_vec(), vec![10.0, 21.0, 12.0, 23.0]);
        y.sum().unwrap().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0]);
    }
}
